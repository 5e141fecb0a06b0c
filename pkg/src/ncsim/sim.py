"""Closed-loop stepping for every model family, scenario runs and Monte Carlo.

Steppers advance a mutable ``LoopState`` in place and return the
``StepRecord`` describing the step they just took (state and inputs at
step k, before the update).
"""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from . import scenarios as sc
from .channel import (
    ConstantDelay,
    DelaySample,
    DiscreteUniform,
    RandomStream,
    fork_stream,
    sample_delay,
    sample_loss,
)
from .errors import ContractViolation, ValidationError
from .linalg import (
    DiscretizationTriple,
    LiftedSystem,
    decompose_delay,
    discretize,
    lift,
    spectral_radius,
    split_input,
)
from .strategies import (
    ZERO,
    CompensationStrategy,
    EstimatorState,
    LQRGain,
    compensate_ca,
    compensate_sc,
    gain,
)

DIVERGENCE_THRESHOLD = 1e12

# stream labels under a run's root stream
_DELAY_STREAM = 0
_LOSS_STREAM = 1


@dataclass(eq=False)
class LoopState:
    """Everything a stepper needs to carry between steps.

    ``u_history`` holds applied inputs, oldest first; ``u_history[-1]`` is
    u(k-1).
    """

    x: np.ndarray
    u_history: list
    estimator: EstimatorState
    c: np.ndarray
    d: np.ndarray
    h: float
    k: int = 0

    @classmethod
    def initial(cls, plant, h, x0, history=2, x_hat0=None) -> "LoopState":
        x0 = np.array(x0, dtype=float).reshape(-1)
        m = plant.m
        return cls(
            x=x0,
            u_history=[np.zeros(m) for _ in range(max(2, history))],
            estimator=EstimatorState.initial(plant.n, m, x_hat0),
            c=plant.c,
            d=plant.d,
            h=float(h),
        )

    @property
    def t(self) -> float:
        return self.k * self.h

    @property
    def x_prev(self) -> np.ndarray:
        return self.estimator.x_prev

    def copy(self) -> "LoopState":
        return LoopState(x=self.x.copy(), u_history=[u.copy() for u in self.u_history],
                         estimator=self.estimator, c=self.c, d=self.d, h=self.h, k=self.k)


@dataclass(frozen=True, eq=False)
class StepRecord:
    k: int
    t: float
    x: np.ndarray
    y: np.ndarray
    u_computed: np.ndarray
    u_applied: np.ndarray
    tau_sc: float
    tau_ca: float
    tau_k: float
    gamma_sc: int
    gamma_ca: int


@dataclass(eq=False)
class SimulationTrace:
    records: list[StepRecord]
    scenario_id: str
    seed: int
    h: float
    x_final: np.ndarray
    diverged_at: int | None = None

    def norms(self) -> np.ndarray:
        """``||x(k)||`` for k = 0 .. len(records), terminal state included."""
        return np.array([np.linalg.norm(r.x) for r in self.records] + [np.linalg.norm(self.x_final)])


@dataclass(frozen=True, eq=False)
class ClosedLoopMatrix:
    m: np.ndarray

    def spectral_radius(self) -> float:
        return spectral_radius(self.m)


def _delay_of(delay, tau_k):
    if delay is not None:
        return delay
    return DelaySample(tau_sc=tau_k / 2, tau_ca=tau_k / 2, tau_k=tau_k)


def _finish(state, x_next, u_computed, u_applied, delay, gamma_sc=1, gamma_ca=1):
    x = state.x
    record = StepRecord(
        k=state.k, t=state.t, x=x, y=state.c @ x + state.d @ u_applied,
        u_computed=u_computed, u_applied=u_applied,
        tau_sc=delay.tau_sc, tau_ca=delay.tau_ca, tau_k=delay.tau_k,
        gamma_sc=int(gamma_sc), gamma_ca=int(gamma_ca),
    )
    state.u_history = state.u_history[1:] + [u_applied]
    state.estimator = state.estimator.advance(x, u_applied)
    state.x = x_next
    state.k += 1
    return record


def step_delay_free(state: LoopState, phi, gamma, L, delay: DelaySample | None = None) -> StepRecord:
    u = -L @ state.x
    x_next = phi @ state.x + gamma @ u
    return _finish(state, x_next, u, u, _delay_of(delay, 0.0))


def _check_short(triple):
    if not 0 <= triple.tau <= triple.h:
        raise ContractViolation(f"tau_k={triple.tau} exceeds h={triple.h}; use the long-delay stepper")


def step_short_delay(state: LoopState, triple: DiscretizationTriple, L,
                     delay: DelaySample | None = None) -> StepRecord:
    """One step of ``x+ = Phi x + G0 u(k) + G1 u(k-1)`` with ``u(k) = -L x(k)``."""
    _check_short(triple)
    u = -L @ state.x
    x_next = triple.phi @ state.x + triple.gamma0 @ u + triple.gamma1 @ state.u_history[-1]
    return _finish(state, x_next, u, u, _delay_of(delay, triple.tau))


def step_long_delay(state: LoopState, lifted: LiftedSystem, L,
                    delay: DelaySample | None = None) -> StepRecord:
    """Advance the lifted state ``[x; u(k-d); ...; u(k-1)]`` by one period."""
    d = lifted.d
    if len(state.u_history) < d:
        raise ContractViolation(f"input history holds {len(state.u_history)} values, lifted model needs {d}")
    z = np.concatenate([state.x, *state.u_history[-d:]])
    u = -L @ state.x
    z_next = lifted.a_aug @ z + lifted.b_aug @ u
    if delay is None:
        delay = DelaySample(tau_sc=math.nan, tau_ca=math.nan, tau_k=math.nan)
    return _finish(state, z_next[:lifted.n], u, u, delay)


def step_naive_loss(state: LoopState, phi, gamma, L, gamma_sc: int, gamma_ca: int,
                    delay: DelaySample | None = None) -> StepRecord:
    """``x+ = gamma_sc Phi x + gamma_ca Gamma u``, taken literally.

    A lost sensor packet wipes the plant's own state term, which no physical
    plant does. Kept for completeness; catalog cases use ``step_compensated``.
    """
    u = -L @ state.x
    x_next = gamma_sc * (phi @ state.x) + gamma_ca * (gamma @ u)
    u_applied = u if gamma_ca else np.zeros_like(u)
    return _finish(state, x_next, u, u_applied, _delay_of(delay, 0.0), gamma_sc, gamma_ca)


def step_compensated(state: LoopState, triple: DiscretizationTriple, L,
                     strategy_sc: CompensationStrategy, strategy_ca: CompensationStrategy,
                     gamma_sc: int, gamma_ca: int, delay: DelaySample | None = None) -> StepRecord:
    """Sense, compensate on the SC link, control, compensate on the CA link, actuate.

    A loss handled by the ``zero`` strategy on either link opens the loop
    for this period: ``x+ = Phi x`` with no input contribution at all.
    """
    _check_short(triple)
    u_computed, estimator = compensate_sc(strategy_sc, gamma_sc, state.x, state.estimator, L, triple)
    u_prev = state.u_history[-1]
    open_loop = ((not gamma_sc and strategy_sc.kind == ZERO)
                 or (not gamma_ca and strategy_ca.kind == ZERO))
    if open_loop:
        u_applied = np.zeros_like(u_computed)
        x_next = triple.phi @ state.x
    else:
        u_applied = compensate_ca(strategy_ca, gamma_ca, u_computed, u_prev, estimator, L, triple)
        x_next = triple.phi @ state.x + triple.gamma0 @ u_applied + triple.gamma1 @ u_prev
    state.estimator = estimator
    return _finish(state, x_next, u_computed, u_applied, _delay_of(delay, triple.tau), gamma_sc, gamma_ca)


def closed_loop_matrix(model, L) -> ClosedLoopMatrix:
    """Autonomous closed-loop map under ``u = -L x``.

    For a ``DiscretizationTriple`` this is ``[[Phi - G0 L, G1], [-L, 0]]``
    over ``[x; u(k-1)]``; for a ``LiftedSystem`` the feedback closes on the
    x-block of the lifted state.
    """
    L = np.asarray(L, dtype=float)
    if isinstance(model, LiftedSystem):
        m = model.a_aug.copy()
        m[:, :model.n] -= model.b_aug @ L
        return ClosedLoopMatrix(m)
    n, mi = model.gamma0.shape
    top = np.hstack([model.phi - model.gamma0 @ L, model.gamma1])
    bottom = np.hstack([-L, np.zeros((mi, mi))])
    return ClosedLoopMatrix(np.vstack([top, bottom]))


# -- scenario runs -------------------------------------------------------------


def _root_stream(seed) -> RandomStream:
    return seed if isinstance(seed, RandomStream) else RandomStream(int(seed))


def _history_length(spec) -> int:
    if spec.info.family != sc.LONG:
        return 2
    _, hi = spec.delay.total_range()
    return max(2, decompose_delay(hi, spec.h).d)


class _Model:
    """Per-run cache of discretizations for one scenario."""

    def __init__(self, spec):
        self.spec = spec
        self.phi, self.gamma = discretize(spec.plant, spec.h)
        cacheable = isinstance(spec.delay, ConstantDelay) or any(
            isinstance(getattr(spec.delay, name, None), DiscreteUniform)
            for name in ("dist", "dist_sc", "dist_ca"))
        size = 256 if cacheable else 0
        self.triple = lru_cache(maxsize=size)(self._triple)
        self.lifted = lru_cache(maxsize=size)(self._lifted)

    def _triple(self, tau):
        spec = self.spec
        return split_input(spec.plant.a, spec.plant.b, spec.h, tau, phi=self.phi)

    def _lifted(self, tau):
        dec = decompose_delay(tau, self.spec.h)
        return lift(self.triple(dec.tau_prime), dec.d)


def _bind_gain(spec):
    if isinstance(spec.gain, LQRGain):
        return spec.gain.bind(spec.plant, spec.h)
    return spec.gain


def run(scenario, steps: int, seed=0, *, loss_pattern=None,
        divergence_threshold: float = DIVERGENCE_THRESHOLD) -> SimulationTrace:
    """Simulate ``scenario`` for ``steps`` periods.

    Delays and losses come from two forks of the stream for ``seed``.
    ``loss_pattern`` (a sequence of ``(gamma_sc, gamma_ca)``) replaces the
    loss draws for the steps it covers. The run stops early once ``||x||``
    exceeds ``divergence_threshold`` or becomes non-finite.
    """
    if steps < 1:
        raise ValueError(f"steps must be >= 1, got {steps}")
    problems = sc.validate(scenario)
    if problems:
        raise ValidationError(problems)
    root = _root_stream(seed)
    delay_rng = fork_stream(root, _DELAY_STREAM)
    loss_rng = fork_stream(root, _LOSS_STREAM)
    model = _Model(scenario)
    policy = _bind_gain(scenario)
    info = scenario.info
    x_hat0 = scenario.x0 if scenario.strategy_sc.init_from_state else None
    state = LoopState.initial(scenario.plant, scenario.h, scenario.x0, _history_length(scenario), x_hat0)
    records = []
    diverged_at = None
    for k in range(steps):
        delay = sample_delay(scenario.delay, delay_rng)
        gammas = sample_loss(scenario.loss, loss_rng)
        if loss_pattern is not None and k < len(loss_pattern):
            gammas = tuple(int(g) for g in loss_pattern[k])
        L = gain(policy, scenario.h, scenario.controller_delay(delay))
        if info.family == sc.DELAY_FREE:
            rec = step_delay_free(state, model.phi, model.gamma, L, delay)
        elif info.family == sc.SHORT:
            rec = step_short_delay(state, model.triple(delay.tau_k), L, delay)
        elif info.family == sc.LONG:
            rec = step_long_delay(state, model.lifted(delay.tau_k), L, delay)
        else:
            rec = step_compensated(state, model.triple(delay.tau_k), L, scenario.strategy_sc,
                                   scenario.strategy_ca, gammas[0], gammas[1], delay)
        records.append(rec)
        norm = float(np.linalg.norm(state.x))
        if not norm <= divergence_threshold:
            diverged_at = state.k
            break
    seed_value = root.seed
    return SimulationTrace(records=records, scenario_id=scenario.case_id, seed=seed_value,
                           h=scenario.h, x_final=state.x, diverged_at=diverged_at)


# -- Monte Carlo ---------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class TrialResult:
    index: int
    norms: np.ndarray  # ||x(k)||, k = 0 .. steps taken
    steps: int
    lost_sc: int
    lost_ca: int
    tau_sums: tuple[float, float, float]
    tau_min: tuple[float, float, float]
    tau_max: tuple[float, float, float]
    diverged_at: int | None


@dataclass(eq=False)
class MonteCarloSummary:
    trials: int
    steps: int
    seed: int
    terminal_norms: list[float]
    mean_norm: np.ndarray
    max_norm: np.ndarray
    total_steps: int
    loss_rate_sc: float
    loss_rate_ca: float
    delay_mean: dict
    delay_min: dict
    delay_max: dict
    divergence_count: int
    diverged_trials: list[int] = field(default_factory=list)

    @property
    def mean_gamma_sc(self) -> float:
        return 1.0 - self.loss_rate_sc

    def to_dict(self) -> dict:
        return {
            "trials": self.trials,
            "steps": self.steps,
            "seed": self.seed,
            "terminal_norms": [float(v) for v in self.terminal_norms],
            "mean_norm": [_finite_or_none(v) for v in self.mean_norm],
            "max_norm": [_finite_or_none(v) for v in self.max_norm],
            "total_steps": self.total_steps,
            "loss_rate_sc": self.loss_rate_sc,
            "loss_rate_ca": self.loss_rate_ca,
            "delay_mean": self.delay_mean,
            "delay_min": self.delay_min,
            "delay_max": self.delay_max,
            "divergence_count": self.divergence_count,
            "diverged_trials": self.diverged_trials,
        }


def _finite_or_none(v):
    v = float(v)
    return v if math.isfinite(v) else None


def run_trial(scenario, steps, seed, index, divergence_threshold=DIVERGENCE_THRESHOLD) -> TrialResult:
    """Trial ``index`` of a Monte Carlo sweep: a run on fork ``index`` of the seed's stream."""
    trace = run(scenario, steps, fork_stream(RandomStream(int(seed)), index),
                divergence_threshold=divergence_threshold)
    taus = np.array([[r.tau_sc, r.tau_ca, r.tau_k] for r in trace.records])
    return TrialResult(
        index=index,
        norms=trace.norms(),
        steps=len(trace.records),
        lost_sc=sum(1 - r.gamma_sc for r in trace.records),
        lost_ca=sum(1 - r.gamma_ca for r in trace.records),
        tau_sums=tuple(math.fsum(col) for col in taus.T),
        tau_min=tuple(float(v) for v in taus.min(axis=0)),
        tau_max=tuple(float(v) for v in taus.max(axis=0)),
        diverged_at=trace.diverged_at,
    )


def aggregate(results, steps: int, seed: int) -> MonteCarloSummary:
    """Merge trial results by trial index, so completion order is irrelevant."""
    results = sorted(results, key=lambda r: r.index)
    norms = np.full((len(results), steps + 1), np.nan)
    for row, res in zip(norms, results):
        row[:len(res.norms)] = res.norms
    total = sum(r.steps for r in results)
    names = ("tau_sc", "tau_ca", "tau_k")
    with warnings.catch_warnings():
        # all-NaN columns when every trial diverged before step k
        warnings.simplefilter("ignore", RuntimeWarning)
        mean_norm = np.nanmean(norms, axis=0)
        max_norm = np.nanmax(norms, axis=0)
    diverged = [r.index for r in results if r.diverged_at is not None]
    return MonteCarloSummary(
        trials=len(results),
        steps=steps,
        seed=seed,
        terminal_norms=[float(r.norms[-1]) for r in results],
        mean_norm=mean_norm,
        max_norm=max_norm,
        total_steps=total,
        loss_rate_sc=sum(r.lost_sc for r in results) / total,
        loss_rate_ca=sum(r.lost_ca for r in results) / total,
        delay_mean={n: math.fsum(r.tau_sums[i] for r in results) / total for i, n in enumerate(names)},
        delay_min={n: min(r.tau_min[i] for r in results) for i, n in enumerate(names)},
        delay_max={n: max(r.tau_max[i] for r in results) for i, n in enumerate(names)},
        divergence_count=len(diverged),
        diverged_trials=diverged,
    )


def monte_carlo(scenario, steps: int, trials: int, seed: int = 0, *, order=None, workers: int | None = None,
                divergence_threshold: float = DIVERGENCE_THRESHOLD) -> MonteCarloSummary:
    """Run ``trials`` independent trials and aggregate them.

    ``order`` permutes the execution order of trial indices; ``workers > 1``
    runs trials in a process pool. Neither changes the summary.
    """
    if trials < 1:
        raise ValueError(f"trials must be >= 1, got {trials}")
    problems = sc.validate(scenario)
    if problems:
        raise ValidationError(problems)
    indices = list(range(trials)) if order is None else list(order)
    if sorted(indices) != list(range(trials)):
        raise ValueError("order must be a permutation of range(trials)")
    if workers and workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(run_trial, scenario, steps, seed, i, divergence_threshold) for i in indices]
            results = [f.result() for f in futures]
    else:
        results = [run_trial(scenario, steps, seed, i, divergence_threshold) for i in indices]
    return aggregate(results, steps, int(seed))
