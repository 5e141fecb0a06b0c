"""Packet-loss compensation on either link, and state-feedback gain policies."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import ConfigurationError, DesignError, DimensionError
from .linalg import ContinuousPlant, DiscretizationTriple, as_matrix, discretize

ZERO = "zero"
PREVIOUS = "previous"
ESTIMATE = "estimate"
STRATEGY_KINDS = (ZERO, PREVIOUS, ESTIMATE)


@dataclass(frozen=True)
class CompensationStrategy:
    """What a link substitutes for a lost packet.

    ``alpha`` and ``beta`` only matter for ``estimate``. ``init_from_state``
    seeds the sensor-side estimate with the true initial state instead of zero.
    """

    kind: str = ZERO
    alpha: float = 0.5
    beta: float = 0.5
    init_from_state: bool = False

    def __post_init__(self):
        if self.kind not in STRATEGY_KINDS:
            raise ConfigurationError(f"strategy kind must be one of {STRATEGY_KINDS}, got {self.kind!r}")
        for name in ("alpha", "beta"):
            v = getattr(self, name)
            if not (isinstance(v, (int, float)) and 0.0 <= v <= 1.0):
                raise ConfigurationError(f"{name} must lie in [0, 1], got {v!r}")

    @classmethod
    def zero(cls):
        return cls(ZERO)

    @classmethod
    def previous(cls):
        return cls(PREVIOUS)

    @classmethod
    def estimate(cls, alpha=0.5, beta=0.5, init_from_state=False):
        return cls(ESTIMATE, alpha, beta, init_from_state)


@dataclass(frozen=True, eq=False)
class EstimatorState:
    """Memory shared by the compensators.

    ``u_prev`` and ``u_prev2`` are the inputs applied at k-1 and k-2,
    ``x_prev`` is the true state at k-1. ``x_hat`` is the sensor-side model
    estimate; ``primed`` is False until it has been used once.
    """

    x_hat: np.ndarray
    x_prev: np.ndarray
    u_prev: np.ndarray
    u_prev2: np.ndarray
    primed: bool = False

    @classmethod
    def initial(cls, n: int, m: int, x_hat0=None) -> "EstimatorState":
        x_hat = np.zeros(n) if x_hat0 is None else np.array(x_hat0, dtype=float)
        return cls(x_hat=x_hat, x_prev=np.zeros(n), u_prev=np.zeros(m), u_prev2=np.zeros(m))

    def advance(self, x, u_applied) -> "EstimatorState":
        """Shift histories after a step that applied ``u_applied`` at state ``x``."""
        return replace(self, x_prev=np.array(x, dtype=float), u_prev=np.array(u_applied, dtype=float),
                       u_prev2=self.u_prev)


def _predict(triple: DiscretizationTriple, x, u_prev, u_prev2):
    return triple.phi @ x + triple.gamma0 @ u_prev + triple.gamma1 @ u_prev2


def compensate_sc(strategy: CompensationStrategy, gamma_sc: int, x, estimator: EstimatorState,
                  L, triple: DiscretizationTriple):
    """Controller output when the sensor packet may have been lost.

    Returns ``(u, estimator)``. The model estimate is propagated every step
    when the strategy is ``estimate``, whether or not the packet arrived.
    """
    if strategy.kind == ESTIMATE:
        if estimator.primed:
            x_hat = _predict(triple, estimator.x_hat, estimator.u_prev, estimator.u_prev2)
        else:
            x_hat = estimator.x_hat
        estimator = replace(estimator, x_hat=x_hat, primed=True)
    if gamma_sc:
        return -L @ x, estimator
    if strategy.kind == ZERO:
        return np.zeros(L.shape[0]), estimator
    if strategy.kind == PREVIOUS:
        return -L @ estimator.x_prev, estimator
    x_tilde = strategy.alpha * estimator.x_hat + strategy.beta * estimator.x_prev
    return -L @ x_tilde, estimator


def compensate_ca(strategy: CompensationStrategy, gamma_ca: int, u_computed, u_prev_applied,
                  estimator: EstimatorState, L, triple: DiscretizationTriple):
    """Input the actuator applies when the controller packet may have been lost."""
    if gamma_ca:
        return u_computed
    if strategy.kind == ZERO:
        return np.zeros_like(u_computed)
    if strategy.kind == PREVIOUS:
        return u_prev_applied
    # one-step prediction from the previous true state
    x_hat = _predict(triple, estimator.x_prev, estimator.u_prev, estimator.u_prev2)
    u_tilde = -L @ x_hat
    return strategy.alpha * u_tilde + strategy.beta * u_computed


# -- gain policies -------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class FixedGain:
    L: np.ndarray
    kind = "fixed"

    def __post_init__(self):
        object.__setattr__(self, "L", as_matrix(self.L, "L"))


@dataclass(frozen=True, eq=False)
class GainBucket:
    lo: float
    hi: float
    L: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "L", as_matrix(self.L, "L"))


@dataclass(frozen=True, eq=False)
class ScheduledGain:
    """Piecewise-constant ``L(tau)`` over contiguous buckets starting at 0.

    A delay equal to a shared bucket edge uses the upper bucket; the last
    bucket includes its right edge.
    """

    buckets: tuple[GainBucket, ...]
    kind = "scheduled"

    def __post_init__(self):
        buckets = tuple(self.buckets)
        if not buckets:
            raise ConfigurationError("scheduled gain needs at least one bucket")
        if buckets[0].lo != 0:
            raise ConfigurationError(f"schedule must start at tau = 0, starts at {buckets[0].lo}")
        for b in buckets:
            if not b.lo < b.hi:
                raise ConfigurationError(f"bucket [{b.lo}, {b.hi}] is empty")
        for left, right in zip(buckets, buckets[1:]):
            if left.hi != right.lo:
                raise ConfigurationError(f"schedule has a gap or overlap at {left.hi} / {right.lo}")
        shapes = {b.L.shape for b in buckets}
        if len(shapes) != 1:
            raise ConfigurationError(f"scheduled gains have mixed shapes {sorted(shapes)}")
        object.__setattr__(self, "buckets", buckets)

    @property
    def tau_max(self) -> float:
        return self.buckets[-1].hi

    @property
    def shape(self):
        return self.buckets[0].L.shape

    def lookup(self, tau: float) -> np.ndarray:
        for b in self.buckets:
            if b.lo <= tau < b.hi:
                return b.L
        if tau == self.tau_max:
            return self.buckets[-1].L
        raise ConfigurationError(f"tau={tau} is outside the gain schedule [0, {self.tau_max}]")


@dataclass(frozen=True, eq=False)
class LQRGain:
    """Discrete LQR gain designed once on the delay-free sampled plant."""

    q: np.ndarray
    r: np.ndarray
    kind = "lqr"

    def __post_init__(self):
        object.__setattr__(self, "q", as_matrix(self.q, "q"))
        object.__setattr__(self, "r", as_matrix(self.r, "r"))

    def bind(self, plant: ContinuousPlant, h: float) -> FixedGain:
        phi, gamma = discretize(plant, h)
        return FixedGain(lqr_design(phi, gamma, self.q, self.r))


GainPolicy = FixedGain | ScheduledGain | LQRGain


def gain(policy: GainPolicy, h: float, tau_k: float, plant: ContinuousPlant | None = None) -> np.ndarray:
    """Feedback matrix ``L`` for the delay the controller believes is ``tau_k``.

    ``LQRGain`` needs ``plant``; bind it once with ``LQRGain.bind`` when
    calling this in a loop.
    """
    if not tau_k >= 0:
        raise ConfigurationError(f"tau_k must be >= 0, got {tau_k}")
    if isinstance(policy, FixedGain):
        return policy.L
    if isinstance(policy, ScheduledGain):
        return policy.lookup(tau_k)
    if isinstance(policy, LQRGain):
        if plant is None:
            raise ConfigurationError("LQR gain policy needs the plant; bind it first")
        return policy.bind(plant, h).L
    raise ConfigurationError(f"unknown gain policy {policy!r}")


def lqr_design(phi, gamma, q, r, tol: float = 1e-10, max_iter: int = 10_000) -> np.ndarray:
    """Infinite-horizon discrete LQR gain by iterating the Riccati recursion.

    Starts from ``P = Q`` and stops when successive iterates differ by less
    than ``tol`` in max-norm. Returns ``L`` such that ``u = -L x``.
    """
    phi, gamma = as_matrix(phi, "phi"), as_matrix(gamma, "gamma")
    q, r = as_matrix(q, "q"), as_matrix(r, "r")
    n, m = gamma.shape
    if phi.shape != (n, n) or q.shape != (n, n) or r.shape != (m, m):
        raise DimensionError(
            f"inconsistent LQR dimensions: phi {phi.shape}, gamma {gamma.shape}, q {q.shape}, r {r.shape}"
        )
    if not np.allclose(q, q.T) or np.linalg.eigvalsh(q).min() < -1e-12:
        raise DesignError("q must be symmetric positive semidefinite")
    if not np.allclose(r, r.T) or np.linalg.eigvalsh(r).min() <= 0:
        raise DesignError("r must be symmetric positive definite")
    p = q
    for _ in range(max_iter):
        with np.errstate(over="ignore", invalid="ignore"):
            k = np.linalg.solve(r + gamma.T @ p @ gamma, gamma.T @ p @ phi)
        with np.errstate(over="ignore", invalid="ignore"):
            p_next = q + phi.T @ p @ phi - phi.T @ p @ gamma @ k
        p_next = 0.5 * (p_next + p_next.T)
        if not np.all(np.isfinite(p_next)):
            break
        if np.max(np.abs(p_next - p)) < tol:
            p = p_next
            return np.linalg.solve(r + gamma.T @ p @ gamma, gamma.T @ p @ phi)
        p = p_next
    raise DesignError(
        f"Riccati recursion did not converge in {max_iter} iterations; (phi, gamma) may not be stabilizable"
    )
