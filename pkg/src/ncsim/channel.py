"""Network link models: delay samplers, Bernoulli packet loss, seeded streams.

Randomness comes from numpy's counter-based Philox generator keyed by a
``SeedSequence``. A stream is identified by ``(seed, stream_id)`` where
``stream_id`` is the path of fork labels, so forking is deterministic and
substreams never share state.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .errors import ConfigurationError

_U64 = 2**64


def _check_u64(value, name):
    if not isinstance(value, (int, np.integer)) or not 0 <= value < _U64:
        raise ConfigurationError(f"{name} must be an integer in [0, 2**64), got {value!r}")
    return int(value)


@dataclass(eq=False)
class RandomStream:
    """Deterministic draw sequence for ``(seed, stream_id)``.

    A stream is stateful; give each concurrent drawer its own fork.
    """

    seed: int
    stream_id: tuple[int, ...] = ()
    _gen: np.random.Generator = field(init=False, repr=False)

    def __post_init__(self):
        self.seed = _check_u64(self.seed, "seed")
        self.stream_id = tuple(_check_u64(s, "stream label") for s in self.stream_id)
        seq = np.random.SeedSequence(self.seed, spawn_key=self.stream_id)
        self._gen = np.random.Generator(np.random.Philox(seq))

    def random(self) -> float:
        """One double uniform on [0, 1)."""
        return float(self._gen.random())

    def integers(self, high: int) -> int:
        """One integer uniform on [0, high)."""
        return int(self._gen.integers(high))

    def to_dict(self) -> dict:
        return {"seed": self.seed, "stream_id": list(self.stream_id)}

    @classmethod
    def from_dict(cls, data) -> "RandomStream":
        return cls(seed=data["seed"], stream_id=tuple(data["stream_id"]))


def fork_stream(rng: RandomStream, label: int) -> RandomStream:
    """Independent substream of ``rng`` named by ``label``.

    The fork depends only on the parent's ``(seed, stream_id)`` and the
    label, never on how many draws the parent has made.
    """
    return RandomStream(rng.seed, rng.stream_id + (_check_u64(label, "label"),))


# -- delay distributions ------------------------------------------------------


@dataclass(frozen=True)
class Uniform:
    lo: float
    hi: float

    def __post_init__(self):
        if not (math.isfinite(self.lo) and math.isfinite(self.hi)):
            raise ConfigurationError("uniform bounds must be finite")
        if not 0 <= self.lo <= self.hi:
            raise ConfigurationError(f"uniform needs 0 <= lo <= hi, got [{self.lo}, {self.hi}]")

    def sample(self, rng: RandomStream) -> float:
        return self.lo + (self.hi - self.lo) * rng.random()

    @property
    def support(self) -> tuple[float, float]:
        return (self.lo, self.hi)

    @property
    def mean(self) -> float:
        return 0.5 * (self.lo + self.hi)


@dataclass(frozen=True)
class DiscreteUniform:
    values: tuple[float, ...]

    def __post_init__(self):
        values = tuple(float(v) for v in self.values)
        if not values:
            raise ConfigurationError("discrete uniform needs at least one value")
        if any(not math.isfinite(v) or v < 0 for v in values):
            raise ConfigurationError("discrete uniform values must be finite and >= 0")
        object.__setattr__(self, "values", values)

    def sample(self, rng: RandomStream) -> float:
        return self.values[rng.integers(len(self.values))]

    @property
    def support(self) -> tuple[float, float]:
        return (min(self.values), max(self.values))

    @property
    def mean(self) -> float:
        return math.fsum(self.values) / len(self.values)


Distribution = Uniform | DiscreteUniform


# -- delay models --------------------------------------------------------------


@dataclass(frozen=True)
class DelaySample:
    tau_sc: float
    tau_ca: float
    tau_k: float


def _delay_sample(tau_sc, tau_ca):
    return DelaySample(tau_sc=tau_sc, tau_ca=tau_ca, tau_k=tau_sc + tau_ca)


@dataclass(frozen=True)
class ConstantDelay:
    """Fixed round-trip delay. Given only ``tau``, it is split evenly between links."""

    tau: float | None = None
    tau_sc: float | None = None
    tau_ca: float | None = None
    kind = "constant"

    def __post_init__(self):
        if self.tau_sc is None and self.tau_ca is None:
            if self.tau is None:
                raise ConfigurationError("constant delay needs tau or both tau_sc and tau_ca")
            tau_sc = tau_ca = self.tau / 2
        elif self.tau_sc is None or self.tau_ca is None:
            raise ConfigurationError("constant delay needs both tau_sc and tau_ca")
        else:
            tau_sc, tau_ca = float(self.tau_sc), float(self.tau_ca)
        tau = tau_sc + tau_ca
        if self.tau is not None and self.tau != tau:
            raise ConfigurationError(f"tau={self.tau} disagrees with tau_sc + tau_ca = {tau}")
        if not (math.isfinite(tau) and tau_sc >= 0 and tau_ca >= 0):
            raise ConfigurationError("constant delays must be finite and >= 0")
        object.__setattr__(self, "tau", tau)
        object.__setattr__(self, "tau_sc", tau_sc)
        object.__setattr__(self, "tau_ca", tau_ca)

    def sample(self, rng: RandomStream) -> DelaySample:
        return _delay_sample(self.tau_sc, self.tau_ca)

    def total_range(self) -> tuple[float, float]:
        return (self.tau, self.tau)

    def mean_tau_ca(self) -> float:
        return self.tau_ca


@dataclass(frozen=True)
class SymmetricDelay:
    """Both links see the same delay: ``tau_sc = tau_ca``, ``tau_k = 2 tau_ca``."""

    dist: Distribution
    kind = "symmetric"

    def sample(self, rng: RandomStream) -> DelaySample:
        tau = self.dist.sample(rng)
        return _delay_sample(tau, tau)

    def total_range(self) -> tuple[float, float]:
        lo, hi = self.dist.support
        return (2 * lo, 2 * hi)

    def mean_tau_ca(self) -> float:
        return self.dist.mean


def _as_ratio(value) -> Fraction:
    try:
        ratio = Fraction(value)
    except (TypeError, ValueError, ZeroDivisionError) as exc:
        raise ConfigurationError(f"ratio must be a rational number, got {value!r}") from exc
    if ratio <= 0 or (ratio.denominator != 1 and ratio.numerator != 1):
        raise ConfigurationError(f"ratio must be k or 1/k for a positive integer k, got {ratio}")
    return ratio


@dataclass(frozen=True)
class CorrelatedDelay:
    """``tau_sc = ratio * tau_ca`` with ``ratio`` an integer or a unit fraction."""

    dist: Distribution
    ratio: Fraction = Fraction(2)
    kind = "correlated"

    def __post_init__(self):
        object.__setattr__(self, "ratio", _as_ratio(self.ratio))

    def scale(self, tau_ca: float) -> float:
        return tau_ca * self.ratio.numerator / self.ratio.denominator

    def sample(self, rng: RandomStream) -> DelaySample:
        tau_ca = self.dist.sample(rng)
        return _delay_sample(self.scale(tau_ca), tau_ca)

    def total_range(self) -> tuple[float, float]:
        lo, hi = self.dist.support
        return (self.scale(lo) + lo, self.scale(hi) + hi)

    def mean_tau_ca(self) -> float:
        return self.dist.mean


@dataclass(frozen=True)
class UncorrelatedDelay:
    """Independent delays on the two links."""

    dist_sc: Distribution
    dist_ca: Distribution
    kind = "uncorrelated"

    def sample(self, rng: RandomStream) -> DelaySample:
        tau_sc = self.dist_sc.sample(rng)
        tau_ca = self.dist_ca.sample(rng)
        return _delay_sample(tau_sc, tau_ca)

    def total_range(self) -> tuple[float, float]:
        (a, b), (c, d) = self.dist_sc.support, self.dist_ca.support
        return (a + c, b + d)

    def mean_tau_ca(self) -> float:
        return self.dist_ca.mean


DelayModel = ConstantDelay | SymmetricDelay | CorrelatedDelay | UncorrelatedDelay


def sample_delay(model: DelayModel, rng: RandomStream) -> DelaySample:
    return model.sample(rng)


# -- packet loss ---------------------------------------------------------------


@dataclass(frozen=True)
class LossModel:
    """I.i.d. per-step loss probabilities for the two links."""

    p_sc: float = 0.0
    p_ca: float = 0.0

    def __post_init__(self):
        for name in ("p_sc", "p_ca"):
            p = getattr(self, name)
            if not (isinstance(p, (int, float)) and 0.0 <= p <= 1.0):
                raise ConfigurationError(f"{name} must be a probability in [0, 1], got {p!r}")


def sample_loss(model: LossModel, rng: RandomStream) -> tuple[int, int]:
    """Arrival flags ``(gamma_sc, gamma_ca)``: 1 delivered, 0 lost.

    Both links are drawn every call so the stream position does not depend
    on the probabilities.
    """
    gamma_sc = 0 if rng.random() < model.p_sc else 1
    gamma_ca = 0 if rng.random() < model.p_ca else 1
    return gamma_sc, gamma_ca
