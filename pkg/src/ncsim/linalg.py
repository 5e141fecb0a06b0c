"""Small dense linear algebra for sampled-data loops.

Matrices are plain 2-D ``numpy.float64`` arrays. Everything here is a pure
function of its arguments.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .errors import DimensionError, DomainError

_EPS = np.finfo(float).eps


def as_matrix(value, name="matrix") -> np.ndarray:
    """Coerce ``value`` to a finite 2-D float array (read-only copy)."""
    arr = np.array(value, dtype=float, ndmin=2)
    if arr.ndim != 2:
        raise DimensionError(f"{name} must be 2-D, got shape {arr.shape}")
    if arr.size == 0:
        raise DimensionError(f"{name} must have at least one row and column")
    if not np.all(np.isfinite(arr)):
        raise DomainError(f"{name} has non-finite entries")
    arr.setflags(write=False)
    return arr


def _square(value, name):
    arr = as_matrix(value, name)
    if arr.shape[0] != arr.shape[1]:
        raise DimensionError(f"{name} must be square, got shape {arr.shape}")
    return arr


@dataclass(frozen=True, eq=False)
class ContinuousPlant:
    """Continuous LTI plant ``x' = A x + B u``, ``y = C x + D u``."""

    a: np.ndarray
    b: np.ndarray
    c: np.ndarray
    d: np.ndarray | None = None

    def __post_init__(self):
        a = _square(self.a, "a")
        n = a.shape[0]
        b = as_matrix(self.b, "b")
        c = as_matrix(self.c, "c")
        if b.shape[0] != n:
            raise DimensionError(f"b must have {n} rows, got {b.shape[0]}")
        if c.shape[1] != n:
            raise DimensionError(f"c must have {n} columns, got {c.shape[1]}")
        if self.d is None:
            d = np.zeros((c.shape[0], b.shape[1]))
            d.setflags(write=False)
        else:
            d = as_matrix(self.d, "d")
            if d.shape != (c.shape[0], b.shape[1]):
                raise DimensionError(
                    f"d must be {c.shape[0]}x{b.shape[1]}, got {d.shape[0]}x{d.shape[1]}"
                )
        for field, arr in (("a", a), ("b", b), ("c", c), ("d", d)):
            object.__setattr__(self, field, arr)

    @property
    def n(self) -> int:
        return self.a.shape[0]

    @property
    def m(self) -> int:
        return self.b.shape[1]

    @property
    def p(self) -> int:
        return self.c.shape[0]


@dataclass(frozen=True, eq=False)
class DiscretizationTriple:
    """Sampled plant over one period ``h`` with the input split at ``h - tau``.

    ``gamma0`` weights the input issued this period, ``gamma1`` the input
    still held from the previous one.
    """

    phi: np.ndarray
    gamma0: np.ndarray
    gamma1: np.ndarray
    h: float
    tau: float

    @property
    def gamma(self) -> np.ndarray:
        return self.gamma0 + self.gamma1


@dataclass(frozen=True)
class DelayDecomposition:
    d: int
    tau_prime: float


@dataclass(frozen=True, eq=False)
class LiftedSystem:
    """Delay-free recursion over ``[x(k); u(k-d); ...; u(k-1)]``."""

    a_aug: np.ndarray
    b_aug: np.ndarray
    n: int
    m: int
    d: int


def _taylor_degree(norm: float) -> int:
    """Smallest K with ``norm^(K+1) / (K+1)! <= eps / 8`` (the truncation bound)."""
    k, term = 0, 1.0
    while True:
        k += 1
        term *= norm / k
        if term <= _EPS / 8 or k >= 30:
            return k - 1 if k > 1 else 1


def mat_exp(m, t: float = 1.0) -> np.ndarray:
    """Matrix exponential ``e^{m t}`` by scaling and squaring a Taylor series.

    The argument is scaled by ``2**-s`` until its 1-norm is at most 1/2, a
    Taylor polynomial whose truncation error is below machine precision is
    evaluated in Horner form, and the result is squared ``s`` times.
    """
    m = _square(m, "m")
    if not math.isfinite(t):
        raise DomainError(f"t must be finite, got {t}")
    if t < 0:
        raise DomainError(f"t must be >= 0, got {t}")
    return _expm(m * t)


def _expm(a: np.ndarray) -> np.ndarray:
    eye = np.eye(a.shape[0])
    norm = float(np.abs(a).sum(axis=0).max())
    if norm == 0.0:
        return eye
    s = max(0, math.ceil(math.log2(norm / 0.5)))
    a = a / 2.0**s
    degree = _taylor_degree(norm / 2.0**s)
    result = eye + a / degree
    for k in range(degree - 1, 0, -1):
        result = eye + (a @ result) / k
    for _ in range(s):
        result = result @ result
    return result


def _zoh_block(a: np.ndarray, b: np.ndarray, s: float):
    """Return ``(e^{a s}, int_0^s e^{a r} dr b)`` from one block exponential."""
    n, m = b.shape
    block = np.zeros((n + m, n + m))
    block[:n, :n] = a
    block[:n, n:] = b
    e = _expm(block * s)
    return e[:n, :n], e[:n, n:]


def _check_period(h):
    if not (math.isfinite(h) and h > 0):
        raise DomainError(f"sampling period h must be finite and > 0, got {h}")


def discretize(plant: ContinuousPlant, h: float) -> tuple[np.ndarray, np.ndarray]:
    """Zero-order-hold sampling: ``(Phi, Gamma)`` over one period ``h``."""
    _check_period(h)
    return _zoh_block(plant.a, plant.b, h)


def split_input(a, b, h, tau, phi=None) -> DiscretizationTriple:
    """``gamma_split`` on raw matrices; ``phi`` may be passed in to skip one exponential."""
    _check_period(h)
    if not (math.isfinite(tau) and 0.0 <= tau <= h):
        raise DomainError(f"tau must lie in [0, h={h}], got {tau}; decompose longer delays first")
    if phi is None:
        phi = mat_exp(a, h)
    head, gamma0 = _zoh_block(a, b, h - tau)
    _, tail = _zoh_block(a, b, tau)
    gamma1 = head @ tail
    return DiscretizationTriple(phi=phi, gamma0=gamma0, gamma1=gamma1, h=float(h), tau=float(tau))


def gamma_split(plant: ContinuousPlant, h: float, tau: float) -> DiscretizationTriple:
    """Sampled plant when the new input lands ``tau`` seconds into the period.

    ``gamma0 = int_0^{h-tau} e^{As} ds B`` and
    ``gamma1 = e^{A(h-tau)} int_0^tau e^{As} ds B``; their sum is the
    delay-free input matrix.
    """
    return split_input(plant.a, plant.b, h, tau)


def decompose_delay(tau: float, h: float) -> DelayDecomposition:
    """Split ``tau`` into ``(d - 1) h + tau_prime`` with ``0 < tau_prime <= h``.

    An exact multiple ``k h`` maps to ``d = k, tau_prime = h``.
    """
    _check_period(h)
    if not (math.isfinite(tau) and tau > 0):
        raise DomainError(f"delay must be finite and > 0, got {tau}")
    # exact rational arithmetic so the boundary convention is not lost to rounding
    ft, fh = Fraction(tau), Fraction(h)
    d = math.ceil(ft / fh)
    return DelayDecomposition(d=d, tau_prime=float(ft - (d - 1) * fh))


def lift(triple: DiscretizationTriple, d: int) -> LiftedSystem:
    """Lift ``x+ = Phi x + G0 u(k-d+1) + G1 u(k-d)`` to a delay-free pair."""
    if d < 1:
        raise DomainError(f"d must be >= 1, got {d}")
    phi, g0, g1 = triple.phi, triple.gamma0, triple.gamma1
    n, m = g0.shape
    size = n + d * m
    a_aug = np.zeros((size, size))
    b_aug = np.zeros((size, m))
    a_aug[:n, :n] = phi
    # slot i holds u(k-d+i); slot 0 is the oldest
    a_aug[:n, n:n + m] = g1
    if d == 1:
        b_aug[:n] = g0
    else:
        a_aug[:n, n + m:n + 2 * m] = g0
    for i in range(d - 1):
        rows = slice(n + i * m, n + (i + 1) * m)
        cols = slice(n + (i + 1) * m, n + (i + 2) * m)
        a_aug[rows, cols] = np.eye(m)
    b_aug[n + (d - 1) * m:] = np.eye(m)
    return LiftedSystem(a_aug=a_aug, b_aug=b_aug, n=n, m=m, d=d)


def build_lifted(plant: ContinuousPlant, h: float, d: int, tau_prime: float) -> LiftedSystem:
    """Lifted model for a delay of ``(d - 1) h + tau_prime``."""
    if not isinstance(d, (int, np.integer)) or d < 1:
        raise DomainError(f"d must be a positive integer, got {d!r}")
    if not (math.isfinite(tau_prime) and 0 < tau_prime <= h):
        raise DomainError(f"tau_prime must lie in (0, h={h}], got {tau_prime}")
    return lift(gamma_split(plant, h, tau_prime), int(d))


def spectral_radius(m, rtol: float = 1e-6, max_squarings: int = 40) -> float:
    """Estimate ``max |eig(m)|`` as ``lim ||m^(2^k)||^(1/2^k)``.

    The running power is renormalised after every squaring and the scale
    is accumulated in log space, so large or tiny radii neither overflow
    nor underflow.
    """
    m = _square(m, "m")
    norm = np.linalg.norm(m, 2)
    if norm == 0.0:
        return 0.0
    power = m / norm
    # log ||m^(2^k)|| / 2^k = log n_0 + log n_1 / 2 + ... + log n_k / 2^k
    log_estimate = math.log(norm)
    estimate = norm
    for k in range(1, max_squarings + 1):
        power = power @ power
        norm = np.linalg.norm(power, 2)
        if norm == 0.0:
            return 0.0
        power = power / norm
        log_estimate += math.log(norm) / 2.0**k
        new_estimate = math.exp(log_estimate)
        if abs(new_estimate - estimate) <= rtol * new_estimate:
            return new_estimate
        estimate = new_estimate
    return estimate
