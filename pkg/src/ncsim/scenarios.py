"""The case catalog, scenario validation, and the JSON scenario file format."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, fields, replace
from fractions import Fraction
from pathlib import Path

import numpy as np

from .channel import (
    ConstantDelay,
    CorrelatedDelay,
    DelaySample,
    DiscreteUniform,
    LossModel,
    SymmetricDelay,
    UncorrelatedDelay,
    Uniform,
)
from .errors import NcsError, ValidationError
from .linalg import ContinuousPlant
from .strategies import (
    ESTIMATE,
    PREVIOUS,
    ZERO,
    CompensationStrategy,
    FixedGain,
    GainBucket,
    LQRGain,
    ScheduledGain,
)

# model families, i.e. which stepper drives the case
DELAY_FREE = "delay_free"
SHORT = "short_delay"
LONG = "long_delay"
COMPENSATED = "compensated"


@dataclass(frozen=True)
class CaseInfo:
    case_id: str
    description: str
    equations: str
    family: str
    delay_kind: str | None  # None: any delay model
    lossy: tuple[str, ...]  # links that may drop packets
    strategy: str | None  # strategy required on the lossy link
    remarks: str = ""


_UNKNOWN_CA = "controller to actuator delay is not known (not possible to calculate tau_k)"
_DELAYS = (
    ("symmetric", "symmetric delays"),
    ("correlated", "correlated delays"),
    ("uncorrelated", "unsymmetrical and uncorrelated delays"),
)
_STRATEGIES = (
    (ZERO, "zero input strategy"),
    (PREVIOUS, "previous input strategy"),
    (ESTIMATE, "linear combination strategy"),
)
_SC_EQUATIONS = {ZERO: "(31)-(32)", PREVIOUS: "(33)-(38)", ESTIMATE: "(39)-(44)"}
_CA_EQUATIONS = {ZERO: "(31)-(32)", PREVIOUS: "(45)-(50)", ESTIMATE: "(51)-(55)"}


def _build_catalog():
    rows = [
        CaseInfo("0a", "no delay", "(3)-(7)", DELAY_FREE, "constant", (), None),
        CaseInfo("0b", "constant delay", "(8)-(13)", SHORT, "constant", (), None),
        CaseInfo("1", "symmetric delays", "(17)-(22)", SHORT, "symmetric", (), None),
        CaseInfo("2", "correlated delays", "(17)-(22)", SHORT, "correlated", (), None),
        CaseInfo("3", "unsymmetrical and uncorrelated delays", "(17)-(22)", SHORT, "uncorrelated",
                 (), None, _UNKNOWN_CA),
        CaseInfo("4", "state space model", "(28)-(30)", LONG, None, (), None, "State space model"),
    ]
    case = 5
    for link, link_text, equations in (
        ("sc", "sensor to controller packet loss", _SC_EQUATIONS),
        ("ca", "controller to actuator packet loss", _CA_EQUATIONS),
    ):
        for delay_kind, delay_text in _DELAYS:
            for strategy, strategy_text in _STRATEGIES:
                remarks = _UNKNOWN_CA if delay_kind == "uncorrelated" else (
                    "3 sets of mathematical model for packet loss compensation")
                rows.append(CaseInfo(
                    str(case), f"{link_text} and {delay_text} with {strategy_text}",
                    equations[strategy], COMPENSATED, delay_kind, (link,), strategy, remarks,
                ))
                case += 1
    rows.append(CaseInfo(
        "23", "sensor to controller packet loss and actuator to controller packet loss",
        "(31)-(55)", COMPENSATED, None, ("sc", "ca"), None,
        "Non-deterministic; simulated by composing both compensators",
    ))
    return {row.case_id: row for row in rows}


CATALOG: dict[str, CaseInfo] = _build_catalog()


def normalize_case_id(case_id) -> str:
    key = str(case_id).strip().lower()
    if key not in CATALOG:
        raise ValidationError([f"case_id: unknown case {case_id!r}; expected one of {list(CATALOG)}"])
    return key


def double_integrator() -> ContinuousPlant:
    return ContinuousPlant(a=[[0.0, 1.0], [0.0, 0.0]], b=[[0.0], [1.0]], c=np.eye(2))


@dataclass(frozen=True, eq=False)
class ScenarioSpec:
    case_id: str
    plant: ContinuousPlant
    h: float
    delay: ConstantDelay | SymmetricDelay | CorrelatedDelay | UncorrelatedDelay
    loss: LossModel
    strategy_sc: CompensationStrategy
    strategy_ca: CompensationStrategy
    gain: FixedGain | ScheduledGain | LQRGain
    x0: np.ndarray
    assumed_tau_ca: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "x0", np.array(self.x0, dtype=float).reshape(-1))

    @property
    def info(self) -> CaseInfo:
        return CATALOG[self.case_id]

    def controller_delay(self, sample: DelaySample) -> float:
        """Round-trip delay as seen by the controller when it picks a gain.

        The controller knows ``tau_sc`` (from a timestamp) but not the
        actuator-side delay; for uncorrelated delays it uses
        ``assumed_tau_ca`` (default: the mean of the actuator-side law).
        """
        delay = self.delay
        if isinstance(delay, SymmetricDelay):
            return 2 * sample.tau_sc
        if isinstance(delay, CorrelatedDelay):
            return sample.tau_sc + sample.tau_sc * delay.ratio.denominator / delay.ratio.numerator
        if isinstance(delay, ConstantDelay) and self.assumed_tau_ca is None:
            return sample.tau_k
        assumed = self.assumed_tau_ca if self.assumed_tau_ca is not None else delay.mean_tau_ca()
        return sample.tau_sc + assumed

    def controller_delay_range(self) -> tuple[float, float]:
        lo, hi = self.delay.total_range()
        if isinstance(self.delay, UncorrelatedDelay):
            assumed = self.assumed_tau_ca if self.assumed_tau_ca is not None else self.delay.mean_tau_ca()
            sc_lo, sc_hi = self.delay.dist_sc.support
            return (sc_lo + assumed, sc_hi + assumed)
        if isinstance(self.delay, ConstantDelay) and self.assumed_tau_ca is not None:
            return (self.delay.tau_sc + self.assumed_tau_ca,) * 2
        return (lo, hi)


# -- catalog defaults ----------------------------------------------------------


def _default_delay(info: CaseInfo, h: float):
    dist = Uniform(0.0, h / 4)
    if info.case_id == "0a":
        return ConstantDelay(0.0)
    if info.case_id == "0b":
        return ConstantDelay(h / 2)
    if info.case_id == "4":
        return ConstantDelay(1.5 * h)
    kind = info.delay_kind or "uncorrelated"
    if kind == "symmetric":
        return SymmetricDelay(dist)
    if kind == "correlated":
        return CorrelatedDelay(dist, Fraction(2))
    return UncorrelatedDelay(dist, dist)


def _default_strategy(info: CaseInfo, link: str) -> CompensationStrategy:
    if link not in info.lossy:
        return CompensationStrategy.zero()
    kind = info.strategy or PREVIOUS
    return CompensationStrategy(kind)


DEFAULT_LOSS_PROBABILITY = 0.2


def scenario_from_case(case_id, plant: ContinuousPlant | None = None, h: float = 0.1,
                       overrides: dict | None = None) -> ScenarioSpec:
    """Catalog entry ``case_id`` bound to ``plant`` and sampling period ``h``.

    ``overrides`` replaces any field except ``case_id``; the result must
    still satisfy the case's structure or ``ValidationError`` is raised.
    """
    key = normalize_case_id(case_id)
    info = CATALOG[key]
    plant = plant if plant is not None else double_integrator()
    p = DEFAULT_LOSS_PROBABILITY
    x0 = np.zeros(plant.n)
    x0[0] = 1.0
    spec = ScenarioSpec(
        case_id=key,
        plant=plant,
        h=h,
        delay=_default_delay(info, h),
        loss=LossModel(p_sc=p if "sc" in info.lossy else 0.0, p_ca=p if "ca" in info.lossy else 0.0),
        strategy_sc=_default_strategy(info, "sc"),
        strategy_ca=_default_strategy(info, "ca"),
        gain=LQRGain(q=np.eye(plant.n), r=np.eye(plant.m)),
        x0=x0,
    )
    if overrides:
        unknown = set(overrides) - {f.name for f in fields(ScenarioSpec)} | ({"case_id"} & set(overrides))
        if unknown:
            raise ValidationError([f"{name}: cannot be overridden" for name in sorted(unknown)])
        spec = replace(spec, **overrides)
    problems = validate(spec)
    if problems:
        raise ValidationError(problems)
    return spec


# -- validation ----------------------------------------------------------------


def _gain_shape_problems(policy, n, m):
    want = (m, n)
    if isinstance(policy, FixedGain):
        return [] if policy.L.shape == want else [f"gain.l: must be {m}x{n}, got {policy.L.shape}"]
    if isinstance(policy, ScheduledGain):
        return [] if policy.shape == want else [f"gain.buckets: gains must be {m}x{n}, got {policy.shape}"]
    if isinstance(policy, LQRGain):
        out = []
        if policy.q.shape != (n, n):
            out.append(f"gain.q: must be {n}x{n}, got {policy.q.shape}")
        if policy.r.shape != (m, m):
            out.append(f"gain.r: must be {m}x{m}, got {policy.r.shape}")
        return out
    return [f"gain: unknown policy {policy!r}"]


def validate(spec: ScenarioSpec) -> list[str]:
    """Every way ``spec`` breaks its case's structure; empty means valid."""
    out: list[str] = []
    info = CATALOG.get(spec.case_id)
    if info is None:
        return [f"case_id: unknown case {spec.case_id!r}"]
    plant, h = spec.plant, spec.h
    if not (isinstance(h, (int, float)) and math.isfinite(h) and h > 0):
        return [f"h: sampling period must be finite and > 0, got {h!r}"]
    if spec.x0.shape != (plant.n,):
        out.append(f"x0: must have {plant.n} entries, got {spec.x0.size}")
    elif not np.all(np.isfinite(spec.x0)):
        out.append("x0: entries must be finite")
    out += _gain_shape_problems(spec.gain, plant.n, plant.m)

    delay = spec.delay
    kind = getattr(delay, "kind", None)
    lo, hi = delay.total_range()
    if info.delay_kind is not None and kind != info.delay_kind:
        out.append(f"delay.kind: case {info.case_id} requires {info.delay_kind} delays, got {kind}")
    if info.case_id == "0a" and hi != 0:
        out.append("delay.tau: case 0a is the delay-free model and requires tau = 0")
    elif info.case_id == "0b" and lo <= 0:
        out.append("delay.tau: case 0b requires a constant delay tau > 0")
    if info.family == LONG:
        if lo <= h:
            out.append(f"delay: case 4 is the long-delay lifted model and requires tau_k > h={h}, "
                       f"support starts at {lo}")
    elif info.family in (SHORT, COMPENSATED) and hi > h:
        out.append(f"delay: short-delay cases require tau_k <= h support (h={h}, max tau_k={hi})")

    loss = spec.loss
    if "sc" not in info.lossy and loss.p_sc != 0:
        out.append(_lossless_message(info, "sc"))
    if "ca" not in info.lossy and loss.p_ca != 0:
        out.append(_lossless_message(info, "ca"))
    if info.strategy is not None:
        link = info.lossy[0]
        chosen = getattr(spec, f"strategy_{link}")
        if chosen.kind != info.strategy:
            out.append(f"strategy_{link}.kind: case {info.case_id} requires the {info.strategy} "
                       f"strategy, got {chosen.kind}")

    if spec.assumed_tau_ca is not None and not (
            math.isfinite(spec.assumed_tau_ca) and spec.assumed_tau_ca >= 0):
        out.append(f"assumed_tau_ca: must be finite and >= 0, got {spec.assumed_tau_ca}")
    elif isinstance(spec.gain, ScheduledGain):
        _, view_hi = spec.controller_delay_range()
        if view_hi > spec.gain.tau_max:
            out.append(f"gain.buckets: schedule ends at {spec.gain.tau_max} but the controller can "
                       f"see delays up to {view_hi}")
    return out


def _lossless_message(info: CaseInfo, link: str) -> str:
    field = f"loss.p_{link}"
    name = "CA" if link == "ca" else "SC"
    if info.family == COMPENSATED:
        span = "5-13" if info.lossy == ("sc",) else "14-22"
        return f"{field}: cases {span} require lossless {name} link"
    return f"{field}: case {info.case_id} requires lossless links"


# -- file format ---------------------------------------------------------------


class _Reader:
    """Strict walker over a decoded document that collects field-level errors."""

    def __init__(self):
        self.errors: list[str] = []

    def section(self, data, path, required, optional=()):
        if not isinstance(data, dict):
            self.errors.append(f"{path or 'document'}: expected an object")
            return None
        for key in data:
            if key not in required and key not in optional:
                self.errors.append(f"{_join(path, key)}: unknown key")
        missing = [k for k in required if k not in data]
        for key in missing:
            self.errors.append(f"{_join(path, key)}: missing")
        return None if missing else data

    def number(self, value, path):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            self.errors.append(f"{path}: expected a number, got {value!r}")
            return None
        return float(value)

    def matrix(self, value, path):
        if (not isinstance(value, list) or not value
                or not all(isinstance(row, list) and row for row in value)
                or len({len(row) for row in value}) != 1
                or not all(isinstance(v, (int, float)) and not isinstance(v, bool)
                           for row in value for v in row)):
            self.errors.append(f"{path}: expected a non-empty rectangular array of numbers")
            return None
        return np.array(value, dtype=float)

    def vector(self, value, path):
        if (not isinstance(value, list) or not value
                or not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in value)):
            self.errors.append(f"{path}: expected a non-empty array of numbers")
            return None
        return np.array(value, dtype=float)

    def build(self, path, factory, *args, **kwargs):
        if any(a is None for a in args) or any(v is None for v in kwargs.values()):
            return None
        try:
            return factory(*args, **kwargs)
        except NcsError as exc:
            self.errors.append(f"{path}: {exc}")
            return None


def _join(path, key):
    return f"{path}.{key}" if path else key


def _mat(arr) -> list:
    return [[float(v) for v in row] for row in np.asarray(arr)]


def _dist_to_dict(dist):
    if isinstance(dist, Uniform):
        return {"kind": "uniform", "lo": float(dist.lo), "hi": float(dist.hi)}
    return {"kind": "discrete", "values": [float(v) for v in dist.values]}


def _delay_to_dict(delay):
    if isinstance(delay, ConstantDelay):
        return {"kind": "constant", "tau_sc": delay.tau_sc, "tau_ca": delay.tau_ca}
    if isinstance(delay, SymmetricDelay):
        return {"kind": "symmetric", "dist": _dist_to_dict(delay.dist)}
    if isinstance(delay, CorrelatedDelay):
        return {"kind": "correlated", "dist": _dist_to_dict(delay.dist), "ratio": str(delay.ratio)}
    return {"kind": "uncorrelated", "dist_sc": _dist_to_dict(delay.dist_sc),
            "dist_ca": _dist_to_dict(delay.dist_ca)}


def _strategy_to_dict(s: CompensationStrategy):
    return {"kind": s.kind, "alpha": float(s.alpha), "beta": float(s.beta),
            "init_from_state": bool(s.init_from_state)}


def _gain_to_dict(g):
    if isinstance(g, FixedGain):
        return {"kind": "fixed", "l": _mat(g.L)}
    if isinstance(g, ScheduledGain):
        return {"kind": "scheduled",
                "buckets": [{"lo": float(b.lo), "hi": float(b.hi), "l": _mat(b.L)} for b in g.buckets]}
    return {"kind": "lqr", "q": _mat(g.q), "r": _mat(g.r)}


def to_dict(spec: ScenarioSpec) -> dict:
    return {
        "case_id": spec.case_id,
        "h": float(spec.h),
        "plant": {"a": _mat(spec.plant.a), "b": _mat(spec.plant.b), "c": _mat(spec.plant.c),
                  "d": _mat(spec.plant.d)},
        "delay": _delay_to_dict(spec.delay),
        "loss": {"p_sc": float(spec.loss.p_sc), "p_ca": float(spec.loss.p_ca)},
        "strategy_sc": _strategy_to_dict(spec.strategy_sc),
        "strategy_ca": _strategy_to_dict(spec.strategy_ca),
        "gain": _gain_to_dict(spec.gain),
        "x0": [float(v) for v in spec.x0],
        "assumed_tau_ca": None if spec.assumed_tau_ca is None else float(spec.assumed_tau_ca),
    }


def _read_dist(r: _Reader, data, path):
    if not isinstance(data, dict) or "kind" not in data:
        r.errors.append(f"{path}.kind: missing")
        return None
    kind = data["kind"]
    if kind == "uniform":
        if r.section(data, path, ("kind", "lo", "hi")) is None:
            return None
        return r.build(path, Uniform, r.number(data["lo"], f"{path}.lo"), r.number(data["hi"], f"{path}.hi"))
    if kind == "discrete":
        if r.section(data, path, ("kind", "values")) is None:
            return None
        values = r.vector(data["values"], f"{path}.values")
        return r.build(path, DiscreteUniform, None if values is None else tuple(values))
    r.errors.append(f"{path}.kind: expected 'uniform' or 'discrete', got {kind!r}")
    return None


def _read_delay(r: _Reader, data, path="delay"):
    if not isinstance(data, dict) or "kind" not in data:
        r.errors.append(f"{path}.kind: missing")
        return None
    kind = data["kind"]
    if kind == "constant":
        if r.section(data, path, ("kind", "tau_sc", "tau_ca")) is None:
            return None
        return r.build(path, ConstantDelay, tau_sc=r.number(data["tau_sc"], f"{path}.tau_sc"),
                       tau_ca=r.number(data["tau_ca"], f"{path}.tau_ca"))
    if kind == "symmetric":
        if r.section(data, path, ("kind", "dist")) is None:
            return None
        return r.build(path, SymmetricDelay, _read_dist(r, data["dist"], f"{path}.dist"))
    if kind == "correlated":
        if r.section(data, path, ("kind", "dist", "ratio")) is None:
            return None
        ratio = data["ratio"]
        if isinstance(ratio, bool) or not isinstance(ratio, (int, str)):
            r.errors.append(f"{path}.ratio: expected an integer or a string like '1/3', got {ratio!r}")
            return None
        return r.build(path, CorrelatedDelay, _read_dist(r, data["dist"], f"{path}.dist"), ratio)
    if kind == "uncorrelated":
        if r.section(data, path, ("kind", "dist_sc", "dist_ca")) is None:
            return None
        return r.build(path, UncorrelatedDelay, _read_dist(r, data["dist_sc"], f"{path}.dist_sc"),
                       _read_dist(r, data["dist_ca"], f"{path}.dist_ca"))
    r.errors.append(f"{path}.kind: unknown delay kind {kind!r}")
    return None


def _read_strategy(r: _Reader, data, path):
    if r.section(data, path, ("kind",), ("alpha", "beta", "init_from_state")) is None:
        return None
    kwargs = {"kind": data["kind"]}
    for key in ("alpha", "beta"):
        if key in data:
            kwargs[key] = r.number(data[key], f"{path}.{key}")
    if "init_from_state" in data:
        if not isinstance(data["init_from_state"], bool):
            r.errors.append(f"{path}.init_from_state: expected true or false")
            return None
        kwargs["init_from_state"] = data["init_from_state"]
    return r.build(path, CompensationStrategy, **kwargs)


def _read_gain(r: _Reader, data, path="gain"):
    if not isinstance(data, dict) or "kind" not in data:
        r.errors.append(f"{path}.kind: missing")
        return None
    kind = data["kind"]
    if kind == "fixed":
        if r.section(data, path, ("kind", "l")) is None:
            return None
        return r.build(path, FixedGain, r.matrix(data["l"], f"{path}.l"))
    if kind == "lqr":
        if r.section(data, path, ("kind", "q", "r")) is None:
            return None
        return r.build(path, LQRGain, r.matrix(data["q"], f"{path}.q"), r.matrix(data["r"], f"{path}.r"))
    if kind == "scheduled":
        if r.section(data, path, ("kind", "buckets")) is None:
            return None
        raw = data["buckets"]
        if not isinstance(raw, list) or not raw:
            r.errors.append(f"{path}.buckets: expected a non-empty array")
            return None
        buckets = []
        for i, b in enumerate(raw):
            bp = f"{path}.buckets[{i}]"
            if r.section(b, bp, ("lo", "hi", "l")) is None:
                return None
            buckets.append(r.build(bp, GainBucket, r.number(b["lo"], f"{bp}.lo"),
                                   r.number(b["hi"], f"{bp}.hi"), r.matrix(b["l"], f"{bp}.l")))
        if any(b is None for b in buckets):
            return None
        return r.build(path, ScheduledGain, tuple(buckets))
    r.errors.append(f"{path}.kind: unknown gain policy {kind!r}")
    return None


_REQUIRED = ("case_id", "h", "plant", "delay", "loss", "strategy_sc", "strategy_ca", "gain", "x0")


def from_dict(data) -> ScenarioSpec:
    """Parse a decoded scenario document; raises ``ValidationError`` listing every problem."""
    r = _Reader()
    if r.section(data, "", _REQUIRED, ("assumed_tau_ca",)) is None:
        raise ValidationError(r.errors)
    case_id = data["case_id"]
    if str(case_id).strip().lower() not in CATALOG:
        r.errors.append(f"case_id: unknown case {case_id!r}")
    h = r.number(data["h"], "h")
    plant = None
    pd = r.section(data["plant"], "plant", ("a", "b", "c"), ("d",))
    if pd is not None:
        mats = {k: r.matrix(pd[k], f"plant.{k}") for k in ("a", "b", "c")}
        if pd.get("d") is not None:
            mats["d"] = r.matrix(pd["d"], "plant.d")
        plant = r.build("plant", ContinuousPlant, **mats)
    delay = _read_delay(r, data["delay"])
    loss = None
    ld = r.section(data["loss"], "loss", ("p_sc", "p_ca"))
    if ld is not None:
        loss = r.build("loss", LossModel, r.number(ld["p_sc"], "loss.p_sc"), r.number(ld["p_ca"], "loss.p_ca"))
    strategy_sc = _read_strategy(r, data["strategy_sc"], "strategy_sc")
    strategy_ca = _read_strategy(r, data["strategy_ca"], "strategy_ca")
    gain = _read_gain(r, data["gain"])
    x0 = r.vector(data["x0"], "x0")
    assumed = data.get("assumed_tau_ca")
    if assumed is not None:
        assumed = r.number(assumed, "assumed_tau_ca")
    if r.errors:
        raise ValidationError(r.errors)
    spec = ScenarioSpec(case_id=str(case_id).strip().lower(), plant=plant, h=h, delay=delay, loss=loss,
                        strategy_sc=strategy_sc, strategy_ca=strategy_ca, gain=gain, x0=x0,
                        assumed_tau_ca=assumed)
    problems = validate(spec)
    if problems:
        raise ValidationError(problems)
    return spec


def dumps(spec: ScenarioSpec) -> str:
    return json.dumps(to_dict(spec), indent=2) + "\n"


def loads(text: str) -> ScenarioSpec:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValidationError([f"document: not valid JSON ({exc})"]) from exc
    return from_dict(data)


def load(path) -> ScenarioSpec:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ValidationError([f"{path}: cannot read scenario file ({exc.strerror})"]) from exc
    return loads(text)


def save(spec: ScenarioSpec, path) -> None:
    Path(path).write_text(dumps(spec))
