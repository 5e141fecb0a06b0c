"""Command-line interface: ``ncsim <command> ...``.

Exit codes: 0 on success (a diverged run is a result, not an error),
2 for usage and validation problems, 1 for internal errors.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys

import numpy as np

from . import scenarios
from .errors import NcsError, ValidationError
from .linalg import gamma_split
from .sim import _bind_gain, closed_loop_matrix, monte_carlo, run
from .strategies import gain


class UsageError(Exception):
    pass


def _fmt(v) -> str:
    # shortest round-trip representation keeps output byte-deterministic
    return repr(float(v))


def _fmt12(v) -> str:
    return f"{float(v):.12g}"


def _print_matrix(name, m, out):
    out.write(f"{name} =\n")
    for row in np.atleast_2d(m):
        out.write("  " + "  ".join(_fmt12(v) for v in row) + "\n")


def _trace_columns(trace, n, p, m):
    return (["k", "t"] + [f"x_{i}" for i in range(n)] + [f"y_{i}" for i in range(p)]
            + [f"u_computed_{i}" for i in range(m)] + [f"u_applied_{i}" for i in range(m)]
            + ["tau_sc", "tau_ca", "tau_k", "gamma_sc", "gamma_ca"])


def _trace_rows(trace):
    for r in trace.records:
        yield ([r.k, r.t, *r.x, *r.y, *r.u_computed, *r.u_applied, r.tau_sc, r.tau_ca, r.tau_k,
                r.gamma_sc, r.gamma_ca])


def _cell(v):
    if isinstance(v, (int, np.integer)) and not isinstance(v, bool):
        return str(int(v))
    return _fmt(v)


def _json_value(v):
    if isinstance(v, (int, np.integer)):
        return int(v)
    v = float(v)
    return v if math.isfinite(v) else None


def _emit(text: str, out_path):
    if out_path is None:
        sys.stdout.write(text)
    else:
        with open(out_path, "w", newline="") as fh:
            fh.write(text)


def cmd_discretize(args):
    spec = scenarios.load(args.scenario)
    tau = args.tau
    if not 0 <= tau <= spec.h:
        raise UsageError(f"--tau must lie in [0, h={spec.h}], got {tau}")
    triple = gamma_split(spec.plant, spec.h, tau)
    out = sys.stdout
    out.write(f"h = {_fmt12(spec.h)}\ntau = {_fmt12(tau)}\n")
    _print_matrix("Phi", triple.phi, out)
    _print_matrix("Gamma", triple.gamma, out)
    _print_matrix("Gamma0", triple.gamma0, out)
    _print_matrix("Gamma1", triple.gamma1, out)
    return 0


def cmd_simulate(args):
    spec = scenarios.load(args.scenario)
    if args.steps < 1:
        raise UsageError("--steps must be >= 1")
    trace = run(spec, args.steps, args.seed)
    plant = spec.plant
    columns = _trace_columns(trace, plant.n, plant.p, plant.m)
    if args.format == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\r\n")
        writer.writerow(columns)
        for row in _trace_rows(trace):
            writer.writerow([_cell(v) for v in row])
        text = buf.getvalue()
        if trace.diverged_at is not None:
            sys.stderr.write(f"diverged_at={trace.diverged_at}\n")
    else:
        doc = {
            "columns": columns,
            "records": [dict(zip(columns, (_json_value(v) for v in row))) for row in _trace_rows(trace)],
            "summary": {
                "case_id": trace.scenario_id,
                "seed": trace.seed,
                "steps": len(trace.records),
                "x_final": [_json_value(v) for v in trace.x_final],
                "diverged_at": trace.diverged_at,
            },
        }
        text = json.dumps(doc, indent=1) + "\n"
    _emit(text, args.out)
    return 0


def cmd_montecarlo(args):
    spec = scenarios.load(args.scenario)
    if args.trials < 1 or args.steps < 1:
        raise UsageError("--trials and --steps must be >= 1")
    summary = monte_carlo(spec, args.steps, args.trials, args.seed, workers=args.workers)
    doc = {"case_id": spec.case_id, **summary.to_dict()}
    _emit(json.dumps(doc, indent=1) + "\n", args.out)
    return 0


def _parse_grid(text, h):
    try:
        lo, hi, step = (float(part) for part in text.split(":"))
    except ValueError as exc:
        raise UsageError(f"--tau-grid must be lo:hi:step, got {text!r}") from exc
    if not (0 <= lo <= hi <= h):
        raise UsageError(f"--tau-grid must lie within [0, h={h}], got {text!r}")
    if not step > 0:
        raise UsageError("--tau-grid step must be > 0")
    count = int(math.floor((hi - lo) / step + 1e-9)) + 1
    return [min(lo + i * step, hi) for i in range(count)]


def cmd_stability(args):
    spec = scenarios.load(args.scenario)
    taus = _parse_grid(args.tau_grid, spec.h)
    policy = _bind_gain(spec)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\r\n")
    writer.writerow(["tau", "spectral_radius", "unstable"])
    for tau in taus:
        L = gain(policy, spec.h, tau)
        radius = closed_loop_matrix(gamma_split(spec.plant, spec.h, tau), L).spectral_radius()
        writer.writerow([_fmt(tau), _fmt(radius), int(radius >= 1)])
    sys.stdout.write(buf.getvalue())
    return 0


def cmd_catalog(args):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\r\n")
    writer.writerow(["case", "description", "model", "remarks"])
    for info in scenarios.CATALOG.values():
        writer.writerow([info.case_id, info.description, info.equations, info.remarks])
    sys.stdout.write(buf.getvalue())
    return 0


def cmd_template(args):
    spec = scenarios.scenario_from_case(args.case, h=args.h)
    _emit(scenarios.dumps(spec), args.out)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ncsim", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("discretize", help="print Phi, Gamma, Gamma0, Gamma1 for a scenario")
    p.add_argument("scenario")
    p.add_argument("--tau", type=float, default=0.0)
    p.set_defaults(func=cmd_discretize)

    p = sub.add_parser("simulate", help="run one simulation and write its trace")
    p.add_argument("scenario")
    p.add_argument("--steps", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("--out")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("montecarlo", help="run independent trials and summarise them")
    p.add_argument("scenario")
    p.add_argument("--trials", type=int, required=True)
    p.add_argument("--steps", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--out")
    p.set_defaults(func=cmd_montecarlo)

    p = sub.add_parser("stability", help="closed-loop spectral radius over a delay grid")
    p.add_argument("scenario")
    p.add_argument("--tau-grid", required=True, metavar="LO:HI:STEP")
    p.set_defaults(func=cmd_stability)

    p = sub.add_parser("catalog", help="list every catalog case")
    p.set_defaults(func=cmd_catalog)

    p = sub.add_parser("template", help="write the default scenario file for a case")
    p.add_argument("case")
    p.add_argument("--h", type=float, default=0.1)
    p.add_argument("--out")
    p.set_defaults(func=cmd_template)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ValidationError as exc:
        for problem in exc.violations:
            sys.stderr.write(f"error: {problem}\n")
        return 2
    except (UsageError, NcsError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 2
    except Exception as exc:  # noqa: BLE001
        sys.stderr.write(f"internal error: {exc!r}\n")
        return 1


if __name__ == "__main__":
    sys.exit(main())
