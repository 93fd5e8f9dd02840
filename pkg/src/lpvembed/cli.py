"""Command-line front end.

Verbs: convert (model -> LPV artifact), range (scheduling extrema over a
box), simulate (nonlinear model or self-scheduled LPV artifact to a
trajectory CSV), compare (RMSE between the two), info.

Exit codes: 0 success, 2 parse/usage error, 3 conversion or simulation
error, 4 verification or comparison residual above the threshold.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import __version__
from .expr import ExprError
from .factorize import Anchor, ModelError, factorize
from .lpv import (
    RangeGridError, SchedulingError, default_box, estimate_range,
    extract_element, extract_factor, verify_embedding,
)
from .modelfile import (
    ModelDocument, ModelFileError, load_artifact, load_model_file,
    save_artifact,
)
from .models import BUNDLED, bundled_path
from .parser import ParseError, parse_expr
from .quadrature import QuadratureConvergenceError
from .sim import (
    GridMismatchError, InputSignal, SolverConfig, SolverError,
    read_input_csv, rmse, simulate_lpv_self_scheduled, simulate_nl,
    trajectory_to_dict, write_trajectory_csv,
)

EXIT_PARSE = 2
EXIT_CONVERT = 3
EXIT_VERIFY = 4


def _load_model(path: str) -> ModelDocument:
    if os.path.exists(path):
        return load_model_file(path)
    if path in BUNDLED:
        return load_model_file(str(bundled_path(path)))
    raise ModelFileError(
        f"no such file, and no bundled model named '{path}' "
        f"(bundled: {', '.join(BUNDLED)})", path)


def _is_artifact(path: str) -> bool:
    return path.endswith(".json")


def _scalar(text: str) -> float:
    try:
        return parse_expr(text, variables=()).eval({})
    except (ParseError, ExprError) as exc:
        raise ValueError(f"bad number '{text}': {exc}") from None


def _parse_assignments(flag: str, what: str) -> dict[str, float]:
    out = {}
    for item in flag.split(","):
        name, sep, value = item.partition("=")
        if not sep:
            raise ValueError(f"bad {what} entry '{item}', expected name=value")
        out[name.strip()] = _scalar(value)
    return out


def _parse_box_flag(flag: str) -> dict[str, tuple[float, float]]:
    out = {}
    for item in flag.split(","):
        name, sep, value = item.partition("=")
        lo, sep2, hi = value.partition(":")
        if not sep or not sep2:
            raise ValueError(f"bad box entry '{item}', expected name=lo:hi")
        out[name.strip()] = (_scalar(lo), _scalar(hi))
    return out


def _full_box(doc: ModelDocument):
    """Declared box completed with [-1, 1] defaults; reports what defaulted."""
    box = default_box(doc.model)
    defaulted = list(box)
    for name, iv in (doc.box or {}).items():
        box[name] = iv
        defaulted.remove(name)
    return box, defaulted


def _anchor(args, doc: ModelDocument) -> Anchor | None:
    if getattr(args, "anchor", None):
        vals = _parse_assignments(args.anchor, "anchor")
        model = doc.model
        unknown = set(vals) - set(model.var_names)
        if unknown:
            raise ValueError(f"anchor names unknown: {', '.join(sorted(unknown))}")
        return Anchor(tuple(vals.get(n, 0.0) for n in model.x_names),
                      tuple(vals.get(n, 0.0) for n in model.u_names))
    return doc.anchor


def _extractor(name: str):
    return extract_factor if name == "factor" else extract_element


def _fmt_interval(iv) -> str:
    return f"[{iv[0]:.4g}, {iv[1]:.4g}]"


def _print_sched(sm, range_box=None):
    for i, s in enumerate(sm.entry_strings()):
        print(f"  p{i + 1} = {s}")
        if range_box is not None:
            print(f"       range raw {_fmt_interval(range_box.raw[i])}"
                  f"  reported {_fmt_interval(range_box.reported[i])}")


def cmd_convert(args) -> int:
    doc = _load_model(args.model)
    model = doc.model
    fs = factorize(model, _anchor(args, doc), args.mode)
    m, sm = _extractor(args.extract)(fs)

    box, defaulted = _full_box(doc)
    if sm.np:
        m.range_box = estimate_range(sm, box, args.grid)
    report = verify_embedding(model, m, sm, samples=args.samples,
                              box=box, seed=args.seed)
    meta = {
        "name": model.name,
        "source": doc.path,
        "integration_mode": args.mode,
        "extraction": args.extract,
        "report": {
            "warnings": list(fs.warnings),
            "threshold": args.threshold,
            "verify": report.to_dict(),
        },
    }
    save_artifact(args.output, m, sm, meta)

    print(f"{model.name or args.model}: {args.mode} factorization, "
          f"{args.extract} extraction")
    print(f"np = {sm.np}")
    _print_sched(sm, m.range_box)
    for w in fs.warnings:
        print(f"warning: {w}")
    if defaulted:
        print(f"note: no declared bounds for {', '.join(defaulted)}; "
              f"verified over [-1, 1]")
    ok = report.max_residual <= args.threshold
    print(f"verification: max residual {report.max_residual:.3e} over "
          f"{args.samples} samples (threshold {args.threshold:g}): "
          f"{'ok' if ok else 'ABOVE THRESHOLD'}")
    print(f"wrote {args.output}")
    return 0 if ok else EXIT_VERIFY


def cmd_range(args) -> int:
    flag_box = _parse_box_flag(args.box) if args.box else None
    if _is_artifact(args.target):
        m, sm, _doc = load_artifact(args.target)
        box = flag_box or (m.range_box.box if m.range_box else None)
        if box is None:
            raise ValueError("artifact has no stored box; pass --box")
    else:
        doc = _load_model(args.target)
        fs = factorize(doc.model, _anchor(args, doc), args.mode)
        _, sm = _extractor(args.extract)(fs)
        box = flag_box
        if box is None:
            box, _ = _full_box(doc)
            if doc.box is None:
                raise ValueError("model declares no box; pass --box")
    if sm.np == 0:
        print("np = 0: nothing to range")
        return 0
    rb = estimate_range(sm, box, args.grid)
    _print_sched(sm, rb)
    return 0


def _cfg(args) -> SolverConfig:
    return SolverConfig(
        method=args.solver, rel_tol=args.rel_tol, abs_tol=args.abs_tol,
        max_step=args.max_step, step=args.fixed_step,
        output_dt=args.output_dt,
    )


def _input_for(args, nu: int) -> InputSignal:
    if not args.input or args.input == "zero":
        return InputSignal.zero(nu)
    if os.path.isfile(args.input):
        return read_input_csv(args.input, nu)
    return InputSignal.from_exprs(args.input.split(";"), nu)


def _x0_for(args, nx: int):
    if not args.x0:
        return [0.0] * nx
    vals = [_scalar(v) for v in args.x0.split(",")]
    if len(vals) != nx:
        raise ValueError(f"--x0 needs {nx} values, got {len(vals)}")
    return vals


def _run_scenario(target: str, args):
    if _is_artifact(target):
        m, sm, _doc = load_artifact(target)
        u = _input_for(args, m.nu)
        return simulate_lpv_self_scheduled(m, sm, _x0_for(args, m.nx), u,
                                           args.t_end, _cfg(args))
    doc = _load_model(target)
    u = _input_for(args, doc.model.nu)
    return simulate_nl(doc.model, _x0_for(args, doc.model.nx), u,
                       args.t_end, _cfg(args))


def cmd_simulate(args) -> int:
    traj = _run_scenario(args.target, args)
    if args.output.endswith(".json"):
        with open(args.output, "w", encoding="utf-8") as fh:
            json.dump(trajectory_to_dict(traj), fh)
            fh.write("\n")
    else:
        write_trajectory_csv(traj, args.output)
    print(f"wrote {args.output} ({len(traj.t)} samples)")
    return 0


def cmd_compare(args) -> int:
    doc = _load_model(args.model)
    m, sm, _doc = load_artifact(args.artifact)
    if (m.nx, m.nu) != (doc.model.nx, doc.model.nu):
        raise ValueError("model and artifact dimensions disagree")
    u = _input_for(args, doc.model.nu)
    x0 = _x0_for(args, doc.model.nx)
    cfg = _cfg(args)
    a = simulate_nl(doc.model, x0, u, args.t_end, cfg)
    b = simulate_lpv_self_scheduled(m, sm, x0, u, args.t_end, cfg)
    errs = rmse(a, b, "x")
    print("per-state RMSE (nonlinear vs self-scheduled LPV):")
    for i, v in enumerate(errs):
        print(f"  x{i + 1}: {v:.3e}")
    if args.threshold is not None and float(np.max(errs)) > args.threshold:
        print(f"RMSE above threshold {args.threshold:g}")
        return EXIT_VERIFY
    return 0


def cmd_info(args) -> int:
    if _is_artifact(args.target):
        m, sm, doc = load_artifact(args.target)
        print(f"LPV model artifact: {doc.get('name', args.target)}")
        print(f"  nx={m.nx} nu={m.nu} ny={m.ny} np={m.np}  "
              f"sample_time={m.sample_time:g}")
        print(f"  mode={doc.get('integration_mode', '?')} "
              f"extraction={doc.get('extraction', '?')}")
        _print_sched(sm, m.range_box)
        rep = doc.get("report", {})
        for w in rep.get("warnings", ()):
            print(f"  warning: {w}")
        ver = rep.get("verify")
        if ver:
            print(f"  verified max residual {ver['max_residual']:.3e} "
                  f"over {ver['samples']} samples")
    else:
        doc = _load_model(args.target)
        model = doc.model
        kind = ("continuous" if model.is_continuous else
                f"discrete (Ts = {model.sample_time:g})")
        print(f"nonlinear model: {model.name}")
        print(f"  nx={model.nx} nu={model.nu} ny={model.ny}  {kind}")
        for k, v in model.constants.items():
            print(f"  const {k} = {v:g}")
        for i, e in enumerate(model.f):
            print(f"  f{i + 1} = {e}")
        for i, e in enumerate(model.h):
            print(f"  h{i + 1} = {e}")
        if doc.box:
            for k, v in doc.box.items():
                print(f"  box {k} in {_fmt_interval(v)}")
    return 0


def _add_scenario_flags(p, with_threshold: bool):
    p.add_argument("--input", default="zero",
                   help="u(t) expressions in t, ';'-separated per channel, "
                        "or a CSV file with t,u1.. columns (ZOH), or 'zero'")
    p.add_argument("--x0", default="", help="comma-separated initial state")
    p.add_argument("--t-end", dest="t_end", type=float, required=True)
    p.add_argument("--solver", default="auto",
                   choices=("auto", "rk45", "rk4", "discrete"))
    p.add_argument("--rel-tol", dest="rel_tol", type=float, default=1e-8)
    p.add_argument("--abs-tol", dest="abs_tol", type=float, default=1e-10)
    p.add_argument("--max-step", dest="max_step", type=float,
                   default=float("inf"))
    p.add_argument("--fixed-step", dest="fixed_step", type=float, default=1e-3,
                   help="step for --solver rk4")
    p.add_argument("--output-dt", dest="output_dt", type=float, default=0.01)
    if with_threshold:
        p.add_argument("--threshold", type=float, default=None,
                       help="exit 4 if any per-state RMSE exceeds this")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="lpvembed",
        description="Exact global LPV embedding of nonlinear state-space models")
    ap.add_argument("--version", action="version",
                    version=f"lpvembed {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("convert", help="convert a model to an LPV artifact")
    p.add_argument("model", help="model file path or bundled name")
    p.add_argument("-o", "--output", required=True, help="artifact JSON path")
    p.add_argument("--mode", choices=("analytic", "numeric"),
                   default="analytic")
    p.add_argument("--extract", choices=("element", "factor"),
                   default="factor")
    p.add_argument("--anchor", help="factorization point, e.g. x1=0.5,u1=0")
    p.add_argument("--threshold", type=float, default=1e-6,
                   help="exit 4 if the verification residual exceeds this")
    p.add_argument("--samples", type=int, default=1000)
    p.add_argument("--grid", type=int, default=10001,
                   help="range grid points per dimension")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_convert)

    p = sub.add_parser("range", help="scheduling ranges over a box")
    p.add_argument("target", help="model file, bundled name, or artifact JSON")
    p.add_argument("--box", help="bounds, e.g. x1=-2*pi:2*pi,x2=-10:10")
    p.add_argument("--grid", type=int, default=10001)
    p.add_argument("--mode", choices=("analytic", "numeric"),
                   default="analytic")
    p.add_argument("--extract", choices=("element", "factor"),
                   default="factor")
    p.add_argument("--anchor")
    p.set_defaults(func=cmd_range)

    p = sub.add_parser("simulate",
                       help="simulate a model or a self-scheduled artifact")
    p.add_argument("target")
    p.add_argument("-o", "--output", required=True,
                   help="trajectory CSV (or .json)")
    _add_scenario_flags(p, with_threshold=False)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("compare",
                       help="RMSE between a model and an artifact run")
    p.add_argument("model")
    p.add_argument("artifact")
    _add_scenario_flags(p, with_threshold=True)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("info", help="describe a model or an artifact")
    p.add_argument("target")
    p.set_defaults(func=cmd_info)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ModelFileError, ParseError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except (ModelError, ExprError, QuadratureConvergenceError, RangeGridError,
            SchedulingError, SolverError, GridMismatchError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONVERT


if __name__ == "__main__":
    sys.exit(main())
