"""Command-line entry point ``ftl-lwr``.

Exit codes: 0 on success, 2 for configuration errors (including usage
errors), 3 for numerical failures.
"""

from __future__ import annotations

import argparse
import csv
import sys

import numpy as np

from .atomize import atomize, load_initial_density
from .dynamics import METHODS, TRBDF2, IntegratorSettings, integrate
from .errors import ConfigError, NumericalError
from .harness import CONVERGENCE, RATE_T0, REMARK49, STABILITY, StudyConfig, remark49_config, run_study
from .lwr import solve_lwr
from .metrics import lp_distance, total_variation, w1_distance
from .piecewise import PiecewiseConstantFn
from .velocity import parse_velocity

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3

_STUDY_NAMES = {"convergence": CONVERGENCE, "rate": RATE_T0, "stability": STABILITY, "remark49": REMARK49}
_STUDY_DEFAULTS = {
    CONVERGENCE: dict(n_list=(25, 100, 400), t_end=1.0),
    RATE_T0: dict(n_list=tuple(2**k for k in range(4, 11)), t_end=0.0),
    STABILITY: dict(n_list=(10, 50), t_end=1.0, output_times=tuple(np.round(np.linspace(0, 1, 11), 12))),
}


def _float_list(text: str) -> tuple:
    try:
        return tuple(float(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _int_list(text: str) -> tuple:
    try:
        return tuple(int(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _output(path):
    if path in (None, "-"):
        return sys.stdout, False
    return open(path, "w", newline=""), True


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ftl-lwr", description="Follow-the-Leader particles and the LWR limit.")
    sub = parser.add_subparsers(dest="command", required=True)

    def density_args(p):
        p.add_argument("--rho-bar", default="half_box", help="builtin name or breakpoint,value CSV")

    p = sub.add_parser("atomize", help="initial vehicle positions from a density")
    density_args(p)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--scheme", choices=("dfr", "midpoint"), default="dfr")
    p.add_argument("--no-check", action="store_true", help="report inadmissible midpoint output instead of failing")
    p.add_argument("--out", default="-")

    p = sub.add_parser("simulate", help="integrate the particle system, write a trajectory CSV")
    density_args(p)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--velocity", default="greenshields")
    p.add_argument("--scheme", choices=("dfr", "midpoint"), default="dfr")
    p.add_argument("--t-end", type=float, required=True)
    p.add_argument("--output-times", type=_float_list, help="comma-separated; default 0 and t_end")
    p.add_argument("--abs-tol", type=float, default=1e-10)
    p.add_argument("--rel-tol", type=float, default=1e-8)
    p.add_argument("--method", choices=METHODS, default=TRBDF2)
    p.add_argument("--out", default="-")

    p = sub.add_parser("lwr", help="Godunov reference solution, write x_center,rho")
    density_args(p)
    p.add_argument("--velocity", default="greenshields")
    p.add_argument("--dx", type=float, default=1e-3)
    p.add_argument("--t-end", type=float, required=True)
    p.add_argument("--cfl", type=float, default=0.45)
    p.add_argument("--out", default="-")

    p = sub.add_parser("compare", help="distances between two densities (builtin or CSV)")
    p.add_argument("a")
    p.add_argument("b")
    p.add_argument("--out", default="-")

    p = sub.add_parser("study", help="run a convergence, rate, stability or remark49 study")
    p.add_argument("kind", choices=sorted(_STUDY_NAMES))
    p.add_argument("--config", help="JSON study config; flags below override it")
    p.add_argument("--velocity")
    p.add_argument("--rho-bar")
    p.add_argument("--n-list", type=_int_list)
    p.add_argument("--t-end", type=float)
    p.add_argument("--output-times", type=_float_list)
    p.add_argument("--scheme", choices=("dfr", "midpoint"))
    p.add_argument("--dx", type=float, help="reference grid spacing")
    p.add_argument("--full", action="store_true", help="remark49: include N=500 (long-running)")
    p.add_argument("--out")
    p.add_argument("--format", choices=("csv", "json"))
    return parser


def _load_density(source: str) -> PiecewiseConstantFn:
    return load_initial_density(source).profile


def _cmd_atomize(args) -> int:
    config = atomize(load_initial_density(args.rho_bar), args.n, args.scheme, check=not args.no_check)
    fh, close = _output(args.out)
    try:
        writer = csv.writer(fh)
        writer.writerow(("j", "x"))
        writer.writerows((j, repr(float(x))) for j, x in enumerate(config.positions))
    finally:
        if close:
            fh.close()
    return EXIT_OK


def _cmd_simulate(args) -> int:
    model = parse_velocity(args.velocity)
    config = atomize(load_initial_density(args.rho_bar), args.n, args.scheme)
    settings = IntegratorSettings(abs_tol=args.abs_tol, rel_tol=args.rel_tol, method=args.method)
    traj = integrate(config, model, args.t_end, settings, args.output_times)
    fh, close = _output(args.out)
    try:
        traj.to_csv(fh)
    finally:
        if close:
            fh.close()
    return EXIT_OK


def _cmd_lwr(args) -> int:
    model = parse_velocity(args.velocity)
    solution = solve_lwr(load_initial_density(args.rho_bar), model, args.t_end, args.dx, args.cfl)
    fh, close = _output(args.out)
    try:
        solution.snapshots[-1].to_csv(fh)
    finally:
        if close:
            fh.close()
    return EXIT_OK


def _cmd_compare(args) -> int:
    a = _load_density(args.a)
    b = _load_density(args.b)
    metrics = [
        ("w1", w1_distance(a, b)),
        ("l1", lp_distance(a, b, 1)),
        ("l2", lp_distance(a, b, 2)),
        ("linf", lp_distance(a, b, np.inf)),
        ("tv_a", total_variation(a)),
        ("tv_b", total_variation(b)),
    ]
    fh, close = _output(args.out)
    try:
        writer = csv.writer(fh)
        writer.writerow(("metric", "value"))
        writer.writerows((name, repr(value)) for name, value in metrics)
    finally:
        if close:
            fh.close()
    return EXIT_OK


def _cmd_study(args) -> int:
    study = _STUDY_NAMES[args.kind]
    if args.config:
        base = StudyConfig.from_json(args.config).__dict__.copy()
        base["study"] = study
    elif study == REMARK49:
        base = remark49_config(full=args.full).__dict__.copy()
    else:
        base = dict(study=study, **_STUDY_DEFAULTS[study])
    overrides = {
        "velocity": args.velocity,
        "rho_bar": args.rho_bar,
        "n_list": args.n_list,
        "t_end": args.t_end,
        "output_times": args.output_times,
        "scheme": args.scheme,
        "reference_dx": args.dx,
        "out": args.out,
        "format": args.format,
    }
    base.update({k: v for k, v in overrides.items() if v is not None})
    cfg = StudyConfig(**base)
    report = run_study(cfg)
    if not cfg.out:
        writer = csv.writer(sys.stdout)
        writer.writerow(("n", "t", "metric", "value"))
        writer.writerows((r.n, repr(r.t), r.metric, repr(r.value)) for r in report.rows)
    return EXIT_OK


_COMMANDS = {
    "atomize": _cmd_atomize,
    "simulate": _cmd_simulate,
    "lwr": _cmd_lwr,
    "compare": _cmd_compare,
    "study": _cmd_study,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code in (0, None) else EXIT_CONFIG
    try:
        return _COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"ftl-lwr: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as exc:
        print(f"ftl-lwr: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"ftl-lwr: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
