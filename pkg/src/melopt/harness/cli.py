"""Command line entry point ``melopt``.

Exit codes: 0 success, 2 configuration error, 3 infeasible instance,
4 solver budget exhausted.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from ..errors import BudgetExhaustedError, ConfigError, InfeasibleError, TooLargeForOracleError
from ..learning import bound_grid, u_value
from ..problem import METHODS
from .config import AXES, ExperimentConfig, load_config, parse_config, with_overrides
from .export import export, load_records, plot_svg, records_to_csv
from .runner import approximation, compare, pareto_curve, run_single, sweep

EXIT_OK, EXIT_CONFIG, EXIT_INFEASIBLE, EXIT_BUDGET = 0, 2, 3, 4


def _config(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else parse_config({})
    if getattr(args, "seed", None) is not None:
        cfg = with_overrides(cfg, seed=args.seed)
    if getattr(args, "runs", None) is not None:
        cfg = with_overrides(cfg, monte_carlo_runs=args.runs)
    if getattr(args, "method", None):
        cfg = with_overrides(cfg, solver__method=args.method)
    return cfg


def _emit(text: str, out):
    if out:
        Path(out).write_text(text, newline="")
    else:
        sys.stdout.write(text)


def _write_records(records, out):
    if out:
        export(records, out)
    else:
        sys.stdout.write(records_to_csv(records))


def cmd_solve(args) -> int:
    cfg = _config(args)
    record, sol, report = run_single(cfg, record_trace=args.verbose or bool(args.trace))
    payload = {"record": record.__dict__, "solution": sol.to_dict(), "report": report.to_dict()}
    trace = payload["report"]["stats"].pop("trace_csv", None)
    _emit(json.dumps(payload, indent=2, default=str) + "\n", args.out)
    if trace is not None:
        if args.trace:
            Path(args.trace).write_text(trace)
        if args.verbose:
            sys.stderr.write(trace)
    return EXIT_OK


def cmd_compare(args) -> int:
    cfg = _config(args)
    methods = args.methods.split(",") if args.methods else None
    _write_records(compare(cfg, methods=methods, jobs=args.jobs), args.out)
    return EXIT_OK


def _floats(text):
    return [float(v) for v in text.split(",") if v.strip()]


def cmd_sweep(args) -> int:
    cfg = _config(args)
    values = _floats(args.values) if args.values else None
    methods = args.methods.split(",") if args.methods else None
    records = sweep(cfg, args.axis, values, None, methods, jobs=args.jobs)
    _write_records(records, args.out)
    return EXIT_OK


def cmd_pareto(args) -> int:
    cfg = _config(args)
    methods = args.methods.split(",") if args.methods else None
    points, records = pareto_curve(cfg, _floats(args.alphas), None, methods, jobs=args.jobs)
    _write_records(records, args.out)
    for p in points:
        sys.stderr.write(
            f"{p.method:6s} alpha={p.value:.3g} energy={p.energy_mean:.6g}+-{p.energy_se:.2g} "
            f"U={p.u_mean:.6g}+-{p.u_se:.2g} runs={p.runs}\n"
        )
    return EXIT_OK


def cmd_fit_bound(args) -> int:
    cfg = _config(args)
    params = cfg.learning.build()
    apx = approximation(cfg)
    print(f"c1={apx.c1:.10g} c2={apx.c2:.10g} r2={apx.fit_r2:.10g} mode={cfg.learning.c2_mode}")
    if args.out:
        tau, G, values = bound_grid(params, np.arange(1, params.tau_max + 1), np.arange(1, cfg.learning.fit_G_max + 1))
        lines = ["tau,G,bound,fitted"]
        lines += [f"{int(t)},{int(g)},{float(v)!r},{float(u_value(apx, t, g))!r}" for t, g, v in zip(tau, G, values)]
        Path(args.out).write_text("\n".join(lines) + "\n")
    return EXIT_OK


def cmd_plot(args) -> int:
    records = load_records(args.inp)
    plot_svg(records, args.kind, args.out, axis=args.axis)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="melopt", description="Multi-orchestrator edge learning optimizer")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, runs=False, method=False, jobs=False):
        p.add_argument("--config", help="JSON experiment config (defaults when omitted)")
        p.add_argument("--seed", type=int, help="instance seed (Monte Carlo base seed)")
        p.add_argument("--out", help="output file (stdout when omitted)")
        if runs:
            p.add_argument("--runs", type=int, help="Monte Carlo runs per cell")
        if method:
            p.add_argument("--method", choices=METHODS)
        if jobs:
            p.add_argument("--jobs", type=int, default=1, help="worker processes")
            p.add_argument("--methods", help="comma-separated subset of methods")

    p = sub.add_parser("solve", help="solve one instance with one method")
    common(p, method=True)
    p.add_argument("--verbose", action="store_true", help="print the branch-and-bound trace CSV to stderr")
    p.add_argument("--trace", help="write the branch-and-bound trace CSV here")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("compare", help="every method on one instance")
    common(p, jobs=True)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("sweep", help="Monte Carlo sweep along one axis")
    common(p, runs=True, jobs=True)
    p.add_argument("--axis", choices=AXES)
    p.add_argument("--values", help="comma-separated ascending values")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("pareto", help="energy/U trade-off over alpha")
    common(p, runs=True, jobs=True)
    p.add_argument("--alphas", default="0.1,0.3,0.5,0.7,0.9")
    p.set_defaults(func=cmd_pareto)

    p = sub.add_parser("fit-bound", help="fit the accuracy proxy to the convergence bound")
    common(p)
    p.set_defaults(func=cmd_fit_bound)

    p = sub.add_parser("plot", help="SVG chart from exported records")
    p.add_argument("--kind", choices=("sweep", "pareto"), required=True)
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--axis", choices=AXES)
    p.set_defaults(func=cmd_plot)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        sys.stderr.write(f"config error: {exc}\n")
        return EXIT_CONFIG
    except InfeasibleError as exc:
        sys.stderr.write(f"infeasible: {exc}\n")
        return EXIT_INFEASIBLE
    except (BudgetExhaustedError, TooLargeForOracleError) as exc:
        sys.stderr.write(f"budget exhausted: {exc}\n")
        return EXIT_BUDGET
    except (OSError, ValueError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
