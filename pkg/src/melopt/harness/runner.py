"""Seeded single runs, method comparisons, sweeps and Pareto curves."""

from __future__ import annotations

import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, fields
from functools import lru_cache

import numpy as np

from ..copt.bnb import branch_and_bound
from ..edge import generate_topology
from ..errors import MelError
from ..heuristics import aat_solve, fba_solve, lfba_solve
from ..learning import ConvergenceApprox, LearningParams, fit_approximation
from ..oracle import oracle_solve
from ..problem import AssignmentSolution, build_problem, objective
from .config import ExperimentConfig, parse_config, with_overrides


@dataclass(frozen=True)
class RunRecord:
    run_id: str
    method: str
    seed: int
    alpha: float
    t_max: float
    n_learners: int
    n_orchestrators: int
    energy_j: float
    u_total: float
    accuracy_proxy: float  # 1 / U, larger is better
    objective: float
    schedule: str  # "tau:G" per orchestrator, ";"-separated
    wall_ms: float
    feasible: bool
    flags: str
    error: str
    solution: str  # JSON of the AssignmentSolution, empty on error


RECORD_FIELDS = tuple(f.name for f in fields(RunRecord))
TIMING_FIELDS = ("wall_ms",)


@lru_cache(maxsize=32)
def _approx(params: LearningParams, c2_mode: str, fit_G_max: int) -> ConvergenceApprox:
    c2 = None if c2_mode == "fitted" else 1.0
    return fit_approximation(params, G_grid=np.arange(1, fit_G_max + 1), c2=c2)


def approximation(cfg: ExperimentConfig) -> ConvergenceApprox:
    return _approx(cfg.learning.build(), cfg.learning.c2_mode, cfg.learning.fit_G_max)


def build_instance(cfg: ExperimentConfig, seed: int):
    topo = generate_topology(cfg.topology_config(), seed)
    return build_problem(topo, cfg.learning.build(), approximation(cfg), cfg.solver.alpha)


def run_method(problem, cfg: ExperimentConfig, method: str, seed: int, record_trace=False):
    """Dispatch to one solver; returns ``(solution, report)``."""
    solver_cfg = cfg.solver.build(method=method)
    if method == "oracle":
        return oracle_solve(problem, solver_cfg)
    if method == "copt":
        return branch_and_bound(problem, solver_cfg, record_trace=record_trace)
    if method == "aat":
        return aat_solve(problem, solver_cfg)
    if method == "fba":
        return fba_solve(problem, solver_cfg, seed=seed)
    if method == "lfba":
        return lfba_solve(problem, solver_cfg)
    raise ValueError(f"unknown method {method!r}")


def _schedule(sol: AssignmentSolution) -> str:
    return ";".join(f"{t}:{g}" for t, g in zip(sol.tau, sol.G))


def record_from(run_id, method, seed, cfg, sol, report) -> RunRecord:
    u = report.u_total
    return RunRecord(
        run_id=run_id,
        method=method,
        seed=seed,
        alpha=cfg.solver.alpha,
        t_max=cfg.learning.T_max,
        n_learners=cfg.learners,
        n_orchestrators=cfg.orchestrators,
        energy_j=report.energy,
        u_total=u,
        accuracy_proxy=1.0 / u if u > 0 else math.inf,
        objective=report.objective,
        schedule=_schedule(sol),
        wall_ms=report.wall_ms,
        feasible=report.feasible,
        flags=";".join(report.flags),
        error="",
        solution=json.dumps(sol.to_dict(), separators=(",", ":")),
    )


def error_record(run_id, method, seed, cfg, exc) -> RunRecord:
    nan = float("nan")
    return RunRecord(
        run_id=run_id,
        method=method,
        seed=seed,
        alpha=cfg.solver.alpha,
        t_max=cfg.learning.T_max,
        n_learners=cfg.learners,
        n_orchestrators=cfg.orchestrators,
        energy_j=nan,
        u_total=nan,
        accuracy_proxy=nan,
        objective=nan,
        schedule="",
        wall_ms=0.0,
        feasible=False,
        flags="",
        error=f"{method}: {type(exc).__name__}: {exc}",
        solution="",
    )


def run_single(cfg: ExperimentConfig, method=None, seed=None, run_id=None, record_trace=False):
    """Solve one seeded instance; solver errors propagate with the method name.

    Returns ``(record, solution, report)``.
    """
    method = method or cfg.solver.method
    seed = cfg.seed if seed is None else seed
    run_id = run_id or f"seed{seed}/{method}"
    problem = build_instance(cfg, seed)
    try:
        sol, report = run_method(problem, cfg, method, seed, record_trace)
    except MelError as exc:
        exc.args = (f"{method}: {exc}",) + exc.args[1:]
        raise
    return record_from(run_id, method, seed, cfg, sol, report), sol, report


def _cell(payload):
    """One (config, seed, method) cell; never raises."""
    data, method, seed, run_id = payload
    cfg = parse_config(data)
    try:
        rec, _, _ = run_single(cfg, method, seed, run_id)
        return rec
    except MelError as exc:
        return error_record(run_id, method, seed, cfg, exc)


def _run_cells(payloads, jobs=1):
    if jobs > 1 and len(payloads) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(_cell, payloads))  # map keeps input order
    return [_cell(p) for p in payloads]


def compare(cfg: ExperimentConfig, methods=None, seed=None, jobs=1) -> list:
    seed = cfg.seed if seed is None else seed
    methods = list(methods or cfg.methods)
    data = cfg.model_dump(mode="json")
    return _run_cells([(data, m, seed, f"compare/seed{seed}/{m}") for m in methods], jobs)


_AXIS_FIELD = {"learners": "learners", "orchestrators": "orchestrators", "T_max": "learning__T_max", "alpha": "solver__alpha"}


def axis_config(cfg: ExperimentConfig, axis: str, value) -> ExperimentConfig:
    if axis not in _AXIS_FIELD:
        raise ValueError(f"unknown sweep axis {axis!r}")
    if axis in ("learners", "orchestrators"):
        value = int(value)
    changes = {_AXIS_FIELD[axis]: value}
    if axis == "orchestrators" and len(cfg.tasks) not in (1, value):
        changes["tasks"] = [cfg.tasks[0].model_dump(mode="json")]
    return with_overrides(cfg, **changes)


def sweep(cfg: ExperimentConfig, axis=None, values=None, runs=None, methods=None, jobs=1) -> list:
    """Monte Carlo over ``runs`` seeds (``seed + run``) per axis value and
    method. Failed cells become records with an error string."""
    axis = axis or cfg.sweep.axis
    values = list(cfg.sweep.values if values is None else values)
    if values != sorted(values):
        raise ValueError("sweep values must be sorted ascending")
    runs = cfg.monte_carlo_runs if runs is None else runs
    methods = list(methods or cfg.methods)
    payloads = []
    for v in values:
        data = axis_config(cfg, axis, v).model_dump(mode="json")
        for r in range(runs):
            seed = cfg.seed + r
            for m in methods:
                payloads.append((data, m, seed, f"{axis}={v:g}/run{r}/{m}"))
    return _run_cells(payloads, jobs)


@dataclass(frozen=True)
class CellSummary:
    """Mean and standard error of one (method, axis value) cell."""

    method: str
    value: float
    energy_mean: float
    energy_se: float
    u_mean: float
    u_se: float
    runs: int


def _mean_se(xs):
    xs = np.asarray(xs, dtype=float)
    if xs.size == 0:
        return math.nan, math.nan
    se = float(xs.std(ddof=1) / math.sqrt(xs.size)) if xs.size > 1 else 0.0
    return float(xs.mean()), se


def summarize(records, key):
    """Mean/standard error of energy and U per (method, key(record))."""
    cells = {}
    for r in records:
        if r.error:
            continue
        cells.setdefault((r.method, key(r)), []).append(r)
    out = []
    for (method, k), rs in sorted(cells.items(), key=lambda kv: (kv[0][0], kv[0][1])):
        e = _mean_se([r.energy_j for r in rs])
        u = _mean_se([r.u_total for r in rs])
        out.append(CellSummary(method, k, e[0], e[1], u[0], u[1], len(rs)))
    return out


def pareto_curve(cfg: ExperimentConfig, alpha_values, runs=None, methods=None, jobs=1):
    alpha_values = sorted(float(a) for a in alpha_values)
    if len(alpha_values) < 3:
        raise ValueError("a Pareto curve needs at least three alpha values")
    records = sweep(cfg, "alpha", alpha_values, runs, methods, jobs)
    return summarize(records, key=lambda r: r.alpha), records


def reevaluate(record: RunRecord, cfg: ExperimentConfig) -> float:
    """Recompute J of a stored record from its solution."""
    local = with_overrides(
        cfg,
        learners=record.n_learners,
        orchestrators=record.n_orchestrators,
        learning__T_max=record.t_max,
        solver__alpha=record.alpha,
    )
    problem = build_instance(local, record.seed)
    sol = AssignmentSolution.from_dict(json.loads(record.solution))
    return objective(sol, problem).J


def record_dict(record: RunRecord) -> dict:
    return asdict(record)
