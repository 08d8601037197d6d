"""Acceptance suite: one test per criterion, each reporting a PASS/FAIL line."""

import csv
import io
import json
import math
import time

import numpy as np
import pytest
from conftest import PARAMS, make_problem, report_criterion
from oracles import simplex_grid_min, single_variable_argmin
from scipy.stats import wilcoxon

from melopt.copt.bnb import branch_and_bound
from melopt.copt.transform import separation_max
from melopt.harness.cli import main
from melopt.harness.export import strip_timing
from melopt.heuristics import (
    Sp3Coefficients,
    aat_solve,
    allocation_costs,
    fba_solve,
    has_interior_cycle_optimum,
    lfba_solve,
    sp2_allocate,
    sp3_bounds,
)
from melopt.learning import fit_approximation, fit_power_law
from melopt.oracle import oracle_solve
from melopt.problem import SolverConfig, build_problem, cycle_cap, time_caps

SEEDS_2X5 = range(50)


def test_c1_separation_closed_form():
    rng = np.random.default_rng(1)
    start = time.perf_counter()
    worst = 0.0
    unit = np.linspace(0.0, 1.0, 1_000_000)
    u, gap = np.empty_like(unit), np.empty_like(unit)
    for _ in range(1000):
        lo = rng.uniform(-3, 3)
        theta = 3.0 * (1.0 - rng.random())  # (0, 3]
        hi = lo + theta
        # chord through the endpoints minus the exponential, scaled by e^lo
        np.multiply(unit, theta, out=u)
        np.exp(u, out=gap)
        np.subtract(1.0 + math.expm1(theta) * unit, gap, out=gap)
        grid_max = math.exp(lo) * float(gap.max())
        worst = max(worst, abs(separation_max(lo, hi) - grid_max) / math.exp(hi))
    elapsed = time.perf_counter() - start
    ok = worst <= 1e-8 and elapsed < 10
    assert report_criterion(1, ok, f"max |closed - grid| / e^x_max = {worst:.2e} (<= 1e-8), {elapsed:.1f} s (< 10 s)")


def test_c2_taylor_rate():
    start = time.perf_counter()
    errs = {}
    for theta in (0.1, 0.01, 0.001):
        errs[theta] = abs(separation_max(0.0, theta) / (theta**2 / 8) - 1)
    elapsed = time.perf_counter() - start
    ok = all(e <= t for t, e in errs.items()) and elapsed < 1
    detail = ", ".join(f"theta={t:g}: {e:.3e}" for t, e in errs.items())
    assert report_criterion(2, ok, f"{detail} (each <= theta), {elapsed * 1e3:.1f} ms")


def _draw_interior(rng):
    while True:
        xi = rng.uniform(0.005, 0.2)
        theta = rng.uniform(1e-3, 0.1)
        a = rng.uniform(0.01, 10)
        c = rng.uniform(0.0, 1.0)
        b = (xi * a * theta**2 + theta * c) / xi * rng.uniform(1.05, 50.0)
        coeff = Sp3Coefficients(a=a, b=b, c=c, theta=theta, xi=xi)
        if has_interior_cycle_optimum(coeff):
            return coeff


def test_c3_closed_form_cycle_bound():
    rng = np.random.default_rng(3)
    start = time.perf_counter()
    matches = 0
    for _ in range(100):
        coeff = _draw_interior(rng)
        g_max, _, fallback = sp3_bounds(coeff, PARAMS.tau_max)
        G = single_variable_argmin(coeff.a, coeff.b, coeff.c, coeff.theta, coeff.xi, points=1_000_000)
        matches += (not fallback) and g_max == max(1, math.floor(G))
    elapsed = time.perf_counter() - start
    ok = matches == 100 and elapsed < 30
    assert report_criterion(3, ok, f"{matches}/100 exact matches, {elapsed:.1f} s (< 30 s)")


def test_c4_sp2_greedy_optimality():
    start = time.perf_counter()
    worst = -math.inf
    tau = 10
    for seed in range(50):
        prob = make_problem(1, 5, seed)
        members = list(range(5))
        T = prob.params.T_max
        # largest cycle count that still fits, so the time caps bind
        G = max(1, cycle_cap(prob.topology, 0, members, T, tau=tau))
        n = sp2_allocate(prob, 0, members, tau, G)
        costs = G * allocation_costs(prob.topology, 0, members, tau)
        grid = simplex_grid_min(costs, time_caps(prob.topology, 0, members, tau, G, T))
        worst = max(worst, float(costs @ n) - grid)
    elapsed = time.perf_counter() - start
    ok = worst <= 1e-3 and elapsed < 60
    assert report_criterion(4, ok, f"max greedy - grid = {worst:.2e} (<= 1e-3), {elapsed:.1f} s (< 60 s)")


@pytest.fixture(scope="module")
def runs_2x5():
    """All methods on the 2x5 instances, shared by criteria 5 and 6."""
    start = time.perf_counter()
    out = []
    for seed in SEEDS_2X5:
        prob = make_problem(2, 5, seed)
        row = {"oracle": oracle_solve(prob)[1].objective}
        t0 = time.perf_counter()
        _, rep = branch_and_bound(prob, SolverConfig(), record_trace=True)
        row["copt_s"] = time.perf_counter() - t0
        row["copt"] = rep.objective
        row["trace"] = rep.stats["trace_csv"]
        row["aat"] = aat_solve(prob)[1].objective
        row["fba"] = fba_solve(prob, seed=seed)[1].objective
        row["lfba"] = lfba_solve(prob)[1].objective
        out.append(row)
    return out, time.perf_counter() - start


def test_c5_oracle_dominance(runs_2x5):
    rows, elapsed = runs_2x5
    methods = ("copt", "aat", "fba", "lfba")
    dominated = {m: sum(r[m] >= r["oracle"] - 1e-9 for r in rows) for m in methods}
    close = sum(r["copt"] <= 1.05 * r["oracle"] for r in rows)
    slowest = max(r["copt_s"] for r in rows)
    ok = all(v == len(rows) for v in dominated.values()) and close >= 45 and elapsed < 600 and slowest < 60
    detail = " ".join(f"{m}>=oracle {v}/{len(rows)}" for m, v in dominated.items())
    detail += f"; copt within 5% {close}/{len(rows)} (>= 45); total {elapsed:.0f} s, slowest copt {slowest:.1f} s"
    assert report_criterion(5, ok, detail)


def test_c6_branch_and_bound_soundness(runs_2x5):
    rows, _ = runs_2x5
    root_ok = path_ok = 0
    for r in rows:
        # the same CSV the CLI prints with `solve --verbose`
        trace = list(csv.DictReader(io.StringIO(r["trace"])))
        lb = {int(t["node"]): float(t["lower_bound"]) for t in trace}
        root_ok += lb[0] <= r["oracle"]
        path_ok += all(lb[int(t["node"])] >= lb[int(t["parent"])] for t in trace if int(t["parent"]) >= 0)
    n = len(rows)
    ok = root_ok == n and path_ok == n
    assert report_criterion(6, ok, f"root LB <= oracle {root_ok}/{n}; monotone paths {path_ok}/{n}")


def test_c7a_oracle_objective_vs_time_budget():
    holds = 0
    seeds = range(20)
    for seed in seeds:
        base = make_problem(2, 5, seed, T_max=1000.0)
        js = []
        for T in (300.0, 660.0, 1000.0):
            prob = make_problem(2, 5, seed, T_max=T)
            prob = build_problem(prob.topology, prob.params, prob.approx, prob.alpha, base.norm)
            js.append(oracle_solve(prob)[1].objective)
        holds += all(a >= b - 1e-12 for a, b in zip(js, js[1:]))
    ok = holds == len(seeds)
    assert report_criterion("7a", ok, f"J nonincreasing over T_max {{300, 660, 1000}} in {holds}/{len(seeds)} seeds")


def test_c7b_oracle_energy_and_u_vs_weight():
    alphas = np.round(np.arange(0.1, 0.95, 0.1), 2)
    seeds = range(20)
    holds = 0
    for seed in seeds:
        energy, u = [], []
        for alpha in alphas:
            rep = oracle_solve(make_problem(2, 5, seed, alpha=float(alpha)))[1]
            energy.append(rep.energy)
            u.append(rep.u_total)
        holds += all(a >= b - 1e-9 for a, b in zip(energy, energy[1:])) and all(
            a <= b + 1e-9 for a, b in zip(u, u[1:])
        )
    ok = holds == len(seeds)
    assert report_criterion("7b", ok, f"energy down / U up over alpha 0.1..0.9 in {holds}/{len(seeds)} seeds")


def test_c7c_aat_spends_least_energy():
    aat, fba, lfba = [], [], []
    for seed in range(100):
        prob = make_problem(3, 50, seed)
        aat.append(aat_solve(prob)[1].energy)
        fba.append(fba_solve(prob, seed=seed)[1].energy)
        lfba.append(lfba_solve(prob)[1].energy)
    aat, fba, lfba = map(np.asarray, (aat, fba, lfba))
    p_fba = wilcoxon(aat, fba, alternative="less").pvalue
    p_lfba = wilcoxon(aat, lfba, alternative="less").pvalue
    ok = aat.mean() <= fba.mean() and aat.mean() <= lfba.mean() and p_fba < 0.01 and p_lfba < 0.01
    detail = (
        f"mean energy aat {aat.mean():.3f} J, fba {fba.mean():.3f} J, lfba {lfba.mean():.3f} J; "
        f"one-sided Wilcoxon p = {p_fba:.1e} / {p_lfba:.1e} (< 0.01)"
    )
    assert report_criterion("7c", ok, detail)


def test_c8_fit_quality():
    fit = fit_approximation(PARAMS, np.arange(1, 21), np.arange(1, 21))
    tau, G = np.meshgrid(np.arange(1, 21.0), np.arange(1, 21.0), indexing="ij")
    exact = fit_power_law(tau, G, 57.3 / (G * tau**0.83))
    err = max(abs(exact.c1 - 57.3), abs(exact.c2 - 0.83))
    ok = fit.fit_r2 >= 0.95 and err <= 1e-9
    assert report_criterion(8, ok, f"R^2 = {fit.fit_r2:.5f} (>= 0.95); synthetic recovery error {err:.1e} (<= 1e-9)")


def test_c9_compare_is_deterministic(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"orchestrators": 2, "learners": 5, "seed": 11}))
    texts = []
    for name in ("a.csv", "b.csv"):
        out = tmp_path / name
        assert main(["compare", "--config", str(cfg), "--out", str(out)]) == 0
        with open(out, newline="") as fh:
            texts.append(strip_timing(fh.read()))
    ok = texts[0].encode() == texts[1].encode()
    assert report_criterion(9, ok, f"two compare runs byte-identical without wall time: {ok}")
