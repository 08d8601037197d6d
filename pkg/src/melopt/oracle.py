"""Exhaustive reference solver for small instances.

Enumerates every association that leaves no orchestrator empty; since the
objective and constraints separate by orchestrator once the association is
fixed, each (orchestrator, learner group) pair is solved once and cached.
Within a group every integer (tau, G) that fits ``T_max`` is tried with the
energy-optimal allocation for that schedule.
"""

from __future__ import annotations

import itertools
import math
import time
from dataclasses import dataclass

import numpy as np

from .errors import InfeasibleError, TooLargeForOracleError
from .heuristics import allocation_costs, greedy_fill
from .problem import TIME_RTOL, AssignmentSolution, MelProblem, SolverConfig, cycle_cap, make_report, time_caps


@dataclass(frozen=True)
class GroupOptimum:
    value: float
    tau: int
    G: int
    allocation: tuple


def best_group_schedule(problem: MelProblem, o: int, members) -> GroupOptimum:
    """Best (tau, G, allocation) for one orchestrator and a fixed learner group."""
    topo, T = problem.topology, problem.params.T_max
    members = list(members)
    g_cap = cycle_cap(topo, o, members, T, tau=1)
    if g_cap == 0:
        return GroupOptimum(math.inf, 0, 0, ())
    m = np.asarray(members)
    Gs = np.arange(1, g_cap + 1, dtype=float)
    apx = problem.approx[o]
    z0 = float(topo.Z0[m, o].sum())
    best = GroupOptimum(math.inf, 0, 0, ())
    for tau in range(1, problem.params.tau_max + 1):
        caps = time_caps(topo, o, members, tau, Gs[:, None], T)
        costs = allocation_costs(topo, o, members, tau)
        n, ok = greedy_fill(costs, caps)
        if not ok.any():
            break  # larger tau only shrinks caps
        energy = Gs * (n @ costs + z0)
        u = apx.c1 / (Gs * tau**apx.c2)
        value = np.where(ok, problem.share(energy, u), np.inf)
        k = int(np.argmin(value))
        if value[k] < best.value:
            best = GroupOptimum(float(value[k]), tau, k + 1, tuple(float(x) for x in n[k]))
    return best


def surjections(n_learners: int, n_orchestrators: int):
    """All maps learner -> orchestrator that hit every orchestrator, in
    lexicographic order."""
    for assoc in itertools.product(range(n_orchestrators), repeat=n_learners):
        if len(set(assoc)) == n_orchestrators:
            yield assoc


def oracle_solve(problem: MelProblem, config: SolverConfig = SolverConfig()):
    started = time.perf_counter()
    topo = problem.topology
    n_l, n_o = topo.n_learners, topo.n_orchestrators
    if n_o**n_l > config.oracle_guard:
        raise TooLargeForOracleError(f"{n_o}^{n_l} associations exceed the guard {config.oracle_guard}")
    if n_l < n_o:
        raise InfeasibleError("fewer learners than orchestrators")
    cache = {}

    def group(o, members):
        key = (o, members)
        if key not in cache:
            cache[key] = best_group_schedule(problem, o, members)
        return cache[key]

    best_value, best_assoc, evaluated = math.inf, None, 0
    for assoc in surjections(n_l, n_o):
        evaluated += 1
        total = 0.0
        for o in range(n_o):
            total += group(o, tuple(l for l in range(n_l) if assoc[l] == o)).value
            if total >= best_value:
                break
        if total < best_value:
            best_value, best_assoc = total, assoc
    if best_assoc is None:
        raise InfeasibleError("no association admits a schedule within T_max")

    alloc = [0.0] * n_l
    taus, Gs = [], []
    for o in range(n_o):
        members = tuple(l for l in range(n_l) if best_assoc[l] == o)
        g = group(o, members)
        taus.append(g.tau)
        Gs.append(g.G)
        for l, x in zip(members, g.allocation):
            alloc[l] = x
    sol = AssignmentSolution(tuple(best_assoc), tuple(alloc), tuple(taus), tuple(Gs))
    stats = {"associations": evaluated, "groups_solved": len(cache)}
    return sol, make_report("oracle", sol, problem, started, (), stats)
