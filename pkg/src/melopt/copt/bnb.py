"""Best-first branch and bound over log-space boxes.

Each node solves the chord relaxation on its box (a lower bound), rounds the
relaxed point to an integer solution (an upper bound) and, if the gap is
still open, bisects the variable behind the loosest chord.
"""

from __future__ import annotations

import csv
import heapq
import io
import math
import time
from dataclasses import dataclass, field

import numpy as np

from ..errors import BudgetExhaustedError, InfeasibleError
from ..heuristics import sp2_allocate
from ..oracle import best_group_schedule
from ..problem import (
    TIME_RTOL,
    AssignmentSolution,
    MelProblem,
    SolverConfig,
    feasibility_check,
    make_report,
    objective,
)
from .convex import ConvexSolver
from .relaxation import LogSpaceProgram, VarBox, build_program
from .transform import separation_max

TRACE_FIELDS = ("node", "parent", "depth", "lower_bound", "relaxed_value", "incumbent", "branched", "status")


@dataclass(frozen=True, eq=False)
class BnbNode:
    box: VarBox
    lower_bound: float
    relaxed_point: np.ndarray
    depth: int
    node_id: int = 0
    parent: int = -1


@dataclass
class BnbTrace:
    rows: list = field(default_factory=list)

    def add(self, **row):
        self.rows.append({k: row.get(k, "") for k in TRACE_FIELDS})

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=TRACE_FIELDS, lineterminator="\n")
        w.writeheader()
        w.writerows(self.rows)
        return buf.getvalue()


# ----------------------------------------------------------------- rounding


def _fits(problem, o, members, n, tau, G) -> bool:
    topo, T = problem.topology, problem.params.T_max
    m = np.asarray(members)
    t = G * (topo.A2[m, o] * tau * n + topo.A1[m, o] * n + topo.A0[m, o])
    return bool(t.max() <= T * (1.0 + TIME_RTOL))


def round_to_feasible(point, problem: MelProblem, layout, flags=None) -> AssignmentSolution:
    """Integer solution near a relaxed point.

    Learners join their largest relaxed association, data is split in
    proportion to the relaxed ``lam * n`` and renormalized, and tau, G are
    floored. G is then lowered until every member meets T_max; if G = 1 is
    still too slow, tau is lowered with the allocation re-solved for time.
    """
    flags = [] if flags is None else flags
    topo, p = problem.topology, problem.params
    L, O = topo.n_learners, topo.n_orchestrators
    lam, n_bar, tau_bar, g_bar = layout.unpack(point)
    reachable = topo.A0 <= p.T_max
    scores = np.where(reachable, lam, -np.inf)
    assoc = [int(np.argmax(scores[l])) for l in range(L)]
    if L < O:
        raise InfeasibleError("fewer learners than orchestrators")
    while True:
        counts = np.bincount(assoc, minlength=O)
        empty = np.flatnonzero(counts == 0)
        if empty.size == 0:
            break
        o = int(empty[0])
        movable = [l for l in range(L) if counts[assoc[l]] > 1 and reachable[l, o]]
        if not movable:
            raise InfeasibleError(f"no learner can be moved to empty orchestrator {o}")
        donor = max({assoc[l] for l in movable}, key=lambda d: (counts[d], -d))
        l = max((l for l in movable if assoc[l] == donor), key=lambda l: (lam[l, o], -l))
        assoc[l] = o
        flags.append(f"repair:{l}->{o}")

    alloc = np.zeros(L)
    taus, Gs = [], []
    for o in range(O):
        members = [l for l in range(L) if assoc[l] == o]
        w = np.exp(np.array([lam[l, o] + n_bar[l, o] for l in members]))
        n = w / w.sum()
        tau = int(min(p.tau_max, max(1, math.floor(math.exp(tau_bar[o]) + 1e-9))))
        G = max(1, math.floor(math.exp(g_bar[o]) + 1e-9))
        while G > 1 and not _fits(problem, o, members, n, tau, G):
            G -= 1
        while not _fits(problem, o, members, n, tau, G):
            try:
                n = sp2_allocate(problem, o, members, tau, G)
                flags.append(f"time_realloc:{o}")
                break
            except InfeasibleError:
                if tau == 1:
                    raise InfeasibleError(f"orchestrator {o}: rounded group cannot meet T_max")
                tau -= 1
        alloc[members] = n
        taus.append(tau)
        Gs.append(G)
    return AssignmentSolution(tuple(assoc), tuple(alloc), tuple(taus), tuple(Gs))


class GroupCache:
    """Exact per-(orchestrator, group) optima, shared across one solve."""

    def __init__(self, problem: MelProblem):
        self.problem = problem
        self._store = {}

    def __call__(self, o, members):
        key = (o, tuple(sorted(members)))
        if key not in self._store:
            self._store[key] = best_group_schedule(self.problem, o, key[1])
        return self._store[key]

    def __len__(self):
        return len(self._store)


def polish(sol: AssignmentSolution, problem: MelProblem, cache: GroupCache, move_search=True, max_rounds=50):
    """Improve an incumbent without leaving its neighbourhood.

    Each group's allocation and schedule are re-optimized exactly; with
    ``move_search`` single learner moves between orchestrators are then
    accepted while they lower J (best move first, ties to the lowest
    learner and orchestrator).
    """
    L, O = sol.n_learners, sol.n_orchestrators
    assoc = list(sol.association)

    def members(o, a):
        return tuple(l for l in range(L) if a[l] == o)

    value = [cache(o, members(o, assoc)).value for o in range(O)]
    for _ in range(max_rounds if move_search else 0):
        best = (0.0, None)
        for l in range(L):
            src = assoc[l]
            if len(members(src, assoc)) == 1:
                continue
            for dst in range(O):
                if dst == src:
                    continue
                trial = list(assoc)
                trial[l] = dst
                delta = cache(src, members(src, trial)).value + cache(dst, members(dst, trial)).value
                delta -= value[src] + value[dst]
                if delta < best[0] - 1e-15:
                    best = (delta, (l, dst))
        if best[1] is None:
            break
        l, dst = best[1]
        src = assoc[l]
        assoc[l] = dst
        value[src] = cache(src, members(src, assoc)).value
        value[dst] = cache(dst, members(dst, assoc)).value

    if not all(math.isfinite(v) for v in value):
        return sol
    alloc = [0.0] * L
    taus, Gs = [], []
    for o in range(O):
        ms = members(o, assoc)
        g = cache(o, ms)
        taus.append(g.tau)
        Gs.append(g.G)
        for l, x in zip(ms, g.allocation):
            alloc[l] = x
    out = AssignmentSolution(tuple(assoc), tuple(alloc), tuple(taus), tuple(Gs))
    if objective(out, problem).J <= objective(sol, problem).J:
        return out
    return sol


# ---------------------------------------------------------------- branching


def branch_variable(program: LogSpaceProgram, box: VarBox, min_gap=1e-12):
    """Variable to bisect: the widest variable of the term with the loosest
    chord. Returns ``(index, separation)`` or ``(None, 0.0)`` when every
    chord is exact."""
    best_sep, best_var = min_gap, None
    width = box.width
    for family in program.concave:
        y_lo, y_hi = family.term_interval(box)
        for k in range(y_lo.size):
            sep = separation_max(y_lo[k], y_hi[k])
            if sep > best_sep:
                idx = np.flatnonzero(family.selector[k])
                var = int(idx[np.argmax(width[idx])])
                if width[var] > 0:
                    best_sep, best_var = sep, var
    return best_var, (best_sep if best_var is not None else 0.0)


def integer_branch_variable(layout, box: VarBox, point, min_frac=1e-6):
    """Most fractional tau or G of a relaxed point whose interval still holds
    two or more integers; ``None`` if there is none."""
    best, best_frac = None, min_frac
    for i in range(2 * layout.pairs, layout.size):
        a, b = box.integer_range(i)
        if b <= a:
            continue
        v = math.exp(point[i])
        frac = min(v - math.floor(v), math.ceil(v) - v)
        if frac > best_frac:
            best, best_frac = i, frac
    return best


def split_node(program: LogSpaceProgram, box: VarBox, point, tol):
    """Children of a node, or ``(None, [])`` when nothing is left to branch.

    Chords are refined first; once the loosest chord is within ``tol`` a
    fractional tau or G is split at its floor instead.
    """
    layout = program.layout
    var, sep = branch_variable(program, box)
    if var is None or sep <= tol:
        ivar = None if point is None else integer_branch_variable(layout, box, point)
        if ivar is not None:
            return ivar, list(box.split_integer(ivar, at=math.exp(point[ivar])))
    if var is None:
        return None, []
    return var, list(box.bisect(var))


# ----------------------------------------------------------- driver


@dataclass
class BnbResult:
    solution: AssignmentSolution
    incumbent: float
    lower_bound: float
    gap: float
    nodes: int
    stages: int
    incumbents: list
    trace: BnbTrace
    flags: list


def _relative_gap(upper, lower) -> float:
    if not math.isfinite(upper):
        return math.inf
    return max(0.0, upper - lower) / max(abs(upper), 1e-300)


def run_branch_and_bound(problem: MelProblem, config: SolverConfig = SolverConfig(), record_trace=False) -> BnbResult:
    program = build_program(problem, config)
    solver = ConvexSolver(program)
    cache = GroupCache(problem)
    trace = BnbTrace()
    flags = []
    layout = program.layout

    state = {"sol": None, "value": math.inf}
    history = []

    best_raw = [math.inf]

    def consider(point):
        try:
            sol = round_to_feasible(point, problem, layout)
        except InfeasibleError:
            return
        if feasibility_check(sol, problem.topology, problem.params):
            return
        value = objective(sol, problem).J
        if config.copt_polish:
            # polish only roundings that beat every earlier rounding
            if value >= best_raw[0]:
                return
            best_raw[0] = value
            polished = polish(sol, problem, cache)
            if not feasibility_check(polished, problem.topology, problem.params):
                sol, value = polished, objective(polished, problem).J
        if value < state["value"]:
            state["sol"], state["value"] = sol, value
            history.append(value)

    def threshold():
        v = state["value"]
        return v - config.tol * abs(v) if math.isfinite(v) else math.inf

    root = solver.solve(program.root, config.tol)
    nodes = 1
    if not root.ok:
        raise InfeasibleError(f"root relaxation is {root.status}", lower_bound=None)
    if root.status != "optimal":
        flags.append("inexact_relaxation")
    consider(root.point)
    if record_trace:
        trace.add(node=0, parent=-1, depth=0, lower_bound=root.value, relaxed_value=root.value,
                  incumbent=state["value"], branched="", status=root.status)

    heap = [(root.value, 0, BnbNode(program.root, root.value, root.point, 0, 0, -1))]
    closed_bounds = []  # depth-capped or exact-chord nodes left open
    next_id, stages, exhausted = 1, 0, False
    while heap:
        lb, _, node = heap[0]
        if lb >= threshold():
            heap.clear()
            break
        if nodes >= config.max_nodes:
            exhausted = True
            break
        heapq.heappop(heap)
        if node.depth >= config.max_stages:
            closed_bounds.append(lb)
            continue
        var, children = split_node(program, node.box, node.relaxed_point, config.tol)
        if var is None:
            closed_bounds.append(lb)
            continue
        for child in children:
            res = solver.solve(child, config.tol)
            nodes += 1
            nid = next_id
            next_id += 1
            child_lb = max(lb, res.value) if res.ok else math.inf
            if res.ok:
                if res.status != "optimal" and "inexact_relaxation" not in flags:
                    flags.append("inexact_relaxation")
                consider(res.point)
                stages = max(stages, node.depth + 1)
                if child_lb < threshold():
                    heapq.heappush(heap, (child_lb, nid, BnbNode(child, child_lb, res.point, node.depth + 1, nid, node.node_id)))
            if record_trace:
                trace.add(node=nid, parent=node.node_id, depth=node.depth + 1, lower_bound=child_lb,
                          relaxed_value=res.value, incumbent=state["value"], branched=layout.name(var),
                          status=res.status)

    open_bounds = [item[0] for item in heap] + closed_bounds
    lower = min(open_bounds) if open_bounds else state["value"]
    lower = min(lower, state["value"])
    if state["sol"] is None:
        err = BudgetExhaustedError if exhausted else InfeasibleError
        raise err("branch and bound found no feasible incumbent", lower_bound=lower)
    if exhausted:
        flags.append("node_budget")
    if closed_bounds and _relative_gap(state["value"], lower) > config.tol:
        flags.append("depth_cap")
    return BnbResult(
        solution=state["sol"],
        incumbent=state["value"],
        lower_bound=lower,
        gap=_relative_gap(state["value"], lower),
        nodes=nodes,
        stages=stages,
        incumbents=history,
        trace=trace,
        flags=flags,
    )


def branch_and_bound(problem: MelProblem, config: SolverConfig = SolverConfig(), record_trace=False):
    started = time.perf_counter()
    res = run_branch_and_bound(problem, config, record_trace)
    stats = {
        "lower_bound": res.lower_bound,
        "gap": res.gap,
        "nodes": res.nodes,
        "stages": res.stages,
        "incumbents": res.incumbents,
    }
    if record_trace:
        stats["trace_csv"] = res.trace.to_csv()
    return res.solution, make_report("copt", res.solution, problem, started, res.flags, stats)
