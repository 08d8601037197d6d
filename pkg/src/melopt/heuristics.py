"""Decentralizable heuristics: AAT, FBA and L-FBA.

AAT splits the problem into association (SP1), allocation (SP2) and
training-schedule selection (SP3) and alternates SP2/SP3 per orchestrator.
FBA and L-FBA replace SP1/SP2 by a rule based on the association factor
``(f_l / f_max) / (d_lo / d_max)``.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import DomainError, InfeasibleError
from .problem import (
    ALLOC_TOL,
    TIME_RTOL,
    AssignmentSolution,
    MelProblem,
    SolverConfig,
    make_report,
    objective,
    time_caps,
)


# ---------------------------------------------------------------- allocation


def greedy_fill(costs, caps):
    """Fill one unit of mass in ascending cost order, each slot up to its cap.

    ``caps`` may carry leading batch axes; the last axis matches ``costs``.
    Ties go to the lower index. Returns ``(n, feasible)`` with the same
    leading shape; infeasible rows hold whatever partial fill was possible.
    """
    costs = np.asarray(costs, dtype=float)
    caps = np.asarray(caps, dtype=float)
    order = np.argsort(costs, kind="stable")
    c = np.clip(caps[..., order], 0.0, 1.0)
    before = np.cumsum(c, axis=-1) - c
    n_sorted = np.clip(np.minimum(1.0 - before, c), 0.0, None)
    n = np.empty_like(n_sorted)
    n[..., order] = n_sorted
    feasible = (caps.min(axis=-1) >= 0.0) & (c.sum(axis=-1) >= 1.0 - ALLOC_TOL)
    # close the last ALLOC_TOL of slack so feasible rows sum to one exactly
    total = n.sum(axis=-1, keepdims=True)
    n = np.where(feasible[..., None] & (total > 0), n / np.where(total > 0, total, 1.0), n)
    return n, feasible


def allocation_costs(topology, o, members, tau):
    m = np.asarray(members, dtype=int)
    return topology.Z2[m, o] * tau + topology.Z1[m, o]


def sp2_allocate(problem: MelProblem, o: int, members, tau, G) -> np.ndarray:
    """Energy-minimal split of orchestrator ``o``'s dataset among ``members``.

    Continuous knapsack: fill the cheapest learners first, each up to the
    fraction it can process within ``T_max``.
    """
    if len(members) == 0:
        raise DomainError(f"orchestrator {o} has no associated learners")
    topo, T = problem.topology, problem.params.T_max
    caps = time_caps(topo, o, members, tau, G, T)
    n, ok = greedy_fill(allocation_costs(topo, o, members, tau), caps)
    if not ok:
        raise InfeasibleError(
            f"orchestrator {o}: time budget cannot host the dataset at tau={tau}, G={G}"
        )
    return n


# ------------------------------------------------------- training schedule


@dataclass(frozen=True)
class Sp3Coefficients:
    a: float
    b: float
    c: float
    theta: float
    xi: float
    bottleneck: int = -1  # learner index l*


def sp3_scales(problem: MelProblem, n_members: int, scaling: str):
    if scaling == "global":
        return problem.energy_scale, problem.u_scale
    return problem.norm.E_max * n_members, problem.norm.U_max


def sp3_coefficients(problem, o, members, n, tau, scaling="global") -> Sp3Coefficients:
    """Collapse SP3 to ``a/(tau G) + b tau G + c G`` s.t. ``theta tau G + xi G <= 1``.

    The time constraint is that of the bottleneck learner, the member with
    the longest training time at local iteration count ``tau``.
    """
    topo, T = problem.topology, problem.params.T_max
    m = np.asarray(members, dtype=int)
    n = np.asarray(n, dtype=float)
    e_scale, u_scale = sp3_scales(problem, len(m), scaling)
    alpha = problem.alpha
    a = (1.0 - alpha) * problem.approx[o].c1 / u_scale
    b = alpha * float(np.sum(topo.Z2[m, o] * n)) / e_scale
    c = alpha * float(np.sum(topo.Z1[m, o] * n + topo.Z0[m, o])) / e_scale
    per_cycle = topo.A2[m, o] * tau * n + topo.A1[m, o] * n + topo.A0[m, o]
    k = int(np.argmax(per_cycle))
    theta = topo.A2[m[k], o] * n[k] / T
    xi = (topo.A1[m[k], o] * n[k] + topo.A0[m[k], o]) / T
    return Sp3Coefficients(a=a, b=b, c=c, theta=theta, xi=xi, bottleneck=int(m[k]))


def has_interior_cycle_optimum(coeff: Sp3Coefficients) -> bool:
    """True when the single-variable cycle cost has a minimizer below ``1/xi``."""
    return coeff.theta > 0 and coeff.b * coeff.xi - coeff.theta * coeff.c > coeff.xi * coeff.a * coeff.theta**2


def g_star_continuous(coeff: Sp3Coefficients) -> float:
    """Stationary point of ``a theta / (1 - xi G) + (c - b xi / theta) G``."""
    k = coeff.b * coeff.xi - coeff.theta * coeff.c
    return (1.0 - math.sqrt(coeff.xi * coeff.a * coeff.theta**2 / k)) / coeff.xi


def sp3_bounds(coeff: Sp3Coefficients, tau_max: int):
    """Search-space caps ``(G_max, tau_max, used_fallback)``.

    When the closed form does not apply, G is capped by the bottleneck time
    at one local iteration and tau by ``tau_max``.
    """
    theta, xi = coeff.theta, coeff.xi
    if not xi > 0:
        raise DomainError("xi must be positive for a nonempty allocation")
    if not has_interior_cycle_optimum(coeff):
        g_max = max(1, math.floor(1.0 / (theta + xi)))
        return g_max, int(tau_max), True
    g_max = math.floor(g_star_continuous(coeff))
    if g_max * xi >= 1.0:
        g_max = math.ceil(1.0 / xi) - 1
    g_max = max(1, g_max)
    t_max = min(math.floor((1.0 - xi * g_max) / (theta * g_max)), int(tau_max))
    return g_max, max(1, t_max), False


def schedule_grid(problem, o, members, n, tau_cap, g_cap, scaling="global"):
    """Objective of SP3 on the integer grid; infeasible points are ``inf``.

    Axis 0 is G-1, axis 1 is tau-1.
    """
    topo, T = problem.topology, problem.params.T_max
    m = np.asarray(members, dtype=int)
    n = np.asarray(n, dtype=float)
    Gs = np.arange(1, g_cap + 1, dtype=float)[:, None]
    taus = np.arange(1, tau_cap + 1, dtype=float)[None, :]
    a2n = topo.A2[m, o] * n
    fixed = topo.A1[m, o] * n + topo.A0[m, o]
    worst = np.max(a2n[None, None, :] * taus[..., None] + fixed[None, None, :], axis=-1)
    feasible = Gs * worst <= T * (1.0 + TIME_RTOL)
    z2n = float(np.sum(topo.Z2[m, o] * n))
    z_fixed = float(np.sum(topo.Z1[m, o] * n + topo.Z0[m, o]))
    energy = Gs * (z2n * taus + z_fixed)
    apx = problem.approx[o]
    u = apx.c1 / (Gs * taus**apx.c2)
    e_scale, u_scale = sp3_scales(problem, len(m), scaling)
    value = problem.alpha * energy / e_scale + (1.0 - problem.alpha) * u / u_scale
    return np.where(feasible, value, np.inf)


def schedule_value(problem, o, members, n, tau, G, scaling="global") -> float:
    """SP3 objective at one schedule (``inf`` if it breaks T_max)."""
    topo, T = problem.topology, problem.params.T_max
    m = np.asarray(members, dtype=int)
    n = np.asarray(n, dtype=float)
    t = G * (topo.A2[m, o] * tau * n + topo.A1[m, o] * n + topo.A0[m, o])
    if t.max() > T * (1.0 + TIME_RTOL):
        return math.inf
    energy = G * float(np.sum(topo.Z2[m, o] * tau * n + topo.Z1[m, o] * n + topo.Z0[m, o]))
    apx = problem.approx[o]
    e_scale, u_scale = sp3_scales(problem, len(m), scaling)
    return problem.alpha * energy / e_scale + (1.0 - problem.alpha) * apx.c1 / (G * tau**apx.c2) / u_scale


def sp3_search(problem, o, members, n, bounds, scaling="global"):
    """Exhaustive search of SP3 over ``[1, tau_cap] x [1, G_cap]``.

    Ties prefer the smaller G, then the smaller tau. Returns ``(tau, G, value)``.
    """
    g_cap, tau_cap = int(bounds[0]), int(bounds[1])
    grid = schedule_grid(problem, o, members, n, tau_cap, g_cap, scaling)
    k = int(np.argmin(grid))
    gi, ti = divmod(k, grid.shape[1])
    if not np.isfinite(grid[gi, ti]):
        raise InfeasibleError(f"orchestrator {o}: no feasible (tau, G) in the search box")
    return ti + 1, gi + 1, float(grid[gi, ti])


def train_schedule(problem, o, members, n, tau_ref, scaling="global"):
    """Closed-form bounds followed by the bounded search; returns (tau, G, fallback)."""
    coeff = sp3_coefficients(problem, o, members, n, tau_ref, scaling)
    bounds = sp3_bounds(coeff, problem.params.tau_max)
    tau, G, _ = sp3_search(problem, o, members, n, bounds[:2], scaling)
    return tau, G, bounds[2]


# --------------------------------------------------------------- association


def association_costs(problem, tau, G, n=None):
    """SP1 pair energies under uniform allocation; ``inf`` where T_max breaks."""
    topo, T = problem.topology, problem.params.T_max
    if n is None:
        n = 1.0 / topo.n_learners
    energy = G * (topo.Z2 * tau * n + topo.Z1 * n + topo.Z0)
    t = G * (topo.A2 * tau * n + topo.A1 * n + topo.A0)
    return np.where(t <= T * (1.0 + TIME_RTOL), energy, np.inf)


def sp1_associate(problem, tau, G, n=None, require_nonempty=True) -> list:
    """Minimum-energy association with every orchestrator nonempty.

    Any cover picks one representative learner per orchestrator, the rest
    take their cheapest orchestrator. So the optimum is the separable
    minimum plus a min-cost matching of orchestrators to distinct learners
    under the excess costs ``c_lo - min_o c_lo``.
    """
    costs = association_costs(problem, tau, G, n)
    n_l, n_o = costs.shape
    finite = np.isfinite(costs)
    if not finite.any(axis=1).all():
        bad = int(np.flatnonzero(~finite.any(axis=1))[0])
        raise InfeasibleError(f"learner {bad} fits no orchestrator within T_max")
    masked = np.where(finite, costs, np.inf)
    best = np.argmin(masked, axis=1)
    assoc = [int(o) for o in best]
    if not require_nonempty:
        return assoc
    if n_l < n_o:
        raise InfeasibleError("fewer learners than orchestrators")
    excess = masked - masked[np.arange(n_l), best][:, None]
    big = 1e6 * (1.0 + float(np.nanmax(np.where(finite, excess, 0.0))))
    matrix = np.where(finite, excess, big).T  # orchestrators x learners
    rows, cols = linear_sum_assignment(matrix)
    if np.any(~finite.T[rows, cols]):
        raise InfeasibleError("no time-feasible association covers every orchestrator")
    for o, l in zip(rows, cols):
        assoc[int(l)] = int(o)
    return assoc


def groups(assoc, n_orchestrators):
    out = [[] for _ in range(n_orchestrators)]
    for l, o in enumerate(assoc):
        out[o].append(l)
    return out


def aat_solve(problem: MelProblem, config: SolverConfig = SolverConfig()):
    """Associate once, then alternate allocation and schedule search.

    Each SP3 step also keeps the current schedule if the bounded search
    does not beat it, so the objective history never increases.
    """
    started = time.perf_counter()
    topo, params = problem.topology, problem.params
    n_o = topo.n_orchestrators
    tau0 = max(1, math.ceil(params.tau_max / 2))
    G0 = 2
    flags = []
    assoc, tau0, G0, backed_off = _initial_association(problem, tau0, G0)
    if backed_off:
        flags.append(f"sp1_backoff:tau={tau0},G={G0}")
    members = groups(assoc, n_o)
    taus, Gs = [tau0] * n_o, [G0] * n_o
    alloc = [None] * n_o
    for o in range(n_o):
        taus[o], Gs[o], alloc[o], backed_off = _feasible_start(problem, o, members[o], tau0, G0)
        if backed_off:
            flags.append(f"init_backoff:{o}")

    def current_J():
        return objective(_assemble(topo, members, alloc, taus, Gs), problem).J

    history = [current_J()]
    fallbacks = set()
    iterations = 0
    for iterations in range(1, config.aat_max_alternations + 1):
        for o in range(n_o):
            alloc[o] = sp2_allocate(problem, o, members[o], taus[o], Gs[o])
        history.append(current_J())
        for o in range(n_o):
            coeff = sp3_coefficients(problem, o, members[o], alloc[o], taus[o], config.sp3_scaling)
            g_cap, tau_cap, fb = sp3_bounds(coeff, params.tau_max)
            if fb:
                fallbacks.add(o)
            tau, G, val = sp3_search(problem, o, members[o], alloc[o], (g_cap, tau_cap), config.sp3_scaling)
            here = schedule_value(problem, o, members[o], alloc[o], taus[o], Gs[o], config.sp3_scaling)
            if val < here:
                taus[o], Gs[o] = tau, G
        history.append(current_J())
        if abs(history[-3] - history[-1]) <= config.aat_tol:
            break
    flags.extend(f"sp3_fallback:{o}" for o in sorted(fallbacks))
    sol = _assemble(topo, members, alloc, taus, Gs)
    stats = {"alternations": iterations, "history": history}
    return sol, make_report("aat", sol, problem, started, flags, stats)


def _initial_association(problem, tau, G):
    """SP1 at the starting schedule, lowering G then tau while some learner
    cannot handle the uniform share in time."""
    backed = False
    while True:
        try:
            return sp1_associate(problem, tau, G), tau, G, backed
        except InfeasibleError:
            if G == 1 and tau == 1:
                raise
            backed = True
            if G > 1:
                G -= 1
            else:
                tau -= 1


def _feasible_start(problem, o, members, tau, G):
    """Back off G, then tau, until SP2 has a feasible allocation."""
    backed = False
    while True:
        try:
            return tau, G, sp2_allocate(problem, o, members, tau, G), backed
        except InfeasibleError:
            backed = True
            if G > 1:
                G -= 1
            elif tau > 1:
                tau -= 1
            else:
                raise


def _assemble(topo, members, alloc, taus, Gs) -> AssignmentSolution:
    assoc = [None] * topo.n_learners
    n = [0.0] * topo.n_learners
    for o, ms in enumerate(members):
        for l, x in zip(ms, alloc[o]):
            assoc[l] = o
            n[l] = float(x)
    return AssignmentSolution(tuple(assoc), tuple(n), tuple(int(t) for t in taus), tuple(int(g) for g in Gs))


# ------------------------------------------------------- association factor


@dataclass(frozen=True)
class AssociationFactor:
    value: float
    learner: int
    orchestrator: int


def association_factors(topology) -> np.ndarray:
    f = topology.frequencies
    d = topology.distances
    if np.any(d <= 0):
        raise DomainError("distances must be positive")
    return (f / f.max())[:, None] / (d / d.max())


def association_factor(topology, l: int, o: int) -> AssociationFactor:
    return AssociationFactor(float(association_factors(topology)[l, o]), l, o)


def factor_allocation(factors, assoc, members, o):
    lam = np.array([factors[l, o] for l in members])
    return lam / lam.sum()


def _allocate_and_train(problem, config, assoc, factors, started, method, flags):
    topo = problem.topology
    n_o = topo.n_orchestrators
    members = groups(assoc, n_o)
    tau_ref = max(1, math.ceil(problem.params.tau_max / 2))
    alloc, taus, Gs = [], [], []
    for o in range(n_o):
        n = factor_allocation(factors, assoc, members[o], o)
        tau, G, fb = train_schedule(problem, o, members[o], n, tau_ref, config.sp3_scaling)
        if fb:
            flags.append(f"sp3_fallback:{o}")
        alloc.append(n)
        taus.append(tau)
        Gs.append(G)
    sol = _assemble(topo, members, alloc, taus, Gs)
    return sol, make_report(method, sol, problem, started, flags)


def fba_solve(problem: MelProblem, config: SolverConfig = SolverConfig(), seed: int = 0):
    """Turn-based association: each round visits orchestrators in a random
    order and each takes its highest-factor remaining learner."""
    started = time.perf_counter()
    topo = problem.topology
    n_l, n_o = topo.n_learners, topo.n_orchestrators
    if n_l < n_o:
        raise InfeasibleError("FBA needs at least as many learners as orchestrators")
    factors = association_factors(topo)
    rng = np.random.default_rng(seed)
    remaining = list(range(n_l))
    assoc = [None] * n_l
    while remaining:
        for o in rng.permutation(n_o):
            if not remaining:
                break
            j = max(remaining, key=lambda l: (factors[l, o], -l))
            assoc[j] = int(o)
            remaining.remove(j)
    return _allocate_and_train(problem, config, assoc, factors, started, "fba", [])


def lfba_solve(problem: MelProblem, config: SolverConfig = SolverConfig()):
    """Each learner joins its highest-factor orchestrator.

    An orchestrator left empty takes its nearest learner out of the largest
    group (flagged as a repair).
    """
    started = time.perf_counter()
    topo = problem.topology
    n_l, n_o = topo.n_learners, topo.n_orchestrators
    if n_l < n_o:
        raise InfeasibleError("cannot give every orchestrator a learner")
    factors = association_factors(topo)
    assoc = [int(np.argmax(factors[l])) for l in range(n_l)]
    flags = []
    d = topo.distances
    while True:
        members = groups(assoc, n_o)
        empty = [o for o in range(n_o) if not members[o]]
        if not empty:
            break
        o = empty[0]
        donor = max(range(n_o), key=lambda k: (len(members[k]), -k))
        if len(members[donor]) < 2:
            raise InfeasibleError("repair exhausted: no group can spare a learner")
        moved = min(members[donor], key=lambda l: (d[l, o], l))
        assoc[moved] = o
        flags.append(f"repair:{moved}->{o}")
    return _allocate_and_train(problem, config, assoc, factors, started, "lfba", flags)
