"""The scalarized association/allocation/training problem.

Decision variables per instance: one orchestrator per learner, the fraction
of that orchestrator's dataset each learner trains on, and per-orchestrator
local iterations ``tau`` and global cycles ``G``. The objective is

    J = alpha * sum(E) / (E_max * |L|) + (1 - alpha) * sum(U) / (U_max * |O|)
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .edge import SystemTopology
from .errors import DomainError, InfeasibleError
from .learning import ConvergenceApprox, LearningParams

ALLOC_TOL = 1e-9
TIME_RTOL = 1e-9

METHODS = ("oracle", "copt", "aat", "fba", "lfba")


@dataclass(frozen=True)
class AssignmentSolution:
    association: tuple  # orchestrator index per learner (None = unassociated)
    allocation: tuple  # fraction of the associated orchestrator's dataset
    tau: tuple
    G: tuple

    def __post_init__(self):
        object.__setattr__(self, "association", tuple(None if a is None else int(a) for a in self.association))
        object.__setattr__(self, "allocation", tuple(float(x) for x in self.allocation))
        object.__setattr__(self, "tau", tuple(int(t) if float(t).is_integer() else float(t) for t in self.tau))
        object.__setattr__(self, "G", tuple(int(g) if float(g).is_integer() else float(g) for g in self.G))
        if len(self.association) != len(self.allocation):
            raise DomainError("association and allocation must have one entry per learner")
        if len(self.tau) != len(self.G):
            raise DomainError("tau and G must have one entry per orchestrator")

    @property
    def n_learners(self) -> int:
        return len(self.association)

    @property
    def n_orchestrators(self) -> int:
        return len(self.tau)

    def members(self, o: int) -> list:
        return [l for l, a in enumerate(self.association) if a == o]

    def n_matrix(self) -> np.ndarray:
        n = np.zeros((self.n_learners, self.n_orchestrators))
        for l, a in enumerate(self.association):
            if a is not None:
                n[l, a] = self.allocation[l]
        return n

    def lambda_matrix(self) -> np.ndarray:
        lam = np.zeros((self.n_learners, self.n_orchestrators))
        for l, a in enumerate(self.association):
            if a is not None:
                lam[l, a] = 1.0
        return lam

    def to_dict(self) -> dict:
        return {
            "association": list(self.association),
            "allocation": list(self.allocation),
            "tau": list(self.tau),
            "G": list(self.G),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "AssignmentSolution":
        return cls(tuple(d["association"]), tuple(d["allocation"]), tuple(d["tau"]), tuple(d["G"]))


@dataclass(frozen=True)
class Normalization:
    E_max: float
    U_max: float

    def __post_init__(self):
        if not (self.E_max > 0 and self.U_max > 0):
            raise DomainError("normalizers must be strictly positive")


@dataclass(frozen=True)
class SolverConfig:
    alpha: float = 0.5
    epsilon_assoc: float = 1e-3
    tol: float = 1e-3
    max_stages: int = 30
    max_nodes: int = 400
    method: str = "aat"
    lambda_floor: float = 1e-4
    allocation_floor: float = 1e-4
    copt_polish: bool = True
    sp3_scaling: str = "global"  # "global" (share of J) or "local" (per-orchestrator averages)
    aat_max_alternations: int = 50
    aat_tol: float = 1e-6
    oracle_guard: int = 100_000

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise DomainError("alpha must lie in [0, 1]")
        if not self.epsilon_assoc > 0:
            raise DomainError("epsilon_assoc must be positive")
        if self.method not in METHODS:
            raise DomainError(f"unknown method {self.method!r}")
        if self.sp3_scaling not in ("global", "local"):
            raise DomainError("sp3_scaling must be 'global' or 'local'")


@dataclass(frozen=True, eq=False)
class MelProblem:
    """Everything a solver needs: system, learning model, normalizers, weight."""

    topology: SystemTopology
    params: LearningParams
    approx: tuple
    norm: Normalization
    alpha: float

    def __post_init__(self):
        object.__setattr__(self, "approx", tuple(self.approx))
        if len(self.approx) != self.topology.n_orchestrators:
            raise DomainError("need one ConvergenceApprox per orchestrator")

    @property
    def energy_scale(self) -> float:
        return self.norm.E_max * self.topology.n_learners

    @property
    def u_scale(self) -> float:
        return self.norm.U_max * self.topology.n_orchestrators

    def share(self, energy, u):
        """Contribution of one orchestrator's energy and U to J."""
        return self.alpha * energy / self.energy_scale + (1.0 - self.alpha) * u / self.u_scale


def build_problem(topology, params, approx, alpha, norm=None) -> MelProblem:
    if isinstance(approx, ConvergenceApprox):
        approx = (approx,) * topology.n_orchestrators
    if norm is None:
        norm = normalization_constants(topology, approx, params)
    return MelProblem(topology=topology, params=params, approx=tuple(approx), norm=norm, alpha=alpha)


@dataclass(frozen=True)
class ObjectiveValue:
    J: float
    energy: float
    u_total: float


def pair_energy(topology, l, o, n, tau, G) -> float:
    return G * (topology.Z2[l, o] * tau * n + topology.Z1[l, o] * n + topology.Z0[l, o])


def pair_time(topology, l, o, n, tau, G) -> float:
    return G * (topology.A2[l, o] * tau * n + topology.A1[l, o] * n + topology.A0[l, o])


def objective(sol: AssignmentSolution, problem: MelProblem) -> ObjectiveValue:
    topo = problem.topology
    if len(problem.approx) != sol.n_orchestrators or sol.n_orchestrators != topo.n_orchestrators:
        raise DomainError("missing convergence approximation for an orchestrator")
    energy = 0.0
    for l, o in enumerate(sol.association):
        if o is not None:
            energy += pair_energy(topo, l, o, sol.allocation[l], sol.tau[o], sol.G[o])
    u_total = sum(a.c1 / (g * t**a.c2) for a, t, g in zip(problem.approx, sol.tau, sol.G))
    J = problem.alpha * energy / problem.energy_scale + (1.0 - problem.alpha) * u_total / problem.u_scale
    return ObjectiveValue(J=float(J), energy=float(energy), u_total=float(u_total))


@dataclass(frozen=True)
class Violation:
    constraint: str
    index: int
    detail: str

    def __str__(self):
        return f"({self.constraint}) [{self.index}] {self.detail}"


def feasibility_check(sol: AssignmentSolution, topology: SystemTopology, params: LearningParams) -> list:
    out = []
    n_l, n_o = topology.n_learners, topology.n_orchestrators
    if sol.n_learners != n_l or sol.n_orchestrators != n_o:
        return [Violation("shape", -1, "solution dimensions do not match the topology")]

    for o in range(n_o):
        tau, G = sol.tau[o], sol.G[o]
        if not float(tau).is_integer() or not float(G).is_integer():
            out.append(Violation("20g", o, f"tau={tau}, G={G} must be integers"))
        if not 1 <= tau <= params.tau_max:
            out.append(Violation("20e", o, f"tau={tau} outside [1, {params.tau_max}]"))
        if G < 1:
            out.append(Violation("20g", o, f"G={G} must be >= 1"))

    for l, (o, n) in enumerate(zip(sol.association, sol.allocation)):
        if o is None:
            out.append(Violation("20c", l, "learner is not associated with any orchestrator"))
            if n != 0:
                out.append(Violation("20f", l, "unassociated learner holds data"))
            continue
        if not 0 <= o < n_o:
            out.append(Violation("20c", l, f"orchestrator index {o} out of range"))
            continue
        if not 0.0 <= n <= 1.0:
            out.append(Violation("20f", l, f"allocation {n} outside [0, 1]"))
        t = pair_time(topology, l, o, n, sol.tau[o], sol.G[o])
        if t > params.T_max * (1.0 + TIME_RTOL):
            out.append(Violation("20b", l, f"training time {t:.6g} s exceeds T_max={params.T_max:g} s"))

    for o in range(n_o):
        members = sol.members(o)
        if not members:
            out.append(Violation("20d", o, "orchestrator has no associated learners"))
            continue
        total = sum(sol.allocation[l] for l in members)
        if abs(total - 1.0) > ALLOC_TOL:
            out.append(Violation("20d", o, f"allocations sum to {total:.12g}, not 1"))
    return out


def normalization_constants(topology: SystemTopology, approx, params: LearningParams) -> Normalization:
    """Energy and U normalizers.

    ``E_max`` is the largest single-pair energy at full allocation, ``tau_max``
    local iterations and the largest cycle count that fits ``T_max`` at one
    local iteration. ``U_max`` is the largest ``c1`` (U at tau = G = 1).
    """
    if isinstance(approx, ConvergenceApprox):
        approx = (approx,) * topology.n_orchestrators
    T = params.T_max
    # time-feasible at all only if the weight exchange fits once
    reachable = topology.A0 <= T
    if not reachable.any():
        raise InfeasibleError("no learner-orchestrator pair fits T_max even without data")
    per_cycle = topology.A2 + topology.A1 + topology.A0
    g_cap = np.maximum(np.floor(T / per_cycle * (1.0 + TIME_RTOL)), 1.0)
    energy = g_cap * (topology.Z2 * params.tau_max + topology.Z1 + topology.Z0)
    e_max = float(np.max(np.where(reachable, energy, -np.inf)))
    u_max = max(a.c1 for a in approx)
    return Normalization(E_max=e_max, U_max=u_max)


@dataclass
class SolverReport:
    method: str
    objective: float
    energy: float
    u_total: float
    feasible: bool
    violations: tuple = ()
    wall_ms: float = 0.0
    flags: tuple = ()
    stats: dict = field(default_factory=dict)
    normalization: Optional[Normalization] = None

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "objective": self.objective,
            "energy": self.energy,
            "u_total": self.u_total,
            "feasible": self.feasible,
            "violations": list(self.violations),
            "wall_ms": self.wall_ms,
            "flags": list(self.flags),
            "stats": self.stats,
            "normalization": None
            if self.normalization is None
            else {"E_max": self.normalization.E_max, "U_max": self.normalization.U_max},
        }


def make_report(method, sol, problem, started, flags=(), stats=None) -> SolverReport:
    value = objective(sol, problem)
    violations = feasibility_check(sol, problem.topology, problem.params)
    return SolverReport(
        method=method,
        objective=value.J,
        energy=value.energy,
        u_total=value.u_total,
        feasible=not violations,
        violations=tuple(str(v) for v in violations),
        wall_ms=(time.perf_counter() - started) * 1e3,
        flags=tuple(flags),
        stats=dict(stats or {}),
        normalization=problem.norm,
    )


def time_caps(topology, o, members: Sequence[int], tau, G, T_max) -> np.ndarray:
    """Largest allocation each member can take without breaking T_max.

    Negative entries mean the learner cannot even exchange weights G times.
    """
    m = np.asarray(members, dtype=int)
    a0, a1, a2 = topology.A0[m, o], topology.A1[m, o], topology.A2[m, o]
    return (T_max / G - a0) / (a2 * tau + a1)


def cycle_cap(topology, o, members, T_max, tau=1) -> int:
    """Largest G for which ``members`` can jointly host the dataset at ``tau``.

    Returns 0 when even G = 1 is infeasible.
    """
    def ok(G):
        caps = time_caps(topology, o, members, tau, G, T_max)
        return caps.min() >= 0 and np.minimum(caps, 1.0).sum() >= 1.0 - ALLOC_TOL

    if not ok(1):
        return 0
    m = np.asarray(members, dtype=int)
    hi = int(math.floor(T_max * (1.0 + TIME_RTOL) / topology.A0[m, o].max())) + 1
    lo = 1
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if ok(mid):
            lo = mid
        else:
            hi = mid
    return lo
