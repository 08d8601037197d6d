"""Interior-point solve of the relaxed program.

The cvxpy problem is compiled once per instance; box bounds and chord data
are parameters, so each branch-and-bound node only re-runs the conic solver.
"""

from __future__ import annotations

import time
import warnings
from dataclasses import dataclass, field

import cvxpy as cp
import numpy as np
import scipy.sparse as sp

from ..errors import DomainError
from .relaxation import LogSpaceProgram, RelaxedProgram, VarBox, build_relaxed_subproblem

OPTIMAL = "optimal"
INACCURATE = "inaccurate"
INFEASIBLE = "infeasible"
FAILED = "failed"


@dataclass
class ConvexResult:
    status: str
    value: float
    point: np.ndarray = None
    kkt_residual: float = float("inf")
    solve_ms: float = 0.0
    duals: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return self.status in (OPTIMAL, INACCURATE)


def kkt_residual(relaxed: RelaxedProgram, x, duals) -> float:
    """Max-norm of stationarity, primal infeasibility and complementarity."""
    prog, box = relaxed.program, relaxed.box
    grad = prog.objective.weighted_gradient(x, np.ones(1))
    scale = max(1.0, float(np.max(np.abs(grad))))
    comp = 0.0
    for g in prog.convex_rows:
        mu = np.maximum(duals[g.label], 0.0)
        grad = grad + g.weighted_gradient(x, mu)
        comp = max(comp, float(np.max(np.abs(mu * (g.value(x) - 1.0)), initial=0.0)))
    nu = np.maximum(duals["chords"], 0.0)
    grad = grad + relaxed.Gm.T @ nu
    comp = max(comp, float(np.max(np.abs(nu * (relaxed.Gm @ x - relaxed.h)), initial=0.0)))
    r_lo = np.maximum(duals["lower"], 0.0)
    r_hi = np.maximum(duals["upper"], 0.0)
    grad = grad - r_lo + r_hi
    comp = max(comp, float(np.max(np.abs(r_lo * (x - box.lo)))), float(np.max(np.abs(r_hi * (box.hi - x)))))
    stationarity = float(np.max(np.abs(grad))) / scale
    return max(stationarity, relaxed.max_violation(x), comp)


class ConvexSolver:
    """Reusable relaxed-program solver for one :class:`LogSpaceProgram`."""

    def __init__(self, program: LogSpaceProgram, solver: str = "CLARABEL"):
        self.program = program
        self.solver = solver
        n = program.layout.size
        x = cp.Variable(n)
        self._x = x
        self._lo = cp.Parameter(n)
        self._hi = cp.Parameter(n)
        obj = program.objective
        objective = cp.Minimize(obj.rows[0] @ cp.exp(sp.csr_matrix(obj.exponents) @ x))
        cons = {}
        for g in program.convex_rows:
            cons[g.label] = sp.csr_matrix(g.rows) @ cp.exp(sp.csr_matrix(g.exponents) @ x) <= 1.0
        self._slopes, self._rhs, chord_cons = [], [], []
        for c in program.concave:
            s = cp.Parameter(c.selector.shape[0])
            r = cp.Parameter(c.membership.shape[0])
            chord_cons.append(sp.csr_matrix(c.membership) @ cp.multiply(s, sp.csr_matrix(c.selector) @ x) >= r)
            self._slopes.append(s)
            self._rhs.append(r)
        cons["lower"] = x >= self._lo
        cons["upper"] = x <= self._hi
        self._cons = cons
        self._chord_cons = chord_cons
        self._problem = cp.Problem(objective, list(cons.values()) + chord_cons)
        if not self._problem.is_dcp(dpp=True):
            raise DomainError("relaxed program is not DPP-compliant")
        self.solves = 0

    def solve(self, box: VarBox, tol: float = 1e-6) -> ConvexResult:
        relaxed = build_relaxed_subproblem(self.program, box)
        self._lo.value = np.asarray(box.lo)
        self._hi.value = np.asarray(box.hi)
        for c, s, r in zip(self.program.concave, self._slopes, self._rhs):
            intercept, slope = c.chords(box)
            s.value = slope
            r.value = 1.0 - c.membership @ intercept
        started = time.perf_counter()
        try:
            with warnings.catch_warnings():
                # an inaccurate solve is reported through the status instead
                warnings.simplefilter("ignore", UserWarning)
                self._problem.solve(solver=self.solver)
        except cp.error.SolverError:
            return ConvexResult(FAILED, float("inf"), solve_ms=_ms(started))
        self.solves += 1
        status = self._problem.status
        if status in (cp.INFEASIBLE, cp.INFEASIBLE_INACCURATE):
            return ConvexResult(INFEASIBLE, float("inf"), solve_ms=_ms(started))
        if status not in (cp.OPTIMAL, cp.OPTIMAL_INACCURATE) or self._x.value is None:
            return ConvexResult(FAILED, float("inf"), solve_ms=_ms(started))
        x = box.clip(self._x.value)
        duals = {k: np.atleast_1d(np.asarray(c.dual_value, dtype=float)) for k, c in self._cons.items()}
        duals["chords"] = np.concatenate([np.atleast_1d(np.asarray(c.dual_value, dtype=float)) for c in self._chord_cons])
        residual = kkt_residual(relaxed, x, duals)
        state = OPTIMAL if status == cp.OPTIMAL and residual <= tol else INACCURATE
        return ConvexResult(state, self.program.objective_value(x), x, residual, _ms(started), duals)


def solve_convex(program: LogSpaceProgram, box: VarBox = None, tol: float = 1e-6) -> ConvexResult:
    """One-shot convenience wrapper; prefer :class:`ConvexSolver` in loops."""
    return ConvexSolver(program).solve(program.root if box is None else box, tol)


def _ms(started) -> float:
    return (time.perf_counter() - started) * 1e3
