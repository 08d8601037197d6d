"""Log-space program and its chord relaxation over a variable box.

Variables, in order: association ``lam_bar[l, o]``, allocation ``n_bar[l, o]``
(both row-major), then ``tau_bar[o]`` and ``G_bar[o]``. Every objective term
and every ``<=`` constraint is a nonnegative combination of ``exp(a @ x)``.
The two families of ``>= 1`` rows (each learner fully associated, each
orchestrator's dataset fully handed out) are concave and get their chords.

The allocation rows use the product ``lam * n`` rather than ``n`` alone: a
relaxed learner only carries data in proportion to how much it belongs to
the orchestrator, which is the same quantity the energy and time terms see.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..errors import DomainError, InfeasibleError
from ..problem import MelProblem, SolverConfig
from .transform import separation_max


@dataclass(frozen=True)
class VariableLayout:
    n_learners: int
    n_orchestrators: int

    @property
    def pairs(self) -> int:
        return self.n_learners * self.n_orchestrators

    @property
    def size(self) -> int:
        return 2 * self.pairs + 2 * self.n_orchestrators

    def lam(self, l, o):
        return l * self.n_orchestrators + o

    def alloc(self, l, o):
        return self.pairs + l * self.n_orchestrators + o

    def tau(self, o):
        return 2 * self.pairs + o

    def cycles(self, o):
        return 2 * self.pairs + self.n_orchestrators + o

    def name(self, i: int) -> str:
        if i < self.pairs:
            return "lam[%d,%d]" % divmod(i, self.n_orchestrators)
        if i < 2 * self.pairs:
            return "n[%d,%d]" % divmod(i - self.pairs, self.n_orchestrators)
        if i < 2 * self.pairs + self.n_orchestrators:
            return f"tau[{i - 2 * self.pairs}]"
        return f"G[{i - 2 * self.pairs - self.n_orchestrators}]"

    def is_integer(self, i: int) -> bool:
        """tau and G are integral in the original space."""
        return i >= 2 * self.pairs

    def unpack(self, x):
        x = np.asarray(x, dtype=float)
        L, O, P = self.n_learners, self.n_orchestrators, self.pairs
        return x[:P].reshape(L, O), x[P : 2 * P].reshape(L, O), x[2 * P : 2 * P + O], x[2 * P + O :]


@dataclass(frozen=True, eq=False)
class VarBox:
    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        lo = np.array(self.lo, dtype=float)
        hi = np.array(self.hi, dtype=float)
        if lo.shape != hi.shape or lo.ndim != 1:
            raise DomainError("box bounds must be 1-D arrays of equal length")
        if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
            raise DomainError("box bounds must be finite")
        if np.any(lo > hi):
            raise DomainError(f"empty box: lower bound above upper at index {int(np.argmax(lo > hi))}")
        lo.flags.writeable = False
        hi.flags.writeable = False
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @property
    def width(self) -> np.ndarray:
        return self.hi - self.lo

    def contains(self, x, atol=1e-9) -> bool:
        x = np.asarray(x, dtype=float)
        return bool(np.all(x >= self.lo - atol) and np.all(x <= self.hi + atol))

    def clip(self, x) -> np.ndarray:
        return np.clip(np.asarray(x, dtype=float), self.lo, self.hi)

    def bisect(self, i: int, at=None):
        mid = 0.5 * (self.lo[i] + self.hi[i]) if at is None else float(at)
        if not self.lo[i] <= mid <= self.hi[i]:
            raise DomainError("split point outside the interval")
        left_hi = self.hi.copy()
        left_hi[i] = mid
        right_lo = self.lo.copy()
        right_lo[i] = mid
        return VarBox(self.lo, left_hi), VarBox(right_lo, self.hi)

    def integer_range(self, i: int):
        """Integers ``a..b`` covered by ``exp`` of interval ``i``."""
        return math.ceil(math.exp(self.lo[i]) - 1e-9), math.floor(math.exp(self.hi[i]) + 1e-9)

    def split_integer(self, i: int, at=None):
        """Split a log-integer variable between two consecutive integers.

        With ``exp(x_i)`` covering the integers ``a..b`` the children get
        ``a..k`` and ``k+1..b``, where ``k = floor(at)`` (default: the middle
        integer). ``None`` when at most one integer remains.
        """
        a, b = self.integer_range(i)
        if b <= a:
            return None
        k = (a + b) // 2 if at is None else min(max(math.floor(at), a), b - 1)
        left_hi = self.hi.copy()
        left_hi[i] = math.log(k)
        right_lo = self.lo.copy()
        right_lo[i] = math.log(k + 1)
        left_lo = self.lo.copy()
        left_lo[i] = max(self.lo[i], math.log(a))
        right_hi = self.hi.copy()
        right_hi[i] = min(self.hi[i], math.log(b))
        return VarBox(left_lo, left_hi), VarBox(right_lo, right_hi)


@dataclass(frozen=True, eq=False)
class ExpRows:
    """``rows @ exp(exponents @ x)``; ``rows`` is nonnegative."""

    rows: np.ndarray  # (m, K)
    exponents: np.ndarray  # (K, n)
    label: str

    def terms(self, x) -> np.ndarray:
        return np.exp(self.exponents @ x)

    def value(self, x) -> np.ndarray:
        return self.rows @ self.terms(x)

    def weighted_gradient(self, x, weights) -> np.ndarray:
        """Gradient of ``weights @ value(x)``."""
        return self.exponents.T @ ((self.rows.T @ weights) * self.terms(x))


@dataclass(frozen=True, eq=False)
class ConcaveRows:
    """Rows ``membership @ exp(selector @ x) >= 1``; ``selector`` is 0/1."""

    membership: np.ndarray  # (r, K)
    selector: np.ndarray  # (K, n)
    label: str

    def term_interval(self, box: VarBox):
        return self.selector @ box.lo, self.selector @ box.hi

    def chords(self, box: VarBox):
        """Per-term chord intercepts and slopes ``exp(y) <= c + s y``."""
        y_lo, y_hi = self.term_interval(box)
        width = y_hi - y_lo
        flat = width <= 1e-12 * np.maximum(1.0, np.abs(y_lo))
        safe = np.where(flat, 1.0, width)
        e_lo, e_hi = np.exp(y_lo), np.exp(y_hi)
        slope = np.where(flat, 0.0, (e_hi - e_lo) / safe)
        intercept = np.where(flat, e_lo, (y_hi * e_lo - y_lo * e_hi) / safe)
        return intercept, slope

    def linear_form(self, box: VarBox):
        """``(Gm, h)`` with the relaxed rows written as ``Gm @ x <= h``."""
        intercept, slope = self.chords(box)
        Gm = -self.membership @ (slope[:, None] * self.selector)
        h = self.membership @ intercept - 1.0
        return Gm, h

    def relaxed_value(self, x, box: VarBox) -> np.ndarray:
        intercept, slope = self.chords(box)
        return self.membership @ (intercept + slope * (self.selector @ x))

    def exact_value(self, x) -> np.ndarray:
        return self.membership @ np.exp(self.selector @ x)

    def separations(self, box: VarBox) -> np.ndarray:
        y_lo, y_hi = self.term_interval(box)
        return np.array([separation_max(a, b) for a, b in zip(y_lo, y_hi)])


@dataclass(frozen=True, eq=False)
class LogSpaceProgram:
    layout: VariableLayout
    objective: ExpRows  # one row
    convex_rows: tuple  # of ExpRows, each row <= 1
    concave: tuple  # of ConcaveRows, each row >= 1 (relaxed by chords)
    root: VarBox

    @property
    def n_substitutions(self) -> int:
        return sum(c.membership.shape[0] for c in self.concave)

    def objective_value(self, x) -> float:
        return float(self.objective.value(x)[0])

    def max_violation(self, x, box: VarBox = None) -> float:
        """Largest constraint violation at ``x``; chords replace the concave
        rows when a box is given, the exact rows otherwise."""
        worst = 0.0
        for g in self.convex_rows:
            worst = max(worst, float(np.max(g.value(x) - 1.0, initial=0.0)))
        for c in self.concave:
            v = c.exact_value(x) if box is None else c.relaxed_value(x, box)
            worst = max(worst, float(np.max(1.0 - v, initial=0.0)))
        return worst


def _cycles_bound(problem: MelProblem, o: int) -> float:
    """Upper bound on G for orchestrator ``o`` over every feasible solution.

    Some member must carry at least ``1 / |L|`` of the data, and its time at
    one local iteration already caps G.
    """
    topo, T = problem.topology, problem.params.T_max
    share = 1.0 / topo.n_learners
    cycle = topo.A2[:, o] * share + topo.A1[:, o] * share + topo.A0[:, o]
    g = math.floor(T * (1.0 + 1e-9) / float(cycle.min()))
    return float(max(1, g))


def root_box(problem: MelProblem, config: SolverConfig) -> VarBox:
    topo, p = problem.topology, problem.params
    lay = VariableLayout(topo.n_learners, topo.n_orchestrators)
    lam_lo = math.log(config.lambda_floor)
    n_lo = math.log(config.allocation_floor)
    lo = np.empty(lay.size)
    hi = np.empty(lay.size)
    reachable = topo.A0 <= p.T_max
    for l in range(topo.n_learners):
        if not reachable[l].any():
            raise InfeasibleError(f"learner {l} cannot exchange weights with any orchestrator within T_max")
        for o in range(topo.n_orchestrators):
            lo[lay.lam(l, o)] = lam_lo
            hi[lay.lam(l, o)] = 0.0 if reachable[l, o] else lam_lo
            lo[lay.alloc(l, o)] = n_lo
            hi[lay.alloc(l, o)] = 0.0
    for o in range(topo.n_orchestrators):
        lo[lay.tau(o)], hi[lay.tau(o)] = 0.0, math.log(p.tau_max)
        lo[lay.cycles(o)], hi[lay.cycles(o)] = 0.0, math.log(_cycles_bound(problem, o))
    return VarBox(lo, hi)


def build_program(problem: MelProblem, config: SolverConfig) -> LogSpaceProgram:
    """Assemble the transformed program for one instance (box independent)."""
    topo, p = problem.topology, problem.params
    L, O = topo.n_learners, topo.n_orchestrators
    lay = VariableLayout(L, O)
    n = lay.size
    T = p.T_max
    e_w = problem.alpha / problem.energy_scale
    u_w = (1.0 - problem.alpha) / problem.u_scale

    def pair_exponents(l, o):
        """Exponent rows for the fixed, data and compute parts of pair (l, o)."""
        base = np.zeros(n)
        base[lay.lam(l, o)] = 1.0
        base[lay.cycles(o)] = 1.0
        data = base.copy()
        data[lay.alloc(l, o)] = 1.0
        comp = data.copy()
        comp[lay.tau(o)] = 1.0
        return base, data, comp

    # objective: three energy terms per pair, one U term per orchestrator
    exps, coef = [], []
    for l in range(L):
        for o in range(O):
            base, data, comp = pair_exponents(l, o)
            exps += [base, data, comp]
            coef += [e_w * topo.Z0[l, o], e_w * topo.Z1[l, o], e_w * topo.Z2[l, o]]
    for o, apx in enumerate(problem.approx):
        row = np.zeros(n)
        row[lay.tau(o)] = -apx.c2
        row[lay.cycles(o)] = -1.0
        exps.append(row)
        coef.append(u_w * apx.c1)
    objective = ExpRows(np.array([coef]), np.array(exps), "objective")

    # time: per learner, sum over orchestrators of lam * t_lo <= T_max
    t_exps, t_rows = [], np.zeros((L, 3 * L * O))
    for l in range(L):
        for o in range(O):
            k = 3 * (l * O + o)
            t_exps += list(pair_exponents(l, o))
            t_rows[l, k : k + 3] = [topo.A0[l, o] / T, topo.A1[l, o] / T, topo.A2[l, o] / T]
    time_rows = ExpRows(t_rows, np.array(t_exps), "time")

    # association upper: sum_o lam <= 1
    a_exps = np.zeros((L * O, n))
    a_rows = np.zeros((L, L * O))
    for l in range(L):
        for o in range(O):
            a_exps[l * O + o, lay.lam(l, o)] = 1.0
            a_rows[l, l * O + o] = 1.0
    assoc_upper = ExpRows(a_rows, a_exps, "assoc_upper")
    assoc_lower = ConcaveRows(a_rows.copy(), a_exps.copy(), "assoc_lower")

    convex = [time_rows, assoc_upper]
    if O > 1:
        pw_exps, pw_index = [], []
        for l in range(L):
            for i in range(O):
                for j in range(i + 1, O):
                    row = np.zeros(n)
                    row[lay.lam(l, i)] = row[lay.lam(l, j)] = 1.0
                    pw_exps.append(row)
                    pw_index.append(l)
        pw_rows = np.zeros((L, len(pw_exps)))
        pw_rows[pw_index, np.arange(len(pw_exps))] = 1.0 / config.epsilon_assoc
        convex.append(ExpRows(pw_rows, np.array(pw_exps), "pairwise"))

    # allocation: per orchestrator, sum_l lam * n == 1
    y_exps = np.zeros((L * O, n))
    y_rows = np.zeros((O, L * O))
    for o in range(O):
        for l in range(L):
            k = o * L + l
            y_exps[k, lay.lam(l, o)] = 1.0
            y_exps[k, lay.alloc(l, o)] = 1.0
            y_rows[o, k] = 1.0
    convex.append(ExpRows(y_rows, y_exps, "alloc_upper"))
    alloc_lower = ConcaveRows(y_rows.copy(), y_exps.copy(), "alloc_lower")

    return LogSpaceProgram(
        layout=lay,
        objective=objective,
        convex_rows=tuple(convex),
        concave=(assoc_lower, alloc_lower),
        root=root_box(problem, config),
    )


@dataclass(frozen=True, eq=False)
class RelaxedProgram:
    """The convex program on one box: exponential rows of ``program`` plus
    the chord rows ``Gm @ x <= h`` and the box bounds."""

    program: LogSpaceProgram
    box: VarBox
    Gm: np.ndarray
    h: np.ndarray

    def max_violation(self, x) -> float:
        worst = self.program.max_violation(x, self.box)
        worst = max(worst, float(np.max(self.box.lo - x, initial=0.0)), float(np.max(x - self.box.hi, initial=0.0)))
        return worst


def build_relaxed_subproblem(program: LogSpaceProgram, box: VarBox) -> RelaxedProgram:
    if box.lo.shape != program.root.lo.shape:
        raise DomainError("box does not match the program's variable count")
    parts = [c.linear_form(box) for c in program.concave]
    Gm = np.vstack([g for g, _ in parts])
    h = np.concatenate([v for _, v in parts])
    return RelaxedProgram(program, box, Gm, h)
