"""Log-space convexification and branch and bound."""

from .bnb import BnbNode, branch_and_bound, polish, round_to_feasible, run_branch_and_bound
from .convex import ConvexSolver, solve_convex
from .relaxation import VarBox, build_program, build_relaxed_subproblem
from .transform import exp_transform, inverse_transform, linear_underestimator, separation_max

__all__ = [
    "BnbNode",
    "ConvexSolver",
    "VarBox",
    "branch_and_bound",
    "build_program",
    "build_relaxed_subproblem",
    "exp_transform",
    "inverse_transform",
    "linear_underestimator",
    "polish",
    "round_to_feasible",
    "run_branch_and_bound",
    "separation_max",
    "solve_convex",
]
