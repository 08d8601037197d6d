"""Association, task allocation and training-schedule optimization for
multi-orchestrator mobile edge learning."""

from .edge import ChannelModel, LearnerSpec, SystemTopology, TaskSpec, TopologyConfig, generate_topology
from .learning import ConvergenceApprox, LearningParams, fit_approximation
from .problem import AssignmentSolution, MelProblem, Normalization, SolverConfig, build_problem, objective

__all__ = [
    "AssignmentSolution",
    "ChannelModel",
    "ConvergenceApprox",
    "LearnerSpec",
    "LearningParams",
    "MelProblem",
    "Normalization",
    "SolverConfig",
    "SystemTopology",
    "TaskSpec",
    "TopologyConfig",
    "build_problem",
    "fit_approximation",
    "generate_topology",
    "objective",
]

__version__ = "0.1.0"
