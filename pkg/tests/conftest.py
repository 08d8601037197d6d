import numpy as np
import pytest

from melopt.edge import ChannelModel, LearnerSpec, SystemTopology, TaskSpec, TopologyConfig, generate_topology
from melopt.learning import LearningParams, fit_approximation
from melopt.problem import build_problem

PARAMS = LearningParams()
APPROX = fit_approximation(PARAMS, c2=1.0)


def make_problem(n_orchestrators, n_learners, seed, alpha=0.5, T_max=660.0, **topology):
    params = LearningParams(T_max=T_max)
    cfg = TopologyConfig(n_orchestrators=n_orchestrators, n_learners=n_learners, **topology)
    return build_problem(generate_topology(cfg, seed), params, APPROX, alpha)


def manual_topology(freqs, distances, task=TaskSpec(), channel=ChannelModel()):
    """Topology with explicit learner frequencies and distance rows."""
    distances = np.atleast_2d(np.asarray(distances, dtype=float))
    learners = tuple(LearnerSpec(cpu_freq=f, distances=tuple(d)) for f, d in zip(freqs, distances))
    n_o = distances.shape[1]
    return SystemTopology(
        tasks=(task,) * n_o,
        learners=learners,
        channel=channel,
        fading=np.ones((len(learners), n_o)),
    )


def manual_problem(freqs, distances, alpha=0.5, T_max=660.0):
    return build_problem(manual_topology(freqs, distances), LearningParams(T_max=T_max), APPROX, alpha)


@pytest.fixture
def problem_factory():
    return make_problem


# one line per acceptance criterion, printed after the run
ACCEPTANCE_LINES = []


def report_criterion(number, ok, detail):
    ACCEPTANCE_LINES.append(f"criterion {number}: {'PASS' if ok else 'FAIL'} {detail}")
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
