import numpy as np
import pytest

from svilab import monotone
from svilab.coefficients import constant, zero_drift
from svilab.svi import SviProblem


def catalog():
    """One instance of every operator kind, in a few dimensions."""
    rng = np.random.default_rng(11)
    B = rng.standard_normal((3, 3))
    return {
        "Zero": monotone.Zero(2),
        "Quadratic": monotone.Quadratic(B @ B.T + 0.1 * np.eye(3), [0.5, -1.0, 0.0]),
        "ScaledL1": monotone.ScaledL1(1.5, 3),
        "IndicatorBox": monotone.IndicatorBox([0.0, -1.0, None], [None, 2.0, 1.0]),
        "IndicatorBall": monotone.IndicatorBall([1.0, 0.0], 2.0),
        "IndicatorHalfspaces": monotone.IndicatorHalfspaces(
            [[1.0, 0.0], [0.0, 1.0], [-1.0, -1.0]], [1.0, 1.0, 1.0]),
        "Sum": monotone.Sum(monotone.Quadratic(np.diag([1.0, 2.0]), [0.3, -0.2]),
                            monotone.IndicatorBall([0.0, 0.0], 1.0)),
    }


@pytest.fixture(scope="session")
def specs():
    return catalog()


def reflected_problem(x=0.5, T=1.0):
    return SviProblem(monotone.IndicatorBox([0.0], [None]), zero_drift(1), constant([[1.0]]), [x], T, 1)


@pytest.fixture
def reflected():
    return reflected_problem()


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance: acceptance criteria")


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(mod.RESULTS):
        terminalreporter.write_line(mod.RESULTS[k])
