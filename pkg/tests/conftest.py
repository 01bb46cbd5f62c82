import numpy as np
import pytest

from riskcbf import (
    CvarLevel,
    EllipsoidSet,
    HalfSpaceSet,
    Pendulum,
    PolytopeSet,
    RiskCbfConfig,
    make_moment_set,
)

SIGMA_W = np.diag([0.001**2, 0.003**2])
X0 = np.array([0.3, 0.2])


@pytest.fixture
def ms_w():
    return make_moment_set(np.zeros(2), SIGMA_W)


@pytest.fixture
def pendulum():
    return Pendulum(0.01)


@pytest.fixture
def cfg(ms_w):
    return RiskCbfConfig(0.8, CvarLevel(0.3), ms_w)


@pytest.fixture
def halfspace():
    return HalfSpaceSet([1.125, 1.0], 0.075)


@pytest.fixture
def polytope():
    return PolytopeSet([[1.125, 0.5], [1.0, 1.0]], [0.075, 0.1])


@pytest.fixture
def ellipsoid():
    return EllipsoidSet([[6.0, -5.0], [-5.0, 6.0]], 1.0)


ACCEPTANCE_LINES = []


@pytest.fixture
def report():
    """Record one acceptance line and fail the test if the criterion does not hold."""

    def _report(number, title, ok, detail):
        line = f"[{'PASS' if ok else 'FAIL'}] criterion {number:>2}: {title} -- {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        assert ok, line

    return _report


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split("criterion")[1].split(":")[0])):
            terminalreporter.write_line(line)
