import numpy as np
import pytest

from sdotlab.convex2d import rectangle
from sdotlab.measures import Uniform
from sdotlab.sdot import sample_target, solve

# acceptance outcomes, filled by test_acceptance.py and printed at the end of the run
AC_LINES: dict = {}


def record_ac(num: int, ok: bool, detail: str):
    AC_LINES[num] = (bool(ok), detail)


def pytest_terminal_summary(terminalreporter):
    if not AC_LINES:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for num in sorted(AC_LINES):
        ok, detail = AC_LINES[num]
        tr.write_line(f"AC{num:<2d} {'PASS' if ok else 'FAIL'}  {detail}")


@pytest.fixture(scope="session")
def square():
    return rectangle((-1, -1), (1, 1))


@pytest.fixture(scope="session")
def identity_plan(square):
    """Uniform [-1,1]^2 onto itself with 1200 sites."""
    g = Uniform(0.25)
    cloud = sample_target(square, g, 1200, seed=3, snap_boundary=True)
    return solve(square, g, cloud, seed=3, target=square, target_density=g)


@pytest.fixture(scope="session")
def quadrant_plan():
    """Uniform unit square onto itself, origin site pinned at the corner."""
    sq = rectangle((0, 0), (1, 1))
    g = Uniform(1.0)
    cloud = sample_target(sq, g, 600, seed=5, pin_origin=True, snap_boundary=True)
    return solve(sq, g, cloud, seed=5, target=sq, target_density=g)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
