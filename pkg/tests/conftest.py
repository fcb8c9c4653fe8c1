import os
import sys

import numpy as np
import pytest
from hypothesis import settings

sys.path.insert(0, os.path.dirname(__file__))

from kleinriesz import ProblemSpec, assemble, build_chart, dilation_group, solve, trivial_group

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")


@pytest.fixture(scope="session")
def spec3():
    return ProblemSpec(3, 2.0)


@pytest.fixture(scope="session")
def sphere(spec3):
    """Round S^3 at ~1600 nodes: chart, kernel, solution from u0 = 1."""
    ch = build_chart(trivial_group(3), 13)
    K = assemble(ch, spec3)
    sol, rep = solve(spec3, ch, K, u0=np.ones(ch.size), with_yamabe=True)
    return ch, K, sol, rep


@pytest.fixture(scope="session")
def hopf(spec3):
    """Warped Hopf manifold S^1 x S^2 (k = 2)."""
    ch = build_chart(dilation_group(2.0, 3), 13, warp=0.2)
    K = assemble(ch, spec3)
    sol, rep = solve(spec3, ch, K, u0=np.ones(ch.size), with_yamabe=True)
    return ch, K, sol, rep


@pytest.fixture(scope="session")
def hopf_fine_t(spec3):
    """Hopf chart with 8 log-radius levels, for off-grid interpolation."""
    ch = build_chart(dilation_group(2.0, 3), 10, warp=0.2, radial_levels=8)
    K = assemble(ch, spec3)
    sol, rep = solve(spec3, ch, K)
    return ch, K, sol, rep


# one line per acceptance criterion, filled in by tests/test_acceptance.py
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[k])
