"""Shared fixtures and analytic helpers for the test suite."""

import numpy as np
import pytest

from manifoldpde import geometry

# One line per acceptance criterion, echoed after the test summary so the
# verdicts survive output capture (see test_acceptance._report).
ACCEPTANCE_LINES: list = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def equispaced_circle(N: int) -> tuple:
    """Unit circle sampled at N equal angles; returns (cloud, theta)."""
    theta = 2.0 * np.pi * np.arange(N) / N
    points = np.column_stack([np.cos(theta), np.sin(theta)])
    return geometry.PointCloud(points, intrinsic_dim=1), theta


def circle_sample(N: int, seed=0) -> geometry.ManifoldSample:
    """Random uniform sample of the unit circle (ellipse with a = 1)."""
    return geometry.sample_ellipse(N, a=1.0, seed=seed)


@pytest.fixture(scope="session")
def ellipse_400():
    return geometry.sample_ellipse(400, seed=7)


@pytest.fixture(scope="session")
def ellipse_small():
    return geometry.sample_ellipse(120, seed=3)


@pytest.fixture(scope="session")
def torus_small():
    return geometry.sample_torus(400, seed=3)
