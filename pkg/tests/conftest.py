"""Shared fixtures: the scalar baseline problem and its grids."""

import numpy as np
import pytest

from guhjbi import Grid, LQProblem, UncertaintyGeometry, solve_robust_are


@pytest.fixture(scope="session")
def baseline():
    # a=0.5, b=sigma=q=r=1, rho=0.1, eta=0.2
    return LQProblem(
        A=[[0.5]], B=[[1.0]], Sigma=[[1.0]], Q=[[1.0]], R=[[1.0]],
        rho=0.1, eta=0.2,
    )


@pytest.fixture(scope="session")
def baseline_ric(baseline):
    return solve_robust_are(baseline)


@pytest.fixture(scope="session")
def grid1d():
    """The production grid: 2001 points on [-10, 10], h = 0.01."""
    return Grid(bounds=((-10.0, 10.0),), n_points=(2001,))


@pytest.fixture(scope="session")
def coarse_grid():
    return Grid(bounds=((-10.0, 10.0),), n_points=(401,))


@pytest.fixture(scope="session")
def ball2():
    return UncertaintyGeometry(kind="Ball2", epsilon=0.5)


@pytest.fixture(scope="session")
def problem2d():
    # the two-dimensional study parameters
    return LQProblem(
        A=[[0.2, 0.1], [-0.1, 0.3]],
        B=np.eye(2),
        Sigma=0.5 * np.eye(2),
        Q=np.eye(2),
        R=np.eye(2),
        rho=0.1,
        eta=0.1,
    )


def restrict(grid, values, lo, hi):
    """Values at 1D grid nodes with lo <= x <= hi."""
    x = grid.axis(0)
    m = (x >= lo) & (x <= hi)
    return x[m], np.asarray(values)[m]
