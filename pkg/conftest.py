"""
Shared fixtures: small grids and catalog functions sampled on them
"""

import pytest

from catalog import catalog_function, get_entry
from grid_core import Grid


@pytest.fixture
def grid_1d():
    return Grid.box((-2.0, 2.0), 401, 1)


@pytest.fixture
def dual_1d():
    return Grid.box((-3.0, 3.0), 301, 1)


@pytest.fixture
def grid_2d():
    return Grid.box((-2.0, 2.0), 41, 2)


@pytest.fixture
def dual_2d():
    return Grid.box((-3.0, 3.0), 41, 2)


@pytest.fixture
def quadratic_1d():
    return catalog_function('quadratic-1d')


@pytest.fixture
def abs_1d():
    return catalog_function('abs-1d')


@pytest.fixture
def quadratic_2d(grid_2d):
    return get_entry('quadratic-2d').sample(grid_2d)
