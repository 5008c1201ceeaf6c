import numpy as np
import pytest

from catalog import (CATALOG_ENTRIES, DETECTOR_SETS, FunctionCatalog, SET_BUILDERS, constraint_set, example1,
                     example1_hessian, example2, finite_difference_hessian, get_entry, list_entries,
                     random_convex_function)
from exceptions import OutsideOpenBox, UnknownCatalogEntry
from grid_core import Grid


def test_example_values():
    assert example1([0.0, 0.0]) == -1.0
    assert example2([0.0, 0.0]) == -1.0
    assert example1([0.5, 1.0]) == 0.0
    assert example2([1.0, 1.0]) == 0.0
    assert example1([1.5, 0.0]) == np.inf
    values = example2([[0.0, 0.0], [0.6, 0.0]])
    assert np.allclose(values, [-1.0, -0.8])


def test_example1_hessian_at_origin():
    h = example1_hessian([0.0, 0.0])
    assert np.isclose(h['hxx'], 0.5)
    assert np.isclose(h['hyy'], 0.5)
    assert h['hxy'] == 0.0
    assert np.isclose(h['det'], 0.25)


def test_example1_hessian_determinant_matches_entries():
    h = example1_hessian([0.3, -0.4])
    assert np.isclose(h['hxx'] * h['hyy'] - h['hxy'] ** 2, h['det'])


def test_example1_hessian_outside_open_box():
    with pytest.raises(OutsideOpenBox):
        example1_hessian([1.0, 0.0])
    with pytest.raises(OutsideOpenBox):
        example1_hessian([0.0, 0.0, 0.0])


@pytest.mark.parametrize('point', [[0.0, 0.0], [0.3, -0.2], [-0.5, 0.5], [0.5, 0.1]])
def test_finite_difference_hessian_matches_closed_form(point):
    h = example1_hessian(point)
    fd = finite_difference_hessian(example1, point, step=1e-3)
    assert np.isclose(fd[0, 0], h['hxx'], rtol=1e-5)
    assert np.isclose(fd[1, 1], h['hyy'], rtol=1e-5)
    assert abs(fd[0, 1] - h['hxy']) <= 1e-5 * (1.0 + abs(h['hxy']))


def test_extrapolated_hessian_near_the_edge():
    point = [0.8, -0.8]
    h = example1_hessian(point)
    coarse = finite_difference_hessian(example1, point, step=1e-3)
    fine = finite_difference_hessian(example1, point, step=5e-4)
    richardson = (4.0 * fine - coarse) / 3.0
    assert np.isclose(richardson[0, 0], h['hxx'], rtol=1e-6)
    assert np.isclose(np.linalg.det(richardson), h['det'], rtol=1e-6)


def test_gradients_of_examples():
    assert np.allclose(get_entry('example1').gradient([0.0, 0.0]), [0.0, 0.0])
    g = get_entry('example2').gradient([0.6, 0.0])
    assert np.allclose(g, [0.75, 0.0])


def test_catalog_lookup():
    catalog = FunctionCatalog()
    assert len(catalog.ids()) == len(CATALOG_ENTRIES) == 15
    with pytest.raises(UnknownCatalogEntry):
        catalog.get('no-such-function')
    f = catalog.function('quadratic-1d')
    assert catalog.function('quadratic-1d') is f
    assert [e['id'] for e in list_entries()] == sorted(catalog.ids())


def test_entry_defaults():
    entry = get_entry('quadratic-1d')
    assert entry.grid().counts == (401,)
    assert entry.dual_grid().counts == (301,)
    assert get_entry('example1').grid().counts == (201, 201)
    assert get_entry('negative-quadratic-2d').analytic_conjugate(Grid.box((-1.0, 1.0), 5, 2)) is None


def test_examples_are_infinite_off_the_box():
    f = get_entry('example1').sample(Grid.box((-2.0, 2.0), 41, 2))
    assert np.all(np.isfinite(f.values) == np.all(np.abs(f.grid.points) <= 1.0 + 1e-9, axis=1))


def test_random_convex_function_is_reproducible():
    grid = Grid.box((-1.0, 1.0), 21, 2)
    a = random_convex_function(grid, seed=3)
    b = random_convex_function(grid, seed=3)
    c = random_convex_function(grid, seed=4)
    assert np.array_equal(a.values, b.values)
    assert not np.array_equal(a.values, c.values)


def test_constraint_sets():
    grid = Grid.box((-2.0, 2.0), 41, 2)
    for name in DETECTOR_SETS:
        assert constraint_set(name, grid).size > 0
    assert constraint_set('two-point', grid).size == 2
    assert constraint_set('square', grid).size == 4
    # (+-1, 0), (0, +-1) and the eight (+-0.6, +-0.8) lattice points
    assert constraint_set('circle', grid).size == 12
    assert set(SET_BUILDERS) >= set(DETECTOR_SETS)
    with pytest.raises(UnknownCatalogEntry):
        constraint_set('star', grid)
    with pytest.raises(ValueError):
        constraint_set('box', Grid.box((-1.0, 1.0), 11, 1))
