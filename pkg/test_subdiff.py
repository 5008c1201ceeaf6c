import numpy as np
import pytest

from catalog import catalog_function, get_entry
from conjugate import biconjugate, conjugate_fast
from exceptions import NoAdmissibleStep, PointOutsideDomain
from grid_core import Grid
from subdiff import (combine_quotients, directional_derivative, directional_derivatives_towards,
                     discrete_subgradient, domain_chain_check, exact_subgradients, integer_step,
                     subdifferential_domain, subgradient_tolerance, subgradients)


def test_abs_subdifferential_at_zero_is_the_unit_interval(abs_1d, dual_1d):
    conj = conjugate_fast(abs_1d, dual_1d)
    sub = subgradients(abs_1d, conj, [0.0])
    coords = sub.dual_points[:, 0]
    assert len(sub) == 101
    assert np.isclose(coords.min(), -1.0)
    assert np.isclose(coords.max(), 1.0)
    extremes = dual_1d.points[sub.extreme_members(), 0]
    assert sorted(np.round(extremes, 9).tolist()) == [-1.0, 1.0]


def test_tolerance_covers_every_dual_point(abs_1d, dual_1d):
    conj = conjugate_fast(abs_1d, dual_1d)
    tol = subgradient_tolerance(abs_1d, conj, [0.0])
    assert tol.shape == (dual_1d.size,)
    assert np.all(tol > 0)


def test_quadratic_has_a_single_exact_subgradient(quadratic_1d, dual_1d):
    conj = conjugate_fast(quadratic_1d, dual_1d)
    sub = exact_subgradients(quadratic_1d, conj, [0.5])
    assert len(sub) == 1
    assert np.isclose(sub.dual_points[0, 0], 0.5)


def test_subgradients_outside_domain():
    entry = get_entry('negative-entropy-1d')
    f = entry.sample()
    conj = conjugate_fast(f, entry.dual_grid())
    with pytest.raises(PointOutsideDomain):
        subgradients(f, conj, [-1.0])


def test_directional_derivatives(abs_1d, quadratic_1d):
    assert np.isclose(directional_derivative(abs_1d, [0.0], [1.0]).value, 1.0)
    assert np.isclose(directional_derivative(abs_1d, [0.0], [-1.0]).value, 1.0)
    assert np.isclose(directional_derivative(quadratic_1d, [0.5], [1.0]).value, 0.5, atol=1e-9)
    assert np.isclose(directional_derivative(quadratic_1d, [0.5], [-1.0]).value, -0.5, atol=1e-9)


def test_directional_derivative_leaving_the_domain_is_infinite():
    f = catalog_function('box-indicator-1d')
    result = directional_derivative(f, [1.0], [1.0])
    assert result.value == np.inf


def test_directional_derivative_errors(quadratic_1d):
    with pytest.raises(NoAdmissibleStep):
        directional_derivative(quadratic_1d, [2.0], [1.0])
    with pytest.raises(PointOutsideDomain):
        directional_derivative(catalog_function('box-indicator-1d'), [1.5], [1.0])


def test_integer_step():
    grid = Grid.box((-1.0, 1.0), 21, 2)
    assert integer_step(grid, [1.0, 2.0]).tolist() == [1, 2]
    assert integer_step(grid, [0.2, 0.0]).tolist() == [1, 0]
    assert integer_step(grid, [-0.5, 0.5]).tolist() == [-1, 1]
    with pytest.raises(ValueError):
        integer_step(grid, [0.0, 0.0])


def test_combine_quotients():
    assert combine_quotients([[2.0, 3.0]]).tolist() == [1.0]
    assert combine_quotients([[2.0, np.nan]]).tolist() == [2.0]
    assert combine_quotients([[np.inf, np.inf]]).tolist() == [np.inf]
    # affine run is reproduced exactly
    assert combine_quotients([[0.7, 0.7, 0.7]]).tolist() == [0.7]


def test_single_quotient_targets_have_no_estimate(abs_1d):
    x = abs_1d.grid.nearest_index([1.99])
    targets = [x + 1, x - 1, x - 2]
    result = directional_derivatives_towards(abs_1d, x, targets)
    assert np.isnan(result[0])
    assert np.isclose(result[1], -0.01)
    assert np.isclose(result[2], -0.02)


def test_subgradients_bound_directional_derivatives_from_below(abs_1d):
    x = abs_1d.grid.nearest_index([0.0])
    targets = [x + 3, x - 3]
    plain = directional_derivatives_towards(abs_1d, x, targets)
    bounded = directional_derivatives_towards(abs_1d, x, targets, subgradient_points=[[1.0]])
    assert np.allclose(plain, [0.03, 0.03])
    assert np.all(bounded >= plain - 1e-12)


def test_domain_chain_holds_for_quadratic(quadratic_1d, dual_1d):
    report = domain_chain_check(quadratic_1d, dual_1d)
    assert report.holds
    assert report.violations == []
    assert report.to_dict()['trusted'] == int(report.trusted.sum())


def test_double_well_subdifferential_skips_the_hump():
    entry = get_entry('double-well-1d')
    f = entry.sample()
    bicon = biconjugate(f, entry.dual_grid())
    dom = subdifferential_domain(f, bicon)
    grid = f.grid
    assert not dom[grid.nearest_index([0.0])]
    assert dom[grid.nearest_index([1.0])]
    assert dom[grid.nearest_index([-1.5])]


@pytest.fixture(scope='module')
def plane():
    return Grid.box((-2.0, 2.0), 101, 2), Grid.box((-3.0, 3.0), 101, 2)


def _domain(entry_id, plane):
    grid, dual = plane
    f = get_entry(entry_id).sample(grid)
    return grid, subdifferential_domain(f, biconjugate(f, dual))


def test_l1_subdifferential_domain_is_not_limited_to_dual_nodes(plane):
    # s = +-1 falls between dual nodes
    grid, dom = _domain('l1-norm-2d', plane)
    assert dom[grid.resolve([0.5, 0.5])]
    assert dom[grid.resolve([0.0, 0.0])]
    assert dom[grid.resolve([-1.2, 0.4])]
    assert dom.sum() > grid.size // 2


def test_example_domains_leave_out_infinite_slopes(plane):
    grid, dom = _domain('example1', plane)
    assert dom[grid.resolve([0.0, 0.0])]
    assert not dom[grid.resolve([1.0, 0.0])]
    assert not dom[grid.resolve([1.0, 1.0])]

    grid, dom = _domain('example2', plane)
    assert dom[grid.resolve([0.0, 0.0])]
    assert dom[grid.resolve([1.0, 1.0])]
    assert not dom[grid.resolve([1.0, 0.0])]


def test_discrete_subgradient(quadratic_1d):
    assert discrete_subgradient(quadratic_1d, [0.5]) == pytest.approx([0.5])
    # one-sided at the grid edge
    assert discrete_subgradient(quadratic_1d, [2.0]) == pytest.approx([1.995])

    entropy = get_entry('negative-entropy-1d').sample()
    h = entropy.grid.spacing[0]
    assert discrete_subgradient(entropy, [0.0]) == pytest.approx([np.log(h)])

    peak = catalog_function('double-well-1d')
    assert discrete_subgradient(peak, [0.0]) is None
    with pytest.raises(PointOutsideDomain):
        discrete_subgradient(entropy, [1.5])
