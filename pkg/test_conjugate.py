import numpy as np
import pytest
from hypothesis import given, seed, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from catalog import catalog_function, get_entry
from conjugate import LegendreTransformer, LowerHull, biconjugate, conjugate_brute, conjugate_fast
from grid_core import INF, Grid, GridFunction

SMALL = Grid.box((-2.0, 2.0), 41, 1)
SMALL_DUAL = Grid.box((-3.0, 3.0), 31, 1)


def _random_values(draw_values, holes):
    values = np.where(holes, INF, draw_values)
    if not np.isfinite(values).any():
        values[0] = 0.0
    return values


def test_lower_hull_vertices():
    x = np.asarray([0.0, 1.0, 2.0])
    assert LowerHull.vertices(x, np.asarray([0.0, -1.0, 0.0])).tolist() == [0, 1, 2]
    assert LowerHull.vertices(x, np.asarray([0.0, 1.0, 0.0])).tolist() == [0, 2]
    # collinear middle point dropped
    assert LowerHull.vertices(x, np.asarray([0.0, 1.0, 2.0])).tolist() == [0, 2]


def test_quadratic_is_self_conjugate_on_trusted_points(quadratic_1d):
    dual = Grid.box((-1.5, 1.5), 31, 1)
    conj = conjugate_fast(quadratic_1d, dual)
    assert conj.trusted.all()
    assert np.allclose(conj.values, 0.5 * dual.points[:, 0] ** 2, atol=1e-9)


def test_truncated_dual_points_are_untrusted(quadratic_1d, dual_1d):
    conj = conjugate_fast(quadratic_1d, dual_1d)
    far = dual_1d.nearest_index([2.5])
    near = dual_1d.nearest_index([1.0])
    assert not conj.trusted[far]
    assert conj.trusted[near]
    assert np.isclose(quadratic_1d.grid.points[conj.argmax[far], 0], 2.0)


def test_affine_is_trusted_only_at_its_slope(dual_1d):
    f = catalog_function('affine-1d')
    conj = conjugate_fast(f, dual_1d)
    slope = dual_1d.nearest_index([0.6])
    assert conj.trusted[slope]
    assert conj.trusted_count == 1


def test_fast_matches_brute_in_2d(quadratic_2d, dual_2d):
    fast = conjugate_fast(quadratic_2d, dual_2d)
    brute = conjugate_brute(quadratic_2d, dual_2d)
    assert np.allclose(fast.values, brute.values, rtol=1e-12, atol=1e-12)
    assert (fast.trusted == brute.trusted).all()


def test_unknown_method_and_dimension_mismatch(quadratic_1d, dual_2d):
    transformer = LegendreTransformer()
    with pytest.raises(ValueError):
        transformer.conjugate(quadratic_1d, Grid.box((-1.0, 1.0), 5, 1), method='magic')
    with pytest.raises(ValueError):
        transformer.fast(quadratic_1d, dual_2d)


@pytest.mark.parametrize('entry_id', ['quadratic-1d', 'abs-1d', 'quartic-1d', 'exp-1d', 'negative-entropy-1d',
                                      'affine-1d', 'box-indicator-1d', 'singleton-indicator-1d', 'double-well-1d'])
def test_analytic_conjugates_match_on_trusted_points(entry_id):
    entry = get_entry(entry_id)
    f = entry.sample()
    dual = entry.dual_grid()
    conj = conjugate_fast(f, dual)
    expected = entry.analytic_conjugate(dual)
    tol = LegendreTransformer().biconjugate_tolerance(f, dual)
    assert conj.trusted.any()
    assert np.all(np.abs(conj.values[conj.trusted] - expected[conj.trusted]) <= tol)


def test_biconjugate_of_convex_function_is_consistent(quadratic_1d, dual_1d):
    bicon = biconjugate(quadratic_1d, dual_1d)
    assert bicon.convex_lsc_consistent
    assert bicon.max_error <= bicon.tolerance


def test_biconjugate_of_double_well_is_its_envelope():
    entry = get_entry('double-well-1d')
    f = entry.sample()
    bicon = biconjugate(f, entry.dual_grid())
    assert not bicon.convex_lsc_consistent
    inner = bicon.trusted & ~f.grid.boundary_mask
    target = entry.envelope(f.grid.points)
    assert np.all(np.abs(bicon.function.values[inner] - target[inner]) <= bicon.tolerance)


@seed(11)
@settings(max_examples=25, deadline=None)
@given(values=arrays(np.float64, (41,), elements=st.floats(-5.0, 5.0)),
       holes=arrays(np.bool_, (41,)))
def test_fast_equals_brute_on_trusted_points(values, holes):
    f = GridFunction(SMALL, _random_values(values, holes))
    fast = conjugate_fast(f, SMALL_DUAL)
    brute = conjugate_brute(f, SMALL_DUAL)
    t = brute.trusted
    assert np.all(np.abs(fast.values[t] - brute.values[t]) <= 1e-12 * (1.0 + np.abs(brute.values[t])))


@seed(12)
@settings(max_examples=25, deadline=None)
@given(values=arrays(np.float64, (41,), elements=st.floats(-5.0, 5.0)),
       bump=arrays(np.float64, (41,), elements=st.floats(0.0, 3.0)))
def test_conjugation_reverses_order(values, bump):
    f = GridFunction(SMALL, values)
    g = GridFunction(SMALL, values + bump)
    assert np.all(conjugate_fast(f, SMALL_DUAL).values >= conjugate_fast(g, SMALL_DUAL).values - 1e-12)


@seed(13)
@settings(max_examples=25, deadline=None)
@given(values=arrays(np.float64, (41,), elements=st.floats(-5.0, 5.0)),
       shift=st.integers(min_value=-5, max_value=5))
def test_tilt_shifts_the_conjugate(values, shift):
    f = GridFunction(SMALL, values)
    a = shift * SMALL_DUAL.spacing[0]
    plain = conjugate_fast(f, SMALL_DUAL).values
    tilted = conjugate_fast(f.tilted([a]), SMALL_DUAL).values
    k = np.arange(SMALL_DUAL.size)
    ok = (k + shift >= 0) & (k + shift < SMALL_DUAL.size)
    assert np.allclose(tilted[ok], plain[k[ok] + shift], atol=1e-9)


@seed(14)
@settings(max_examples=25, deadline=None)
@given(values=arrays(np.float64, (41,), elements=st.floats(-5.0, 5.0)),
       holes=arrays(np.bool_, (41,)))
def test_fenchel_young_gap_is_nonnegative(values, holes):
    f = GridFunction(SMALL, _random_values(values, holes))
    conj = conjugate_fast(f, SMALL_DUAL)
    for x in np.flatnonzero(f.domain_mask):
        assert conj.gaps(x).min() >= -1e-9
