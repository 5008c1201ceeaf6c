import numpy as np
import pytest

from catalog import constraint_set
from exceptions import EmptyDomain, InfeasibleProblem
from grid_core import INF, Grid, GridFunction
from projections import (ConstraintSet, ProbeVerdict, ProjectionSolver, half_square, halton_probes,
                         midpoint_convexity, negative_half_square, solve_relative_projection)

GRID = Grid.box((-2.0, 2.0), 41, 2)


@pytest.fixture
def solver():
    return ProjectionSolver(probes=20, seed=42)


def test_constraint_set_validation():
    with pytest.raises(ValueError):
        ConstraintSet('short', GRID, np.ones(10, dtype=bool))
    with pytest.raises(EmptyDomain):
        ConstraintSet('empty', GRID, np.zeros(GRID.size, dtype=bool))


def test_constraint_set_from_points():
    S = ConstraintSet.from_points(GRID, [[0.52, 0.49], [-1.0, 1.0]], 'pair')
    assert S.size == 2
    assert S.representation == 'points'
    lower, upper = S.bounding_box()
    assert np.allclose(lower, [-1.0, 0.5])
    assert np.allclose(upper, [0.5, 1.0])
    assert S.intersect(GRID.points[:, 0] > 0).size == 1


def test_halton_probes_are_seeded_and_trimmed():
    a = halton_probes([0.0, 0.0], [1.0, 1.0], 16, seed=1)
    b = halton_probes([0.0, 0.0], [1.0, 1.0], 16, seed=1)
    assert np.array_equal(a, b)
    assert np.all((a >= 0.05) & (a <= 0.95))
    flat = halton_probes([0.0, 2.0], [1.0, 2.0], 4, seed=1)
    assert np.all(flat[:, 1] == 2.0)


def test_midpoint_convexity():
    convex, failing = midpoint_convexity(constraint_set('box', GRID))
    assert convex and failing == []
    convex, failing = midpoint_convexity(constraint_set('two-point', GRID))
    assert not convex
    assert len(failing) == 1


def test_projection_onto_disk(solver):
    cert = solver.solve(half_square(GRID), constraint_set('disk', GRID), [2.0, 0.0])
    assert cert.strong
    assert np.allclose(GRID.points[cert.minimizer], [1.0, 0.0])
    assert np.isclose(cert.optimal_value, -1.5)
    assert cert.to_dict()['set'] == 'disk'


def test_projection_errors(solver):
    S = constraint_set('box', GRID)
    left = np.where(GRID.points[:, 0] < -1.0, half_square(GRID).values, INF)
    with pytest.raises(InfeasibleProblem):
        solver.solve(GridFunction(GRID, left), S, [0.0, 0.0])
    with pytest.raises(ValueError):
        solver.solve(half_square(Grid.box((-2.0, 2.0), 21, 2)), S, [0.0, 0.0])


def test_tchebychev_box_passes(solver):
    verdict = solver.tchebychev_test(half_square(GRID), constraint_set('box', GRID))
    assert verdict.verdict == 'PASS'
    assert verdict.passed
    assert verdict.midpoint_convex


def test_tchebychev_two_points_fail(solver):
    verdict = solver.tchebychev_test(half_square(GRID), constraint_set('two-point', GRID))
    assert verdict.verdict == 'FAIL'
    assert not verdict.passed
    assert verdict.witness is not None


def test_farthest_point_singleton(solver):
    verdict = solver.farthest_point_experiment(constraint_set('singleton', GRID))
    assert verdict.verdict == 'SINGLETON-CONSISTENT'
    assert verdict.probes == 20


def test_farthest_point_pair_has_witness(solver):
    verdict = solver.farthest_point_experiment(constraint_set('two-point', GRID))
    assert verdict.verdict == 'WITNESS'
    assert np.allclose(verdict.witness, [0.0, 0.0])
    assert len(verdict.certificate.minimizers) == 2


def test_convexity_detector(solver):
    box = solver.convexity_detector(constraint_set('box', GRID))
    assert box.verdict == 'CONVEX-CONSISTENT'
    assert box.agreement
    annulus = solver.convexity_detector(constraint_set('annulus', GRID))
    assert annulus.verdict == 'NONCONVEX'
    assert annulus.agreement
    assert not annulus.midpoint_convex


def test_probe_verdict_passed():
    assert ProbeVerdict('farthest', 'SINGLETON-CONSISTENT', 1).passed
    assert not ProbeVerdict('farthest', 'BUDGET-EXHAUSTED', 1).passed
    assert ProbeVerdict('tchebychev', 'PASS', 1).to_dict()['witness'] is None


def test_square_functions():
    assert half_square(GRID).value_at([1.0, 1.0]) == pytest.approx(1.0)
    assert negative_half_square(GRID).value_at([1.0, 1.0]) == pytest.approx(-1.0)


def test_solve_relative_projection_wrapper():
    cert = solve_relative_projection(half_square(GRID), constraint_set('box', GRID), [2.0, 2.0])
    assert cert.strong
    assert np.allclose(GRID.points[cert.minimizer], [1.0, 1.0])
    circle = solve_relative_projection(half_square(GRID), constraint_set('circle', GRID), [0.0, 0.0])
    assert not circle.strong
    assert len(circle.minimizers) == 12
