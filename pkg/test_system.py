#!/usr/bin/env python
"""
Quick end-to-end check of the convex analysis workbench
Run directly for a printed summary, or collect with pytest
"""

import sys
import time

import numpy as np


def test_imports():
    """Every module of the workbench imports"""
    print("Testing imports...")
    import catalog, classify, cli, conjugate, experiments, moduli, projections, report_io, subdiff  # noqa: F401
    print("  ✓ All modules imported")


def test_conjugation_pipeline():
    """Sample, conjugate, biconjugate and read off a subdifferential"""
    print("\nTesting conjugation pipeline...")
    from catalog import get_entry
    from conjugate import LegendreTransformer
    from subdiff import subgradients

    entry = get_entry('abs-1d')
    f = entry.sample()
    transformer = LegendreTransformer()
    conj = transformer.conjugate(f, entry.dual_grid())
    print(f"  - {conj.trusted_count}/{conj.dual_grid.size} trusted dual points")
    bicon = transformer.biconjugate(f, entry.dual_grid(), conj=conj)
    assert bicon.convex_lsc_consistent
    print(f"  ✓ Biconjugate error {bicon.max_error:.2e} within {bicon.tolerance:.2e}")
    sub = subgradients(f, conj, [0.0])
    span = sub.dual_points[:, 0]
    assert np.isclose(span.min(), -1.0) and np.isclose(span.max(), 1.0)
    print(f"  ✓ Subdifferential at 0 spans [{span.min():.2f}, {span.max():.2f}]")


def test_classification_pipeline():
    """Classify the quadratic and check it against its expected verdicts"""
    print("\nTesting classification...")
    from catalog import get_entry
    from classify import ConvexityClassifier

    entry = get_entry('quadratic-1d')
    report = ConvexityClassifier().classify(entry.sample(), entry.dual_grid())
    print(report.summary())
    assert report.chain_respected()
    assert all(report.holds(k) == v for k, v in entry.expected.items())
    print("  ✓ Verdicts match the catalog")


def test_projection_pipeline():
    """Nearest point in the disk and the two-point farthest-point witness"""
    print("\nTesting projections...")
    from catalog import constraint_set
    from grid_core import Grid
    from projections import ProjectionSolver, half_square

    grid = Grid.box((-2.0, 2.0), 41, 2)
    solver = ProjectionSolver(probes=10)
    cert = solver.solve(half_square(grid), constraint_set('disk', grid), [2.0, 0.0])
    assert cert.strong
    print(f"  ✓ Projection of (2, 0) onto the disk: {grid.points[cert.minimizer].tolist()}")
    verdict = solver.farthest_point_experiment(constraint_set('two-point', grid))
    assert verdict.verdict == 'WITNESS'
    print(f"  ✓ Two-point set: {verdict.verdict} at tilt {list(verdict.witness)}")


def test_verification_suite():
    """Run one reproduction experiment on a coarse grid"""
    print("\nTesting verification suite (cor4 on a 41-point grid)...")
    from experiments import ExperimentRunner

    (result,) = ExperimentRunner(points_2d=41, probes=20).run(['cor4'])
    print(result.summary())
    assert result.passed


def main():
    """Run all checks"""
    print("=" * 60)
    print("Convex Analysis Workbench - System Test")
    print("=" * 60)
    print()

    start_time = time.time()

    tests = [
        ("Imports", test_imports),
        ("Conjugation", test_conjugation_pipeline),
        ("Classification", test_classification_pipeline),
        ("Projections", test_projection_pipeline),
        ("Verification Suite", test_verification_suite),
    ]

    results = {}
    for test_name, test_func in tests:
        try:
            test_func()
            results[test_name] = True
        except Exception as e:
            print(f"✗ Test failed with exception: {type(e).__name__}: {e}")
            results[test_name] = False

    elapsed_time = time.time() - start_time

    print("\n" + "=" * 60)
    print("TEST SUMMARY")
    print("=" * 60)

    passed = sum(1 for v in results.values() if v)
    total = len(results)

    for test_name, result in results.items():
        status = "✓ PASS" if result else "✗ FAIL"
        print(f"{test_name:.<40} {status}")

    print("-" * 60)
    print(f"Results: {passed}/{total} tests passed")
    print(f"Time: {elapsed_time:.2f} seconds")
    print("=" * 60)

    if passed == total:
        print("\n✓ All checks passed! Workbench is ready to use.")
        return 0
    print(f"\n✗ {total - passed} check(s) failed. Please check the errors above.")
    return 1


if __name__ == "__main__":
    sys.exit(main())
