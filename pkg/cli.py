"""
Command-Line Interface
Subcommands for conjugation, classification, moduli, projections and the
verification suite

Exit codes: 0 pass, 1 property failed, 2 usage or input error.
"""

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

import settings
from catalog import SET_BUILDERS, FunctionCatalog, constraint_set
from classify import ConvexityClassifier, SamplePlan
from conjugate import LegendreTransformer
from exceptions import IoFailure, SchemaViolation, UnknownCatalogEntry, WorkbenchError
from experiments import EXPERIMENTS, ExperimentRunner, run_summary
from grid_core import Grid
from moduli import ModulusAnalyzer
from projections import ProjectionSolver
from report_io import dumps, grid_function_payload, read_constraint_set, read_grid_function, write_curve, write_report

logger = logging.getLogger(__name__)

EXIT_PASS = 0
EXIT_PROPERTY_FAILED = 1
EXIT_USAGE = 2

catalog = FunctionCatalog()


class UsageError(Exception):
    """Bad flag combination or unparsable flag value"""


def parse_vector(text):
    try:
        return np.asarray([float(v) for v in str(text).split(',')], dtype=float)
    except ValueError:
        raise UsageError(f"Expected comma-separated numbers, got {text!r}") from None


def parse_grid_spec(text, dim):
    """'lo,hi,n' -> box grid with those bounds and points on every axis"""
    parts = str(text).split(',')
    if len(parts) != 3:
        raise UsageError(f"Grid spec must be 'lo,hi,n', got {text!r}")
    try:
        lo, hi, n = float(parts[0]), float(parts[1]), int(parts[2])
    except ValueError:
        raise UsageError(f"Grid spec must be 'lo,hi,n', got {text!r}") from None
    return Grid.box((lo, hi), n, dim)


def load_function(args, source=None):
    """Grid function from --input / --catalog (or a single --f naming either)"""
    path = getattr(args, 'input', None)
    entry_id = getattr(args, 'catalog', None)
    if source is not None:
        if Path(source).exists():
            path = source
        else:
            entry_id = source
    if path:
        return read_grid_function(path), None
    if not entry_id:
        raise UsageError("Give a grid function file or a catalog id")
    entry = catalog.get(entry_id)
    points = getattr(args, 'points', None)
    return catalog.function(entry_id, entry.grid(points)), entry


def dual_grid_for(args, f, entry):
    if getattr(args, 'dual_grid', None):
        return parse_grid_spec(args.dual_grid, f.grid.dim)
    if entry is not None:
        return entry.dual_grid()
    return Grid.box(settings.DEFAULT_DUAL_BOUNDS, settings.DEFAULT_POINTS, f.grid.dim)


def load_set(name, grid):
    if Path(name).exists():
        S = read_constraint_set(name)
        if S.grid != grid:
            raise UsageError(f"Constraint set {name} lives on a different grid than the function")
        return S
    if name not in SET_BUILDERS:
        raise UnknownCatalogEntry(f"Unknown constraint set: {name}")
    return constraint_set(name, grid)


def emit(payload, out, summary=None):
    """Write payload to --out (or stdout) and print the human summary"""
    if out:
        write_report(payload, out)
        if summary:
            print(summary)
    else:
        sys.stdout.write(dumps(payload))


def cmd_conjugate(args):
    f, entry = load_function(args)
    dual = dual_grid_for(args, f, entry)
    conj = LegendreTransformer().conjugate(f, dual, args.method)
    payload = {
        'function': f.tag,
        'summary': conj.summary(),
        'conjugate': grid_function_payload(conj.function),
        'trusted': [int(v) for v in conj.trusted],
    }
    emit(payload, args.out, f"Conjugated {f.tag}: {conj.trusted_count}/{dual.size} trusted dual points")
    return EXIT_PASS


def cmd_biconjugate(args):
    f, entry = load_function(args)
    dual = dual_grid_for(args, f, entry)
    bicon = LegendreTransformer().biconjugate(f, dual, args.method)
    payload = {
        'function': f.tag,
        'summary': bicon.summary(),
        'biconjugate': grid_function_payload(bicon.function) if bicon.function is not None else None,
        'trusted': [int(v) for v in bicon.trusted],
    }
    emit(payload, args.out, f"Biconjugate of {f.tag}: max error {bicon.max_error:.3g}, "
                            f"convex-lsc consistent={bicon.convex_lsc_consistent}")
    return EXIT_PASS


def cmd_classify(args):
    f, entry = load_function(args)
    dual = dual_grid_for(args, f, entry)
    plan = SamplePlan(random_points=args.samples, boundary_points=args.samples, seed=args.seed)
    report = ConvexityClassifier().classify(f, dual, plan)
    emit(report, args.out, report.summary())
    return EXIT_PASS if report.chain_respected() else EXIT_PROPERTY_FAILED


def cmd_modulus(args):
    f, _ = load_function(args)
    analyzer = ModulusAnalyzer()
    if args.kind == 'wellposed':
        if args.tilt is None:
            raise UsageError("--kind wellposed needs --tilt")
        m, report = analyzer.wellposedness_modulus(f, parse_vector(args.tilt), max_radius=args.radii)
        extra = {'minimizer': report}
        cert = report.certificate
    else:
        if args.at is None:
            raise UsageError(f"--kind {args.kind} needs --at")
        x = f.grid.resolve(parse_vector(args.at))
        if args.kind == 'firm':
            if args.subgradient is None:
                raise UsageError("--kind firm needs --subgradient")
            m = analyzer.firm_modulus(f, x, parse_vector(args.subgradient), max_radius=args.radii)
        else:
            m = analyzer.total_convexity_modulus(f, x, max_radius=args.radii)
        extra = {}
        cert = analyzer.certificate(m, analyzer.resolution_radius(f.grid))

    if args.out and str(args.out).endswith('.csv'):
        write_curve(m, args.out)
        print(f"{args.kind} modulus: certified positive={cert.positive}")
        return EXIT_PASS
    payload = {
        'function': f.tag,
        'kind': args.kind,
        'base_point': [float(v) for v in f.grid.points[m.base_point]],
        'radii': m.radii,
        'values': m.values,
        'empty': m.empty,
        'certificate': cert,
        **extra,
    }
    emit(payload, args.out, f"{args.kind} modulus: certified positive={cert.positive}")
    return EXIT_PASS


def _solver(args):
    return ProjectionSolver(probes=args.probes, seed=args.seed)


def cmd_project(args):
    f, _ = load_function(args, args.f)
    S = load_set(args.set, f.grid)
    cert = ProjectionSolver().solve(f, S, parse_vector(args.tilt))
    emit(cert, args.out, f"P_S({f.tag}, {list(cert.tilt)}) on {S.name}: strong={cert.strong}")
    return EXIT_PASS


def cmd_tchebychev(args):
    f, _ = load_function(args, args.f)
    S = load_set(args.set, f.grid)
    verdict = _solver(args).tchebychev_test(f, S, n_probes=args.probes)
    emit(verdict, args.out, f"{S.name} for {f.tag}: {verdict.verdict} ({verdict.probes} probes)")
    return EXIT_PASS if verdict.passed else EXIT_PROPERTY_FAILED


def _set_grid(args):
    return Grid.box(settings.DEFAULT_PRIMAL_BOUNDS, args.points or settings.DEFAULT_POINTS, 2)


def cmd_farthest(args):
    S = load_set(args.set, _set_grid(args))
    verdict = _solver(args).farthest_point_experiment(S, n_probes=args.probes, strict=args.strict)
    emit(verdict, args.out, f"{S.name}: {verdict.verdict} ({verdict.probes} probes)")
    return EXIT_PROPERTY_FAILED if verdict.verdict == 'BUDGET-EXHAUSTED' else EXIT_PASS


def cmd_convexity(args):
    S = load_set(args.set, _set_grid(args))
    verdict = _solver(args).convexity_detector(S, n_probes=args.probes)
    emit(verdict, args.out, f"{S.name}: {verdict.verdict}, agrees with midpoint convexity={verdict.agreement}")
    return EXIT_PASS if verdict.agreement else EXIT_PROPERTY_FAILED


def cmd_catalog(args):
    payload = {'functions': catalog.listing(), 'sets': sorted(SET_BUILDERS)}
    lines = [f"{e['id']:<24} {e['description']}" for e in payload['functions']]
    lines.append("sets: " + ", ".join(payload['sets']))
    emit(payload, args.out, "\n".join(lines))
    return EXIT_PASS


def cmd_verify(args):
    runner = ExperimentRunner(points_1d=args.points_1d, points_2d=args.points_2d,
                              probes=args.probes, seed=args.seed)
    results = runner.run(args.experiment, args.out)
    for r in results:
        print(r.summary())
    failed = [r for r in results if not r.passed]
    if failed:
        print(f"FAIL: {failed[0].name}: {failed[0].first_failure}")
    else:
        print(f"PASS: {len(results)} experiments")
    if not args.out:
        sys.stdout.write(dumps(run_summary(results)))
    return EXIT_PROPERTY_FAILED if failed else EXIT_PASS


def _function_flags(p):
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--input", help="Grid function file (grid-function/1)")
    src.add_argument("--catalog", help="Catalog entry id")
    p.add_argument("--points", type=int, default=None, help="Primal points per axis for catalog entries")
    p.add_argument("--out", help="Output path (JSON, or CSV for modulus curves)")


def _probe_flags(p):
    p.add_argument("--probes", type=int, default=settings.PROBES, help=f"Probe count (default: {settings.PROBES})")
    p.add_argument("--seed", type=int, default=settings.SEED, help=f"Seed (default: {settings.SEED})")
    p.add_argument("--out", help="Output JSON path")


def build_parser():
    parser = argparse.ArgumentParser(prog="convex-workbench",
                                     description="Numerical convex analysis on grids")
    parser.add_argument("--log-level", default=settings.LOG_LEVEL, help="Logging level (default: LL_LOG_LEVEL)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("conjugate", help="Discrete Legendre-Fenchel conjugate")
    _function_flags(p)
    p.add_argument("--dual-grid", help="Dual grid as 'lo,hi,n'")
    p.add_argument("--method", choices=["fast", "brute"], default="fast")
    p.set_defaults(handler=cmd_conjugate)

    p = sub.add_parser("biconjugate", help="Biconjugate and convex-lsc consistency")
    _function_flags(p)
    p.add_argument("--dual-grid", help="Dual grid as 'lo,hi,n'")
    p.add_argument("--method", choices=["fast", "brute"], default="fast")
    p.set_defaults(handler=cmd_biconjugate)

    p = sub.add_parser("classify", help="Place a function in the convexity hierarchy")
    _function_flags(p)
    p.add_argument("--dual-grid", help="Dual grid as 'lo,hi,n'")
    p.add_argument("--samples", type=int, default=24, help="Random and boundary samples (default: 24)")
    p.add_argument("--seed", type=int, default=settings.SEED)
    p.set_defaults(handler=cmd_classify)

    p = sub.add_parser("modulus", help="Firm, total-convexity or well-posedness modulus")
    _function_flags(p)
    p.add_argument("--kind", choices=["firm", "total", "wellposed"], required=True)
    p.add_argument("--at", help="Base point 'x1,x2,...' (firm, total)")
    p.add_argument("--subgradient", help="Subgradient 's1,s2,...' (firm)")
    p.add_argument("--tilt", help="Tilt 's1,s2,...' (wellposed)")
    p.add_argument("--radii", type=float, default=None, help="Largest radius sampled")
    p.set_defaults(handler=cmd_modulus)

    p = sub.add_parser("project", help="Solve a relative projection problem")
    p.add_argument("--f", required=True, help="Catalog id or grid function file")
    p.add_argument("--set", required=True, help="Constraint set name or file")
    p.add_argument("--tilt", required=True, help="Tilt 's1,s2'")
    p.add_argument("--points", type=int, default=None)
    p.add_argument("--out", help="Output JSON path")
    p.set_defaults(handler=cmd_project)

    p = sub.add_parser("tchebychev", help="Probe whether a set is f-strongly Tchebychev")
    p.add_argument("--f", required=True, help="Catalog id or grid function file")
    p.add_argument("--set", required=True, help="Constraint set name or file")
    p.add_argument("--points", type=int, default=None)
    _probe_flags(p)
    p.set_defaults(handler=cmd_tchebychev)

    p = sub.add_parser("farthest", help="Farthest-point experiment on a set")
    p.add_argument("--set", required=True, help="Constraint set name or file")
    p.add_argument("--points", type=int, default=None)
    p.add_argument("--strict", action="store_true", help="Fail when no witness is found")
    _probe_flags(p)
    p.set_defaults(handler=cmd_farthest)

    p = sub.add_parser("convexity", help="Probe-based convexity detector on a set")
    p.add_argument("--set", required=True, help="Constraint set name or file")
    p.add_argument("--points", type=int, default=None)
    _probe_flags(p)
    p.set_defaults(handler=cmd_convexity)

    p = sub.add_parser("catalog", help="List catalog functions and constraint sets")
    p.add_argument("--out", help="Output JSON path")
    p.set_defaults(handler=cmd_catalog)

    p = sub.add_parser("verify-paper", help="Run the verification experiments")
    p.add_argument("--experiment", nargs="+", default=["all"], choices=EXPERIMENTS + ["all"])
    p.add_argument("--out", help="Artifact directory")
    p.add_argument("--points-1d", type=int, default=None, dest="points_1d")
    p.add_argument("--points-2d", type=int, default=None, dest="points_2d")
    p.add_argument("--probes", type=int, default=settings.PROBES)
    p.add_argument("--seed", type=int, default=settings.SEED)
    p.set_defaults(handler=cmd_verify)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=str(args.log_level).upper())
    try:
        return args.handler(args)
    except (UsageError, UnknownCatalogEntry, SchemaViolation, IoFailure, ValueError) as e:
        logger.error(f"Error in {args.command}: {str(e)}")
        return EXIT_USAGE
    except WorkbenchError as e:
        logger.error(f"Error in {args.command}: {str(e)}")
        print(f"FAIL: {type(e).__name__}: {str(e)}")
        return EXIT_PROPERTY_FAILED


if __name__ == "__main__":
    sys.exit(main())
