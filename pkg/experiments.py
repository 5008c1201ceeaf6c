"""
Verification Suite
Runs the reproduction experiments over the catalog, collects pass/fail checks
and writes deterministic JSON reports, CSV curves and a run manifest
"""

import logging
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

import settings
from catalog import (DETECTOR_SETS, FARTHEST_SETS, NONCONVEX_SETS, FunctionCatalog, constraint_set,
                     example1, example1_hessian, finite_difference_hessian, random_convex_function)
from classify import ConvexityClassifier, SamplePlan
from conjugate import LegendreTransformer
from exceptions import WorkbenchError
from grid_core import Grid, GridFunction
from moduli import ModulusAnalyzer, delta0
from projections import ProjectionSolver, halton_probes
from report_io import RunManifest, write_curve, write_report
from subdiff import domain_chain_check, subgradient_tolerance, subgradients

logger = logging.getLogger(__name__)

EXPERIMENTS = [
    'ex1',
    'ex2',
    'lemma1',
    'cor3-chain',
    'cor4',
    'prop6',
    'domain-chain',
    'oracle',
    'biconjugate',
    'fenchel-young',
    'prop4',
    'prop5',
    'prop5b',
]

LEMMA1_ENTRIES = ['quadratic-1d', 'quadratic-2d', 'quartic-1d', 'exp-1d', 'abs-1d']

RANDOM_CONVEX_FUNCTIONS = 20
RANDOM_GRID_POINTS = 61
ORACLE_1D = (50, 1001)
ORACLE_2D = (10, 101)
ORACLE_RTOL = 1e-12
HESSIAN_TOL = 1e-6
HESSIAN_STEP = 1e-3


@dataclass
class ExperimentResult:
    """Checked properties of one experiment"""

    name: str
    checks: list = field(default_factory=list)
    details: dict = field(default_factory=dict)
    curves: dict = field(default_factory=dict)
    error: str = None

    def check(self, prop, holds, **detail):
        self.checks.append({'property': prop, 'holds': bool(holds), **detail})
        if not holds:
            logger.warning(f"[{self.name}] property failed: {prop}")
        return bool(holds)

    @property
    def passed(self):
        return self.error is None and all(c['holds'] for c in self.checks)

    @property
    def first_failure(self):
        if self.error is not None:
            return self.error
        for c in self.checks:
            if not c['holds']:
                return c['property']
        return None

    def to_dict(self):
        return {
            'experiment': self.name,
            'passed': self.passed,
            'first_failure': self.first_failure,
            'checks': self.checks,
            'details': self.details,
            'curves': sorted(self.curves),
            'error': self.error,
        }

    def summary(self):
        status = "PASS" if self.passed else "FAIL"
        lines = [f"{self.name:<14} {status}  ({sum(c['holds'] for c in self.checks)}/{len(self.checks)} checks)"]
        if not self.passed:
            lines.append(f"    first failure: {self.first_failure}")
        return "\n".join(lines)


def _coords(grid, flat):
    return [float(v) for v in grid.points[int(flat)]]


class ExperimentRunner:
    """Runs the verification experiments against the catalog"""

    def __init__(self, points_1d=None, points_2d=None, dual_points_1d=None, dual_points_2d=None,
                 probes=settings.PROBES, seed=settings.SEED, num_workers=None):
        """
        Args:
            points_1d, points_2d (int): Primal points per axis, default per catalog entry
            dual_points_1d, dual_points_2d (int): Dual points per axis, default per catalog entry
            probes (int): Probe count for the projection experiments
            seed (int): Seed of every random sample
            num_workers (int): Experiments run in parallel
        """
        self.points = {1: points_1d, 2: points_2d}
        self.dual_points = {1: dual_points_1d, 2: dual_points_2d}
        self.probes = probes
        self.seed = seed
        self.num_workers = num_workers or settings.THREADS
        self.catalog = FunctionCatalog()
        self.transformer = LegendreTransformer()
        self.analyzer = ModulusAnalyzer()
        self.classifier = ConvexityClassifier(self.transformer, self.analyzer)
        self.solver = ProjectionSolver(self.analyzer, self.transformer, probes=probes, seed=seed)
        self._reports = {}
        self._lock = threading.Lock()
        self._entry_locks = {}

    # grids and cached classifications

    def grids(self, entry_id):
        entry = self.catalog.get(entry_id)
        return entry.grid(self.points[entry.dim]), entry.dual_grid(self.dual_points[entry.dim])

    def function(self, entry_id):
        grid, _ = self.grids(entry_id)
        return self.catalog.function(entry_id, grid)

    def set_grid(self):
        return Grid.box(settings.DEFAULT_PRIMAL_BOUNDS, self.points[2] or settings.DEFAULT_POINTS, 2)

    def classification(self, entry_id):
        with self._lock:
            entry_lock = self._entry_locks.setdefault(entry_id, threading.Lock())
        with entry_lock:
            if entry_id not in self._reports:
                f = self.function(entry_id)
                _, dual = self.grids(entry_id)
                self._reports[entry_id] = self.classifier.classify(f, dual, SamplePlan(seed=self.seed))
            return self._reports[entry_id]

    # experiments

    def ex1(self, result):
        """Closed-form Hessian, vanishing total convexity at (0, 1), classification"""
        worst = 0.0
        axis = np.linspace(-0.8, 0.8, 5)
        for u in axis:
            for v in axis:
                p = np.asarray([u, v])
                coarse = finite_difference_hessian(example1, p, HESSIAN_STEP)
                fine = finite_difference_hessian(example1, p, HESSIAN_STEP / 2)
                fd = (4.0 * fine - coarse) / 3.0
                exact = example1_hessian(p)
                pairs = [(fd[0, 0], exact['hxx']), (fd[1, 1], exact['hyy']), (fd[0, 1], exact['hxy']),
                         (float(np.linalg.det(fd)), exact['det'])]
                for got, want in pairs:
                    worst = max(worst, abs(got - want) / max(1.0, abs(want)))
        result.check("finite-difference Hessian matches the closed form at 25 interior points",
                     worst <= HESSIAN_TOL, worst_relative_error=worst)

        f = self.function('example1')
        x = f.grid.resolve((0.0, 1.0))
        m = self.analyzer.total_convexity_modulus(f, x, max_radius=1.0)
        observed = m.finite
        below = m.values[observed] <= delta0(m.radii[observed], self.analyzer.eps_fp)
        result.curves['ex1_total_modulus_0_1'] = m
        result.check("total convexity modulus at (0, 1) stays at the positivity floor for t in (0, 1]",
                     observed.any() and bool(below.all()), radii=int(observed.sum()))

        report = self.classification('example1')
        result.check("example1 is essentially firmly subdifferentiable",
                     report.holds('essentially_firmly_subdifferentiable'))
        on_dom = report.verdicts['totally_convex_on_dom']
        edge = [w for w in on_dom.witnesses if 'point' in w and abs(w['point'][1] - 1.0) <= 1e-9]
        result.check("example1 is not totally convex on dom, with a witness on the edge y = 1",
                     not on_dom.holds and bool(edge), witnesses=edge[:3])
        result.details['classification'] = report

    def ex2(self, result):
        """Corner witness for total convexity and a positive firm certificate at (1, 1)"""
        report = self.classification('example2')
        total = report.verdicts['totally_convex_on_dom_subdiff']
        corner = [w for w in total.witnesses
                  if 'point' in w and np.allclose(w['point'], [1.0, 1.0], atol=1e-9)]
        result.check("example2 is not totally convex on dom df, with the corner (1, 1) as witness",
                     not total.holds and bool(corner), witnesses=corner[:1])

        f = self.function('example2')
        x = f.grid.resolve((1.0, 1.0))
        s = np.asarray([1.5, 1.5])
        m = self.analyzer.firm_modulus(f, x, s)
        cert = self.analyzer.certificate(m, self.analyzer.resolution_radius(f.grid))
        result.curves['ex2_firm_modulus_1_1'] = m
        result.check("firm modulus at (1, 1) with subgradient (1.5, 1.5) is certified positive",
                     cert.positive, certificate=cert)
        result.check("example2 is essentially firmly subdifferentiable",
                     report.holds('essentially_firmly_subdifferentiable'))
        result.details['classification'] = report

    def lemma1(self, result):
        """Strong minimum, conjugate differentiability and firm certificate agree"""
        reports = {}
        for entry_id in LEMMA1_ENTRIES:
            f = self.function(entry_id)
            _, dual = self.grids(entry_id)
            rep = self.classifier.lemma1_agreement(f, dual, n_samples=20, seed=self.seed)
            reports[entry_id] = rep
            result.check(f"{entry_id}: three-way agreement over {len(rep.rows)} dual probes",
                         len(rep.rows) >= 20 and not rep.disagreements, disagreements=len(rep.disagreements))

        f = self.function('box-indicator-1d')
        _, dual = self.grids('box-indicator-1d')
        flat = self.classifier.lemma1_agreement(f, dual, samples=[[0.0]])
        row = flat.rows[0]
        result.check("indicator of [-1, 1] at s = 0 reports all three legs false",
                     not (row['strong_minimum'] or row['differentiable'] or row['firm_certificate']), row=row)
        reports['box-indicator-1d'] = flat
        result.details['reports'] = reports

    def cor3_chain(self, result):
        """The implication chain holds on every report before closure; catalog expectations are met"""
        broken, mismatched = [], []
        for entry_id in self.catalog.ids():
            report = self.classification(entry_id)
            if not report.chain_respected() or report.diagnostics['chain_adjustments']:
                broken.append({'function': entry_id, 'adjusted': report.diagnostics['chain_adjustments']})
            expected = self.catalog.get(entry_id).expected
            wrong = {k: report.holds(k) for k, v in expected.items() if report.holds(k) != v}
            if wrong:
                mismatched.append({'entry': entry_id, 'observed': wrong})

        grid = Grid.box(settings.DEFAULT_PRIMAL_BOUNDS, self.points[2] or RANDOM_GRID_POINTS, 2)
        dual = Grid.box(settings.DEFAULT_DUAL_BOUNDS, self.dual_points[2] or RANDOM_GRID_POINTS, 2)
        for k in range(RANDOM_CONVEX_FUNCTIONS):
            f = random_convex_function(grid, seed=self.seed + k)
            report = self.classifier.classify(f, dual, SamplePlan(seed=self.seed))
            if not report.chain_respected() or report.diagnostics['chain_adjustments']:
                broken.append({'function': f.tag, 'adjusted': report.diagnostics['chain_adjustments']})
        result.check(f"implication chain respected by {len(self.catalog.ids()) + RANDOM_CONVEX_FUNCTIONS} reports",
                     not broken, broken=broken)
        result.check("every catalog entry matches its expected verdicts", not mismatched, mismatched=mismatched)

    def cor4(self, result):
        """Farthest points: singletons pass, multi-point sets yield a witness"""
        grid = self.set_grid()
        verdicts = {}
        for name in FARTHEST_SETS:
            S = constraint_set(name, grid)
            verdict = self.solver.farthest_point_experiment(S, n_probes=self.probes)
            verdicts[name] = verdict
            want = 'SINGLETON-CONSISTENT' if S.size == 1 else 'WITNESS'
            result.check(f"{name}: {want}", verdict.verdict == want, observed=verdict.verdict,
                         probes=verdict.probes)
        result.details['verdicts'] = verdicts

    def prop6(self, result):
        """Convexity detector against grid-midpoint convexity"""
        grid = self.set_grid()
        verdicts = {}
        for name in DETECTOR_SETS:
            S = constraint_set(name, grid)
            verdict = self.solver.convexity_detector(S, n_probes=self.probes)
            verdicts[name] = verdict
            want = 'NONCONVEX' if name in NONCONVEX_SETS else 'CONVEX-CONSISTENT'
            result.check(f"{name}: {want}", verdict.verdict == want, observed=verdict.verdict)
            result.check(f"{name}: detector agrees with grid-midpoint convexity", verdict.agreement)
        result.details['verdicts'] = verdicts

    def domain_chain(self, result):
        """dom M u int dom f* inside dom d(f*) on trusted duals"""
        for entry_id in self.catalog.ids():
            f = self.function(entry_id)
            _, dual = self.grids(entry_id)
            report = domain_chain_check(f, dual, transformer=self.transformer)
            result.check(f"{entry_id}: domain chain holds", report.holds, violations=len(report.violations))

    def oracle(self, result):
        """Hull-based conjugation equals brute force on trusted dual points"""
        rng = np.random.default_rng(self.seed)
        count, n = ORACLE_1D
        grid = Grid.box(settings.DEFAULT_PRIMAL_BOUNDS, n, 1)
        dual = Grid.box(settings.DEFAULT_DUAL_BOUNDS, n, 1)
        worst = 0.0
        for k in range(count):
            worst = max(worst, self._oracle_error(self._random_function(grid, rng, k), dual))
        count, n = ORACLE_2D
        grid = Grid.box(settings.DEFAULT_PRIMAL_BOUNDS, n, 2)
        dual = Grid.box(settings.DEFAULT_DUAL_BOUNDS, n, 2)
        for k in range(count):
            worst = max(worst, self._oracle_error(self._random_function(grid, rng, k), dual))
        result.check(f"fast and brute conjugates agree within {ORACLE_RTOL} relative",
                     worst <= ORACLE_RTOL, worst_relative_error=worst)

    def _random_function(self, grid, rng, k):
        """Convex, nonconvex or noisy values with about 10% +inf entries"""
        pts = grid.points
        kind = k % 3
        if kind == 0:
            values = random_convex_function(grid, seed=int(rng.integers(1 << 31))).values.copy()
        elif kind == 1:
            values = np.sin(3.0 * pts @ rng.normal(size=grid.dim)) + 0.3 * np.sum(pts ** 2, axis=1)
        else:
            values = rng.normal(size=grid.size)
        holes = rng.random(grid.size) < 0.1
        keep = int(rng.integers(grid.size))
        holes[keep] = False
        return GridFunction(grid, np.where(holes, np.inf, values), tag=f"random-{grid.dim}d-{k}")

    def _oracle_error(self, f, dual):
        fast = self.transformer.fast(f, dual)
        brute = self.transformer.brute(f, dual)
        trusted = brute.trusted
        if not trusted.any():
            return 0.0
        a, b = fast.values[trusted], brute.values[trusted]
        return float(np.max(np.abs(a - b) / (1.0 + np.abs(b))))

    def biconjugate(self, result):
        """f** = f for convex entries; the double well gives its convex envelope"""
        for entry_id in self.catalog.ids():
            entry = self.catalog.get(entry_id)
            f = self.function(entry_id)
            _, dual = self.grids(entry_id)
            bicon = self.transformer.biconjugate(f, dual)
            if entry.expected.get('convex_lsc'):
                result.check(f"{entry_id}: max |f** - f| within tolerance", bicon.convex_lsc_consistent,
                             max_error=bicon.max_error, tolerance=bicon.tolerance)
            if entry.envelope is not None:
                inner = bicon.trusted & ~f.grid.boundary_mask
                target = entry.envelope(f.grid.points)
                error = float(np.max(np.abs(bicon.function.values[inner] - target[inner]))) if inner.any() else np.inf
                result.check(f"{entry_id}: f** equals the convex envelope", error <= bicon.tolerance,
                             max_error=error, tolerance=bicon.tolerance)

    def fenchel_young(self, result):
        """Nonnegative gaps everywhere, small gaps at analytic subgradients"""
        rng = np.random.default_rng(self.seed)
        for entry_id in self.catalog.ids():
            entry = self.catalog.get(entry_id)
            f = self.function(entry_id)
            _, dual = self.grids(entry_id)
            conj = self.transformer.fast(f, dual)
            dom = np.flatnonzero(f.domain_mask)
            points = rng.choice(dom, size=min(200, dom.size), replace=False)
            lowest = min(float(np.min(conj.gaps(x))) for x in points)
            result.check(f"{entry_id}: Fenchel-Young gap >= -1e-9", lowest >= -1e-9, lowest=lowest)

            if entry.gradient is None:
                continue
            misses = []
            for x in points[:20]:
                s = np.asarray(entry.gradient(f.grid.points[x]), dtype=float).reshape(-1)
                if not np.all(np.isfinite(s)) or not dual.contains(s):
                    continue
                k = dual.nearest_index(s)
                if not conj.trusted[k]:
                    continue
                gap = float(conj.gaps(x)[k])
                tau = float(subgradient_tolerance(f, conj, x)[k])
                if gap > tau:
                    misses.append({'point': _coords(f.grid, x), 'gap': gap, 'tolerance': tau})
            result.check(f"{entry_id}: analytic gradients are within tau_sub", not misses, misses=misses[:3])

        f = self.function('abs-1d')
        _, dual = self.grids('abs-1d')
        conj = self.transformer.fast(f, dual)
        sub = subgradients(f, conj, f.grid.resolve([0.0]))
        inside = np.flatnonzero(conj.trusted & (np.abs(dual.points[:, 0]) <= 1.0 + 1e-9))
        result.check("subdifferential of |x| at 0 contains every trusted dual point of [-1, 1]",
                     set(inside.tolist()) <= set(sub.members.tolist()), expected=int(inside.size),
                     found=len(sub))

    def prop4(self, result):
        """Euclidean 1/2||.||^2 gives strong minima; the l-inf version does not"""
        probes = halton_probes([-1.5, -1.5], [1.5, 1.5], min(self.probes, 50), self.seed)
        f = self.function('quadratic-2d')
        weak = [p.tolist() for p in probes if not self.analyzer.wellposedness_modulus(f, p)[1].strong]
        result.check("1/2||.||^2 (Euclidean): every probed tilt has a strong minimum", not weak,
                     probes=len(probes), failures=weak[:3])

        g = self.function('quadratic-linf-2d')
        tilts = np.vstack([[[1.0, 0.0], [0.0, 1.0]], probes])
        spread = []
        for s in tilts:
            _, report = self.analyzer.wellposedness_modulus(g, s)
            if not report.unique:
                spread.append({'tilt': [float(v) for v in s], 'multiplicity': len(report.ties)})
        result.check("1/2||.||_inf^2: some tilt has a non-unique minimizer", bool(spread), witnesses=spread[:3])

    def prop5(self, result):
        """||.||^2 is totally convex at sampled points and essentially firmly subdifferentiable"""
        f = self.function('quadratic-2d')
        rng = np.random.default_rng(self.seed)
        r_res = self.analyzer.resolution_radius(f.grid)
        failures = []
        for x in rng.choice(f.grid.size, size=10, replace=False):
            cert = self.analyzer.certificate(self.analyzer.total_convexity_modulus(f, int(x)), r_res)
            if not cert.positive:
                failures.append(_coords(f.grid, x))
        result.check("total convexity certified at 10 sampled points", not failures, failures=failures)
        report = self.classification('quadratic-2d')
        result.check("quadratic-2d is essentially firmly subdifferentiable",
                     report.holds('essentially_firmly_subdifferentiable'))

    def prop5b(self, result):
        """Unique interior minimizer with a positive firm certificate implies coercive and well posed"""
        examined, counterexamples = [], []
        for entry_id in self.catalog.ids():
            f = self.function(entry_id)
            zero = np.zeros(f.grid.dim)
            try:
                _, report = self.analyzer.wellposedness_modulus(f, zero)
            except WorkbenchError as e:
                logger.error(f"Error solving the untilted problem for {entry_id}: {str(e)}")
                continue
            if not report.unique or report.on_boundary:
                continue
            m = self.analyzer.firm_modulus(f, report.minimizer, zero)
            if not self.analyzer.certificate(m, self.analyzer.resolution_radius(f.grid)).positive:
                continue
            examined.append(entry_id)
            growth = self.analyzer.coercivity_check(f)
            if not (growth['coercive'] and report.strong):
                counterexamples.append({'entry': entry_id, 'coercive': growth['coercive'],
                                        'strong': report.strong, 'reasons': growth['reasons'] + report.reasons})
        result.check("coercive and well posed wherever the hypotheses hold", not counterexamples,
                     examined=examined, counterexamples=counterexamples)

    # runner

    def run_one(self, name):
        result = ExperimentResult(name)
        method = getattr(self, name.replace('-', '_'))
        try:
            logger.info(f"Running experiment {name}...")
            method(result)
        except Exception as e:
            logger.error(f"Error in experiment {name}: {str(e)}")
            result.error = f"{type(e).__name__}: {str(e)}"
        logger.info(result.summary())
        return result

    def run(self, names=None, out_dir=None):
        """
        Run experiments and optionally write their artifacts

        Args:
            names (list): Experiment names or ['all'] (default: every experiment)
            out_dir (str): Directory for JSON reports, CSV curves and the manifest

        Returns:
            list: ExperimentResult per experiment, in the requested order
        """
        names = resolve_names(names)
        with ThreadPoolExecutor(max_workers=self.num_workers) as executor:
            results = list(executor.map(self.run_one, names))
        if out_dir is not None:
            self.write(results, out_dir, names)
        return results

    def write(self, results, out_dir, names):
        out = Path(out_dir)
        manifest = RunManifest('verify-paper', {'experiments': list(names), 'seed': self.seed,
                                                'probes': self.probes, 'points': self.points,
                                                'dual_points': self.dual_points})
        for r in results:
            manifest.add(write_report(r, out / f"{r.name}.json"), out)
            for key, curve in sorted(r.curves.items()):
                manifest.add(write_curve(curve, out / f"{key}.csv"), out)
        manifest.add(write_report(run_summary(results), out / "summary.json"), out)
        manifest.write(out / "manifest.json")
        return manifest


def run_summary(results):
    return {'passed': all(r.passed for r in results),
            'experiments': {r.name: r.passed for r in results}}


def resolve_names(names):
    if not names or 'all' in names:
        return list(EXPERIMENTS)
    unknown = [n for n in names if n not in EXPERIMENTS]
    if unknown:
        raise ValueError(f"Unknown experiment(s): {', '.join(unknown)}")
    return list(dict.fromkeys(names))


def run_experiments(names=None, out_dir=None, **options):
    return ExperimentRunner(**options).run(names, out_dir)


if __name__ == "__main__":
    logging.basicConfig(level=settings.LOG_LEVEL)
    results = run_experiments(['all'])

    print("\n" + "=" * 60)
    print("VERIFICATION SUITE")
    print("=" * 60)
    for r in results:
        print(r.summary())
