"""
Convexity Classifier
Places a grid function in the hierarchy totally convex => essentially firmly
subdifferentiable => essentially strongly convex => essentially strictly convex,
with adequacy verdicts and dual differentiability diagnostics
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

import settings
from conjugate import LegendreTransformer
from exceptions import NotASubgradient
from grid_core import INF
from moduli import ModulusAnalyzer
from subdiff import discrete_subgradient, exact_subgradients, subdifferential_domain

logger = logging.getLogger(__name__)

CHAIN = [
    'totally_convex_on_dom_subdiff',
    'essentially_firmly_subdifferentiable',
    'essentially_strongly_convex',
    'essentially_strictly_convex',
]

PROXY_NOTE = ("essential strict convexity is a finite-dimensional proxy: strict convexity along "
              "sampled segments of dom df plus single-valued (df)^-1 at grid resolution")


@dataclass
class Verdict:
    """Boolean verdict with its sample count and failure witnesses"""

    name: str
    holds: bool
    samples: int
    witnesses: list = field(default_factory=list)
    evidence: str = ""
    adjusted: bool = False

    def fail(self, reason):
        if self.holds:
            self.holds = False
            self.adjusted = True
        self.witnesses.append({'reason': reason})

    def to_dict(self):
        return {
            'holds': self.holds,
            'samples': self.samples,
            'evidence': self.evidence or (f"pass over {self.samples} samples" if self.holds else "failed"),
            'witnesses': list(self.witnesses),
            'adjusted': self.adjusted,
        }


@dataclass
class SamplePlan:
    """Which primal points, dual points and segments the classifier inspects"""

    primal: list = None
    dual: list = None
    boundary_points: int = 24
    random_points: int = 24
    segments: int = 200
    max_subgradients: int = 5
    seed: int = settings.SEED


@dataclass
class ClassificationReport:
    """Verdicts with witnesses plus the diagnostics that cross-check them"""

    tag: str
    grid: dict
    dual_grid: dict
    verdicts: dict
    diagnostics: dict = field(default_factory=dict)
    disclaimers: list = field(default_factory=list)

    def holds(self, name):
        return self.verdicts[name].holds

    def chain_respected(self):
        flags = [self.verdicts[name].holds for name in CHAIN]
        return all(not stronger or weaker for stronger, weaker in zip(flags, flags[1:]))

    def to_dict(self):
        return {
            'function': self.tag,
            'grid': self.grid,
            'dual_grid': self.dual_grid,
            'verdicts': {name: v.to_dict() for name, v in self.verdicts.items()},
            'chain_respected': self.chain_respected(),
            'diagnostics': self.diagnostics,
            'disclaimers': list(self.disclaimers),
        }

    def summary(self):
        lines = [f"Classification of {self.tag}"]
        for name, v in self.verdicts.items():
            mark = "yes" if v.holds else "no "
            detail = f"pass over {v.samples} samples" if v.holds else _first_witness(v)
            lines.append(f"  {mark}  {name:<38} {detail}")
        lines.append(f"  chain respected: {self.chain_respected()}")
        return "\n".join(lines)


def _first_witness(verdict):
    if not verdict.witnesses:
        return "failed"
    w = verdict.witnesses[0]
    if 'point' in w:
        return f"witness at {w['point']}" + (f", radius {w['radius']:.3g}" if w.get('radius') is not None else "")
    return w.get('reason', 'failed')


@dataclass
class Lemma1Report:
    """Three-way agreement of strong minimum, conjugate differentiability and firm certificate"""

    tag: str
    rows: list
    lsc_consistent: bool

    @property
    def disagreements(self):
        return [r for r in self.rows if not (r['strong_minimum'] == r['differentiable'] == r['firm_certificate'])]

    @property
    def agreements(self):
        return len(self.rows) - len(self.disagreements)

    @property
    def legs_ac_agree(self):
        return all(r['strong_minimum'] == r['firm_certificate'] for r in self.rows)

    def to_dict(self):
        return {
            'function': self.tag,
            'samples': len(self.rows),
            'agreements': self.agreements,
            'disagreements': self.disagreements,
            'legs_ac_agree': self.legs_ac_agree,
            'lsc_consistent': self.lsc_consistent,
            'rows': self.rows,
        }


def boundary_members(grid, mask):
    """Members with an axis neighbour outside the mask or off the grid"""
    table = grid.neighbor_table
    inside = np.where(table >= 0, mask[np.clip(table, 0, None)], False)
    return mask & ~np.all(inside, axis=1)


def extreme_members(grid, mask):
    """Members maximizing <x, d> for axis and diagonal directions d"""
    members = np.flatnonzero(mask)
    if members.size == 0:
        return []
    if grid.dim == 1:
        directions = np.asarray([[1.0], [-1.0]])
    else:
        angles = np.arange(8) * np.pi / 4
        directions = np.stack([np.cos(angles), np.sin(angles)], axis=1)
    pts = grid.points[members]
    return [int(members[np.argmax(np.round(pts @ d, 12))]) for d in directions]


def _spread(indices, limit):
    indices = np.asarray(indices, dtype=np.int64)
    if indices.size <= limit:
        return indices
    pick = np.unique(np.linspace(0, indices.size - 1, limit).round().astype(np.int64))
    return indices[pick]


def _coords(grid, flat):
    return [float(v) for v in grid.points[int(flat)]]


class ConvexityClassifier:
    """Classifies grid functions in the convexity hierarchy"""

    def __init__(self, transformer=None, analyzer=None, eps_fp=settings.EPS_FP,
                 truncation_band=settings.TRUNCATION_BAND, num_workers=None):
        self.transformer = transformer or LegendreTransformer()
        self.analyzer = analyzer or ModulusAnalyzer()
        self.eps_fp = eps_fp
        self.truncation_band = truncation_band
        self.num_workers = num_workers or settings.THREADS

    def sample_points(self, grid, mask, plan, rng, extra=None):
        """Extreme members, evenly spread boundary members, random members and plan points"""
        members = np.flatnonzero(mask)
        if members.size == 0:
            return []
        chosen = list(extreme_members(grid, mask))
        chosen += [int(i) for i in _spread(np.flatnonzero(boundary_members(grid, mask)), plan.boundary_points)]
        take = min(plan.random_points, members.size)
        chosen += [int(i) for i in rng.choice(members, size=take, replace=False)]
        for p in extra or []:
            flat = grid.resolve(p)
            if mask[flat]:
                chosen.append(flat)
        return list(dict.fromkeys(chosen))

    def _point_checks(self, f, conj, x, max_subgradients):
        """
        Firm certificates for extreme exact subgradients and the total certificate at x

        Without an exact dual-grid subgradient, the discrete subgradient from the axis
        slopes is used once its Fenchel-Young gap vanishes. Returns None when x has neither.
        """
        r_res = self.analyzer.resolution_radius(f.grid)
        tol = 2.0 * self.eps_fp * (1.0 + abs(f.values[x]))
        sub = exact_subgradients(f, conj, x, self.eps_fp)
        firm = []
        if sub.empty:
            s = discrete_subgradient(f, x)
            if s is None:
                return None
            try:
                m = self.analyzer.firm_modulus(f, x, s, tolerance=tol)
            except NotASubgradient:
                logger.debug(f"No vanishing-gap subgradient at index {x}")
                return None
            firm.append((s, self.analyzer.certificate(m, r_res), m))
            supports = s[None, :]
        else:
            for k in sub.extreme_members(max_subgradients):
                s = conj.dual_grid.points[k]
                m = self.analyzer.firm_modulus(f, x, s, tolerance=tol)
                firm.append((s, self.analyzer.certificate(m, r_res), m))
            supports = sub.dual_points
        total = self.analyzer.total_convexity_modulus(f, x, subgradient_points=supports)
        return {'point': x, 'firm': firm, 'total': (self.analyzer.certificate(total, r_res), total)}

    def _failure(self, f, point, cert, m, subgradient=None):
        radius = cert.failure_radius
        witness = {
            'point': _coords(f.grid, point),
            'radius': radius,
            'value': m.value_at(radius) if radius is not None else None,
        }
        if subgradient is not None:
            witness['subgradient'] = [float(v) for v in subgradient]
        return witness

    def strict_convexity(self, f, dom_sub, samples, plan, rng):
        """
        Strict convexity at exact grid midpoints of segments whose ends and midpoint lie in dom df

        Returns:
            tuple: (violation witnesses, number of segments, endpoints of failing segments)
        """
        grid = f.grid
        r_res = self.analyzer.resolution_radius(grid)
        members = np.flatnonzero(dom_sub)
        if members.size < 2:
            return [], 0, []
        idx = grid.multi_indices
        a = rng.choice(members, size=4 * plan.segments)
        b = rng.choice(members, size=4 * plan.segments)

        # short axis-aligned segments from the sampled points
        reach = int(np.ceil(r_res / min(grid.spacing))) + 1
        axis_a, axis_b = [], []
        for p in samples:
            for axis in range(grid.dim):
                for k in (2 * reach, 2 * reach + 4):
                    moved = list(idx[p])
                    moved[axis] += k
                    if moved[axis] < grid.counts[axis]:
                        q = grid.flat_index(moved)
                        if dom_sub[q]:
                            axis_a.append(p)
                            axis_b.append(q)
        a = np.concatenate([np.asarray(axis_a, dtype=np.int64), a])
        b = np.concatenate([np.asarray(axis_b, dtype=np.int64), b])

        total = idx[a] + idx[b]
        half = f.norm.norm(grid.points[a] - grid.points[b]) / 2
        even = np.all(total % 2 == 0, axis=1)
        mid = np.full(a.size, -1, dtype=np.int64)
        if even.any():
            mid[even] = np.ravel_multi_index(tuple((total[even] // 2).T), grid.shape)
        keep = even & (half > r_res + 1e-12)
        keep[keep] &= dom_sub[mid[keep]]
        a, b, mid = a[keep], b[keep], mid[keep]
        limit = len(axis_a) + plan.segments
        a, b, mid = a[:limit], b[:limit], mid[:limit]
        if a.size == 0:
            return [], 0, []

        fa, fb, fm = f.values[a], f.values[b], f.values[mid]
        chord = (fa + fb) / 2
        threshold = self.eps_fp * (1.0 + np.maximum(np.abs(fa), np.abs(fb)))
        with np.errstate(invalid='ignore'):
            bad = ~(chord - fm > threshold)
        witnesses = [{'point': _coords(grid, mid[k]), 'segment': [_coords(grid, a[k]), _coords(grid, b[k])],
                      'chord_gap': float(chord[k] - fm[k]) if np.isfinite(fm[k]) else None}
                     for k in np.flatnonzero(bad)[:10]]
        endpoints = [int(v) for k in np.flatnonzero(bad)[:10] for v in (a[k], b[k])]
        return witnesses, int(a.size), endpoints

    def multivalued_inverse(self, f, conj, duals):
        """
        Width of (df)^-1(s) = argmin(f - <., s>) at each sampled dual point and its trusted neighbours

        A tie set wider than the grid resolution means f is affine along a segment of dom df.
        Dual boundary points are skipped.
        """
        grid = f.grid
        r_res = self.analyzer.resolution_radius(grid)
        inner = conj.trusted & ~conj.dual_grid.boundary_mask
        witnesses = []
        for s in duals:
            group = [d for d in [s] + list(conj.dual_grid.neighbors(s)) if inner[d]]
            for d in group:
                _, ties, _ = self.analyzer.tilted_minimizers(f, conj.dual_grid.points[d])
                pts = grid.points[ties]
                diameter = float(f.norm.norm(pts.max(axis=0) - pts.min(axis=0)))
                if diameter > r_res + 1e-12:
                    witnesses.append({'dual_point': _coords(conj.dual_grid, d), 'diameter': diameter})
                    break
        return witnesses

    def jump_points(self, f, conj):
        """Trusted dual points whose maximizer moves farther than r_res at a trusted neighbour"""
        r_res = self.analyzer.resolution_radius(f.grid)
        table = conj.dual_grid.neighbor_table
        here = f.grid.points[np.clip(conj.argmax, 0, None)]
        jumps = np.zeros(conj.dual_grid.size, dtype=bool)
        for col in range(table.shape[1]):
            nb = table[:, col]
            ok = (nb >= 0) & conj.trusted
            ok[ok] &= conj.trusted[nb[ok]]
            moved = np.zeros(conj.dual_grid.size)
            moved[ok] = f.norm.norm(here[nb[ok]] - here[ok])
            jumps |= ok & (moved > r_res + 1e-12)
        return jumps

    def openness(self, f, conj):
        """Trusted dual points with an untrusted neighbour whose maximizer is away from the truncation band"""
        grid = f.grid
        dual = conj.dual_grid
        table = dual.neighbor_table
        neighbour_ok = np.where(table >= 0, conj.trusted[np.clip(table, 0, None)], True)
        edge = np.flatnonzero(conj.trusted & ~np.all(neighbour_ok, axis=1))
        band = self.truncation_band * max(grid.extent)
        lower, upper = np.asarray(grid.lower), np.asarray(grid.upper)
        witnesses = []
        for s in edge:
            x = conj.interior_argmax[s]
            if x < 0:
                continue
            p = grid.points[x]
            if float(min(np.min(p - lower), np.min(upper - p))) > band:
                witnesses.append({'dual_point': _coords(dual, s), 'maximizer': [float(v) for v in p]})
        return witnesses

    def classify(self, f, dual_grid, plan=None):
        """
        Classify f in the convexity hierarchy

        Args:
            f (GridFunction): Function to classify
            dual_grid (Grid): Dual grid for the conjugate
            plan (SamplePlan): Sampled points and segments; defaults to SamplePlan()

        Returns:
            ClassificationReport: verdicts with witnesses, chain closed, diagnostics attached
        """
        plan = plan or SamplePlan()
        rng = np.random.default_rng(plan.seed)
        grid = f.grid
        tag = f.tag or 'function'
        logger.info(f"Classifying {tag} on {grid.describe()} grid...")

        conj = self.transformer.fast(f, dual_grid)
        bicon = self.transformer.biconjugate(f, dual_grid, conj=conj)
        verdicts = {}
        disclaimers = [PROXY_NOTE, "every verdict means: no failure over the sampled points"]

        convex = Verdict('convex_lsc', bicon.convex_lsc_consistent, int(bicon.trusted.sum()),
                         evidence=f"max |f** - f| = {bicon.max_error:.3g}, tolerance {bicon.tolerance:.3g}")
        if not convex.holds and bicon.worst_index >= 0:
            convex.witnesses.append({'point': _coords(grid, bicon.worst_index), 'error': bicon.max_error})
        elif not convex.holds:
            convex.witnesses.append({'reason': "no trusted dual point"})
        verdicts['convex_lsc'] = convex

        # adequacy on the dual side
        dual_samples = self.sample_points(dual_grid, conj.trusted, plan, rng, plan.dual)
        jumps = _spread(np.flatnonzero(self.jump_points(f, conj)), plan.boundary_points)
        dual_samples = list(dict.fromkeys(dual_samples + [int(s) for s in jumps]))
        adequate, strongly = self._adequacy(f, conj, dual_samples)
        verdicts['adequate'] = adequate
        verdicts['strongly_adequate'] = strongly

        dom_sub = subdifferential_domain(f, bicon)
        samples = self.sample_points(grid, dom_sub, plan, rng, plan.primal)

        strict_witnesses, segments, failing_ends = self.strict_convexity(f, dom_sub, samples, plan, rng)
        inverse_witnesses = self.multivalued_inverse(f, conj, dual_samples)
        samples = list(dict.fromkeys(samples + failing_ends))

        with ThreadPoolExecutor(max_workers=self.num_workers) as executor:
            checks = [c for c in executor.map(
                lambda x: self._point_checks(f, conj, x, plan.max_subgradients), samples) if c is not None]

        some_w, all_w, total_w = [], [], []
        firm_at, total_at = {}, {}
        for c in checks:
            x = c['point']
            positives = [cert.positive for _, cert, _ in c['firm']]
            firm_at[x] = all(positives)
            if not any(positives):
                s, cert, m = c['firm'][0]
                some_w.append(self._failure(f, x, cert, m, s))
            for s, cert, m in c['firm']:
                if not cert.positive:
                    all_w.append(self._failure(f, x, cert, m, s))
                    break
            cert, m = c['total']
            total_at[x] = cert.positive
            if not cert.positive:
                total_w.append(self._failure(f, x, cert, m))

        n = len(checks)
        strict = Verdict('essentially_strictly_convex', not strict_witnesses and not inverse_witnesses,
                         segments + len(dual_samples), strict_witnesses + inverse_witnesses,
                         f"{segments} segments, {len(dual_samples)} dual neighbourhoods")
        if segments == 0 and self._spread_of(f, dom_sub) > 2 * self.analyzer.resolution_radius(grid):
            strict.holds = False
            strict.witnesses.append({'reason': "inconclusive: no segment of dom df could be tested"})
        strong = self._point_verdict('essentially_strongly_convex', some_w, n)
        firm = self._point_verdict('essentially_firmly_subdifferentiable', all_w, n)
        total = self._point_verdict('totally_convex_on_dom_subdiff', total_w, n)

        on_dom = self._totally_convex_on_dom(f, plan, rng)

        adjustments = []
        if not convex.holds:
            for v in (strict, strong, firm, total, on_dom):
                v.fail("biconjugate test failed: f is not convex lsc on the grid")
        if not strict.holds and strong.holds:
            strong.fail("essential strict convexity fails")
            adjustments.append('essentially_strongly_convex')
        if not strong.holds and firm.holds:
            firm.fail("essential strong convexity fails")
            adjustments.append('essentially_firmly_subdifferentiable')
        if not firm.holds and total.holds:
            total.fail("essential firm subdifferentiability fails")
            adjustments.append('totally_convex_on_dom_subdiff')
        if adjustments:
            logger.info(f"Chain closure adjusted {', '.join(adjustments)} for {tag}")

        verdicts['essentially_firmly_subdifferentiable'] = firm
        verdicts['totally_convex_on_dom_subdiff'] = total
        verdicts['totally_convex_on_dom'] = on_dom
        verdicts['essentially_strictly_convex'] = strict
        verdicts['essentially_strongly_convex'] = strong

        if strongly.holds and not adequate.holds:
            strongly.fail("not adequate")

        dom_edge = boundary_members(grid, f.domain_mask)
        relative_interior = [x for x in firm_at if not dom_edge[x]]
        agree = sum(firm_at[x] == total_at[x] for x in relative_interior)
        diagnostics = {
            'dom_subdiff_points': int(dom_sub.sum()),
            'primal_samples': n,
            'unchecked_samples': len(samples) - n,
            'dual_samples': len(dual_samples),
            'chain_adjustments': adjustments,
            'finite_dim_equivalence': strict.holds == firm.holds,
            'strongly_adequate_implies_firm': (not strongly.holds) or firm.holds,
            'total_vs_firm_at_point': {'samples': len(relative_interior), 'agreements': int(agree)},
            'conjugate': conj.summary(),
            'biconjugate': bicon.summary(),
        }
        if strict.holds != firm.holds:
            disclaimers.append("strict convexity and firm subdifferentiability differ at grid resolution")
        report = ClassificationReport(tag, grid.to_dict(), dual_grid.to_dict(), verdicts, diagnostics, disclaimers)
        logger.info(f"Classified {tag}: " + ", ".join(f"{k}={v.holds}" for k, v in verdicts.items()))
        return report

    @staticmethod
    def _spread_of(f, mask):
        if not mask.any():
            return 0.0
        pts = f.grid.points[mask]
        return float(f.norm.norm(pts.max(axis=0) - pts.min(axis=0)))

    @staticmethod
    def _point_verdict(name, witnesses, n):
        verdict = Verdict(name, n > 0 and not witnesses, n, witnesses)
        if n == 0:
            verdict.witnesses.append({'reason': "inconclusive: no point of dom df could be checked"})
        return verdict

    def _adequacy(self, f, conj, dual_samples):
        adequate = Verdict('adequate', True, len(dual_samples))
        strongly = Verdict('strongly_adequate', True, len(dual_samples))
        if not conj.trusted.any():
            adequate.holds = strongly.holds = False
            adequate.witnesses.append({'reason': "dom M is empty (no trusted dual point)"})
            strongly.witnesses.append({'reason': "dom M is empty (no trusted dual point)"})
            return adequate, strongly

        for w in self.openness(f, conj)[:10]:
            adequate.holds = False
            adequate.witnesses.append({'reason': "dom M not open", **w})

        for s in dual_samples:
            tilt = conj.dual_grid.points[s]
            _, report = self.analyzer.wellposedness_modulus(f, tilt)
            if not report.unique:
                spread = f.norm.norm(f.grid.points[report.ties] - f.grid.points[report.minimizer])
                adequate.holds = False
                adequate.witnesses.append({'dual_point': _coords(conj.dual_grid, s),
                                           'multiplicity': len(report.ties),
                                           'spread': float(np.max(spread))})
            if not report.strong and len(strongly.witnesses) < 10:
                strongly.holds = False
                strongly.witnesses.append({'dual_point': _coords(conj.dual_grid, s),
                                           'reasons': list(report.reasons)})
        return adequate, strongly

    def _totally_convex_on_dom(self, f, plan, rng):
        grid = f.grid
        r_res = self.analyzer.resolution_radius(grid)
        samples = self.sample_points(grid, f.domain_mask, plan, rng)

        def check(x):
            m = self.analyzer.total_convexity_modulus(f, x)
            return x, self.analyzer.certificate(m, r_res), m

        with ThreadPoolExecutor(max_workers=self.num_workers) as executor:
            results = list(executor.map(check, samples))
        witnesses = [self._failure(f, x, cert, m) for x, cert, m in results if not cert.positive]
        return Verdict('totally_convex_on_dom', not witnesses, len(samples), witnesses)

    def lemma1_agreement(self, f, dual_grid, samples=None, n_samples=20, seed=settings.SEED):
        """
        Agreement of three characterizations at trusted interior dual points

        (a) f - <., s> has a strong minimum; (b) f* is differentiable at s at grid
        scale: the maximizer set is one cluster of diameter <= r_res and the nearest
        maximizer for each trusted neighbour s' moves by at most a quarter of the
        primal extent; (c) the firm modulus at (x(s), s) is certified positive.

        Returns:
            Lemma1Report: one row per dual sample
        """
        conj = self.transformer.fast(f, dual_grid)
        bicon = self.transformer.biconjugate(f, dual_grid, conj=conj)
        r_res = self.analyzer.resolution_radius(f.grid)
        jump = 0.25 * max(f.grid.extent)
        pool = np.flatnonzero(conj.trusted & ~dual_grid.boundary_mask)
        if samples is None:
            rng = np.random.default_rng(seed)
            chosen = rng.choice(pool, size=min(n_samples, pool.size), replace=False) if pool.size else []
        else:
            chosen = [dual_grid.resolve(s) for s in samples]

        rows = []
        for s in chosen:
            s = int(s)
            tilt = dual_grid.points[s]
            _, report = self.analyzer.wellposedness_modulus(f, tilt)
            ties = f.grid.points[report.ties]
            here = f.grid.points[report.minimizer]
            cluster = float(np.max(f.norm.norm(ties - here))) <= r_res + 1e-12

            moves = []
            for nb in dual_grid.neighbors(s):
                if not conj.trusted[nb]:
                    continue
                _, nb_ties, _ = self.analyzer.tilted_minimizers(f, dual_grid.points[nb])
                moves.append(float(np.min(f.norm.norm(f.grid.points[nb_ties] - here))))
            bounded = all(m <= jump for m in moves)

            m = self.analyzer.firm_modulus(f, report.minimizer, tilt, tolerance=INF)
            certified = self.analyzer.certificate(m, r_res).positive
            rows.append({
                'dual_point': [float(v) for v in tilt],
                'minimizer': [float(v) for v in here],
                'strong_minimum': report.strong,
                'differentiable': cluster and bounded,
                'firm_certificate': certified,
            })

        result = Lemma1Report(f.tag or 'function', rows, bicon.convex_lsc_consistent)
        if result.disagreements:
            logger.warning(f"Lemma agreement for {result.tag}: {len(result.disagreements)} disagreements")
        return result


_default = ConvexityClassifier()


def classify(f, dual_grid, sample_plan=None):
    return _default.classify(f, dual_grid, sample_plan)


def lemma1_agreement(f, dual_grid, samples=None, n_samples=20):
    return _default.lemma1_agreement(f, dual_grid, samples, n_samples)
