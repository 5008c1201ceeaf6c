"""
Relative Projections
P_S(f, s): minimize f - <., s> over a constraint set, f-strongly Tchebychev
probing, the farthest-point experiment and the probe-based convexity detector
"""

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import qmc

import settings
from conjugate import LegendreTransformer
from exceptions import BudgetExhausted, EmptyDomain, InfeasibleProblem
from grid_core import Grid, GridFunction
from moduli import ModulusAnalyzer

logger = logging.getLogger(__name__)

# Fraction of each probe box trimmed on every side
PROBE_MARGIN = 0.05

# All pairs are checked exhaustively up to this many, sampled beyond
MIDPOINT_PAIR_BUDGET = 200_000

ESCALATION_ANCHORS = 8
REFINE_ITERATIONS = 30


@dataclass(frozen=True, eq=False)
class ConstraintSet:
    """Closed set S as a grid mask"""

    name: str
    grid: Grid
    mask: np.ndarray
    representation: str = 'mask'

    def __post_init__(self):
        mask = np.asarray(self.mask, dtype=bool).reshape(-1)
        if mask.size != self.grid.size:
            raise ValueError(f"Mask has {mask.size} entries, grid has {self.grid.size}")
        if not mask.any():
            raise EmptyDomain(f"Constraint set {self.name} has no grid point")
        mask.setflags(write=False)
        object.__setattr__(self, 'mask', mask)

    @classmethod
    def from_points(cls, grid, points, name):
        """Snap a point cloud to its nearest grid points"""
        mask = np.zeros(grid.size, dtype=bool)
        for p in np.atleast_2d(np.asarray(points, dtype=float)):
            mask[grid.nearest_index(p)] = True
        return cls(name, grid, mask, 'points')

    @property
    def indices(self):
        return np.flatnonzero(self.mask)

    @property
    def size(self):
        return int(self.mask.sum())

    @property
    def points(self):
        return self.grid.points[self.mask]

    def bounding_box(self):
        pts = self.points
        return pts.min(axis=0), pts.max(axis=0)

    def intersect(self, other_mask, name=None):
        return ConstraintSet(name or self.name, self.grid, self.mask & np.asarray(other_mask, dtype=bool),
                             self.representation)

    def to_dict(self):
        return {'name': self.name, 'representation': self.representation, 'points': self.size}


@dataclass(frozen=True)
class ProjectionCertificate:
    """Solution of P_S(f, s) with its well-posedness verdict"""

    f_tag: str
    set_name: str
    tilt: tuple
    minimizers: list
    optimal_value: float
    modulus: object
    report: object

    @property
    def strong(self):
        return self.report.strong

    @property
    def minimizer(self):
        return self.report.minimizer

    def to_dict(self):
        return {
            'f': self.f_tag,
            'set': self.set_name,
            'tilt': list(self.tilt),
            'minimizers': [list(map(float, p)) for p in self.minimizers],
            'optimal_value': self.optimal_value,
            'strong': self.strong,
            'report': self.report.to_dict(),
        }


@dataclass
class ProbeVerdict:
    """Outcome of a probe campaign: pass over N probes or a witness"""

    kind: str
    verdict: str
    probes: int
    witness: tuple = None
    certificate: ProjectionCertificate = None
    midpoint_convex: bool = None
    agreement: bool = None
    failures: int = 0
    notes: list = field(default_factory=list)

    @property
    def passed(self):
        return self.verdict in ('PASS', 'SINGLETON-CONSISTENT', 'CONVEX-CONSISTENT')

    def to_dict(self):
        return {
            'kind': self.kind,
            'verdict': self.verdict,
            'probes': self.probes,
            'witness': list(self.witness) if self.witness is not None else None,
            'certificate': self.certificate.to_dict() if self.certificate else None,
            'midpoint_convex': self.midpoint_convex,
            'agreement': self.agreement,
            'failures': self.failures,
            'notes': list(self.notes),
        }


def halton_probes(lower, upper, n, seed=settings.SEED):
    """Scrambled Halton points in the box [lower, upper], trimmed by PROBE_MARGIN"""
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    pad = PROBE_MARGIN * (upper - lower)
    lo, hi = lower + pad, upper - pad
    sampler = qmc.Halton(d=lower.size, scramble=True, seed=seed)
    sample = sampler.random(n)
    flat = hi <= lo
    hi = np.where(flat, lo + 1e-12, hi)
    probes = qmc.scale(sample, lo, hi)
    return np.where(flat, lower, probes)


def midpoint_convexity(S, budget=MIDPOINT_PAIR_BUDGET, seed=settings.SEED, keep=50):
    """
    Grid-midpoint convexity of a mask

    For each pair of members, some grid point nearest to their midpoint must
    be a member. Exhaustive up to `budget` pairs, a seeded sample beyond.

    Returns:
        tuple: (convex, failing pairs as flat-index tuples, farthest apart first)
    """
    members = S.indices
    k = members.size
    if k < 2:
        return True, []
    if k * (k - 1) // 2 <= budget:
        i, j = np.triu_indices(k, 1)
    else:
        rng = np.random.default_rng(seed)
        i = rng.integers(0, k, budget)
        j = rng.integers(0, k, budget)
        keep_pairs = i != j
        i, j = i[keep_pairs], j[keep_pairs]

    idx = S.grid.multi_indices
    total = idx[members[i]] + idx[members[j]]
    lo, hi = total // 2, (total + 1) // 2
    found = np.zeros(i.size, dtype=bool)
    for choice in range(2 ** S.grid.dim):
        picks = np.stack([np.where((choice >> a) & 1, hi[:, a], lo[:, a]) for a in range(S.grid.dim)], axis=1)
        flat = np.ravel_multi_index(tuple(picks.T), S.grid.shape)
        found |= S.mask[flat]

    bad = np.flatnonzero(~found)
    if bad.size == 0:
        return True, []
    sep = np.linalg.norm(S.grid.points[members[i[bad]]] - S.grid.points[members[j[bad]]], axis=1)
    order = bad[np.argsort(-sep, kind='stable')][:keep]
    return False, [(int(members[i[o]]), int(members[j[o]])) for o in order]


class ProjectionSolver:
    """Solves relative projection problems and runs probe campaigns"""

    def __init__(self, analyzer=None, transformer=None, probes=settings.PROBES, seed=settings.SEED,
                 num_workers=None):
        self.analyzer = analyzer or ModulusAnalyzer()
        self.transformer = transformer or LegendreTransformer()
        self.probes = probes
        self.seed = seed
        self.num_workers = num_workers or settings.THREADS

    def solve(self, f, S, s):
        """
        Solve P_S(f, s) exactly over the finite set S n grid

        Args:
            f (GridFunction): Objective
            S (ConstraintSet): Constraint set on f's grid
            s: Tilt

        Returns:
            ProjectionCertificate: minimizers, value and strong-minimum verdict

        Raises:
            InfeasibleProblem: S and dom f do not meet
        """
        if S.grid != f.grid:
            raise ValueError(f"Constraint set {S.name} lives on a different grid")
        if not (S.mask & f.domain_mask).any():
            raise InfeasibleProblem(f"{S.name} and dom {f.tag or 'f'} do not intersect")
        s = np.atleast_1d(np.asarray(s, dtype=float))
        modulus, report = self.analyzer.wellposedness_modulus(f, s, mask=S.mask)
        minimizers = [f.grid.points[t].tolist() for t in report.ties]
        return ProjectionCertificate(f.tag, S.name, tuple(float(v) for v in s), minimizers,
                                     report.value, modulus, report)

    def _tie_plane_projection(self, f, a, b, base):
        """Project base onto {s : f(a) - <a, s> = f(b) - <b, s>}"""
        pa, pb = f.grid.points[a], f.grid.points[b]
        normal = pb - pa
        target = f.values[b] - f.values[a]
        return base + (target - normal @ base) / (normal @ normal) * normal

    def _far_apart(self, f, a, b):
        return f.norm.norm(f.grid.points[a] - f.grid.points[b]) > self.analyzer.resolution_radius(f.grid) + 1e-12

    def refine_tie(self, f, S, a, b, base):
        """
        Walk tie hyperplanes of far pairs until both members of a pair are optimal

        Returns:
            tuple: (tilt, pair) where both members tie for the minimum, or None
        """
        for _ in range(REFINE_ITERATIONS):
            if not self._far_apart(f, a, b):
                return None
            s = self._tie_plane_projection(f, a, b, base)
            best, ties, _ = self.analyzer.tilted_minimizers(f, s, S.mask)
            near_a = [t for t in ties if not self._far_apart(f, t, a)]
            near_b = [t for t in ties if not self._far_apart(f, t, b)]
            if near_a and near_b:
                return s, (int(near_a[0]), int(near_b[0]))
            da = f.norm.norm(f.grid.points[best] - f.grid.points[a])
            db = f.norm.norm(f.grid.points[best] - f.grid.points[b])
            if da <= db:
                a = best
            else:
                b = best
            base = s
        return None

    def escalation_pairs(self, f, S):
        """Anchors extreme in evenly spread directions, each paired with its farthest member"""
        feasible = np.flatnonzero(S.mask & f.domain_mask)
        pts = f.grid.points[feasible]
        if f.grid.dim == 1:
            directions = np.asarray([[1.0], [-1.0]])
        else:
            angles = np.arange(ESCALATION_ANCHORS) * 2 * np.pi / ESCALATION_ANCHORS
            directions = np.stack([np.cos(angles), np.sin(angles)], axis=1)
        pairs = []
        for d in directions:
            anchor = int(np.argmax(pts @ d))
            far = int(np.argmax(np.linalg.norm(pts - pts[anchor], axis=1)))
            pair = (int(feasible[anchor]), int(feasible[far]))
            if pair not in pairs and pair[0] != pair[1]:
                pairs.append(pair)
        return pairs

    def _default_probes(self, f, n):
        conj = self.transformer.fast(f, _dual_grid_for(f.grid))
        trusted = conj.dual_grid.points[conj.trusted]
        if trusted.size == 0:
            lower, upper = np.asarray(conj.dual_grid.lower), np.asarray(conj.dual_grid.upper)
        else:
            lower, upper = trusted.min(axis=0), trusted.max(axis=0)
        return halton_probes(lower, upper, n, self.seed), conj

    def _run_probes(self, f, S, probes):
        for k, s in enumerate(probes):
            cert = self.solve(f, S, s)
            if not cert.strong:
                return k + 1, cert
        return len(probes), None

    def tchebychev_test(self, f, S, dual_samples=None, n_probes=None):
        """
        Probe whether S is f-strongly Tchebychev

        Args:
            f (GridFunction): Objective
            S (ConstraintSet): Constraint set
            dual_samples (np.ndarray): Probe tilts; default Halton points over the trusted dual box
            n_probes (int): Probe count for the default sample

        Returns:
            ProbeVerdict: PASS over N probes (with a midpoint-convexity check of S n dom f), or FAIL with witness
        """
        n = n_probes or self.probes
        conj = None
        if dual_samples is None:
            dual_samples, conj = self._default_probes(f, n)
        dual_samples = np.atleast_2d(np.asarray(dual_samples, dtype=float))
        logger.info(f"Tchebychev test of {S.name} for {f.tag or 'f'} over {len(dual_samples)} probes...")

        used, failure = self._run_probes(f, S, dual_samples)
        if failure is None:
            conj = conj or self.transformer.fast(f, _dual_grid_for(f.grid))
            for a, b in self.escalation_pairs(f, S):
                base = self._pair_base(f, conj, a, b)
                found = self.refine_tie(f, S, a, b, base)
                used += 1
                if found is not None:
                    cert = self.solve(f, S, found[0])
                    if not cert.strong:
                        failure = cert
                        break

        if failure is not None:
            return ProbeVerdict('tchebychev', 'FAIL', used, failure.tilt, failure, failures=1)

        convex, _ = midpoint_convexity(S.intersect(f.domain_mask), seed=self.seed)
        notes = [f"no failure over {used} probes"]
        if not convex:
            notes.append("S n dom f is not grid-midpoint convex")
        return ProbeVerdict('tchebychev', 'PASS', used, midpoint_convex=convex, agreement=convex, notes=notes)

    def _pair_base(self, f, conj, a, b):
        """Dual point whose conjugate maximizer is nearest the pair's midpoint"""
        mid = (f.grid.points[a] + f.grid.points[b]) / 2
        candidates = np.flatnonzero(conj.trusted)
        if candidates.size == 0:
            return np.zeros(f.grid.dim)
        hits = f.grid.points[conj.argmax[candidates]]
        return conj.dual_grid.points[candidates[int(np.argmin(np.linalg.norm(hits - mid, axis=1)))]]

    def farthest_point_experiment(self, S, dual_samples=None, n_probes=None, strict=False):
        """
        Does 1/2||.||^2 + <., m> attain a strong maximum over S for every probe?

        Runs P_S(-1/2||.||^2, s) with s = -m for centres m. A singleton must pass
        every probe; any larger set must yield a non-strong witness.

        Returns:
            ProbeVerdict: SINGLETON-CONSISTENT, WITNESS or BUDGET-EXHAUSTED

        Raises:
            BudgetExhausted: strict mode only, when no witness is found for |S| > 1
        """
        f = negative_half_square(S.grid)
        n = n_probes or self.probes
        if dual_samples is None:
            lower, upper = S.bounding_box()
            centres = halton_probes(lower - 0.5, upper + 0.5, n, self.seed)
            dual_samples = -centres
        dual_samples = np.atleast_2d(np.asarray(dual_samples, dtype=float))
        logger.info(f"Farthest-point experiment on {S.name} ({S.size} points)...")

        candidates = []
        for a, b in self.escalation_pairs(f, S):
            mid = (f.grid.points[a] + f.grid.points[b]) / 2
            candidates.append((a, b, -mid))

        used, failure = 0, None
        for a, b, base in candidates:
            used += 1
            found = self.refine_tie(f, S, a, b, base)
            if found is not None:
                cert = self.solve(f, S, found[0])
                if not cert.strong:
                    failure = cert
                    break
        if failure is None:
            more, failure = self._run_probes(f, S, dual_samples)
            used += more

        if failure is not None:
            if S.size == 1:
                logger.warning(f"Singleton {S.name} produced a non-strong maximum")
            return ProbeVerdict('farthest', 'WITNESS', used, failure.tilt, failure, failures=1)
        if S.size == 1:
            return ProbeVerdict('farthest', 'SINGLETON-CONSISTENT', used,
                                notes=[f"no failure over {used} probes"])
        logger.warning(f"No farthest-point witness for {S.name} within {used} probes")
        if strict:
            raise BudgetExhausted(f"No witness for {S.name} within {used} probes")
        return ProbeVerdict('farthest', 'BUDGET-EXHAUSTED', used, notes=["multi-point set without witness"])

    def _forced_tie(self, f, S, cert):
        """A tied pair of far-apart minimizers whose midpoint leaves S"""
        ties = cert.report.ties
        if len(ties) < 2:
            return False
        idx = f.grid.multi_indices
        for k, a in enumerate(ties):
            for b in ties[k + 1:]:
                if not self._far_apart(f, a, b):
                    continue
                total = idx[a] + idx[b]
                lo, hi = total // 2, (total + 1) // 2
                inside = False
                for choice in range(2 ** f.grid.dim):
                    pick = [hi[d] if (choice >> d) & 1 else lo[d] for d in range(f.grid.dim)]
                    inside |= bool(S.mask[f.grid.flat_index(pick)])
                if not inside:
                    return True
        return False

    def convexity_detector(self, S, dual_samples=None, n_probes=None):
        """
        Detect convexity of S from nearest-point problems

        A witness is a tilt m whose nearest points in S tie far apart with their
        midpoint outside S. CONVEX-CONSISTENT needs no witness and grid-midpoint
        convexity; the verdict records whether the two tests agree.

        Returns:
            ProbeVerdict: CONVEX-CONSISTENT or NONCONVEX
        """
        f = half_square(S.grid)
        n = n_probes or self.probes
        if dual_samples is None:
            lower, upper = S.bounding_box()
            lower = np.maximum(lower - 0.5, S.grid.lower)
            upper = np.minimum(upper + 0.5, S.grid.upper)
            dual_samples = halton_probes(lower, upper, n, self.seed)
        dual_samples = np.atleast_2d(np.asarray(dual_samples, dtype=float))
        logger.info(f"Convexity detector on {S.name} ({S.size} points)...")

        convex, failing = midpoint_convexity(S, seed=self.seed)
        witness, used = None, 0
        for s in dual_samples:
            used += 1
            cert = self.solve(f, S, s)
            if not cert.strong and self._forced_tie(f, S, cert):
                witness = cert
                break

        if witness is None:
            seeds = [(a, b) for a, b in failing[:10]] + self.escalation_pairs(f, S)
            for a, b in seeds:
                used += 1
                mid = (f.grid.points[a] + f.grid.points[b]) / 2
                found = self.refine_tie(f, S, a, b, mid)
                if found is None:
                    continue
                cert = self.solve(f, S, found[0])
                if not cert.strong and self._forced_tie(f, S, cert):
                    witness = cert
                    break

        agreement = (witness is None) == convex
        if not agreement:
            logger.warning(f"Convexity detector disagrees with midpoint convexity on {S.name}")
        if witness is not None:
            return ProbeVerdict('convexity', 'NONCONVEX', used, witness.tilt, witness,
                                midpoint_convex=convex, agreement=agreement, failures=1)
        verdict = 'CONVEX-CONSISTENT' if convex else 'NONCONVEX'
        notes = [f"no failure over {used} probes"]
        if not convex:
            notes.append("midpoint convexity fails but no probe witness was found")
        return ProbeVerdict('convexity', verdict, used, midpoint_convex=convex, agreement=agreement, notes=notes)


def _dual_grid_for(grid):
    lb, ub = settings.DEFAULT_DUAL_BOUNDS
    return Grid((lb,) * grid.dim, (ub,) * grid.dim, grid.counts)


def half_square(grid):
    """1/2 ||x||^2 sampled on grid"""
    values = 0.5 * np.sum(grid.points ** 2, axis=1)
    return GridFunction(grid, values, tag='half-square')


def negative_half_square(grid):
    """-1/2 ||x||^2 sampled on grid"""
    values = -0.5 * np.sum(grid.points ** 2, axis=1)
    return GridFunction(grid, values, tag='negative-half-square')


_default = ProjectionSolver()


def solve_relative_projection(f, S, s):
    return _default.solve(f, S, s)


def tchebychev_test(f, S, dual_samples=None, n_probes=None):
    return _default.tchebychev_test(f, S, dual_samples, n_probes)


def farthest_point_experiment(S, dual_samples=None, n_probes=None, strict=False):
    return _default.farthest_point_experiment(S, dual_samples, n_probes, strict)


def convexity_detector(S, dual_samples=None, n_probes=None):
    return _default.convexity_detector(S, dual_samples, n_probes)
