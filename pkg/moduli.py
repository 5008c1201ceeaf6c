"""
Modulus Engine
Firm-subdifferentiability, total-convexity and well-posedness moduli over
grid shells, plus certification of their lower convex envelopes
"""

import logging
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

import settings
from conjugate import LowerHull, tie_tolerance
from exceptions import InfeasibleProblem, InsufficientData, NotASubgradient, PointOutsideDomain, Unbounded
from grid_core import INF, shell_partition
from subdiff import directional_derivatives_towards

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Modulus:
    """Shell infima t -> value of a gap function around a base point"""

    radii: np.ndarray
    values: np.ndarray
    empty: np.ndarray
    witnesses: np.ndarray
    base_point: int
    context: str
    subgradient: tuple = None

    @property
    def finite(self):
        return np.isfinite(self.values) & ~self.empty

    def value_at(self, t):
        """Value at the sampled radius nearest to t"""
        return float(self.values[int(np.argmin(np.abs(self.radii - t)))])

    def up_to(self, max_radius):
        keep = self.radii <= max_radius + 1e-12
        return Modulus(self.radii[keep], self.values[keep], self.empty[keep], self.witnesses[keep],
                       self.base_point, self.context, self.subgradient)

    def to_frame(self):
        return pd.DataFrame({
            't': self.radii,
            'value': self.values,
            'empty_flag': self.empty,
            'witness': self.witnesses,
        })


@dataclass(frozen=True)
class Gamma0Certificate:
    """Lower convex envelope through (0, 0) of a modulus and its positivity verdict"""

    positive: bool
    failure_radius: float
    knots: list
    radii: np.ndarray
    envelope: np.ndarray
    floor: float
    samples: int
    note: str = ""

    def to_dict(self):
        return {
            'positive': self.positive,
            'failure_radius': self.failure_radius,
            'floor': self.floor,
            'samples': self.samples,
            'knots': [[float(t), float(v)] for t, v in self.knots],
            'note': self.note,
        }


@dataclass(frozen=True)
class MinimizerReport:
    """Grid minimizers of a tilted problem and its strong-minimum verdict"""

    minimizer: int
    value: float
    ties: list
    unique: bool
    on_boundary: bool
    unbounded: bool
    certificate: Gamma0Certificate
    strong: bool
    reasons: list = field(default_factory=list)

    def to_dict(self):
        return {
            'minimizer': self.minimizer,
            'value': self.value,
            'ties': list(self.ties),
            'multiplicity': len(self.ties),
            'unique': self.unique,
            'on_boundary': self.on_boundary,
            'unbounded': self.unbounded,
            'certificate': self.certificate.to_dict() if self.certificate else None,
            'strong': self.strong,
            'reasons': list(self.reasons),
        }


def delta0(t, eps_fp=settings.EPS_FP):
    """Positivity floor eps_fp * (1 + t)"""
    return eps_fp * (1.0 + np.asarray(t, dtype=float))


def certify_gamma0(m, min_radius=0.0, eps_fp=settings.EPS_FP):
    """
    Certify that a modulus dominates a forcing function

    Builds the lower convex envelope of (0, 0) and the finite samples with
    t > min_radius; +inf samples do not constrain it and empty shells are skipped.

    Args:
        m (Modulus): Sampled modulus
        min_radius (float): Radii at or below this floor carry no information
        eps_fp (float): Floor scale of delta0

    Returns:
        Gamma0Certificate: positive iff the envelope exceeds delta0 at every sampled radius

    Raises:
        InsufficientData: fewer than 2 non-empty shells above the floor
    """
    above = (m.radii > min_radius + 1e-12) & ~m.empty
    if int(above.sum()) < 2:
        raise InsufficientData(f"Only {int(above.sum())} informative shells above radius {min_radius}")

    finite = above & np.isfinite(m.values)
    t = m.radii[finite]
    v = m.values[finite]
    if t.size == 0:
        return Gamma0Certificate(True, None, [(0.0, 0.0)], t, v, min_radius, 0, "no finite samples")

    xs = np.concatenate([[0.0], t])
    vs = np.concatenate([[0.0], v])
    hull = LowerHull.vertices(xs, vs)
    envelope = np.interp(t, xs[hull], vs[hull])
    floor = delta0(t, eps_fp)

    positive = bool(np.all(envelope > floor))
    failure = None
    if not positive:
        raw_fail = np.flatnonzero(v <= floor)
        idx = raw_fail[0] if raw_fail.size else np.flatnonzero(envelope <= floor)[0]
        failure = float(t[idx])
    knots = [(float(xs[k]), float(vs[k])) for k in hull]
    return Gamma0Certificate(positive, failure, knots, t, envelope, min_radius, int(t.size))


class ModulusAnalyzer:
    """Computes moduli as shell infima of gap functions"""

    def __init__(self, eps_fp=settings.EPS_FP, resolution_factor=settings.RESOLUTION_FACTOR,
                 tie_rtol=settings.TIE_RTOL, k_dd=settings.K_DD, subgradient_c=settings.SUBGRADIENT_C):
        self.eps_fp = eps_fp
        self.resolution_factor = resolution_factor
        self.tie_rtol = tie_rtol
        self.k_dd = k_dd
        self.subgradient_c = subgradient_c

    def resolution_radius(self, grid):
        return self.resolution_factor * grid.max_spacing

    def shell_minima(self, f, center, gap, context, mask=None, subgradient=None, max_radius=None):
        """
        Minimum of `gap` over every annulus around `center`

        Args:
            f (GridFunction): Function whose grid and norm define the shells
            center (int): Flat index of the base point
            gap (np.ndarray): Gap value per grid point (+inf outside dom f)
            context (str): 'firm', 'total', 'wellposed', ...
            mask (np.ndarray): Optional candidate set the shells are intersected with

        Returns:
            Modulus: one sample per radius; empty annuli flagged with value +inf
        """
        bands, radii = shell_partition(f.grid, center, f.norm)
        frame = pd.DataFrame({'band': bands, 'gap': gap, 'idx': np.arange(f.grid.size)})
        keep = (frame['band'] > 0) & frame['gap'].notna()
        if mask is not None:
            keep &= np.asarray(mask, dtype=bool)
        frame = frame[keep]

        grouped = frame.groupby('band')
        minima = grouped['gap'].min()
        witness = frame.loc[grouped['gap'].idxmin(), ['band', 'idx']].set_index('band')['idx']

        bands_all = pd.RangeIndex(1, radii.size + 1)
        minima = minima.reindex(bands_all)
        witness = witness.reindex(bands_all)
        empty = minima.isna().to_numpy()
        values = minima.fillna(INF).to_numpy(dtype=float)
        witnesses = witness.fillna(-1).to_numpy(dtype=np.int64)
        if empty.any():
            logger.debug(f"{int(empty.sum())} empty shells around index {center} ({context})")

        m = Modulus(radii, values, empty, witnesses, int(center), context, subgradient)
        return m.up_to(max_radius) if max_radius is not None else m

    def _subgradient_gap(self, f, flat, s):
        finite = f.domain_mask
        conj_s = float(np.max(f.grid.points[finite] @ s - f.values[finite]))
        return f.values[flat] + conj_s - float(f.grid.points[flat] @ s)

    def subgradient_tolerance(self, f, flat, s):
        return self.subgradient_c * f.grid.max_spacing * (1.0 + f.norm.dual.norm(s) + f.local_slope(flat))

    def firm_modulus(self, f, x, s, tolerance=None, max_radius=None):
        """
        Shell infima of f(u) - f(x) - <u - x, s>

        Args:
            f (GridFunction): Function
            x: Base grid point
            s: Subgradient at x (any real vector)
            tolerance (float): Admissible Fenchel-Young gap, defaults to tau_sub

        Returns:
            Modulus: context 'firm'

        Raises:
            PointOutsideDomain: f(x) = +inf
            NotASubgradient: the gap of (x, s) exceeds the tolerance
        """
        flat = f.grid.resolve(x)
        if not np.isfinite(f.values[flat]):
            raise PointOutsideDomain(f"f(x) = +inf at grid index {flat}")
        s = np.atleast_1d(np.asarray(s, dtype=float))
        gap_xs = self._subgradient_gap(f, flat, s)
        tol = self.subgradient_tolerance(f, flat, s) if tolerance is None else tolerance
        if gap_xs > tol:
            raise NotASubgradient(f"Fenchel-Young gap {gap_xs:.3g} exceeds {tol:.3g} at index {flat}")
        with np.errstate(invalid='ignore'):
            gap = f.values - f.values[flat] - (f.grid.points - f.grid.points[flat]) @ s
        gap = np.where(f.domain_mask, gap, INF)
        return self.shell_minima(f, flat, gap, 'firm', subgradient=tuple(float(v) for v in s),
                                 max_radius=max_radius)

    def total_convexity_modulus(self, f, x, max_radius=None, subgradient_points=None):
        """
        Shell infima of f(u) - f(x) - f'(x, u - x) over u in dom f

        Args:
            f (GridFunction): Function
            x: Base grid point
            subgradient_points (np.ndarray): Known subgradients at x, lower bounds for f'(x, .)

        Returns:
            Modulus: context 'total'; -inf samples mark a one-sided derivative of +inf,
            targets without a derivative estimate are left out of their shell
        """
        flat = f.grid.resolve(x)
        if not np.isfinite(f.values[flat]):
            raise PointOutsideDomain(f"f(x) = +inf at grid index {flat}")
        targets = np.flatnonzero(f.domain_mask)
        deriv = directional_derivatives_towards(f, flat, targets, self.k_dd, subgradient_points)
        gap = np.full(f.grid.size, INF)
        with np.errstate(invalid='ignore'):
            gap[targets] = np.where(np.isfinite(deriv), f.values[targets] - f.values[flat] - deriv,
                                    np.where(np.isnan(deriv), np.nan, -INF))
        gap[flat] = 0.0
        return self.shell_minima(f, flat, gap, 'total', max_radius=max_radius)

    def uniform_firm_modulus(self, f, x, subgradient_points, max_radius=None):
        """Pointwise minimum of the firm moduli over sampled subgradients (proxy for a uniform modulus)"""
        moduli = [self.firm_modulus(f, x, s, max_radius=max_radius) for s in subgradient_points]
        if not moduli:
            raise InsufficientData("No subgradients supplied")
        stacked = np.vstack([m.values for m in moduli])
        pick = np.argmin(stacked, axis=0)
        cols = np.arange(stacked.shape[1])
        witnesses = np.vstack([m.witnesses for m in moduli])[pick, cols]
        return Modulus(moduli[0].radii, stacked[pick, cols], moduli[0].empty, witnesses,
                       moduli[0].base_point, 'uniform-firm', None)

    def certificate(self, m, min_radius=None):
        """certify_gamma0 above the resolution floor; with fewer than two shells, every sample must be positive"""
        floor = self.resolution_factor * (m.radii[0] if m.radii.size else 0.0) if min_radius is None else min_radius
        try:
            return certify_gamma0(m, floor, self.eps_fp)
        except InsufficientData:
            above = (m.radii > floor + 1e-12) & ~m.empty & np.isfinite(m.values)
            t, v = m.radii[above], m.values[above]
            positive = bool(np.all(v > delta0(t, self.eps_fp)))
            failure = None if positive else float(t[np.flatnonzero(v <= delta0(t, self.eps_fp))[0]])
            return Gamma0Certificate(positive, failure, [(0.0, 0.0)] + [(float(a), float(b)) for a, b in zip(t, v)],
                                     t, v, floor, int(t.size), "sparse shells")

    def tilted_minimizers(self, f, s, mask=None):
        """
        Grid minimizers of f - <., s>, optionally over a candidate mask

        Returns:
            tuple: (lexicographically first minimizer, all tied minimizers, tilted values)
        """
        s = np.atleast_1d(np.asarray(s, dtype=float))
        with np.errstate(invalid='ignore'):
            tilted = np.where(f.domain_mask, f.values - f.grid.points @ s, INF)
        if mask is not None:
            tilted = np.where(np.asarray(mask, dtype=bool), tilted, INF)
        if not np.isfinite(tilted).any():
            raise InfeasibleProblem(f"No feasible grid point for {f.tag or 'function'}")
        best = int(np.argmin(tilted))
        low = tilted[best]
        ties = np.flatnonzero(tilted <= low + tie_tolerance(low, self.tie_rtol))
        return best, ties, tilted

    def wellposedness_modulus(self, f, s, mask=None, max_radius=None, raise_unbounded=False):
        """
        Conditioning of the tilted problem min f - <., s>

        Args:
            f (GridFunction): Function
            s: Tilt (any real vector)
            mask (np.ndarray): Optional constraint mask
            raise_unbounded (bool): Raise instead of flagging a boundary-only minimum

        Returns:
            tuple: (Modulus with context 'wellposed', MinimizerReport)
        """
        s = np.atleast_1d(np.asarray(s, dtype=float))
        best, ties, tilted = self.tilted_minimizers(f, s, mask)
        grid = f.grid
        r_res = self.resolution_radius(grid)
        spread = f.norm.norm(grid.points[ties] - grid.points[best])
        unique = bool(np.all(spread <= r_res + 1e-12))
        on_boundary = bool(grid.boundary_mask[best])
        unbounded = bool(np.all(grid.boundary_mask[ties]))
        if unbounded:
            logger.warning(f"Tilted minimum of {f.tag or 'function'} at s={s.tolist()} lies on the grid boundary")
            if raise_unbounded:
                raise Unbounded(f"Minimum attained only on the grid boundary at s={s.tolist()}")

        gap = tilted - tilted[best]
        m = self.shell_minima(f, best, gap, 'wellposed', mask=mask,
                              subgradient=tuple(float(v) for v in s), max_radius=max_radius)

        feasible = np.isfinite(tilted)
        far = feasible & (f.norm.norm(grid.points - grid.points[best]) > r_res + 1e-12)
        if not far.any():
            cert = Gamma0Certificate(True, None, [(0.0, 0.0)], np.asarray([]), np.asarray([]),
                                     r_res, 0, "no feasible point beyond the resolution radius")
        else:
            cert = self.certificate(m, r_res)

        reasons = []
        if not unique:
            reasons.append(f"{len(ties)} tied minimizers spread over {float(spread.max()):.3g}")
        if not cert.positive:
            reasons.append(f"conditioning vanishes at radius {cert.failure_radius}")
        if unbounded:
            reasons.append("minimum only on the grid boundary")
        strong = unique and cert.positive and not unbounded
        report = MinimizerReport(best, float(tilted[best]), [int(t) for t in ties], unique,
                                 on_boundary, unbounded, cert, strong, reasons)
        return m, report

    def coercivity_check(self, f):
        """
        Growth of f away from its minimizer

        Coercive when the minimizer is off the grid boundary and, on the shells
        in the outer half of the largest ball around it that fits in the grid,
        f - min f stays above delta0 and increases up to a 2 h L slack.

        Returns:
            dict: verdict with reasons
        """
        grid = f.grid
        best = int(np.argmin(np.where(f.domain_mask, f.values, INF)))
        low = float(f.values[best])
        if grid.boundary_mask[best]:
            return {'coercive': False, 'reasons': ["minimum attained on the grid boundary"], 'minimizer': best}

        point = grid.points[best]
        reach = float(min(np.min(point - np.asarray(grid.lower)), np.min(np.asarray(grid.upper) - point)))
        m = self.shell_minima(f, best, f.values - low, 'growth', max_radius=reach)
        outer = (m.radii >= reach / 2 - 1e-12) & ~m.empty
        t, v = m.radii[outer], m.values[outer]
        reasons = []
        if t.size == 0:
            return {'coercive': False, 'reasons': ["no shells in the outer half of the grid"], 'minimizer': best}

        low_growth = v <= delta0(t, self.eps_fp)
        if low_growth.any():
            reasons.append(f"shell minimum does not exceed min f at radius {float(t[low_growth][0]):.3g}")
        slack = 2.0 * grid.max_spacing * f.lipschitz_estimate()
        with np.errstate(invalid='ignore'):
            drops = np.flatnonzero(np.diff(v) < -slack)
        if drops.size:
            reasons.append(f"shell minima decrease after radius {float(t[drops[0]]):.3g}")
        return {'coercive': not reasons, 'reasons': reasons, 'minimizer': best}


_default = ModulusAnalyzer()


def firm_modulus(f, x, s, tolerance=None, max_radius=None):
    return _default.firm_modulus(f, x, s, tolerance, max_radius)


def total_convexity_modulus(f, x, max_radius=None, subgradient_points=None):
    return _default.total_convexity_modulus(f, x, max_radius, subgradient_points)


def wellposedness_modulus(f, s, mask=None, max_radius=None):
    return _default.wellposedness_modulus(f, s, mask, max_radius)


def uniform_firm_modulus(f, x, subgradient_points, max_radius=None):
    return _default.uniform_firm_modulus(f, x, subgradient_points, max_radius)


def coercivity_check(f):
    return _default.coercivity_check(f)['coercive']
