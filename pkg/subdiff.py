"""
Subdifferential Estimation
Subgradient sets from Fenchel-Young gaps, one-sided directional derivatives,
dom of the subdifferential and the domain chain dom M u int dom f* in dom d(f*)
"""

import logging
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

import settings
from conjugate import LegendreTransformer
from exceptions import NoAdmissibleStep, PointOutsideDomain
from grid_core import INF

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SubgradientSet:
    """Dual grid points s whose Fenchel-Young gap at x is within tolerance"""

    point: int
    members: np.ndarray
    gaps: np.ndarray
    tolerance: np.ndarray
    dual_points: np.ndarray

    @property
    def empty(self):
        return self.members.size == 0

    def __len__(self):
        return int(self.members.size)

    def extreme_members(self, limit=5):
        """Up to `limit` members spread over the set: smallest gap first, then coordinate extremes"""
        if self.empty:
            return np.asarray([], dtype=np.int64)
        chosen = [int(self.members[0])]
        for axis in range(self.dual_points.shape[1]):
            chosen.append(int(self.members[np.argmin(self.dual_points[:, axis])]))
            chosen.append(int(self.members[np.argmax(self.dual_points[:, axis])]))
        return np.asarray(list(dict.fromkeys(chosen))[:limit], dtype=np.int64)

    def to_dict(self):
        return {
            'point': self.point,
            'members': [int(m) for m in self.members],
            'gaps': [float(g) for g in self.gaps],
        }


@dataclass(frozen=True)
class DirectionalDerivative:
    """One-sided derivative f'(x, d) along an integer grid step"""

    point: int
    direction: tuple
    steps: tuple
    value: float
    quotients: list = field(default_factory=list)

    def to_dict(self):
        return {
            'point': self.point,
            'direction': list(self.direction),
            'steps': list(self.steps),
            'value': self.value,
            'quotients': list(self.quotients),
        }


def subgradient_tolerance(f, conj, x, c=settings.SUBGRADIENT_C):
    """tau_sub(s) = c * h * (1 + ||s||_* + local slope of f at x) for every dual point"""
    h = max(f.grid.max_spacing, conj.dual_grid.max_spacing)
    dual_norms = f.norm.dual.norm(conj.dual_grid.points)
    return c * h * (1.0 + dual_norms + f.local_slope(x))


def subgradients(f, conj, x, tolerance=None):
    """
    Estimate the subdifferential of f at a grid point

    Args:
        f (GridFunction): Primal function
        conj (ConjugateResult): f* on a dual grid
        x: Grid point (flat index or coordinates)
        tolerance (float): Gap threshold; defaults to the scale-aware tau_sub

    Returns:
        SubgradientSet: trusted dual points with gap <= tolerance, ascending gap

    Raises:
        PointOutsideDomain: f(x) = +inf
    """
    flat = f.grid.resolve(x)
    if not np.isfinite(f.values[flat]):
        raise PointOutsideDomain(f"f(x) = +inf at grid index {flat}")
    gaps = conj.gaps(flat)
    if tolerance is None:
        tol = subgradient_tolerance(f, conj, flat)
    else:
        tol = np.full(gaps.shape, float(tolerance))
    hits = np.flatnonzero(conj.trusted & (gaps <= tol))
    order = hits[np.argsort(gaps[hits], kind='stable')]
    return SubgradientSet(flat, order, gaps[order], tol[order], conj.dual_grid.points[order])


def exact_subgradients(f, conj, x, eps=settings.EPS_FP):
    """Subgradients whose Fenchel-Young gap vanishes up to floating point"""
    flat = f.grid.resolve(x)
    if not np.isfinite(f.values[flat]):
        raise PointOutsideDomain(f"f(x) = +inf at grid index {flat}")
    return subgradients(f, conj, flat, tolerance=eps * (1.0 + abs(f.values[flat])))


def integer_step(grid, d, max_denominator=16):
    """Smallest integer index step whose coordinate direction matches d"""
    d = np.atleast_1d(np.asarray(d, dtype=float))
    if d.shape != (grid.dim,) or not np.any(d):
        raise ValueError(f"Direction must be a nonzero {grid.dim}-vector, got {d.tolist()}")
    q = d / np.asarray(grid.spacing)
    q = q / np.max(np.abs(q))
    fracs = [Fraction(float(v)).limit_denominator(max_denominator) for v in q]
    den = int(np.lcm.reduce([fr.denominator for fr in fracs]))
    steps = np.asarray([int(fr * den) for fr in fracs], dtype=np.int64)
    return steps // int(np.gcd.reduce(np.abs(steps)))


def combine_quotients(quotients):
    """
    One-sided derivative from quotients q_k = (f(x + k p) - f(x)) / k along rows

    Off-grid steps are NaN. The estimate is the smallest quotient, corrected
    by the linear extrapolation 2 q_1 - q_2 towards step 0 when both are finite;
    equal quotients (a flat or affine run) are reproduced exactly. +inf when
    every on-grid step leaves dom f.
    """
    quotients = np.atleast_2d(np.asarray(quotients, dtype=float))
    with np.errstate(invalid='ignore'):
        best = np.fmin.reduce(quotients, axis=1)
        if quotients.shape[1] >= 2:
            q1, q2 = quotients[:, 0], quotients[:, 1]
            extrapolated = np.isfinite(q1) & np.isfinite(q2)
            best = np.where(extrapolated, np.minimum(best, 2.0 * q1 - q2), best)
    return best


def directional_derivative(f, x, d, k_dd=settings.K_DD):
    """
    Right derivative of f at x along d, from grid difference quotients

    d is snapped to an integer index step p. The quotients
    (f(x + k p) - f(x)) / (k ||p h||) over the first k_dd on-grid steps are
    combined by combine_quotients.

    Returns:
        DirectionalDerivative: value +inf when every on-grid step leaves dom f

    Raises:
        PointOutsideDomain: f(x) = +inf
        NoAdmissibleStep: x + p is already off the grid
    """
    flat = f.grid.resolve(x)
    here = f.values[flat]
    if not np.isfinite(here):
        raise PointOutsideDomain(f"f(x) = +inf at grid index {flat}")
    steps = integer_step(f.grid, d)
    step_vec = steps * np.asarray(f.grid.spacing)
    length = f.norm.norm(step_vec)
    origin = np.asarray(f.grid.multi_index(flat))
    counts = np.asarray(f.grid.counts)

    quotients = []
    for k in range(1, k_dd + 1):
        target = origin + k * steps
        if np.any(target < 0) or np.any(target >= counts):
            break
        value = f.values[f.grid.flat_index(target)]
        quotients.append(float((value - here) / (k * length)) if np.isfinite(value) else INF)

    if not quotients:
        raise NoAdmissibleStep(f"No step along {steps.tolist()} stays on the grid from index {flat}")
    value = float(combine_quotients([quotients])[0])
    return DirectionalDerivative(flat, tuple(float(v) for v in step_vec / length),
                                 tuple(int(s) for s in steps), value, quotients)


def directional_derivatives_towards(f, x, targets, k_dd=settings.K_DD, subgradient_points=None):
    """
    f'(x, u - x) for many grid points u at once

    u - x = m p with p the primitive integer step and m its multiplicity, so
    f'(x, u - x) = m * f'(x, p) by positive homogeneity. Known subgradients s
    at x bound the estimate from below by <u - x, s>. NaN where u = x + p and
    x + 2p is off the grid or outside dom f.
    """
    flat = f.grid.resolve(x)
    here = f.values[flat]
    targets = np.asarray(targets, dtype=np.int64)
    idx = f.grid.multi_indices
    offsets = idx[targets] - idx[flat]
    mult = np.gcd.reduce(np.abs(offsets), axis=1)
    mult = np.where(mult == 0, 1, mult)
    prim = offsets // mult[:, None]
    counts = np.asarray(f.grid.counts)

    quotients = np.full((targets.size, k_dd), np.nan)
    for k in range(1, k_dd + 1):
        moved = idx[flat] + k * prim
        ok = np.all((moved >= 0) & (moved < counts), axis=1)
        if not ok.any():
            continue
        values = f.values[np.ravel_multi_index(tuple(moved[ok].T), f.grid.shape)]
        with np.errstate(invalid='ignore'):
            quotients[ok, k - 1] = np.where(np.isfinite(values), (values - here) / k, INF)
    result = mult * combine_quotients(quotients)
    # a single quotient reproduces f(u) - f(x) exactly when u = x + p; no estimate
    single = (mult == 1) & (np.sum(np.isfinite(quotients), axis=1) < 2)
    result = np.where(single, np.nan, result)

    if subgradient_points is not None and len(subgradient_points):
        step_vectors = offsets * np.asarray(f.grid.spacing)
        support = np.max(step_vectors @ np.asarray(subgradient_points, dtype=float).T, axis=1)
        result = np.maximum(result, support)
    return result


def subdifferential_domain(f, bicon, c=settings.SUBGRADIENT_C):
    """
    dom df at grid resolution

    x is kept when its smallest-gap trusted dual point s (the one attaining f**(x))
    lies off the dual grid boundary and f(x) - f**(x) <= tau_sub(s). A supremum on
    the dual boundary means every subgradient lies outside the dual box.
    """
    if bicon.function is None:
        return np.zeros(f.grid.size, dtype=bool)
    conj = bicon.conjugate
    h = max(f.grid.max_spacing, conj.dual_grid.max_spacing)
    support = conj.dual_grid.points[np.clip(bicon.argmax, 0, None)]
    with np.errstate(invalid='ignore'):
        gap = f.values - bicon.function.values
        tau = c * h * (1.0 + f.norm.dual.norm(support) + f.local_slopes())
        inside = gap <= tau
    return f.domain_mask & bicon.trusted & (bicon.argmax >= 0) & inside


def discrete_subgradient(f, x):
    """
    Midpoint of the one-sided axis slopes of f at x

    Along each axis a grid subgradient lies between the backward and the forward
    difference quotient. Where one side is off the grid or off dom f, the finite
    quotient is used.

    Returns:
        np.ndarray or None: None when an axis has no finite quotient or its
        quotients are out of order
    """
    flat = f.grid.resolve(x)
    here = f.values[flat]
    if not np.isfinite(here):
        raise PointOutsideDomain(f"f(x) = +inf at grid index {flat}")
    table = f.grid.neighbor_table
    s = np.empty(f.grid.dim)
    for axis, h in enumerate(f.grid.spacing):
        back, ahead = table[flat, 2 * axis], table[flat, 2 * axis + 1]
        lo = (here - f.values[back]) / h if back >= 0 and np.isfinite(f.values[back]) else None
        hi = (f.values[ahead] - here) / h if ahead >= 0 and np.isfinite(f.values[ahead]) else None
        if lo is None and hi is None:
            return None
        if lo is not None and hi is not None:
            if lo > hi + settings.EPS_FP * (1.0 + abs(here)) / h:
                return None
            s[axis] = 0.5 * (lo + hi)
        else:
            s[axis] = lo if hi is None else hi
    return s


@dataclass(frozen=True)
class DomainChainReport:
    """Estimated dom M, int dom f*, dom d(f*) on the dual grid and the inclusion verdict"""

    dom_argmin: np.ndarray
    interior_dom_conjugate: np.ndarray
    dom_conjugate_subdiff: np.ndarray
    trusted: np.ndarray
    violations: list
    holds: bool

    def to_dict(self):
        return {
            'holds': self.holds,
            'trusted': int(self.trusted.sum()),
            'dom_argmin': int(self.dom_argmin.sum()),
            'interior_dom_conjugate': int(self.interior_dom_conjugate.sum()),
            'dom_conjugate_subdiff': int(self.dom_conjugate_subdiff.sum()),
            'violations': list(self.violations),
        }


def domain_chain_check(f, dual_grid, conj=None, bicon=None, transformer=None, c=settings.SUBGRADIENT_C):
    """
    Check dom M u int(dom f*) in dom d(f*) on trusted dual points

    dom M: trusted points (the tilted problem has a grid-interior minimizer).
    int dom f*: trusted points off the dual boundary whose axis neighbours are trusted.
    dom d(f*): points where some interior primal x nearly attains f*(s) = <x, s> - f**(x).
    """
    transformer = transformer or LegendreTransformer()
    conj = conj or transformer.fast(f, dual_grid)
    bicon = bicon or transformer.biconjugate(f, dual_grid, conj=conj)
    trusted = conj.trusted

    dom_argmin = trusted.copy()
    table = dual_grid.neighbor_table
    neighbours_trusted = np.all(np.where(table >= 0, trusted[np.clip(table, 0, None)], False), axis=1)
    interior = trusted & neighbours_trusted & ~dual_grid.boundary_mask

    if bicon.function is None:
        dom_sub = np.zeros(dual_grid.size, dtype=bool)
    else:
        inner = bicon.function.restricted(~f.grid.boundary_mask)
        support = transformer.fast(inner, dual_grid).values
        h = max(f.grid.max_spacing, dual_grid.max_spacing)
        tau = c * h * (1.0 + conj.function.local_slopes())
        dom_sub = (conj.values - support) <= tau

    missing = (dom_argmin | interior) & ~dom_sub & trusted
    violations = [int(i) for i in np.flatnonzero(missing)]
    if violations:
        logger.warning(f"Domain chain violated at {len(violations)} dual points for {f.tag or 'function'}")
    return DomainChainReport(dom_argmin, interior, dom_sub, trusted, violations, not violations)
