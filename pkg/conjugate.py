"""
Conjugation Engine
Discrete Legendre-Fenchel conjugates, biconjugates and boundary trust masks
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

import settings
from grid_core import INF, GridFunction

logger = logging.getLogger(__name__)

# Primal x dual cells evaluated per brute-force block
BRUTE_BLOCK_CELLS = 2_000_000


def tie_tolerance(values, rtol=settings.TIE_RTOL):
    return rtol * (1.0 + np.abs(values))


class LowerHull:
    """Lower convex hull of 1D samples (monotone chain)"""

    @staticmethod
    def vertices(x, v):
        """
        Indices of the hull vertices, left to right

        Collinear middle points are dropped, so consecutive edge slopes
        are strictly increasing.
        """
        hull = []
        for k in range(len(x)):
            while len(hull) >= 2:
                i, j = hull[-2], hull[-1]
                cross = (x[j] - x[i]) * (v[k] - v[i]) - (v[j] - v[i]) * (x[k] - x[i])
                if cross <= 0:
                    hull.pop()
                else:
                    break
            hull.append(k)
        return np.asarray(hull, dtype=np.int64)


def conjugate_1d(x, v, s):
    """
    max_k x_k * s - v_k for every slope in s

    Args:
        x (np.ndarray): Ascending primal coordinates
        v (np.ndarray): Extended-real values at x
        s (np.ndarray): Ascending dual coordinates

    Returns:
        tuple: (values, argmax index into x); (-inf, -1) when v has no finite entry
    """
    finite = np.flatnonzero(np.isfinite(v))
    if finite.size == 0:
        return np.full(s.shape, -INF), np.full(s.shape, -1, dtype=np.int64)
    xs, vs = x[finite], v[finite]
    hull = LowerHull.vertices(xs, vs)
    slopes = np.diff(vs[hull]) / np.diff(xs[hull])
    # first vertex whose outgoing edge is at least as steep as s
    best = hull[np.searchsorted(slopes, s, side='left')]
    return xs[best] * s - vs[best], finite[best]


@dataclass(frozen=True)
class ConjugateResult:
    """f* on a dual grid with per-point maximizers and truncation trust"""

    primal: GridFunction
    function: GridFunction
    trusted: np.ndarray
    argmax: np.ndarray
    interior_values: np.ndarray
    interior_argmax: np.ndarray
    method: str

    @property
    def dual_grid(self):
        return self.function.grid

    @property
    def values(self):
        return self.function.values

    @property
    def trusted_count(self):
        return int(self.trusted.sum())

    def trusted_function(self):
        """f* restricted to trusted dual points, or None when nothing is trusted"""
        if not self.trusted.any():
            return None
        return self.function.restricted(self.trusted)

    def gaps(self, x):
        """Fenchel-Young gap f(x) + f*(s) - <x, s> at every dual point"""
        flat = self.primal.grid.resolve(x)
        point = self.primal.grid.points[flat]
        return self.primal.values[flat] + self.values - self.dual_grid.points @ point

    def summary(self):
        return {
            'method': self.method,
            'dual_points': self.dual_grid.size,
            'trusted': self.trusted_count,
            'untrusted': self.dual_grid.size - self.trusted_count,
        }


@dataclass(frozen=True)
class BiconjugateResult:
    """f** on the primal grid and the convex-lsc consistency test"""

    conjugate: ConjugateResult
    function: GridFunction
    trusted: np.ndarray
    argmax: np.ndarray
    max_error: float
    tolerance: float
    worst_index: int
    convex_lsc_consistent: bool

    def summary(self):
        return {
            'convex_lsc_consistent': self.convex_lsc_consistent,
            'max_error': self.max_error,
            'tolerance': self.tolerance,
            'worst_index': self.worst_index,
            'trusted_primal_points': int(self.trusted.sum()),
        }


class LegendreTransformer:
    """Computes discrete conjugates by brute force or by lower hulls"""

    def __init__(self, num_workers=None, tie_rtol=settings.TIE_RTOL,
                 biconjugate_factor=settings.BICONJUGATE_FACTOR, eps_fp=settings.EPS_FP):
        self.num_workers = num_workers or settings.THREADS
        self.tie_rtol = tie_rtol
        self.biconjugate_factor = biconjugate_factor
        self.eps_fp = eps_fp

    def _check_grids(self, f, dual_grid):
        if f.grid.dim != dual_grid.dim:
            raise ValueError(f"Dual grid has dim {dual_grid.dim}, primal has {f.grid.dim}")

    def _result(self, f, dual_grid, values, argmax, interior_values, interior_argmax, method):
        trusted = interior_values >= values - tie_tolerance(values, self.tie_rtol)
        dual = GridFunction(dual_grid, values, tag=f"{f.tag or 'f'}*", norm=f.norm.dual)
        trusted.setflags(write=False)
        return ConjugateResult(f, dual, trusted, argmax, interior_values, interior_argmax, method)

    def brute(self, f, dual_grid):
        """
        Conjugate by evaluating <x, s> - f(x) at every primal/dual pair

        Args:
            f (GridFunction): Primal function
            dual_grid (Grid): Dual grid, same dimension as f

        Returns:
            ConjugateResult: values, lexicographically smallest maximizers, trust mask
        """
        self._check_grids(f, dual_grid)
        finite = np.flatnonzero(f.domain_mask)
        X = f.grid.points[finite]
        fv = f.values[finite]
        interior_cols = ~f.grid.boundary_mask[finite]
        S = dual_grid.points
        chunk = max(1, BRUTE_BLOCK_CELLS // finite.size)

        def block(start):
            scores = S[start:start + chunk] @ X.T - fv
            rows = np.arange(scores.shape[0])
            best = np.argmax(scores, axis=1)
            if interior_cols.any():
                inner = np.where(interior_cols, scores, -INF)
                inner_best = np.argmax(inner, axis=1)
                inner_vals = inner[rows, inner_best]
                inner_idx = finite[inner_best]
            else:
                inner_vals = np.full(rows.size, -INF)
                inner_idx = np.full(rows.size, -1, dtype=np.int64)
            return scores[rows, best], finite[best], inner_vals, inner_idx

        with ThreadPoolExecutor(max_workers=self.num_workers) as executor:
            parts = list(executor.map(block, range(0, S.shape[0], chunk)))

        values, argmax, inner_vals, inner_idx = (np.concatenate(p) for p in zip(*parts))
        return self._result(f, dual_grid, values, argmax, inner_vals, inner_idx, 'brute')

    def _fast_values(self, values, grid, dual_grid, executor):
        if grid.dim == 1:
            return conjugate_1d(grid.axes[0], values, dual_grid.axes[0])
        if grid.dim != 2:
            raise ValueError(f"Fast conjugation supports dim 1 and 2, got {grid.dim}")

        x1, x2 = grid.axes
        s1, s2 = dual_grid.axes
        n2 = grid.counts[1]
        table = values.reshape(grid.shape)

        # partial conjugate in x2, one row per x1
        rows = list(executor.map(lambda i: conjugate_1d(x2, table[i], s2), range(grid.counts[0])))
        partial = np.stack([r[0] for r in rows])
        inner_j = np.stack([r[1] for r in rows])

        # rows without finite values drop out as +inf
        negated = -partial
        cols = list(executor.map(lambda b: conjugate_1d(x1, negated[:, b], s1), range(dual_grid.counts[1])))
        result = np.stack([c[0] for c in cols], axis=1)
        best_i = np.stack([c[1] for c in cols], axis=1)

        best_j = np.where(best_i >= 0, inner_j[np.clip(best_i, 0, None), np.arange(dual_grid.counts[1])[None, :]], -1)
        argmax = np.where(best_i >= 0, best_i * n2 + best_j, -1)
        return result.reshape(-1), argmax.reshape(-1)

    def fast(self, f, dual_grid):
        """
        Conjugate through lower hulls of 1D slices

        1D: one hull plus a sorted-slope lookup per dual point. 2D: partial
        conjugation along x2 for every row, then along x1 for every dual column.

        Returns:
            ConjugateResult: same values and trust as brute() up to rounding
        """
        self._check_grids(f, dual_grid)
        interior = np.where(f.grid.boundary_mask, INF, f.values)
        with ThreadPoolExecutor(max_workers=self.num_workers) as executor:
            values, argmax = self._fast_values(f.values, f.grid, dual_grid, executor)
            if np.isfinite(interior).any():
                inner_vals, inner_idx = self._fast_values(interior, f.grid, dual_grid, executor)
            else:
                inner_vals = np.full(dual_grid.size, -INF)
                inner_idx = np.full(dual_grid.size, -1, dtype=np.int64)
        return self._result(f, dual_grid, values, argmax, inner_vals, inner_idx, 'fast')

    def conjugate(self, f, dual_grid, method='fast'):
        logger.info(f"Conjugating {f.tag or 'function'} on {dual_grid.describe()} dual grid ({method})...")
        if method == 'fast':
            return self.fast(f, dual_grid)
        if method == 'brute':
            return self.brute(f, dual_grid)
        raise ValueError(f"Unknown conjugation method: {method}")

    def biconjugate_tolerance(self, f, dual_grid, mask=None):
        h = max(f.grid.max_spacing, dual_grid.max_spacing)
        return self.biconjugate_factor * h * f.lipschitz_estimate(mask) + self.eps_fp

    def biconjugate(self, f, dual_grid, method='fast', conj=None):
        """
        f** from the trusted part of f*

        A primal point is trusted when its biconjugate supremum is attained at a
        dual point off the dual grid boundary. The function is convex-lsc
        consistent when |f** - f| stays within tolerance on trusted primal points.

        Args:
            f (GridFunction): Primal function
            dual_grid (Grid): Dual grid
            method (str): 'fast' or 'brute'
            conj (ConjugateResult): Precomputed f*, reused when given

        Returns:
            BiconjugateResult: f** (None when no dual point is trusted) and the verdict
        """
        conj = conj or self.conjugate(f, dual_grid, method)
        dual_trusted = conj.trusted_function()
        if dual_trusted is None:
            logger.warning(f"No trusted dual points for {f.tag or 'function'}; biconjugate unavailable")
            return BiconjugateResult(conj, None, np.zeros(f.grid.size, dtype=bool),
                                     np.full(f.grid.size, -1, dtype=np.int64),
                                     INF, INF, -1, False)

        second = self.fast(dual_trusted, f.grid) if method == 'fast' else self.brute(dual_trusted, f.grid)
        bicon = GridFunction(f.grid, second.values, tag=f"{f.tag or 'f'}**", norm=f.norm)
        trusted = second.trusted.copy()
        trusted.setflags(write=False)

        tolerance = self.biconjugate_tolerance(f, dual_grid, trusted)
        with np.errstate(invalid='ignore'):
            error = np.abs(bicon.values - f.values)
        error = np.where(trusted, error, 0.0)
        if trusted.any():
            worst = int(np.argmax(error))
            max_error = float(error[worst])
        else:
            worst, max_error = -1, INF
        consistent = bool(trusted.any() and max_error <= tolerance)
        logger.info(f"Biconjugate check for {f.tag or 'function'}: max error {max_error:.3g}, "
                    f"tolerance {tolerance:.3g}, consistent={consistent}")
        return BiconjugateResult(conj, bicon, trusted, second.argmax, max_error, tolerance, worst, consistent)


_default = LegendreTransformer()


def conjugate_brute(f, dual_grid):
    return _default.brute(f, dual_grid)


def conjugate_fast(f, dual_grid):
    return _default.fast(f, dual_grid)


def conjugate(f, dual_grid, method='fast'):
    return _default.conjugate(f, dual_grid, method)


def biconjugate(f, dual_grid, method='fast', conj=None):
    return _default.biconjugate(f, dual_grid, method, conj)

