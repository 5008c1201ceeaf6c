"""
Grid Core
Regular box grids, extended-real grid functions, norms and shells

Extended reals are float64 values where +inf is the only non-finite value
allowed; -inf and NaN are rejected at construction time.
"""

import logging
from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property

import numpy as np

from exceptions import EmptyDomain, InvalidValue

logger = logging.getLogger(__name__)

INF = np.inf


class NormChoice(Enum):
    """Primal norm; the dual norm is fixed by the pairing l2<->l2, l1<->linf"""

    L2 = "l2"
    L1 = "l1"
    LINF = "linf"

    @property
    def dual(self):
        return {NormChoice.L2: NormChoice.L2,
                NormChoice.L1: NormChoice.LINF,
                NormChoice.LINF: NormChoice.L1}[self]

    @property
    def order(self):
        return {NormChoice.L2: 2, NormChoice.L1: 1, NormChoice.LINF: np.inf}[self]

    def norm(self, vectors):
        """Norm of each row of `vectors` (a single vector gives a scalar)"""
        vectors = np.asarray(vectors, dtype=float)
        if vectors.ndim == 1:
            return float(np.linalg.norm(vectors, ord=self.order))
        return np.linalg.norm(vectors, ord=self.order, axis=-1)

    @classmethod
    def parse(cls, text):
        if isinstance(text, NormChoice):
            return text
        return cls(str(text).lower())


@dataclass(frozen=True)
class Grid:
    """Regular box grid: coordinates lower + k * spacing per axis"""

    lower: tuple
    upper: tuple
    counts: tuple

    def __post_init__(self):
        lower = tuple(float(v) for v in self.lower)
        upper = tuple(float(v) for v in self.upper)
        counts = tuple(int(v) for v in self.counts)
        object.__setattr__(self, 'lower', lower)
        object.__setattr__(self, 'upper', upper)
        object.__setattr__(self, 'counts', counts)
        if not (len(lower) == len(upper) == len(counts)) or len(counts) == 0:
            raise ValueError("Grid bounds and counts must have the same positive length")
        for lb, ub, n in zip(lower, upper, counts):
            if not lb < ub:
                raise ValueError(f"Grid axis needs lower < upper, got [{lb}, {ub}]")
            if n < 2:
                raise ValueError(f"Grid axis needs at least 2 points, got {n}")

    @classmethod
    def box(cls, bounds, points, dim):
        """Same bounds and point count on every axis"""
        lb, ub = bounds
        return cls((lb,) * dim, (ub,) * dim, (points,) * dim)

    @property
    def dim(self):
        return len(self.counts)

    @property
    def shape(self):
        return self.counts

    @property
    def size(self):
        return int(np.prod(self.counts))

    @property
    def spacing(self):
        return tuple((ub - lb) / (n - 1) for lb, ub, n in zip(self.lower, self.upper, self.counts))

    @property
    def max_spacing(self):
        return max(self.spacing)

    @property
    def extent(self):
        return tuple(ub - lb for lb, ub in zip(self.lower, self.upper))

    @cached_property
    def axes(self):
        return [lb + np.arange(n) * h for lb, n, h in zip(self.lower, self.counts, self.spacing)]

    @cached_property
    def points(self):
        """All grid points, row-major, shape (size, dim)"""
        mesh = np.meshgrid(*self.axes, indexing='ij')
        return np.stack([m.reshape(-1) for m in mesh], axis=-1)

    @cached_property
    def multi_indices(self):
        """Integer index of every grid point, shape (size, dim)"""
        return np.stack(np.unravel_index(np.arange(self.size), self.shape), axis=-1)

    @cached_property
    def boundary_mask(self):
        idx = self.multi_indices
        counts = np.asarray(self.counts)
        return np.any((idx == 0) | (idx == counts - 1), axis=1)

    def flat_index(self, multi):
        return int(np.ravel_multi_index(tuple(int(i) for i in multi), self.shape))

    def multi_index(self, flat):
        return tuple(int(i) for i in np.unravel_index(int(flat), self.shape))

    def nearest_index(self, point):
        """Flat index of the grid point nearest to `point` (clamped to the box)"""
        point = np.atleast_1d(np.asarray(point, dtype=float))
        if point.shape != (self.dim,):
            raise ValueError(f"Expected a {self.dim}-dimensional point, got {point.tolist()}")
        multi = []
        for p, lb, h, n in zip(point, self.lower, self.spacing, self.counts):
            multi.append(int(np.clip(np.rint((p - lb) / h), 0, n - 1)))
        return self.flat_index(multi)

    def resolve(self, x):
        """Accept a flat index or coordinates and return a flat index"""
        if isinstance(x, (int, np.integer)):
            if not 0 <= int(x) < self.size:
                raise IndexError(f"Grid index {x} outside 0..{self.size - 1}")
            return int(x)
        return self.nearest_index(x)

    def contains(self, point, tol=1e-12):
        point = np.atleast_1d(np.asarray(point, dtype=float))
        return bool(np.all(point >= np.asarray(self.lower) - tol) and
                    np.all(point <= np.asarray(self.upper) + tol))

    def neighbors(self, flat):
        """Flat indices of the axis neighbours (at most 2 * dim) of a grid point"""
        multi = self.multi_index(flat)
        result = []
        for axis in range(self.dim):
            for step in (-1, 1):
                k = multi[axis] + step
                if 0 <= k < self.counts[axis]:
                    moved = list(multi)
                    moved[axis] = k
                    result.append(self.flat_index(moved))
        return result

    @cached_property
    def neighbor_table(self):
        """(size, 2*dim) table of axis neighbours, -1 where the neighbour is off-grid"""
        idx = self.multi_indices
        table = np.full((self.size, 2 * self.dim), -1, dtype=np.int64)
        for axis in range(self.dim):
            for j, step in enumerate((-1, 1)):
                moved = idx.copy()
                moved[:, axis] += step
                ok = (moved[:, axis] >= 0) & (moved[:, axis] < self.counts[axis])
                flat = np.ravel_multi_index(tuple(np.clip(moved, 0, np.asarray(self.counts) - 1).T), self.shape)
                table[:, 2 * axis + j] = np.where(ok, flat, -1)
        return table

    def coordinates(self, flat):
        return self.points[int(flat)]

    def to_dict(self):
        return {
            'dim': self.dim,
            'lower': list(self.lower),
            'upper': list(self.upper),
            'counts': list(self.counts),
        }

    def describe(self):
        return "x".join(str(n) for n in self.counts)


def validate_ext_real(values):
    """Reject NaN and -inf; +inf is the only admissible non-finite value"""
    values = np.asarray(values, dtype=float)
    if np.isnan(values).any():
        raise InvalidValue("Grid function values contain NaN")
    if np.isneginf(values).any():
        raise InvalidValue("Grid function values contain -inf")
    return values


@dataclass(frozen=True)
class GridFunction:
    """Extended-real values sampled on a grid (row-major, one value per grid point)"""

    grid: Grid
    values: np.ndarray
    tag: str = None
    norm: NormChoice = field(default=NormChoice.L2)

    def __post_init__(self):
        values = validate_ext_real(np.array(self.values, dtype=float).reshape(-1))
        if values.size != self.grid.size:
            raise InvalidValue(f"Expected {self.grid.size} values, got {values.size}")
        if not np.isfinite(values).any():
            raise EmptyDomain(f"Grid function {self.tag or ''} is +inf everywhere".strip())
        values.setflags(write=False)
        object.__setattr__(self, 'values', values)
        object.__setattr__(self, 'norm', NormChoice.parse(self.norm))

    @property
    def domain_mask(self):
        return np.isfinite(self.values)

    def value_at(self, x):
        return float(self.values[self.grid.resolve(x)])

    def as_array(self):
        return self.values.reshape(self.grid.shape)

    def tilted(self, s):
        """f - <., s>, +inf stays +inf"""
        s = np.atleast_1d(np.asarray(s, dtype=float))
        with np.errstate(invalid='ignore'):
            shifted = self.values - self.grid.points @ s
        shifted = np.where(self.domain_mask, shifted, INF)
        return GridFunction(self.grid, shifted, tag=self.tag, norm=self.norm)

    def restricted(self, mask):
        """f + indicator of the grid mask"""
        mask = np.asarray(mask, dtype=bool).reshape(-1)
        return GridFunction(self.grid, np.where(mask, self.values, INF), tag=self.tag, norm=self.norm)

    def with_values(self, values, tag=None):
        return GridFunction(self.grid, values, tag=tag or self.tag, norm=self.norm)

    def lipschitz_estimate(self, mask=None):
        """Largest finite-difference slope between axis-adjacent points of dom f (optionally within mask)"""
        table = self.grid.neighbor_table
        region = self.domain_mask if mask is None else self.domain_mask & np.asarray(mask, dtype=bool)
        slopes = [0.0]
        for axis, h in enumerate(self.grid.spacing):
            nxt = table[:, 2 * axis + 1]
            ok = (nxt >= 0) & region
            ok[ok] &= region[nxt[ok]]
            if ok.any():
                diff = np.abs(self.values[nxt[ok]] - self.values[ok]) / h
                slopes.append(float(diff.max()))
        return max(slopes)

    def local_slopes(self):
        """local_slope at every grid point (+inf off dom f)"""
        table = self.grid.neighbor_table
        result = np.zeros(self.grid.size)
        for col in range(table.shape[1]):
            h = self.grid.spacing[col // 2]
            nb = table[:, col]
            ok = (nb >= 0) & self.domain_mask
            ok[ok] &= self.domain_mask[nb[ok]]
            slope = np.zeros(self.grid.size)
            slope[ok] = np.abs(self.values[nb[ok]] - self.values[ok]) / h
            result = np.maximum(result, slope)
        return np.where(self.domain_mask, result, INF)

    def local_slope(self, x):
        """Largest finite-difference slope from x to its in-domain axis neighbours"""
        flat = self.grid.resolve(x)
        here = self.values[flat]
        if not np.isfinite(here):
            return INF
        slope = 0.0
        for nb in self.grid.neighbors(flat):
            if np.isfinite(self.values[nb]):
                dist = np.linalg.norm(self.grid.points[nb] - self.grid.points[flat])
                slope = max(slope, abs(self.values[nb] - here) / dist)
        return slope


def build_grid_function(grid, evaluator, tag=None, norm=NormChoice.L2):
    """
    Sample an evaluator on every grid point

    Args:
        grid (Grid): Sampling grid
        evaluator (callable): Maps an (N, dim) array of points to N extended reals
        tag (str): Provenance (catalog id or file name)
        norm (NormChoice): Norm the function's moduli are measured in

    Returns:
        GridFunction: Sampled function

    Raises:
        EmptyDomain: every value is +inf
        InvalidValue: the evaluator overflowed or produced NaN / -inf
    """
    try:
        with np.errstate(over='raise'):
            values = np.asarray(evaluator(grid.points), dtype=float).reshape(-1)
    except FloatingPointError as e:
        raise InvalidValue(f"Evaluator overflowed on grid {grid.describe()}: {str(e)}") from e
    return GridFunction(grid, values, tag=tag, norm=norm)


@dataclass(frozen=True)
class Shell:
    """Grid points u with | ||u - x|| - t | <= w, the centre itself excluded"""

    center: int
    radius: float
    width: float
    members: np.ndarray
    norm: NormChoice = NormChoice.L2

    @property
    def empty(self):
        return self.members.size == 0

    @property
    def usable(self):
        return not self.empty


def shell(grid, x, t, norm=NormChoice.L2, width=None):
    """
    Discrete sphere of radius t around a grid point

    Args:
        grid (Grid): Grid the shell lives on
        x: Centre (flat index or coordinates)
        t (float): Radius, > 0
        norm (NormChoice): Distance used for the band condition
        width (float): Band half-width, defaults to half the largest spacing

    Returns:
        Shell: Members as flat indices; an empty shell is a reported state
    """
    if not t > 0:
        raise ValueError(f"Shell radius must be positive, got {t}")
    norm = NormChoice.parse(norm)
    center = grid.resolve(x)
    w = grid.max_spacing / 2 if width is None else float(width)
    dist = norm.norm(grid.points - grid.points[center])
    slack = 1e-12 * max(1.0, t)
    members = np.flatnonzero((dist > 0) & (np.abs(dist - t) <= w + slack))
    result = Shell(center, float(t), w, members, norm)
    if result.empty:
        logger.debug(f"Empty shell at index {center}, radius {t}")
    return result


def shell_partition(grid, x, norm=NormChoice.L2, spacing=None):
    """
    Split the grid into disjoint annuli around x

    Band j >= 1 holds the points with (j - 1/2) * dt <= ||u - x|| < (j + 1/2) * dt;
    band 0 is the centre.

    Returns:
        tuple: (band index per grid point, radii t_j = j * dt for j = 1..max band)
    """
    norm = NormChoice.parse(norm)
    center = grid.resolve(x)
    dt = grid.max_spacing if spacing is None else float(spacing)
    dist = norm.norm(grid.points - grid.points[center])
    bands = np.floor(dist / dt + 0.5 + 1e-9).astype(np.int64)
    bands[center] = 0
    radii = dt * np.arange(1, int(bands.max()) + 1)
    return bands, radii


def pairing(points, s):
    """<x, s> for each row x of points"""
    return np.asarray(points, dtype=float) @ np.atleast_1d(np.asarray(s, dtype=float))
