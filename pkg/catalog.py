"""
Function Catalog
Analytic test functions with known conjugates, gradients and expected verdicts,
plus the constraint sets used by the projection experiments
"""

import logging
import threading
from dataclasses import dataclass, field

import numpy as np

import settings
from exceptions import OutsideOpenBox, UnknownCatalogEntry
from grid_core import INF, Grid, GridFunction, NormChoice, build_grid_function
from projections import ConstraintSet

logger = logging.getLogger(__name__)

# Points within this distance of the box [-1, 1]^2 count as inside
BOX_TOL = 1e-9

VERDICTS = [
    'convex_lsc',
    'adequate',
    'strongly_adequate',
    'essentially_firmly_subdifferentiable',
    'totally_convex_on_dom_subdiff',
    'totally_convex_on_dom',
    'essentially_strictly_convex',
    'essentially_strongly_convex',
]


def _all(value, **overrides):
    verdicts = {name: value for name in VERDICTS}
    verdicts.update(overrides)
    return verdicts


def _as_points(x, dim):
    """Coerce a single point or an (N, dim) array; report whether the input was a single point"""
    arr = np.asarray(x, dtype=float)
    single = arr.ndim <= 1
    return arr.reshape(-1, dim), single


def _finish(values, single):
    return float(values[0]) if single else values


def _in_box(pts):
    return np.all(np.abs(pts) <= 1.0 + BOX_TOL, axis=1)


def _box_factors(pts):
    """1 - x^2 and 1 - y^2, clamped at 0 from below and exactly 0 on the box edges"""
    on_edge = np.abs(np.abs(pts) - 1.0) <= BOX_TOL
    factors = np.where(on_edge, 0.0, np.clip(1.0 - pts ** 2, 0.0, None))
    return factors[:, 0], factors[:, 1]


def example1(x):
    """
    -((1 - x^2)(1 - y^2))^(1/4) on [-1, 1]^2, +inf outside

    The product is formed before the fractional power.
    """
    pts, single = _as_points(x, 2)
    a, b = _box_factors(pts)
    values = np.where(_in_box(pts), -np.power(a * b, 0.25), INF)
    return _finish(values, single)


def example2(x):
    """-sqrt((1 - x^2)(1 - y^2)) on [-1, 1]^2, +inf outside"""
    pts, single = _as_points(x, 2)
    a, b = _box_factors(pts)
    values = np.where(_in_box(pts), -np.sqrt(a * b), INF)
    return _finish(values, single)


def example1_hessian(x):
    """
    Closed-form second derivatives of example1 at an interior point

    Args:
        x: Point of the open box (-1, 1)^2

    Returns:
        dict: hxx, hyy, hxy and det

    Raises:
        OutsideOpenBox: x is not in (-1, 1)^2
    """
    p = np.asarray(x, dtype=float).reshape(-1)
    if p.shape != (2,) or not np.all(np.abs(p) < 1.0):
        raise OutsideOpenBox(f"Hessian needs a point of (-1, 1)^2, got {p.tolist()}")
    u, v = p
    a, b = 1.0 - u ** 2, 1.0 - v ** 2
    hxx = (u ** 2 + 2.0) / 4.0 * (b / a ** 7) ** 0.25
    hyy = (v ** 2 + 2.0) / 4.0 * (a / b ** 7) ** 0.25
    hxy = -(u * v / 4.0) * (a * b) ** -0.75
    det = (u ** 2 + v ** 2 + 2.0) / (8.0 * (a * b) ** 1.5)
    return {'hxx': float(hxx), 'hyy': float(hyy), 'hxy': float(hxy), 'det': float(det)}


def finite_difference_hessian(func, x, step=1e-3):
    """Central-difference Hessian of a scalar function of a 2D point"""
    p = np.asarray(x, dtype=float)
    e = np.eye(2) * step
    h = np.zeros((2, 2))
    f0 = func(p)
    for i in range(2):
        h[i, i] = (func(p + e[i]) - 2.0 * f0 + func(p - e[i])) / step ** 2
    h[0, 1] = h[1, 0] = (func(p + e[0] + e[1]) - func(p + e[0] - e[1])
                         - func(p - e[0] + e[1]) + func(p - e[0] - e[1])) / (4.0 * step ** 2)
    return h


def _example1_gradient(x):
    pts, single = _as_points(x, 2)
    a, b = _box_factors(pts)
    with np.errstate(divide='ignore', invalid='ignore'):
        gx = 0.5 * pts[:, 0] * a ** -0.75 * b ** 0.25
        gy = 0.5 * pts[:, 1] * b ** -0.75 * a ** 0.25
    grad = np.stack([gx, gy], axis=1)
    return grad[0] if single else grad


def _example2_gradient(x):
    pts, single = _as_points(x, 2)
    a, b = _box_factors(pts)
    with np.errstate(divide='ignore', invalid='ignore'):
        gx = pts[:, 0] * np.sqrt(b / a)
        gy = pts[:, 1] * np.sqrt(a / b)
    grad = np.stack([gx, gy], axis=1)
    return grad[0] if single else grad


def _half_square(x):
    return 0.5 * np.sum(np.atleast_2d(x) ** 2, axis=1)


def _negative_half_square(x):
    return -0.5 * np.sum(np.atleast_2d(x) ** 2, axis=1)


def _abs(x):
    return np.sum(np.abs(np.atleast_2d(x)), axis=1)


def _quartic(x):
    return np.atleast_2d(x)[:, 0] ** 4


def _quartic_conjugate(s):
    s = np.atleast_2d(s)[:, 0]
    return 3.0 * np.abs(s) ** (4.0 / 3.0) / 4.0 ** (4.0 / 3.0)


def _exp(x):
    return np.exp(np.atleast_2d(x)[:, 0])


def _exp_conjugate(s):
    s = np.atleast_2d(s)[:, 0]
    with np.errstate(divide='ignore', invalid='ignore'):
        values = np.where(s > 0, s * np.log(s) - s, INF)
    return np.where(s == 0, 0.0, values)


def _negative_entropy(x):
    x = np.atleast_2d(x)[:, 0]
    inside = (x >= -BOX_TOL) & (x <= 1.0 + BOX_TOL)
    c = np.clip(x, 0.0, 1.0)
    with np.errstate(divide='ignore', invalid='ignore'):
        values = np.where(c > 0, c * np.log(c), 0.0)
    return np.where(inside, values, INF)


def _negative_entropy_conjugate(s):
    s = np.atleast_2d(s)[:, 0]
    return np.where(s <= 1.0, np.exp(np.minimum(s, 1.0) - 1.0), s)


AFFINE_SLOPE = 0.6


def _affine(x):
    return AFFINE_SLOPE * np.atleast_2d(x)[:, 0]


def _affine_conjugate(s):
    s = np.atleast_2d(s)[:, 0]
    return np.where(np.abs(s - AFFINE_SLOPE) <= 1e-9, 0.0, INF)


def _box_indicator(x):
    return np.where(np.all(np.abs(np.atleast_2d(x)) <= 1.0 + BOX_TOL, axis=1), 0.0, INF)


def _singleton_indicator(x):
    return np.where(np.all(np.abs(np.atleast_2d(x)) <= BOX_TOL, axis=1), 0.0, INF)


def _unit_ball_inf_indicator(s):
    return np.where(np.all(np.abs(np.atleast_2d(s)) <= 1.0 + BOX_TOL, axis=1), 0.0, INF)


def _double_well(x):
    x = np.atleast_2d(x)[:, 0]
    return np.minimum(np.abs(x - 1.0), np.abs(x + 1.0))


def _double_well_envelope(x):
    """Convex envelope of the double well: 0 on [-1, 1], |x| - 1 outside"""
    return np.maximum(np.abs(np.atleast_2d(x)[:, 0]) - 1.0, 0.0)


def _double_well_conjugate(s):
    s = np.atleast_2d(s)[:, 0]
    return np.where(np.abs(s) <= 1.0 + BOX_TOL, np.abs(s), INF)


def _half_square_linf(x):
    return 0.5 * np.max(np.abs(np.atleast_2d(x)), axis=1) ** 2


def _half_square_l1(s):
    return 0.5 * np.sum(np.abs(np.atleast_2d(s)), axis=1) ** 2


@dataclass
class CatalogEntry:
    """Analytic test function with its oracles and recommended grids"""

    id: str
    dim: int
    evaluator: object
    description: str
    conjugate: object = None
    gradient: object = None
    expected: dict = field(default_factory=dict)
    primal_bounds: tuple = settings.DEFAULT_PRIMAL_BOUNDS
    dual_bounds: tuple = settings.DEFAULT_DUAL_BOUNDS
    points: int = None
    dual_points: int = None
    norm: NormChoice = NormChoice.L2
    envelope: object = None

    def __post_init__(self):
        if self.points is None:
            self.points = settings.DEFAULT_POINTS if self.dim == 2 else 401
        if self.dual_points is None:
            self.dual_points = settings.DEFAULT_POINTS if self.dim == 2 else 301

    def grid(self, points=None):
        return Grid.box(self.primal_bounds, points or self.points, self.dim)

    def dual_grid(self, points=None):
        return Grid.box(self.dual_bounds, points or self.dual_points, self.dim)

    def sample(self, grid=None):
        return build_grid_function(grid or self.grid(), self.evaluator, tag=self.id, norm=self.norm)

    def analytic_conjugate(self, dual_grid):
        """Analytic f* on a dual grid, or None when unknown"""
        if self.conjugate is None:
            return None
        return np.asarray(self.conjugate(dual_grid.points), dtype=float).reshape(-1)

    def to_dict(self):
        return {
            'id': self.id,
            'dim': self.dim,
            'description': self.description,
            'norm': self.norm.value,
            'primal_bounds': list(self.primal_bounds),
            'dual_bounds': list(self.dual_bounds),
            'points': self.points,
            'dual_points': self.dual_points,
            'analytic_conjugate': self.conjugate is not None,
            'expected': dict(self.expected),
        }


CATALOG_ENTRIES = [
    CatalogEntry('quadratic-1d', 1, _half_square, "1/2 x^2, self-conjugate",
                 conjugate=_half_square, gradient=lambda x: np.asarray(x, dtype=float),
                 expected=_all(True)),
    CatalogEntry('quadratic-2d', 2, _half_square, "1/2 ||x||^2, self-conjugate",
                 conjugate=_half_square, gradient=lambda x: np.asarray(x, dtype=float),
                 expected=_all(True)),
    CatalogEntry('abs-1d', 1, _abs, "|x|; conjugate is the indicator of [-1, 1]",
                 conjugate=_unit_ball_inf_indicator, expected=_all(False, convex_lsc=True)),
    CatalogEntry('l1-norm-2d', 2, _abs, "||x||_1; conjugate is the indicator of the l-inf unit ball",
                 conjugate=_unit_ball_inf_indicator,
                 expected={'convex_lsc': True, 'essentially_strictly_convex': False,
                           'essentially_firmly_subdifferentiable': False}),
    CatalogEntry('quartic-1d', 1, _quartic, "x^4", conjugate=_quartic_conjugate,
                 gradient=lambda x: 4.0 * np.asarray(x, dtype=float) ** 3, expected=_all(True)),
    CatalogEntry('exp-1d', 1, _exp, "e^x; convex and not coercive", conjugate=_exp_conjugate,
                 gradient=lambda x: np.exp(np.asarray(x, dtype=float)), expected=_all(True)),
    CatalogEntry('negative-entropy-1d', 1, _negative_entropy, "x log x on [0, 1], +inf outside",
                 conjugate=_negative_entropy_conjugate, expected=_all(True)),
    CatalogEntry('affine-1d', 1, _affine, f"{AFFINE_SLOPE} x; conjugate is the indicator of {{{AFFINE_SLOPE}}}",
                 conjugate=_affine_conjugate, gradient=lambda x: np.full(np.shape(x), AFFINE_SLOPE),
                 expected=_all(False, convex_lsc=True)),
    CatalogEntry('box-indicator-1d', 1, _box_indicator, "indicator of [-1, 1]; conjugate |s|",
                 conjugate=_abs, expected=_all(False, convex_lsc=True)),
    CatalogEntry('singleton-indicator-1d', 1, _singleton_indicator, "indicator of {0}; conjugate 0",
                 conjugate=lambda s: np.zeros(len(np.atleast_2d(s))), expected=_all(True)),
    CatalogEntry('negative-quadratic-2d', 2, _negative_half_square, "-1/2 ||x||^2, nonconvex",
                 expected=_all(False)),
    CatalogEntry('double-well-1d', 1, _double_well, "min(|x - 1|, |x + 1|), nonconvex",
                 conjugate=_double_well_conjugate, envelope=_double_well_envelope, expected=_all(False)),
    CatalogEntry('quadratic-linf-2d', 2, _half_square_linf, "1/2 ||x||_inf^2; conjugate 1/2 ||s||_1^2",
                 conjugate=_half_square_l1, norm=NormChoice.LINF,
                 expected={'convex_lsc': True, 'essentially_strictly_convex': False}),
    CatalogEntry('example1', 2, example1, "-((1 - x^2)(1 - y^2))^(1/4) on [-1, 1]^2",
                 gradient=_example1_gradient,
                 expected=_all(True, totally_convex_on_dom=False)),
    CatalogEntry('example2', 2, example2, "-sqrt((1 - x^2)(1 - y^2)) on [-1, 1]^2",
                 gradient=_example2_gradient,
                 expected=_all(True, totally_convex_on_dom=False, totally_convex_on_dom_subdiff=False)),
]


class FunctionCatalog:
    """Looks up catalog entries and caches their sampled grid functions"""

    def __init__(self, entries=None):
        self.entries = {e.id: e for e in (entries or CATALOG_ENTRIES)}
        self.cache = {}
        self._lock = threading.Lock()

    def ids(self):
        return list(self.entries)

    def get(self, entry_id):
        try:
            return self.entries[entry_id]
        except KeyError:
            raise UnknownCatalogEntry(f"Unknown catalog entry: {entry_id}") from None

    def function(self, entry_id, grid=None):
        """Sampled GridFunction of an entry (cached per grid)"""
        entry = self.get(entry_id)
        grid = grid or entry.grid()
        key = (entry_id, grid)
        with self._lock:
            if key not in self.cache:
                logger.info(f"Sampling {entry_id} on {grid.describe()} grid...")
                self.cache[key] = entry.sample(grid)
            return self.cache[key]

    def listing(self):
        return [self.entries[k].to_dict() for k in sorted(self.entries)]


def random_convex_function(grid, seed=settings.SEED, pieces=6):
    """Max of random affine pieces plus a random nonnegative quadratic, sampled on grid"""
    rng = np.random.default_rng(seed)
    slopes = rng.uniform(-1.5, 1.5, size=(pieces, grid.dim))
    offsets = rng.uniform(-1.0, 1.0, size=pieces)
    weight = rng.uniform(0.0, 1.0)
    pts = grid.points
    values = np.max(pts @ slopes.T + offsets, axis=1) + weight * 0.5 * np.sum(pts ** 2, axis=1)
    return GridFunction(grid, values, tag=f"random-convex-{seed}")


def _disk(pts, center, radius):
    return np.linalg.norm(pts - np.asarray(center), axis=1) <= radius + BOX_TOL


def _box_set(grid):
    pts = grid.points
    return ConstraintSet('box', grid, np.all((pts >= -BOX_TOL) & (pts <= 1.0 + BOX_TOL), axis=1))


def _disk_set(grid):
    return ConstraintSet('disk', grid, _disk(grid.points, (0.0, 0.0), 1.0))


def _half_plane_set(grid):
    pts = grid.points
    return ConstraintSet('half-plane', grid, pts[:, 0] + pts[:, 1] <= 0.5 + BOX_TOL)


def _polygon_set(grid):
    """Triangle with vertices (-1, -1), (1, -1), (-1, 1)"""
    pts = grid.points
    mask = (pts[:, 0] >= -1.0 - BOX_TOL) & (pts[:, 1] >= -1.0 - BOX_TOL) & (pts[:, 0] + pts[:, 1] <= BOX_TOL)
    return ConstraintSet('polygon', grid, mask)


def _annulus_set(grid):
    r = np.linalg.norm(grid.points, axis=1)
    return ConstraintSet('annulus', grid, (r >= 0.5 - BOX_TOL) & (r <= 1.0 + BOX_TOL))


def _crescent_set(grid):
    pts = grid.points
    outside_bite = np.linalg.norm(pts - np.asarray([0.5, 0.0]), axis=1) >= 0.8 - BOX_TOL
    return ConstraintSet('crescent', grid, _disk(pts, (0.0, 0.0), 1.0) & outside_bite)


def _two_point_set(grid):
    return ConstraintSet.from_points(grid, [[-1.0, 0.0], [1.0, 0.0]], 'two-point')


def _singleton_set(grid):
    return ConstraintSet.from_points(grid, [[0.5, 0.5]], 'singleton')


def _segment_set(grid):
    pts = grid.points
    return ConstraintSet('segment', grid, (np.abs(pts[:, 1]) <= BOX_TOL) & (np.abs(pts[:, 0]) <= 1.0 + BOX_TOL))


def _circle_set(grid):
    """Grid points lying on the unit circle up to rounding"""
    r = np.linalg.norm(grid.points, axis=1)
    return ConstraintSet('circle', grid, np.abs(r - 1.0) <= BOX_TOL, 'points')


def _square_set(grid):
    return ConstraintSet.from_points(grid, [[-1.0, -1.0], [-1.0, 1.0], [1.0, -1.0], [1.0, 1.0]], 'square')


SET_BUILDERS = {
    'box': _box_set,
    'disk': _disk_set,
    'half-plane': _half_plane_set,
    'polygon': _polygon_set,
    'annulus': _annulus_set,
    'crescent': _crescent_set,
    'two-point': _two_point_set,
    'singleton': _singleton_set,
    'segment': _segment_set,
    'circle': _circle_set,
    'square': _square_set,
}

CONVEX_SETS = ['box', 'disk', 'half-plane', 'polygon', 'singleton', 'segment']
NONCONVEX_SETS = ['annulus', 'crescent', 'two-point', 'circle', 'square']
DETECTOR_SETS = ['box', 'disk', 'half-plane', 'polygon', 'singleton', 'annulus', 'crescent', 'two-point']
FARTHEST_SETS = ['singleton', 'two-point', 'segment', 'circle', 'square']


def constraint_set(name, grid=None):
    """Build a named constraint set on a 2D grid"""
    if name not in SET_BUILDERS:
        raise UnknownCatalogEntry(f"Unknown constraint set: {name}")
    grid = grid or Grid.box(settings.DEFAULT_PRIMAL_BOUNDS, settings.DEFAULT_POINTS, 2)
    if grid.dim != 2:
        raise ValueError(f"Constraint sets live on 2D grids, got dim {grid.dim}")
    return SET_BUILDERS[name](grid)


_default = FunctionCatalog()


def get_entry(entry_id):
    return _default.get(entry_id)


def catalog_function(entry_id, grid=None):
    return _default.function(entry_id, grid)


def list_entries():
    return _default.listing()
