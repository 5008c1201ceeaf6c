"""
Workbench Settings
Numerical tolerances, default grids and environment-driven knobs
"""

import os

from dotenv import load_dotenv

load_dotenv()

VERSION = "1.0.0"

# Fenchel-Young / positivity floor (absolute, on catalog scales)
EPS_FP = 1e-9

# Two candidate values tie when they differ by at most TIE_RTOL * (1 + |value|)
TIE_RTOL = 1e-12

# tau_sub = SUBGRADIENT_C * h * (1 + ||s|| + local slope)
SUBGRADIENT_C = 2.0

# Admissible steps used by one-sided difference quotients
K_DD = 4

# Minimizers closer than RESOLUTION_FACTOR * max(h) count as one; certificates skip radii below it
RESOLUTION_FACTOR = 2.0

# tol_bicon = BICONJUGATE_FACTOR * max(h) * Lipschitz estimate
BICONJUGATE_FACTOR = 4.0

# Fraction of the primal extent near the grid boundary where truncation cannot be told apart from geometry
TRUNCATION_BAND = 0.1

DEFAULT_PRIMAL_BOUNDS = (-2.0, 2.0)
DEFAULT_DUAL_BOUNDS = (-3.0, 3.0)
DEFAULT_POINTS = 201


def _env_int(name, default):
    value = os.environ.get(name)
    if value is None or value.strip() == "":
        return default
    try:
        return int(value)
    except ValueError:
        return default


THREADS = max(1, _env_int("LL_THREADS", min(4, os.cpu_count() or 1)))
SEED = _env_int("LL_SEED", 42)
PROBES = _env_int("LL_PROBES", 200)
LOG_LEVEL = os.environ.get("LL_LOG_LEVEL", "INFO").upper()


def config_echo():
    """Settings as a plain dict (echoed into run manifests)"""
    return {
        'version': VERSION,
        'eps_fp': EPS_FP,
        'tie_rtol': TIE_RTOL,
        'subgradient_c': SUBGRADIENT_C,
        'k_dd': K_DD,
        'resolution_factor': RESOLUTION_FACTOR,
        'biconjugate_factor': BICONJUGATE_FACTOR,
        'truncation_band': TRUNCATION_BAND,
        'primal_bounds': list(DEFAULT_PRIMAL_BOUNDS),
        'dual_bounds': list(DEFAULT_DUAL_BOUNDS),
        'points_per_axis': DEFAULT_POINTS,
        'probes': PROBES,
        'seed': SEED,
    }
