"""
Report I/O
Deterministic JSON reports, CSV modulus curves, grid-function and constraint-set
files, and run manifests with content hashes
"""

import hashlib
import json
import logging
import math
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

import settings
from exceptions import InvalidValue, IoFailure, SchemaViolation
from grid_core import INF, Grid, GridFunction

logger = logging.getLogger(__name__)

GRID_FUNCTION_SCHEMA = "grid-function/1"
CONSTRAINT_SET_SCHEMA = "constraint-set/1"
MANIFEST_SCHEMA = "run-manifest/1"

_INF_TOKENS = {'inf', '+inf', 'infinity', '+infinity'}


def to_jsonable(obj):
    """Plain JSON types; +inf becomes the string "inf" and NaN becomes None"""
    if hasattr(obj, 'to_dict'):
        return to_jsonable(obj.to_dict())
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [to_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        value = float(obj)
        if math.isnan(value):
            return None
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        return value
    if isinstance(obj, Path):
        return str(obj)
    return obj


def dumps(obj):
    """Serialize with fixed key order and shortest round-trip floats"""
    return json.dumps(to_jsonable(obj), indent=2, sort_keys=True, allow_nan=False) + "\n"


def _write_text(path, text):
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        tmp = path.with_name(path.name + ".tmp")
        tmp.write_text(text, encoding="utf-8")
        os.replace(tmp, path)
    except OSError as e:
        raise IoFailure(f"Cannot write {path}: {str(e)}") from e
    return path


def _read_json(path):
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise IoFailure(f"Cannot read {path}: {str(e)}") from e
    try:
        return json.loads(text)
    except json.JSONDecodeError as e:
        raise SchemaViolation(f"{path} is not valid JSON: {str(e)}") from e


def write_report(report, path):
    """Write any report (dict or object with to_dict) as deterministic JSON"""
    written = _write_text(path, dumps(report))
    logger.info(f"Wrote {written}")
    return written


def read_report(path):
    return _read_json(path)


def write_curve(modulus, path):
    """Modulus curve as CSV with columns t, value, empty_flag, witness"""
    frame = modulus.to_frame() if hasattr(modulus, 'to_frame') else pd.DataFrame(modulus)
    return _write_text(path, frame.to_csv(index=False, float_format=repr, lineterminator="\n"))


def read_curve(path):
    try:
        return pd.read_csv(path)
    except OSError as e:
        raise IoFailure(f"Cannot read {path}: {str(e)}") from e


def _parse_value(token):
    if isinstance(token, str):
        if token.strip().lower() in _INF_TOKENS:
            return INF
        raise SchemaViolation(f"Unexpected value token: {token!r}")
    if isinstance(token, bool) or not isinstance(token, (int, float)):
        raise SchemaViolation(f"Unexpected value token: {token!r}")
    return float(token)


def _parse_grid(header):
    if not isinstance(header, dict):
        raise SchemaViolation("Missing grid header")
    try:
        return Grid(tuple(header['lower']), tuple(header['upper']), tuple(header['counts']))
    except (KeyError, TypeError) as e:
        raise SchemaViolation(f"Malformed grid header: {str(e)}") from e
    except ValueError as e:
        raise SchemaViolation(f"Invalid grid header: {str(e)}") from e


def grid_function_payload(f):
    return {
        'schema': GRID_FUNCTION_SCHEMA,
        'tag': f.tag,
        'norm': f.norm.value,
        'grid': f.grid.to_dict(),
        'values': [float(v) for v in f.values],
    }


def write_grid_function(f, path):
    return write_report(grid_function_payload(f), path)


def read_grid_function(path):
    """
    Load a grid function file

    Returns:
        GridFunction: values in row-major order, "inf" tokens read as +inf

    Raises:
        SchemaViolation: wrong schema tag, malformed header or value count mismatch
        IoFailure: the file cannot be read
    """
    data = _read_json(path)
    if not isinstance(data, dict) or data.get('schema') != GRID_FUNCTION_SCHEMA:
        raise SchemaViolation(f"{path}: expected schema {GRID_FUNCTION_SCHEMA}")
    grid = _parse_grid(data.get('grid'))
    raw = data.get('values')
    if not isinstance(raw, list):
        raise SchemaViolation(f"{path}: 'values' must be a list")
    if len(raw) != grid.size:
        raise SchemaViolation(f"{path}: header announces {grid.size} values, file has {len(raw)}")
    values = np.asarray([_parse_value(v) for v in raw], dtype=float)
    try:
        return GridFunction(grid, values, tag=data.get('tag') or Path(path).name, norm=data.get('norm', 'l2'))
    except (InvalidValue, ValueError) as e:
        raise SchemaViolation(f"{path}: {str(e)}") from e


def write_constraint_set(S, path):
    payload = {
        'schema': CONSTRAINT_SET_SCHEMA,
        'name': S.name,
        'grid': S.grid.to_dict(),
    }
    if S.representation == 'points':
        payload['points'] = [[float(v) for v in p] for p in S.points]
    else:
        payload['mask'] = [int(v) for v in S.mask]
    return write_report(payload, path)


def read_constraint_set(path):
    """Load a constraint set given as a mask or as a point list"""
    from projections import ConstraintSet

    data = _read_json(path)
    if not isinstance(data, dict) or data.get('schema') != CONSTRAINT_SET_SCHEMA:
        raise SchemaViolation(f"{path}: expected schema {CONSTRAINT_SET_SCHEMA}")
    grid = _parse_grid(data.get('grid'))
    name = data.get('name') or Path(path).stem
    if 'mask' in data:
        mask = data['mask']
        if not isinstance(mask, list) or len(mask) != grid.size:
            raise SchemaViolation(f"{path}: mask must hold {grid.size} entries")
        return ConstraintSet(name, grid, np.asarray(mask, dtype=bool))
    if 'points' in data:
        pts = np.asarray(data['points'], dtype=float)
        if pts.ndim != 2 or pts.shape[1] != grid.dim:
            raise SchemaViolation(f"{path}: points must be {grid.dim}-dimensional")
        return ConstraintSet.from_points(grid, pts, name)
    raise SchemaViolation(f"{path}: neither 'mask' nor 'points' present")


def sha256_file(path, chunk_size=1 << 16):
    digest = hashlib.sha256()
    try:
        with open(path, 'rb') as fh:
            for chunk in iter(lambda: fh.read(chunk_size), b''):
                digest.update(chunk)
    except OSError as e:
        raise IoFailure(f"Cannot hash {path}: {str(e)}") from e
    return digest.hexdigest()


@dataclass
class RunManifest:
    """Tool version, configuration echo and hashed artifacts of one run"""

    command: str
    arguments: dict = field(default_factory=dict)
    config: dict = field(default_factory=settings.config_echo)
    artifacts: list = field(default_factory=list)

    def add(self, path, root=None):
        path = Path(path)
        name = str(path.relative_to(root)) if root else path.name
        self.artifacts.append({'path': name, 'sha256': sha256_file(path), 'bytes': path.stat().st_size})

    def to_dict(self):
        return {
            'schema': MANIFEST_SCHEMA,
            'version': settings.VERSION,
            'command': self.command,
            'arguments': self.arguments,
            'config': self.config,
            'artifacts': sorted(self.artifacts, key=lambda a: a['path']),
        }

    def write(self, path):
        return write_report(self, path)
