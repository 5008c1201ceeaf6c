import json

import numpy as np
import pytest

from catalog import constraint_set
from exceptions import EmptyDomain, IoFailure, SchemaViolation
from grid_core import INF, Grid, GridFunction, NormChoice
from moduli import firm_modulus
from report_io import (RunManifest, dumps, read_constraint_set, read_curve, read_grid_function, read_report,
                       sha256_file, to_jsonable, write_constraint_set, write_curve, write_grid_function,
                       write_report)


def _write_json(path, payload):
    path.write_text(json.dumps(payload), encoding='utf-8')
    return path


def test_to_jsonable_handles_extended_reals():
    payload = to_jsonable({'a': np.float64(INF), 'b': float('nan'), 'c': np.arange(3), 'd': np.bool_(True)})
    assert payload == {'a': 'inf', 'b': None, 'c': [0, 1, 2], 'd': True}
    assert to_jsonable(-INF) == '-inf'


def test_dumps_is_deterministic():
    assert dumps({'b': 1, 'a': [1.5, INF]}) == dumps({'a': [1.5, INF], 'b': 1})
    assert dumps({'x': 0.1}).endswith("\n")


def test_grid_function_round_trip(tmp_path):
    grid = Grid.box((-1.0, 1.0), 3, 2)
    values = np.arange(9, dtype=float)
    values[4] = INF
    f = GridFunction(grid, values, tag='sample', norm=NormChoice.LINF)
    path = write_grid_function(f, tmp_path / 'f.json')
    g = read_grid_function(path)
    assert g.grid == grid
    assert g.tag == 'sample'
    assert g.norm is NormChoice.LINF
    assert np.array_equal(g.values, f.values)


def test_grid_function_accepts_inf_tokens(tmp_path):
    path = _write_json(tmp_path / 'f.json', {
        'schema': 'grid-function/1',
        'grid': {'lower': [0.0], 'upper': [1.0], 'counts': [3]},
        'values': [0.0, 'Infinity', '+inf'],
    })
    f = read_grid_function(path)
    assert f.values[0] == 0.0
    assert np.all(np.isinf(f.values[1:]))
    assert f.tag == 'f.json'


@pytest.mark.parametrize('payload', [
    {'schema': 'something-else/1', 'grid': {'lower': [0.0], 'upper': [1.0], 'counts': [3]}, 'values': [0, 0, 0]},
    {'schema': 'grid-function/1', 'grid': {'lower': [0.0], 'upper': [1.0], 'counts': [3]}, 'values': [0, 0]},
    {'schema': 'grid-function/1', 'grid': {'lower': [0.0], 'upper': [1.0]}, 'values': [0, 0, 0]},
    {'schema': 'grid-function/1', 'grid': {'lower': [1.0], 'upper': [0.0], 'counts': [3]}, 'values': [0, 0, 0]},
    {'schema': 'grid-function/1', 'grid': {'lower': [0.0], 'upper': [1.0], 'counts': [3]}, 'values': [0, 'x', 0]},
    {'schema': 'grid-function/1', 'grid': {'lower': [0.0], 'upper': [1.0], 'counts': [3]}, 'values': [0, True, 0]},
])
def test_grid_function_schema_violations(tmp_path, payload):
    path = _write_json(tmp_path / 'bad.json', payload)
    with pytest.raises(SchemaViolation):
        read_grid_function(path)


def test_all_infinite_values_have_an_empty_domain(tmp_path):
    path = _write_json(tmp_path / 'f.json', {
        'schema': 'grid-function/1',
        'grid': {'lower': [0.0], 'upper': [1.0], 'counts': [3]},
        'values': ['inf', 'inf', 'inf'],
    })
    with pytest.raises(EmptyDomain):
        read_grid_function(path)


def test_invalid_json_and_missing_files(tmp_path):
    broken = tmp_path / 'broken.json'
    broken.write_text("{not json", encoding='utf-8')
    with pytest.raises(SchemaViolation):
        read_report(broken)
    with pytest.raises(IoFailure):
        read_report(tmp_path / 'missing.json')
    with pytest.raises(IoFailure):
        read_curve(tmp_path / 'missing.csv')


def test_write_failure_is_reported(tmp_path):
    blocker = tmp_path / 'file'
    blocker.write_text("x", encoding='utf-8')
    with pytest.raises(IoFailure):
        write_report({'a': 1}, blocker / 'nested' / 'report.json')


def test_curve_columns(tmp_path, quadratic_1d):
    m = firm_modulus(quadratic_1d, [0.5], [0.5], max_radius=0.2)
    path = write_curve(m, tmp_path / 'curve.csv')
    frame = read_curve(path)
    assert list(frame.columns) == ['t', 'value', 'empty_flag', 'witness']
    assert len(frame) == m.radii.size
    assert np.allclose(frame['value'].to_numpy(), m.values)


def test_constraint_set_round_trips(tmp_path):
    grid = Grid.box((-2.0, 2.0), 41, 2)
    for name in ('box', 'two-point'):
        S = constraint_set(name, grid)
        T = read_constraint_set(write_constraint_set(S, tmp_path / f'{name}.json'))
        assert T.name == name
        assert np.array_equal(T.mask, S.mask)


def test_constraint_set_without_members_field(tmp_path):
    path = _write_json(tmp_path / 'S.json', {
        'schema': 'constraint-set/1',
        'grid': {'lower': [0.0, 0.0], 'upper': [1.0, 1.0], 'counts': [3, 3]},
    })
    with pytest.raises(SchemaViolation):
        read_constraint_set(path)


def test_manifest_hashes_artifacts(tmp_path):
    report = write_report({'verdict': 'PASS'}, tmp_path / 'out' / 'report.json')
    manifest = RunManifest('verify-paper', {'experiment': ['cor4']})
    manifest.add(report, tmp_path / 'out')
    path = manifest.write(tmp_path / 'out' / 'manifest.json')
    data = read_report(path)
    assert data['schema'] == 'run-manifest/1'
    assert data['artifacts'] == [{'path': 'report.json', 'sha256': sha256_file(report),
                                  'bytes': report.stat().st_size}]
    assert data['config']['seed'] == manifest.config['seed']
