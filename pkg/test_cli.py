import json

import pytest

from catalog import catalog_function
from cli import EXIT_PASS, EXIT_PROPERTY_FAILED, EXIT_USAGE, UsageError, main, parse_grid_spec, parse_vector
from report_io import read_curve, read_report, write_grid_function


def _stdout_json(capsys):
    return json.loads(capsys.readouterr().out)


def test_parse_helpers():
    assert parse_vector("1,2.5").tolist() == [1.0, 2.5]
    assert parse_grid_spec("-1,1,5", 2).counts == (5, 5)
    with pytest.raises(UsageError):
        parse_vector("1,a")
    with pytest.raises(UsageError):
        parse_grid_spec("1,2", 1)


def test_catalog_listing(capsys):
    assert main(['catalog']) == EXIT_PASS
    payload = _stdout_json(capsys)
    assert len(payload['functions']) == 15
    assert 'two-point' in payload['sets']


def test_conjugate_of_catalog_entry(capsys):
    assert main(['conjugate', '--catalog', 'quadratic-1d', '--dual-grid=-1,1,21']) == EXIT_PASS
    payload = _stdout_json(capsys)
    assert payload['summary']['trusted'] == 21
    assert payload['conjugate']['schema'] == 'grid-function/1'


def test_conjugate_of_file(tmp_path, capsys):
    path = write_grid_function(catalog_function('abs-1d'), tmp_path / 'abs.json')
    out = tmp_path / 'conj.json'
    assert main(['conjugate', '--input', str(path), '--method', 'brute', '--out', str(out)]) == EXIT_PASS
    assert read_report(out)['summary']['method'] == 'brute'
    assert "trusted dual points" in capsys.readouterr().out


def test_usage_errors():
    assert main(['conjugate', '--catalog', 'no-such-function']) == EXIT_USAGE
    assert main(['conjugate', '--catalog', 'quadratic-1d', '--dual-grid', '1,2']) == EXIT_USAGE
    assert main(['modulus', '--catalog', 'quadratic-1d', '--kind', 'firm', '--at', '0.5']) == EXIT_USAGE
    assert main(['modulus', '--catalog', 'quadratic-1d', '--kind', 'wellposed']) == EXIT_USAGE
    assert main(['farthest', '--set', 'star', '--points', '41']) == EXIT_USAGE
    with pytest.raises(SystemExit):
        main(['verify-paper', '--experiment', 'nothing'])


def test_not_a_subgradient_is_a_property_failure():
    code = main(['modulus', '--catalog', 'quadratic-1d', '--kind', 'firm', '--at', '0', '--subgradient', '1'])
    assert code == EXIT_PROPERTY_FAILED


def test_total_modulus_curve(tmp_path):
    out = tmp_path / 'total.csv'
    code = main(['modulus', '--catalog', 'abs-1d', '--kind', 'total', '--at', '0', '--radii', '0.5',
                 '--out', str(out)])
    assert code == EXIT_PASS
    frame = read_curve(out)
    assert list(frame.columns) == ['t', 'value', 'empty_flag', 'witness']
    assert frame['t'].max() <= 0.5 + 1e-12


def test_wellposed_modulus_json(capsys):
    assert main(['modulus', '--catalog', 'quadratic-1d', '--kind', 'wellposed', '--tilt', '0.5']) == EXIT_PASS
    payload = _stdout_json(capsys)
    assert payload['minimizer']['strong']
    assert payload['certificate']['positive']


def test_project_and_tchebychev(capsys):
    assert main(['project', '--f', 'quadratic-2d', '--set', 'disk', '--tilt', '2,0', '--points', '41']) == EXIT_PASS
    assert _stdout_json(capsys)['strong']
    code = main(['tchebychev', '--f', 'quadratic-2d', '--set', 'two-point', '--points', '41', '--probes', '10'])
    assert code == EXIT_PROPERTY_FAILED
    assert _stdout_json(capsys)['verdict'] == 'FAIL'


def test_farthest_and_convexity(capsys):
    assert main(['farthest', '--set', 'two-point', '--points', '41', '--probes', '10']) == EXIT_PASS
    assert _stdout_json(capsys)['verdict'] == 'WITNESS'
    assert main(['convexity', '--set', 'box', '--points', '41', '--probes', '10']) == EXIT_PASS
    assert _stdout_json(capsys)['verdict'] == 'CONVEX-CONSISTENT'


def test_verify_paper_is_deterministic(tmp_path, capsys):
    args = ['verify-paper', '--experiment', 'cor4', '--points-2d', '41', '--probes', '20']
    assert main(args + ['--out', str(tmp_path / 'a')]) == EXIT_PASS
    assert main(args + ['--out', str(tmp_path / 'b')]) == EXIT_PASS
    assert "PASS: 1 experiments" in capsys.readouterr().out
    first = read_report(tmp_path / 'a' / 'manifest.json')
    second = read_report(tmp_path / 'b' / 'manifest.json')
    assert first == second
    assert {a['path'] for a in first['artifacts']} == {'cor4.json', 'summary.json'}


def test_verify_paper_prints_json_summary_without_out(capsys):
    args = ['verify-paper', '--experiment', 'cor4', '--points-2d', '41', '--probes', '20']
    assert main(args) == EXIT_PASS
    lines = capsys.readouterr().out.splitlines()
    assert "PASS: 1 experiments" in lines
    payload = json.loads("\n".join(lines[lines.index('{'):]))
    assert payload == {'experiments': {'cor4': True}, 'passed': True}
