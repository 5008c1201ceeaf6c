from concurrent.futures import ThreadPoolExecutor

import pytest

from experiments import EXPERIMENTS, ExperimentResult, ExperimentRunner, resolve_names
from report_io import read_report


@pytest.fixture
def runner():
    return ExperimentRunner(points_2d=41, probes=20, num_workers=1)


def test_result_bookkeeping():
    result = ExperimentResult('demo')
    assert result.check("first", True)
    assert not result.check("second", False, observed=3)
    result.check("third", False)
    assert not result.passed
    assert result.first_failure == "second"
    assert "FAIL" in result.summary()
    payload = result.to_dict()
    assert payload['checks'][1] == {'property': "second", 'holds': False, 'observed': 3}


def test_error_takes_precedence():
    result = ExperimentResult('demo')
    result.check("fine", True)
    result.error = "RuntimeError: boom"
    assert not result.passed
    assert result.first_failure == "RuntimeError: boom"


def test_resolve_names():
    assert resolve_names(None) == EXPERIMENTS
    assert resolve_names(['all']) == EXPERIMENTS
    assert resolve_names(['cor4', 'prop6', 'cor4']) == ['cor4', 'prop6']
    with pytest.raises(ValueError):
        resolve_names(['cor4', 'nothing'])


def test_every_experiment_has_a_method(runner):
    for name in EXPERIMENTS:
        assert callable(getattr(runner, name.replace('-', '_')))


def test_farthest_point_experiment_passes(runner):
    (result,) = runner.run(['cor4'])
    assert result.passed, result.first_failure
    assert result.details['verdicts']['singleton'].verdict == 'SINGLETON-CONSISTENT'
    assert result.details['verdicts']['square'].verdict == 'WITNESS'


def test_norm_dependence_experiment_passes(runner, tmp_path):
    (result,) = runner.run(['prop4'], tmp_path)
    assert result.passed, result.first_failure
    assert read_report(tmp_path / 'prop4.json')['passed']
    assert read_report(tmp_path / 'summary.json') == {'passed': True, 'experiments': {'prop4': True}}
    manifest = read_report(tmp_path / 'manifest.json')
    assert [a['path'] for a in manifest['artifacts']] == ['prop4.json', 'summary.json']


def test_run_one_captures_errors(runner, monkeypatch):
    def explode(result):
        raise RuntimeError("boom")

    monkeypatch.setattr(runner, 'cor4', explode)
    result = runner.run_one('cor4')
    assert not result.passed
    assert result.error == "RuntimeError: boom"


@pytest.fixture(scope='module')
def coarse_runner():
    return ExperimentRunner(points_2d=101, dual_points_2d=101, probes=20, num_workers=1)


@pytest.mark.parametrize('name', ['ex1', 'ex2', 'lemma1', 'prop6', 'domain-chain', 'oracle',
                                  'biconjugate', 'fenchel-young', 'prop5', 'prop5b'])
def test_experiment_passes_on_coarse_grids(coarse_runner, name):
    result = coarse_runner.run_one(name)
    assert result.error is None
    assert result.passed, result.first_failure


def test_chain_experiment_passes_without_adjusted_reports(coarse_runner):
    result = coarse_runner.run_one('cor3-chain')
    assert result.passed, result.first_failure
    chain, expectations = result.checks
    assert chain['broken'] == []
    assert expectations['mismatched'] == []


def test_classifications_are_shared_between_threads(coarse_runner):
    with ThreadPoolExecutor(max_workers=4) as executor:
        reports = list(executor.map(coarse_runner.classification, ['quadratic-2d'] * 4))
    assert all(r is reports[0] for r in reports)
    functions = [coarse_runner.function('quadratic-2d') for _ in range(2)]
    assert functions[0] is functions[1]
