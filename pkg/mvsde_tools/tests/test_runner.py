import json
import math
import os

import pytest
from astropy.utils.data import get_pkg_data_filename
from numpy.testing import assert_allclose

from mvsde_tools import conf
from mvsde_tools.runner import rio
from mvsde_tools.runner.main import main, metrics_ledger, run_experiment
from mvsde_tools.utils.exceptions import (AcceptanceError,
                                          ConfigValidationError)
from mvsde_tools.utils.io import read_csv, read_manifest


def _small_config():
    with open(get_pkg_data_filename('data/small_ou.json')) as fin:
        return json.load(fin)


def _run(tmpdir, name, config=None, **kwargs):
    outdir = tmpdir.join(name).strpath
    return run_experiment(config or _small_config(), outdir=outdir,
                          **kwargs)


def test_load_config():
    config = rio.load_config(get_pkg_data_filename('data/small_ou.json'))
    assert config.name == 'small_ou'
    assert config.pipeline == ['simulate', 'metrics', 'fit', 'check']
    assert config.integrator.observation_times()[-1] == 2.0
    assert len(rio.config_hash(config)) == 64
    assert rio.config_hash(config) == rio.config_hash(
        rio.load_config(_small_config()))


@pytest.mark.parametrize('name', ['ou_minimal', 'ou_rate', 'reflected_bm',
                                  'granular_media', 'reflection_coupling'])
def test_shipped_configs_validate(name):
    from mvsde_tools import runner
    path = os.path.join(os.path.dirname(runner.__file__), 'data',
                        f'{name}.json')
    assert rio.load_config(path).name == name


def test_unknown_model():
    with pytest.raises(ConfigValidationError) as exc:
        rio.load_config(get_pkg_data_filename('data/unknown_model.json'))
    assert exc.value.pointer == '/model/name'


def test_invalid_configs(tmpdir):
    doc = _small_config()
    doc['integrator'].pop('seed')
    with pytest.raises(ConfigValidationError) as exc:
        rio.load_config(doc)
    assert exc.value.pointer == '/integrator/seed'

    doc = _small_config()
    doc['integrator']['bogus'] = 1
    with pytest.raises(ConfigValidationError) as exc:
        rio.load_config(doc)
    assert exc.value.pointer == '/integrator/bogus'

    doc = _small_config()
    del doc['rate_fit']
    with pytest.raises(ConfigValidationError, match='needs rate_fit'):
        rio.load_config(doc)

    with pytest.raises(OSError, match='does not exist'):
        rio.load_config(tmpdir.join('missing.json').strpath)


def test_run_experiment(tmpdir):
    result = _run(tmpdir, 'a')
    assert result.files == ['trajectory.csv', 'distances.csv',
                            'metrics.csv', 'rate.csv', 'checks.csv']
    for name in result.files + ['manifest.json']:
        assert os.path.isfile(os.path.join(result.outdir, name))

    assert result.certificate.lam > 0
    assert result.checks == {'B1': True}
    assert 0 < result.noise_floors['w1'] < 0.5

    metrics = read_csv(os.path.join(result.outdir, 'metrics.csv'))
    assert list(metrics['metric']) == ['w1']
    assert list(metrics['n_bins']) == [0]
    dist = read_csv(os.path.join(result.outdir, 'distances.csv'))
    assert dist['value'][0] > dist['value'][-1]

    manifest = read_manifest(os.path.join(result.outdir, 'manifest.json'))
    assert manifest['seeds'] == {'integrator': 1, 'reference': 101}
    assert manifest['stages'] == ['simulate', 'metrics', 'fit', 'check']
    assert manifest['acceptance_failures'] == []
    assert sorted(manifest['files']) == sorted(result.files)


@pytest.mark.parametrize('n_workers', [2, 8])
def test_rerun_reproduces_files(tmpdir, n_workers):
    with conf.set_temp('block_size', 64):
        a = _run(tmpdir, 'a')
        b = _run(tmpdir, 'b', n_workers=n_workers)
    assert a.manifest['files'] == b.manifest['files']
    assert a.manifest['config_hash'] == b.manifest['config_hash']

    report = rio.compare_runs(os.path.join(a.outdir, 'manifest.json'),
                              os.path.join(b.outdir, 'manifest.json'))
    assert len(report) == 0


def test_compare_runs_reports_differences(tmpdir):
    a = _run(tmpdir, 'a')
    doc = _small_config()
    doc['integrator']['seed'] = 2
    b = _run(tmpdir, 'b', config=doc)
    assert a.noise_floors == b.noise_floors
    report = rio.compare_runs(os.path.join(a.outdir, 'manifest.json'),
                              os.path.join(b.outdir, 'manifest.json'))
    assert 'trajectory.csv' in set(report['file'])

    # distances agree within three noise floors
    floored = report[report['basis'] == 'noise_floor']
    assert set(floored['file']) == {'distances.csv', 'metrics.csv'}
    assert set(floored['key']) == {'w1:value'}
    assert_allclose(floored['tolerance'], 3 * a.noise_floors['w1'])
    assert (floored['max_abs_diff'] > 0).all()
    assert not floored['exceeds'].any()

    # moments have no noise floor and must match exactly
    exact = report[report['file'] == 'trajectory.csv']
    assert (exact['basis'] == 'exact').all()
    assert exact['exceeds'].any()

    with conf.set_temp('compare_floor_factor', 0.0):
        report = rio.compare_runs(os.path.join(a.outdir, 'manifest.json'),
                                  os.path.join(b.outdir, 'manifest.json'))
    assert report[report['key'] == 'w1:value']['exceeds'].all()

    loose = {key: 1e6 for key in report['key']}
    report = rio.compare_runs(os.path.join(a.outdir, 'manifest.json'),
                              os.path.join(b.outdir, 'manifest.json'),
                              tolerances=loose)
    assert not report['exceeds'].any()


def test_existing_outputs(tmpdir):
    _run(tmpdir, 'a')
    with pytest.raises(OSError, match='exists'):
        _run(tmpdir, 'a')
    _run(tmpdir, 'a', overwrite=True)


def test_stage_subset(tmpdir):
    result = _run(tmpdir, 'a', stages=['check'])
    assert result.files == ['checks.csv']
    with pytest.raises(ValueError, match='Unknown stages'):
        _run(tmpdir, 'b', stages=['plot'])
    with pytest.raises(ConfigValidationError, match='needs coupling'):
        _run(tmpdir, 'c', stages=['couple'])


def test_acceptance_failure_still_writes(tmpdir):
    doc = _small_config()
    doc['acceptance'] = {'min_rate': 100.0, 'checks_pass': True}
    with pytest.raises(AcceptanceError, match='rate'):
        _run(tmpdir, 'a', config=doc)
    manifest = read_manifest(tmpdir.join('a', 'manifest.json').strpath)
    assert len(manifest['acceptance_failures']) == 1
    assert os.path.isfile(tmpdir.join('a', 'rate.csv').strpath)


def test_pde_stage(tmpdir):
    doc = _small_config()
    doc['pde'] = {'a': -4.0, 'b': 4.0, 'M': 40, 'T': 0.5,
                  'observe_every': 0.25,
                  'initial': [{'kind': 'gaussian', 'mean': 1.0, 'std': 0.5},
                              {'kind': 'uniform'}],
                  'tol': 1e-6, 'T_max': 20.0}
    result = _run(tmpdir, 'a', config=doc, stages=['pde'])
    assert result.files == ['pde_density.csv', 'pde_l1.csv']
    density = read_csv(os.path.join(result.outdir, 'pde_density.csv'))
    assert len(density) == 2 * 3 * 40
    times, l1 = result.curves['pde_l1_0']
    assert_allclose(times, [0, 0.25, 0.5])
    assert l1[0] > l1[-1]


def test_metrics_ledger(tmpdir):
    points = get_pkg_data_filename('data/points_2d.csv')
    ledger = tmpdir.join('ledger.csv').strpath
    row = metrics_ledger(points, points, metric='w1', ledger=ledger)
    assert row['instance_id'][0] == 'points_2d.csv:points_2d.csv'
    assert row['value'][0] == 0
    assert row['noise_floor'][0] >= 0

    metrics_ledger(points, points, metric='wp', ledger=ledger,
                   instance_id='second', p=2)
    tab = read_csv(ledger)
    assert list(tab['instance_id']) == ['points_2d.csv:points_2d.csv',
                                        'second']
    assert json.loads(tab['params'][1]) == {'p': 2}
    assert list(tab['n_bins']) == [0, 0]

    row = metrics_ledger(points, points, metric='tv', ledger=ledger,
                         instance_id='binned')
    assert row['value'][0] == 0
    # a single Freedman-Diaconis bin per axis is split in two
    assert row['n_bins'][0] == 4
    assert list(read_csv(ledger)['n_bins']) == [0, 0, 4]


def test_main_schema(capsys):
    assert main(['schema']) == 0
    schema = json.loads(capsys.readouterr().out)
    assert 'integrator' in schema['properties']


def test_main_rates(capsys):
    assert main(['rates', 'harris', '1', '1', '0.5', '0.5']) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == 'lam,delta'
    lam, delta = map(float, lines[1].split(','))
    assert_allclose(lam, math.log(2))
    assert_allclose(delta, 0.5)


def test_main_run(tmpdir):
    outdir = tmpdir.join('cli').strpath
    path = get_pkg_data_filename('data/small_ou.json')
    assert main(['--outdir', outdir, 'check', path]) == 0
    assert os.path.isfile(os.path.join(outdir, 'checks.csv'))
    assert os.path.isfile(os.path.join(outdir, 'run.log'))
