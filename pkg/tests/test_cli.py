import os
import csv
import json

import pytest
from click.testing import CliRunner

import ugd.cli
from ugd.cli import cli
from ugd.exceptions import NumericalError
from ugd.io import read_graph, read_features, GRAPH_FILES
from ugd.manifest import PipelineManifest, MANIFEST_FILE

ETC = os.path.join(os.path.dirname(os.path.dirname(__file__)), 'etc')
SMALL_SBM = ['--n', '60', '--k', '2', '--d', '8', '--p-in', '0.3', '--p-out', '0.02', '--seed', '3']


def run(*args, **kwargs):
    return CliRunner().invoke(cli, [str(a) for a in args], catch_exceptions=False, **kwargs)


def read_csv(path):
    with open(path) as fp:
        return list(csv.DictReader(fp))


@pytest.fixture
def configs(tmp_path):
    paths = {}
    for name, data in (('noise', {'feature_ratio': 0.2, 'structure_ratio': 0.1, 'seed': 1}),
                       ('denoise', {'fd': {'epochs_per_step': 2, 'hidden': [4, 3]}, 'max_iters': 2}),
                       ('cls', {'epochs': 5})):
        paths[name] = tmp_path / '{}.json'.format(name)
        paths[name].write_text(json.dumps(data))
    return paths


def test_gen_sbm_is_deterministic(tmp_path):
    for name in ('a', 'b'):
        result = run('gen-sbm', *SMALL_SBM, '--out', tmp_path / name)
        assert result.exit_code == 0, result.output
        assert 'n=60' in result.output
    for name in GRAPH_FILES:
        assert (tmp_path / 'a' / name).read_bytes() == (tmp_path / 'b' / name).read_bytes()
    manifest = PipelineManifest.read(str(tmp_path / 'a'))
    assert manifest.command == 'gen-sbm'
    assert manifest.outputs == sorted(GRAPH_FILES)
    assert manifest.input_graph_hash is None


def test_identity_denoise_keeps_edges(tmp_path, sbm_dir):
    noisy = tmp_path / 'noisy'
    result = run('inject', '--graph', sbm_dir, '--structure-ratio', '0.1', '--feature-ratio', '0.2',
                 '--seed', '1', '--out', noisy)
    assert result.exit_code == 0, result.output
    ledger = json.loads((noisy / 'ledger.json').read_text())
    assert len(ledger['corrupted_nodes']) == 12

    clean = tmp_path / 'clean'
    result = run('denoise', '--graph', noisy, '--theta', '-1', '--epsilon', '0', '--epochs', '2', '--out', clean)
    assert result.exit_code == 0, result.output
    assert (clean / 'graph.edges').read_bytes() == (noisy / 'graph.edges').read_bytes()
    report = json.loads((clean / 'report.json').read_text())
    assert report['converged'] and len(report['iterations']) == 1
    assert 'wall_time' not in report['iterations'][0]
    manifest = PipelineManifest.read(str(clean))
    assert 'report.json' in manifest.outputs
    assert manifest.input_graph_hash is not None


def test_theta_override_keeps_config_warmup_gap(tmp_path, sbm_dir):
    path = tmp_path / 'ugd.json'
    path.write_text(json.dumps({'theta_schedule': {'main_theta': 0.05, 'warmup_theta': -0.05}}))
    result = run('denoise', '--graph', sbm_dir, '--config', path, '--theta', '-1', '--epsilon', '0',
                 '--epochs', '2', '--out', tmp_path / 'clean')
    assert result.exit_code == 0, result.output
    assert (tmp_path / 'clean' / 'graph.edges').read_bytes() == (sbm_dir / 'graph.edges').read_bytes()
    report = json.loads((tmp_path / 'clean' / 'report.json').read_text())
    assert report['converged'] and len(report['iterations']) == 1


def test_inject_is_deterministic(tmp_path, sbm_dir):
    for name in ('a', 'b'):
        run('inject', '--graph', sbm_dir, '--noise-config', os.path.join(ETC, 'noise-sample.json'),
            '--out', tmp_path / name)
    for name in GRAPH_FILES + ('ledger.json',):
        assert (tmp_path / 'a' / name).read_bytes() == (tmp_path / 'b' / name).read_bytes()


def test_missing_graph_is_an_io_error(tmp_path):
    result = run('denoise', '--graph', tmp_path / 'nowhere', '--out', tmp_path / 'out')
    assert result.exit_code == 3
    assert 'error: graph-format:' in result.output


def test_missing_linqs_files(tmp_path):
    result = run('ingest', '--dir', tmp_path, '--name', 'cora', '--out', tmp_path / 'out')
    assert result.exit_code == 3
    assert 'error: io:' in result.output


def test_invalid_parameter(tmp_path, sbm_dir):
    result = run('denoise', '--graph', sbm_dir, '--theta', '2', '--out', tmp_path / 'out')
    assert result.exit_code == 2
    assert 'error: invalid-parameter:' in result.output


def test_usage_error(tmp_path):
    result = run('denoise', '--bogus', '--out', tmp_path)
    assert result.exit_code == 2
    assert 'error: usage:' in result.output


def test_missing_runtime_config(tmp_path):
    result = run('-c', tmp_path / 'missing.cfg', 'gen-sbm', '--out', tmp_path / 'g')
    assert result.exit_code == 2


def test_numerical_error_exit_code(tmp_path, sbm_dir, monkeypatch):
    def explode(*args, **kwargs):
        raise NumericalError('loss diverged')

    monkeypatch.setattr(ugd.cli, 'ugd_run', explode)
    result = run('denoise', '--graph', sbm_dir, '--out', tmp_path / 'out')
    assert result.exit_code == 4
    assert 'error: numerical: loss diverged' in result.output


def test_weights(tmp_path, sbm_dir):
    out = tmp_path / 'w' / 'weights.tsv'
    result = run('weights', '--graph', sbm_dir, '--out', out)
    assert result.exit_code == 0, result.output
    lines = out.read_text().splitlines()
    assert len(lines) == read_graph(str(sbm_dir)).num_edges
    u, v, w = lines[0].split('\t')
    assert int(u) < int(v)
    assert -1.0 <= float(w) <= 1.0
    assert (tmp_path / 'w' / MANIFEST_FILE).exists()


def test_fd(tmp_path, sbm_dir):
    out = tmp_path / 'x.features'
    result = run('fd', '--graph', sbm_dir, '--epochs', '3', '--out', out)
    assert result.exit_code == 0, result.output
    assert 'recon=' in result.output
    assert read_features(str(out)).shape == (60, 8)


def test_ablate_with_ledger(tmp_path, sbm_dir):
    noisy = tmp_path / 'noisy'
    run('inject', '--graph', sbm_dir, '--structure-ratio', '0.2', '--seed', '2', '--out', noisy)
    out = tmp_path / 'ablate'
    result = run('ablate', '--graph', noisy, '--theta', '0.3', '--epochs', '2', '--variant', 'no-hnp',
                 '--variant', 'no-fr', '--ledger', noisy / 'ledger.json', '--out', out)
    assert result.exit_code == 0, result.output
    rows = read_csv(out / 'ablation.csv')
    assert [r['variant'] for r in rows] == ['no-hnp', 'no-fr']
    assert rows[0]['initial_edges'] == rows[0]['final_edges']
    assert 'precision' in rows[1] and 'chance' in rows[1]
    assert (out / 'no-fr' / 'report.json').exists()
    assert 'no-fr/graph.edges' in PipelineManifest.read(str(out)).outputs


def test_eval(tmp_path, sbm_dir, configs):
    out = tmp_path / 'eval'
    result = run('eval', '--graph', sbm_dir, '--cls-config', configs['cls'], '--seeds', '2', '--out', out)
    assert result.exit_code == 0, result.output
    with open(out / 'results.csv') as fp:
        assert fp.readline().strip() == 'variant,seed,val_acc,test_acc'
    rows = read_csv(out / 'results.csv')
    assert [(r['variant'], r['seed']) for r in rows] == [('input', '0'), ('input', '1')]
    assert all(0.0 <= float(r['test_acc']) <= 1.0 for r in rows)
    assert 'evaluation' in result.output


def test_eval_needs_splits(tmp_path):
    graph = tmp_path / 'g'
    (tmp_path / 'toy.content').write_text('p1 1 0 A\np2 0 1 B\n')
    (tmp_path / 'toy.cites').write_text('p1 p2\n')
    assert run('ingest', '--dir', tmp_path, '--name', 'toy', '--out', graph).exit_code == 0
    result = run('eval', '--graph', graph, '--out', tmp_path / 'eval')
    assert result.exit_code == 2


def test_bench(tmp_path, sbm_dir, configs):
    out = tmp_path / 'bench'
    result = run('bench', '--graph', sbm_dir, '--noise-config', configs['noise'], '--config', configs['denoise'],
                 '--cls-config', configs['cls'], '--seeds', '2', '--variant', 'none', '--variant', 'full',
                 '--out', out)
    assert result.exit_code == 0, result.output
    rows = read_csv(out / 'results.csv')
    assert [(r['seed'], r['variant']) for r in rows] == [('0', 'none'), ('0', 'full'), ('1', 'none'), ('1', 'full')]
    summary = read_csv(out / 'summary.csv')
    assert [s['variant'] for s in summary] == ['none', 'full']
    assert set(PipelineManifest.read(str(out)).outputs) == {'results.csv', 'summary.csv'}


@pytest.mark.slow
def test_bench_preset_writes_every_variant_and_seed(tmp_path):
    out = tmp_path / 'bench'
    result = run('bench', '--preset', 'paper-synthetic', '--out', out)
    assert result.exit_code == 0, result.output
    rows = read_csv(out / 'results.csv')
    assert len(rows) == 30
    assert {r['seed'] for r in rows} == {str(s) for s in range(5)}
    assert len(read_csv(out / 'summary.csv')) == 6


def test_bench_preset_and_graph_exclusive(tmp_path, sbm_dir):
    result = run('bench', '--preset', 'paper-synthetic', '--graph', sbm_dir, '--out', tmp_path / 'out')
    assert result.exit_code == 2


def test_sweep(tmp_path, sbm_dir, configs):
    out = tmp_path / 'sweep'
    result = run('sweep', '--graph', sbm_dir, '--noise-config', configs['noise'], '--config', configs['denoise'],
                 '--cls-config', configs['cls'], '--seeds', '1', '--axis', 'feature', '--ratios', '0,0.4',
                 '--out', out)
    assert result.exit_code == 0, result.output
    rows = read_csv(out / 'results.csv')
    assert [float(r['ratio']) for r in rows] == [0.0, 0.0, 0.4, 0.4]
    assert 'full accuracy drop:' in result.output


def test_tune(tmp_path, sbm_dir, configs):
    out = tmp_path / 'tune'
    result = run('tune', '--graph', sbm_dir, '--config', configs['denoise'], '--cls-config', configs['cls'],
                 '--seeds', '1', '--thetas', '0.4,0.1', '--out', out)
    assert result.exit_code == 0, result.output
    assert [float(r['theta']) for r in read_csv(out / 'tune.csv')] == [0.1, 0.4]
    assert json.loads((out / 'best.json').read_text())['main_theta'] in (0.1, 0.4)


def test_help_lists_config_defaults():
    result = run('denoise', '--help')
    assert result.exit_code == 0
    assert 'theta_schedule.main_theta=' in result.output
