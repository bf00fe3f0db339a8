# tests/test_cli.py
import json
import math

import numpy as np
import pandas as pd
import pytest

from app import cli, main


@pytest.fixture
def simulated(runner, tmp_path):
    """A small simulated model with data, schema and true graph on disk"""
    paths = {name: str(tmp_path / name) for name in ('truth.json', 'graph.csv', 'schema.csv', 'data.csv')}
    result = runner.invoke(cli, [
        'simulate', '--p', '5', '--max-clique', '3', '--strength', '1.5', '-n', '600',
        '--out-model', paths['truth.json'], '--out-graph', paths['graph.csv'],
        '--out-schema', paths['schema.csv'], '--out-data', paths['data.csv'], '--seed', '0',
    ])
    assert result.exit_code == 0, result.output
    return paths


def test_simulate_writes_everything(simulated):
    data = pd.read_csv(simulated['data.csv'])
    assert list(data.columns) == ['X1', 'X2', 'X3', 'X4', 'X5']
    assert len(data) == 600
    with open(simulated['truth.json']) as handle:
        truth = json.load(handle)
    assert truth['method'] == 'truth'
    assert truth['decomposition'] is not None


def test_simulate_is_deterministic(runner, tmp_path):
    outputs = []
    for run in ('a', 'b'):
        model, graph = str(tmp_path / f'{run}.json'), str(tmp_path / f'{run}.csv')
        result = runner.invoke(cli, ['simulate', '--p', '6', '--out-model', model, '--out-graph', graph,
                                     '--seed', '4'])
        assert result.exit_code == 0, result.output
        with open(model) as handle:
            outputs.append(handle.read())
    assert outputs[0] == outputs[1]


def test_importance_and_fit_are_byte_identical(runner, simulated, tmp_path):
    written = []
    for run in ('a', 'b'):
        importance, ranks = str(tmp_path / f'm_{run}.csv'), str(tmp_path / f'r_{run}.csv')
        result = runner.invoke(cli, [
            'importance', '--data', simulated['data.csv'], '--schema', simulated['schema.csv'],
            '--out-importance', importance, '--out-ranks', ranks, '--trees', '10', '--seed', '5',
        ])
        assert result.exit_code == 0, result.output
        model = str(tmp_path / f'model_{run}.json')
        result = runner.invoke(cli, [
            'fit', '--data', simulated['data.csv'], '--schema', simulated['schema.csv'], '--method', 'dgl-cv',
            '--smax', '3', '--out', model, '--seed', '5',
        ])
        assert result.exit_code == 0, result.output
        names = (f'm_{run}.csv', f'r_{run}.csv', f'model_{run}.json')
        written.append([(tmp_path / name).read_bytes() for name in names])
    assert written[0] == written[1]


def test_full_workflow(runner, simulated, tmp_path):
    importance, ranks = str(tmp_path / 'm.csv'), str(tmp_path / 'r.csv')
    result = runner.invoke(cli, [
        '--threads', '2', 'importance', '--data', simulated['data.csv'], '--schema', simulated['schema.csv'],
        '--out-importance', importance, '--out-ranks', ranks, '--trees', '20', '--seed', '0',
    ])
    assert result.exit_code == 0, result.output
    rtilde = pd.read_csv(ranks, index_col=0).to_numpy()
    assert np.isinf(np.diag(rtilde)).all()

    plan = str(tmp_path / 'plan.json')
    result = runner.invoke(cli, ['decompose', '--ranks', ranks, '--smax', '3', '--out', plan])
    assert result.exit_code == 0, result.output
    with open(plan) as handle:
        assert all(len(r['clique']) <= 3 for r in json.load(handle)['records'])

    model = str(tmp_path / 'model.json')
    result = runner.invoke(cli, [
        'fit', '--data', simulated['data.csv'], '--schema', simulated['schema.csv'], '--plan', plan,
        '--method', 'dsf-aic', '--out', model, '--seed', '0',
    ])
    assert result.exit_code == 0, result.output
    assert 'Fitted dsf-aic' in result.output

    sample = str(tmp_path / 'sample.csv')
    result = runner.invoke(cli, ['sample', '--model', model, '-n', '50', '--out', sample, '--seed', '1'])
    assert result.exit_code == 0, result.output
    assert len(pd.read_csv(sample)) == 50

    cells, probs = tmp_path / 'cells.csv', str(tmp_path / 'probs.csv')
    cells.write_text('X2,X1\n0,0\n0,1\n1,0\n1,1\n')
    result = runner.invoke(cli, ['probs', '--model', model, '--cells', str(cells), '--out', probs])
    assert result.exit_code == 0, result.output
    frame = pd.read_csv(probs)
    assert list(frame.columns) == ['X1', 'X2', 'probability']
    assert frame['probability'].sum() == pytest.approx(1.0)

    roc = str(tmp_path / 'roc.csv')
    result = runner.invoke(cli, ['eval-roc', '--model', model, '--true-graph', simulated['graph.csv'],
                                 '--out', roc])
    assert result.exit_code == 0, result.output
    assert 'AUC' in result.output

    kl = str(tmp_path / 'kl.json')
    result = runner.invoke(cli, ['eval-kl', '--model', model, '--truth', simulated['truth.json'], '-n', '2000',
                                 '--seed', '3', '--out', kl])
    assert result.exit_code == 0, result.output
    with open(kl) as handle:
        written = json.load(handle)
    assert written['reference_size'] == 2000
    assert math.isfinite(written['kl'])


def test_end_to_end_fit_writes_plan_and_ranks(runner, simulated, tmp_path):
    model, plan, ranks = (str(tmp_path / name) for name in ('model.json', 'plan.json', 'ranks.csv'))
    result = runner.invoke(cli, [
        'fit', '--data', simulated['data.csv'], '--schema', simulated['schema.csv'], '--method', 'df',
        '--smax', '3', '--out', model, '--out-plan', plan, '--out-ranks', ranks, '--seed', '0',
    ])
    assert result.exit_code == 0, result.output
    assert pd.read_csv(ranks, index_col=0).shape == (5, 5)
    with open(model) as handle:
        assert json.load(handle)['method'] == 'df'


def test_eval_roc_of_a_perfect_estimate(runner, tmp_path):
    schema, truth, roc = tmp_path / 'schema.csv', tmp_path / 'truth.csv', str(tmp_path / 'roc.csv')
    schema.write_text('X1,2\nX2,2\nX3,2\nX4,2\n')
    truth.write_text('u,v\nX1,X2\nX2,X3\n')
    result = runner.invoke(cli, ['eval-roc', '--true-graph', str(truth), '--estimate', str(truth),
                                 '--schema', str(schema), '--out', roc])
    assert result.exit_code == 0, result.output
    assert 'AUC 1.000000' in result.output
    frame = pd.read_csv(roc)
    assert frame['tpr'].iloc[-1] == 1.0 and frame['fpr'].iloc[-1] == 0.0


class TestExitCodes:
    def test_unknown_method_is_a_usage_error(self, tmp_path):
        data = tmp_path / 'data.csv'
        data.write_text('X1,X2\n0,1\n1,0\n')
        code = main(['fit', '--data', str(data), '--method', 'lasso', '--out', str(tmp_path / 'm.json'),
                     '--seed', '0'])
        assert code == 64

    def test_missing_seed_is_a_usage_error(self, tmp_path):
        code = main(['simulate', '--p', '3', '--out-model', str(tmp_path / 'm.json'),
                     '--out-graph', str(tmp_path / 'g.csv')])
        assert code == 64

    def test_conflicting_sources_are_a_usage_error(self, tmp_path):
        truth = tmp_path / 'truth.csv'
        truth.write_text('u,v\n')
        code = main(['eval-roc', '--true-graph', str(truth), '--estimate', str(truth), '--ranks', str(truth),
                     '--out', str(tmp_path / 'roc.csv')])
        assert code == 64

    def test_invalid_artifact(self, tmp_path):
        model = tmp_path / 'model.json'
        model.write_text('{"terms": []}')
        code = main(['sample', '--model', str(model), '-n', '5', '--out', str(tmp_path / 's.csv'), '--seed', '0'])
        assert code == 1

    def test_missing_lambda(self, tmp_path):
        data = tmp_path / 'data.csv'
        data.write_text('X1,X2\n0,1\n1,0\n')
        code = main(['fit', '--data', str(data), '--method', 'dgl', '--out', str(tmp_path / 'm.json'),
                     '--seed', '0'])
        assert code == 1

    def test_capacity(self, tmp_path):
        ranks = tmp_path / 'ranks.csv'
        ranks.write_text(',a,b,c\na,inf,inf,inf\nb,inf,inf,inf\nc,inf,inf,inf\n')
        code = main(['decompose', '--ranks', str(ranks), '--smax', '2', '--out', str(tmp_path / 'plan.json')])
        assert code == 2

    def test_missing_data_file(self, tmp_path):
        code = main(['fit', '--data', str(tmp_path / 'absent.csv'), '--method', 'df', '--smax', '2',
                     '--out', str(tmp_path / 'm.json'), '--seed', '0'])
        assert code == 1

    def test_missing_model_file(self, tmp_path):
        code = main(['sample', '--model', str(tmp_path / 'absent.json'), '-n', '5',
                     '--out', str(tmp_path / 's.csv'), '--seed', '0'])
        assert code == 1

    def test_missing_edge_list(self, tmp_path):
        schema = tmp_path / 'schema.csv'
        schema.write_text('X1,2\nX2,2\n')
        code = main(['eval-roc', '--true-graph', str(tmp_path / 'absent.csv'), '--estimate', str(tmp_path / 'x.csv'),
                     '--schema', str(schema), '--out', str(tmp_path / 'roc.csv')])
        assert code == 1
