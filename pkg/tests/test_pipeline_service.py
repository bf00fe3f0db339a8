# tests/test_pipeline_service.py
import numpy as np
import pytest

from config import TestingConfig
from errors import ConvergenceError, ValidationError
from models.importance import ForestConfig
from services import decomposition_service
from services.data_service import all_cells
from services.decomposition_service import decompose
from services.design_service import log_probabilities
from services.evaluation_service import empirical_kl, roc_sweep
from services.junction_service import sample_from_model
from services.pipeline_service import check_method, estimate, fit_plan, fit_table
from services.simulation_service import chain_model, independence_model, random_decomposable_model

THREE_BINARY_COUNTS = np.array([40, 10, 20, 30, 15, 25, 5, 55], dtype=float)


@pytest.fixture
def chain_plan():
    rtilde = np.full((3, 3), np.inf)
    for (u, v), rank in {(0, 1): 3, (1, 2): 2, (0, 2): 1}.items():
        rtilde[u, v] = rtilde[v, u] = rank
    return decompose(rtilde, smax=2)


@pytest.mark.parametrize('method, lam, s', [('nope', None, None), ('dgl', None, None), ('dsf', None, None)])
def test_check_method(method, lam, s):
    with pytest.raises(ValidationError):
        check_method(method, lam, s)


@pytest.mark.parametrize('method, lam, s', [
    ('dgl', 0.01, None), ('dgl-cv', None, None), ('dgl-f', None, None),
    ('dsf', None, 0.0), ('dsf-aic', None, None), ('df', None, None),
])
def test_fit_table_tags_the_model(table_2x2, method, lam, s):
    model = fit_table(table_2x2, method, lam=lam, s=s, folds=4, seed=0)
    assert model.method == method
    assert model.log_partition == 0.0
    assert model.schema == table_2x2.schema


def test_fit_table_reports_non_convergence(table_2x2, monkeypatch):
    monkeypatch.setattr(TestingConfig, 'GL_MAX_ITER', 1)
    with pytest.raises(ConvergenceError) as excinfo:
        fit_table(table_2x2, 'dgl', lam=0.0)
    assert excinfo.value.last_objective is not None


def test_saturated_cliques_give_the_decomposable_mle(three_binary_data, chain_plan):
    combined = fit_plan(three_binary_data, chain_plan, 'df')
    joint = (THREE_BINARY_COUNTS / THREE_BINARY_COUNTS.sum()).reshape(2, 2, 2)
    p01 = joint.sum(axis=2)
    p12 = joint.sum(axis=0)
    p1 = joint.sum(axis=(0, 2))
    expected = p01[:, :, None] * p12[None, :, :] / p1[None, :, None]
    cells = all_cells(three_binary_data.schema)
    np.testing.assert_allclose(np.exp(log_probabilities(combined.model, cells)), expected.ravel(), atol=1e-8)
    assert combined.model.method == 'df'
    assert combined.decomposition == chain_plan.decomposition


@pytest.mark.parametrize('method', ['dgl-cv', 'dgl-f', 'dsf-aic'])
def test_fit_plan_is_normalized(three_binary_data, chain_plan, method):
    combined = fit_plan(three_binary_data, chain_plan, method, folds=4, seed=1)
    cells = all_cells(three_binary_data.schema)
    assert np.exp(log_probabilities(combined.model, cells)).sum() == pytest.approx(1.0)
    assert all(t.variables != (0, 2) for t in combined.model.nonzero_terms())
    assert combined.threshold >= 0.0


def test_fit_plan_threads_do_not_change_the_result(three_binary_data, chain_plan):
    first = fit_plan(three_binary_data, chain_plan, 'dgl-cv', folds=4, seed=2, threads=1)
    second = fit_plan(three_binary_data, chain_plan, 'dgl-cv', folds=4, seed=2, threads=3)
    assert first.to_dict() == second.to_dict()


def test_fit_plan_checks_the_vertex_set(random_rows, chain_plan):
    with pytest.raises(ValidationError):
        fit_plan(random_rows(p=4, n=50), chain_plan, 'df')


@pytest.mark.slow
def test_end_to_end_on_a_chain():
    truth, graph, decomposition = chain_model(5, strength=1.0)
    data = sample_from_model(truth, decomposition, 3000, seed=0)
    forest = ForestConfig(n_trees=30, min_samples_leaf=5, seed=0)
    combined, plan, matrices = estimate(data, 'dgl-cv', smax=3, folds=4, forest=forest, seed=0)

    assert all(len(c) <= 3 for c in plan.cliques)
    assert matrices.p == 5
    reference = sample_from_model(truth, decomposition, 20_000, seed=1)
    fitted_kl = empirical_kl(reference, combined)
    assert fitted_kl < empirical_kl(reference, independence_model(data))
    assert fitted_kl - empirical_kl(reference, truth) < 0.05


@pytest.fixture(scope='module')
def desk_suite():
    """Five seeded 15-variable decomposable models fitted with every method on one plan each"""
    runs = []
    for seed in range(5):
        truth, graph, decomposition = random_decomposable_model(15, max_clique=3, strength=1.5, seed=seed)
        data = sample_from_model(truth, decomposition, 20_000, seed=seed)
        forest = ForestConfig(n_trees=30, min_samples_leaf=5, seed=seed)
        cv_fit, plan, _ = estimate(data, 'dgl-cv', smax=3, forest=forest, seed=seed)
        fits = {method: fit_plan(data, plan, method, seed=seed) for method in ('dgl-f', 'dsf-aic', 'df')}
        reference = sample_from_model(truth, decomposition, 50_000, seed=1_000 + seed)
        runs.append({
            'graph': graph, 'cv': cv_fit, 'fits': fits,
            'kl': {method: empirical_kl(reference, fit) for method, fit in fits.items()},
            'kl_cv': empirical_kl(reference, cv_fit),
            'kl_truth': empirical_kl(reference, truth),
            'kl_independent': empirical_kl(reference, independence_model(data)),
        })
    return runs


@pytest.mark.slow
def test_structure_recovery_auc(desk_suite):
    aucs = [roc_sweep(run['cv'], run['graph']).auc for run in desk_suite]
    assert np.mean(aucs) >= 0.9


@pytest.mark.slow
def test_separator_threshold_zeroes_mostly_separator_terms(desk_suite):
    for run in desk_suite:
        before = set(run['cv'].model.nonzero_terms())
        zeroed = before - set(run['fits']['dgl-f'].model.nonzero_terms())
        if zeroed:
            flags = [run['cv'].provenance[t].separator_only for t in zeroed if t in run['cv'].provenance]
            assert sum(flags) >= 0.5 * len(zeroed)
        assert run['kl']['dgl-f'] <= 1.02 * run['kl_cv']


@pytest.mark.slow
def test_decomposition_methods_agree_and_beat_independence(desk_suite):
    for run in desk_suite:
        values = list(run['kl'].values())
        assert max(values) <= 1.05 * min(values)
        excess = run['kl_independent'] - run['kl_truth']
        for value in values:
            assert value - run['kl_truth'] <= 0.9 * excess


@pytest.mark.slow
def test_forty_binary_variables_stay_within_capacity(monkeypatch):
    largest = []
    real_tabulate = decomposition_service.tabulate

    def recording_tabulate(data, subset, **kwargs):
        table = real_tabulate(data, subset, **kwargs)
        largest.append(table.counts.size)
        return table

    monkeypatch.setattr(decomposition_service, 'tabulate', recording_tabulate)
    truth, _, decomposition = random_decomposable_model(40, max_clique=3, strength=1.0, seed=0)
    data = sample_from_model(truth, decomposition, 100_000, seed=0)
    forest = ForestConfig(n_trees=10, min_samples_leaf=5, seed=0)
    combined, plan, matrices = estimate(data, 'dgl', smax=10, lam=0.01, forest=forest, seed=0, threads=2)

    assert matrices.p == 40
    assert all(len(clique) <= 10 for clique in plan.cliques)
    assert max(largest) <= 2 ** 10
    assert np.isfinite(combined.model.log_partition)
