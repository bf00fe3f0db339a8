# tests/test_evaluation_service.py
import math

import numpy as np
import pytest

from errors import ValidationError
from models.graph import CliqueDecomposition, make_graph
from models.loglinear import CombinedModel, LogLinearModel
from models.schema import Dataset
from services.data_service import dataset_from_counts, tabulate
from services.evaluation_service import (
    edge_strengths, empirical_kl, graph_roc, importance_roc, paired_comparison, roc_auc, roc_sweep,
    threshold_path, tpr_at_fpr,
)
from services.junction_service import normalize, sample_from_model
from services.selection_service import fit_saturated
from services.simulation_service import chain_model, independence_model

from tests.conftest import binary_schema


@pytest.fixture
def chain4():
    model, graph, decomposition = chain_model(4, strength=1.0)
    return model, graph, decomposition


def uniform_model(p):
    model = LogLinearModel(schema=binary_schema(p), coefficients={})
    return normalize(model, CliqueDecomposition(cliques=tuple((v,) for v in range(p))))


class TestRoc:
    def test_edge_strengths(self, chain4):
        model, _, _ = chain4
        assert edge_strengths(model) == {(0, 1): 1.0, (1, 2): 1.0, (2, 3): 1.0}

    def test_perfect_recovery(self, chain4):
        model, graph, _ = chain4
        report = roc_sweep(model, graph)
        assert report.points[0].threshold == math.inf
        assert (report.points[0].fpr, report.points[0].tpr) == (0.0, 0.0)
        assert (report.points[-1].fpr, report.points[-1].tpr) == (0.0, 1.0)
        assert report.auc == pytest.approx(1.0)
        assert report.true_edges == 3 and report.true_gaps == 3

    def test_single_estimate(self, chain_graph):
        estimate = make_graph(range(4), [(0, 1), (0, 2)])
        report = graph_roc(estimate, chain_graph)
        assert len(report.points) == 2
        assert report.points[1].fpr == pytest.approx(1 / 3)
        assert report.points[1].tpr == pytest.approx(1 / 3)
        assert report.points[1].n_edges == 2
        assert report.auc == pytest.approx(0.5)

    def test_ranks_sweep_in_decreasing_order(self, chain_graph):
        rtilde = np.array([
            [np.inf, 6, 2, 1],
            [6, np.inf, 5, 3],
            [2, 5, np.inf, 4],
            [1, 3, 4, np.inf],
        ])
        report = importance_roc(rtilde, chain_graph)
        assert [pt.n_edges for pt in report.points] == [0, 1, 2, 3, 4, 5, 6]
        assert [pt.tpr for pt in report.points[:4]] == pytest.approx([0, 1 / 3, 2 / 3, 1.0])
        assert report.auc == pytest.approx(1.0)

    def test_tpr_at_fpr(self, chain_graph):
        rtilde = np.array([
            [np.inf, 6, 5, 1],
            [6, np.inf, 4, 3],
            [5, 4, np.inf, 2],
            [1, 3, 2, np.inf],
        ])
        report = importance_roc(rtilde, chain_graph)
        assert tpr_at_fpr(report, 0.0) == pytest.approx(1 / 3)
        assert tpr_at_fpr(report, 1 / 3) == pytest.approx(2 / 3)
        assert roc_auc(report) == report.auc

    def test_no_true_edges(self):
        empty = make_graph(range(3))
        report = graph_roc(make_graph(range(3), [(0, 1)]), empty)
        assert all(pt.tpr == 0.0 for pt in report.points)
        assert report.points[-1].fpr == pytest.approx(1 / 3)

    def test_vertex_sets_must_match(self, chain_graph):
        with pytest.raises(ValidationError):
            graph_roc(make_graph(range(3), [(0, 1)]), chain_graph)


class TestKullbackLeibler:
    def test_uniform_model(self, three_binary_data):
        assert empirical_kl(three_binary_data, uniform_model(3)) == pytest.approx(3 * math.log(2))

    def test_true_model_beats_independence(self, chain4):
        model, _, decomposition = chain4
        reference = sample_from_model(model, decomposition, 20_000, seed=5)
        independent = independence_model(reference)
        assert empirical_kl(reference, model) < empirical_kl(reference, independent)

    def test_needs_normalized_model(self, three_binary_data):
        model = LogLinearModel(schema=binary_schema(3), coefficients={})
        with pytest.raises(ValidationError):
            empirical_kl(three_binary_data, model)

    def test_schema_mismatch(self, three_binary_data):
        with pytest.raises(ValidationError):
            empirical_kl(three_binary_data, uniform_model(4))

    def test_empty_reference(self):
        with pytest.raises(ValidationError):
            empirical_kl(Dataset(schema=binary_schema(3), rows=np.zeros((0, 3))), uniform_model(3))

    def test_combined_models_are_accepted(self, three_binary_data):
        combined = CombinedModel(model=uniform_model(3), provenance={})
        assert empirical_kl(three_binary_data, combined) == pytest.approx(3 * math.log(2))

    def test_empirical_candidate_gives_the_plug_in_entropy(self):
        counts = np.array([5, 3, 2, 10])
        reference = dataset_from_counts(binary_schema(2), counts)
        candidate = fit_saturated(tabulate(reference, (0, 1)))
        proportions = counts / counts.sum()
        entropy = -float(np.sum(proportions * np.log(proportions)))
        assert empirical_kl(reference, candidate) == pytest.approx(entropy, abs=1e-9)


def test_threshold_path(chain4):
    model, _, decomposition = chain4
    reference = sample_from_model(model, decomposition, 5_000, seed=2)
    path = threshold_path(CombinedModel(model=model, provenance={}), reference, [0.0, 1.0])
    assert path[0]['zeroed'] == 0
    assert path[0]['kl'] == pytest.approx(empirical_kl(reference, model))
    assert path[1]['zeroed'] == 3
    assert path[1]['kl'] == pytest.approx(4 * math.log(2))
    assert path[1]['separator_share'] == 0.0


def test_threshold_path_rejects_bad_fraction(chain4):
    model, _, decomposition = chain4
    reference = sample_from_model(model, decomposition, 100, seed=2)
    with pytest.raises(ValidationError):
        threshold_path(CombinedModel(model=model, provenance={}), reference, [1.5])


def test_paired_comparison():
    result = paired_comparison([1.0, 2.0, 3.0, 4.0], [0.0, 1.0, 2.0, 4.0])
    assert result['n'] == 4
    assert result['mean_difference'] == pytest.approx(0.75)
    assert 0.0 < result['p_value'] < 1.0


def test_paired_comparison_needs_matched_samples():
    with pytest.raises(ValidationError):
        paired_comparison([1.0], [2.0])
    with pytest.raises(ValidationError):
        paired_comparison([1.0, 2.0], [2.0, 3.0, 4.0])
