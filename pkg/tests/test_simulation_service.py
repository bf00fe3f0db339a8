# tests/test_simulation_service.py
import math

import networkx as nx
import numpy as np
import pytest

from errors import ValidationError
from models.graph import sorted_edges
from models.terms import InteractionTerm
from services.data_service import dataset_from_counts, tabulate
from services.junction_service import JunctionTree
from services.simulation_service import (
    chain_model, independence_model, random_chordal_graph, random_decomposable_model, simulation_schema,
)

from tests.conftest import table_from_counts


def test_schema_names_and_levels():
    schema = simulation_schema(3, [2, 3, 4])
    assert schema.names == ('X1', 'X2', 'X3')
    assert schema.levels == (2, 3, 4)
    assert simulation_schema(2).levels == (2, 2)


def test_schema_rejects_wrong_level_count():
    with pytest.raises(ValidationError):
        simulation_schema(3, [2, 2])


@pytest.mark.parametrize('seed', range(5))
def test_random_graphs_are_chordal_and_bounded(seed):
    graph = random_chordal_graph(15, 4, np.random.default_rng(seed))
    assert sorted(graph.nodes()) == list(range(15))
    assert nx.is_chordal(graph)
    assert max(len(c) for c in nx.find_cliques(graph)) <= 4


def test_random_model_is_normalized_on_its_graph():
    model, graph, decomposition = random_decomposable_model(8, max_clique=3, seed=4)
    assert model.method == 'truth'
    assert model.is_normalized
    assert model.decomposition == decomposition
    edges = set(sorted_edges(graph))
    assert {t.variables for t in model.nonzero_terms() if t.order == 2} == edges
    assert all(t.order <= 2 for t in model.nonzero_terms())


def test_clique_interactions():
    model, graph, decomposition = random_decomposable_model(8, max_clique=3, pairwise_only=False, seed=6)
    triangles = {c for c in decomposition.cliques if len(c) == 3}
    assert {t.variables for t in model.nonzero_terms() if t.order == 3} == triangles


def test_same_seed_same_model():
    first, _, _ = random_decomposable_model(6, seed=9)
    second, _, _ = random_decomposable_model(6, seed=9)
    assert first.to_dict() == second.to_dict()


def test_chain_model():
    model, graph, decomposition = chain_model(5, strength=0.7, levels=3)
    assert sorted_edges(graph) == [(0, 1), (1, 2), (2, 3), (3, 4)]
    np.testing.assert_array_equal(model.block(InteractionTerm((1, 2))), np.full(4, 0.7))
    assert not model.block(InteractionTerm((2,))).any()
    assert decomposition.separator_index == {(1,): 1, (2,): 1, (3,): 1}


def test_independence_model_reproduces_margins(three_binary_data):
    model = independence_model(three_binary_data)
    assert model.method == 'independence'
    tree = JunctionTree(model, model.decomposition)
    for v in range(3):
        expected = tabulate(three_binary_data, [v]).counts / three_binary_data.n
        np.testing.assert_allclose(tree.marginal([v]), expected, atol=1e-12)
    assert all(t.order == 1 for t in model.nonzero_terms())


def test_independence_model_smooths_empty_levels():
    table = table_from_counts((2, 2), [0, 0, 10, 30])
    data = dataset_from_counts(table.schema, table.counts)
    model = independence_model(data)
    tree = JunctionTree(model, model.decomposition)
    np.testing.assert_allclose(tree.marginal([0]), [0.5 / 40.5, 40 / 40.5], atol=1e-12)
    assert math.isfinite(model.log_partition)
