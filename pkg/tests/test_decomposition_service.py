# tests/test_decomposition_service.py
from itertools import combinations

import networkx as nx
import numpy as np
import pytest

from errors import CapacityError, ValidationError
from models.plan import DecompositionPlan, SplitRecord
from services.decomposition_service import collapse_on_plan, decompose, link_records
from services.graph_service import decomposition_graph
from services.importance_service import matrices_from_importance


def rank_matrix(p, ranks):
    rtilde = np.full((p, p), np.inf)
    for (u, v), rank in ranks.items():
        rtilde[u, v] = rtilde[v, u] = rank
    return rtilde


@pytest.fixture
def four_cycle_ranks():
    return rank_matrix(4, {(0, 2): 1, (1, 3): 2, (0, 3): 3, (1, 2): 4, (0, 1): 5, (2, 3): 6})


def random_ranks(p, seed):
    rng = np.random.default_rng(seed)
    return matrices_from_importance(rng.random((p, p))).symmetric_ranks


class TestHandTrace:
    def test_records(self, four_cycle_ranks):
        plan = decompose(four_cycle_ranks, smax=2)
        assert [(r.clique, r.separator, r.residual) for r in plan.records] == [
            ((0, 1), (1,), (0,)),
            ((1, 2), (2,), (1,)),
            ((2, 3), (), (2, 3)),
        ]

    def test_deleted_edges_and_fill(self, four_cycle_ranks):
        plan = decompose(four_cycle_ranks, smax=2)
        assert plan.deletion_order() == [(0, 2), (1, 3), (0, 3)]
        assert [d.rank for d in plan.deleted_edges] == [1.0, 2.0, 3.0]
        assert plan.fill_edges == ((1, 3),)

    def test_junction_tree(self, four_cycle_ranks):
        decomposition = decompose(four_cycle_ranks, smax=2).decomposition
        assert decomposition.cliques == ((0, 1), (1, 2), (2, 3))
        assert decomposition.tree_edges == ((0, 1), (1, 2))
        assert decomposition.separator_index == {(1,): 1, (2,): 1}

    def test_input_is_not_modified(self, four_cycle_ranks):
        before = four_cycle_ranks.copy()
        decompose(four_cycle_ranks, smax=2)
        np.testing.assert_array_equal(four_cycle_ranks, before)


def test_two_blocks_with_weak_cross_ranks():
    ranks = {}
    for rank, (u, v) in enumerate([(0, 3), (0, 4), (0, 5), (1, 3), (1, 4), (1, 5), (2, 3), (2, 4), (2, 5)], 1):
        ranks[(u, v)] = rank
    for rank, (u, v) in enumerate([(0, 1), (0, 2), (1, 2), (3, 4), (3, 5), (4, 5)], 10):
        ranks[(u, v)] = rank
    plan = decompose(rank_matrix(6, ranks), smax=3)
    assert [(r.clique, r.separator, r.residual) for r in plan.records] == [
        ((0, 1, 2), (1, 2), (0,)),
        ((1, 2, 5), (2, 5), (1,)),
        ((2, 4, 5), (4, 5), (2,)),
        ((3, 4, 5), (), (3, 4, 5)),
    ]
    assert plan.deletion_order() == [(0, 3), (0, 4), (0, 5), (1, 3), (1, 4), (2, 3)]
    assert all(u < 3 <= v for u, v in plan.deletion_order())


def test_smax_at_least_p_keeps_one_clique():
    plan = decompose(random_ranks(4, seed=1), smax=4)
    assert plan.cliques == [(0, 1, 2, 3)]
    assert plan.deleted_edges == ()
    assert plan.decomposition.tree_edges == ()


def test_no_finite_edge_left():
    with pytest.raises(CapacityError) as excinfo:
        decompose(np.full((3, 3), np.inf), smax=2)
    assert excinfo.value.cost == 3


def test_smax_below_two():
    with pytest.raises(ValidationError):
        decompose(random_ranks(3, seed=0), smax=1)


def test_asymmetric_ranks_rejected():
    rtilde = random_ranks(3, seed=0)
    rtilde[0, 1] += 1
    with pytest.raises(ValidationError):
        decompose(rtilde, smax=2)


def test_missing_rank_rejected():
    rtilde = random_ranks(3, seed=0)
    rtilde[0, 1] = rtilde[1, 0] = np.nan
    with pytest.raises(ValidationError):
        decompose(rtilde, smax=2)


@pytest.mark.parametrize('p, smax, seed', [(6, 2, 0), (8, 3, 1), (10, 4, 2), (12, 3, 3)])
def test_plan_invariants(p, smax, seed):
    plan = decompose(random_ranks(p, seed), smax=smax)
    assert plan.vertices == tuple(range(p))
    assert all(len(clique) <= smax for clique in plan.cliques)

    residuals = [v for r in plan.records for v in r.residual]
    assert sorted(residuals) == list(range(p))

    ranks = [d.rank for d in plan.deleted_edges]
    assert ranks == sorted(ranks)

    decomposition = plan.decomposition
    assert nx.is_chordal(decomposition_graph(decomposition, range(p)))
    forest = decomposition.forest()
    for v in range(p):
        holding = [i for i, c in enumerate(decomposition.cliques) if v in c]
        assert nx.is_connected(forest.subgraph(holding))

    deleted = set(plan.deletion_order())
    for clique in plan.cliques:
        assert not deleted & set(combinations(clique, 2)) - set(plan.fill_edges)


def test_plan_is_deterministic():
    rtilde = random_ranks(9, seed=4)
    assert decompose(rtilde, smax=3).to_dict() == decompose(rtilde, smax=3).to_dict()


def test_plan_dict_round_trip(four_cycle_ranks):
    plan = decompose(four_cycle_ranks, smax=2)
    assert DecompositionPlan.from_dict(plan.to_dict()) == plan


def test_collapse_on_plan(three_binary_data):
    plan = decompose(rank_matrix(3, {(0, 1): 3, (1, 2): 2, (0, 2): 1}), smax=2)
    assert plan.cliques == [(0, 1), (1, 2)]
    tables = collapse_on_plan(three_binary_data, plan)
    assert set(tables.clique_tables) == {(0, 1), (1, 2)}
    assert set(tables.separator_tables) == {(1,)}
    assert all(table.n == three_binary_data.n for table in tables.all_tables())
    np.testing.assert_array_equal(tables.get((1,)).counts, [40 + 10 + 15 + 25, 20 + 30 + 5 + 55])


@pytest.mark.parametrize('p, smax, seeds', [(8, 3, range(30)), (8, 2, (11, 17))])
def test_every_plan_completes(p, smax, seeds):
    for seed in seeds:
        rng = np.random.default_rng(seed)
        values = rng.random((p, p))
        plan = decompose(np.minimum(values, values.T), smax=smax)
        assert sorted(v for r in plan.records for v in r.residual) == list(range(p))
        assert all(len(clique) <= smax for clique in plan.cliques)
        ranks = [d.rank for d in plan.deleted_edges]
        assert ranks == sorted(ranks)
        assert nx.is_chordal(decomposition_graph(plan.decomposition, range(p)))


@pytest.mark.parametrize('p, smax, seed', [(8, 3, 1), (10, 4, 2), (12, 3, 3)])
def test_reported_cliques_are_maximal(p, smax, seed):
    plan = decompose(random_ranks(p, seed), smax=smax)
    cliques = [set(c) for c in plan.cliques]
    assert not any(i != j and a <= b for i, a in enumerate(cliques) for j, b in enumerate(cliques))
    assert len(plan.decomposition.tree_edges) == len(cliques) - plan.decomposition.n_components()


class TestLinkRecords:
    def test_contained_clique_is_merged_into_its_holder(self):
        records = [
            SplitRecord(clique=(0, 1, 2), separator=(1, 2), residual=(0,)),
            SplitRecord(clique=(1, 2), separator=(2,), residual=(1,)),
            SplitRecord(clique=(2, 3), separator=(), residual=(2, 3)),
        ]
        decomposition = link_records(records)
        assert decomposition.cliques == ((0, 1, 2), (2, 3))
        assert decomposition.tree_edges == ((0, 1),)
        assert decomposition.separators == [(2,)]

    def test_last_clique_equal_to_a_separator_is_dropped(self):
        records = [
            SplitRecord(clique=(0, 1, 2), separator=(1, 2), residual=(0,)),
            SplitRecord(clique=(1, 2), separator=(), residual=(1, 2)),
        ]
        decomposition = link_records(records)
        assert decomposition.cliques == ((0, 1, 2),)
        assert decomposition.tree_edges == ()

    def test_missing_separator_holder(self):
        with pytest.raises(ValidationError):
            link_records([SplitRecord(clique=(0, 1), separator=(1,), residual=(0,)),
                          SplitRecord(clique=(2,), separator=(), residual=(2,))])
