# services/graph_service.py
import math
from itertools import combinations
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import networkx as nx
import numpy as np
import structlog

from errors import ContractViolation, SingularityError, ValidationError
from models.graph import CliqueDecomposition, edge_key, make_graph, sorted_edges

logger = structlog.get_logger(__name__)

CONSISTENCY_TOL = 1e-10


def canonical(graph: nx.Graph) -> nx.Graph:
    """Copy with sorted vertex and edge insertion so traversal order is reproducible"""
    return make_graph(graph.nodes(), sorted_edges(graph))


def maximum_cardinality_search(graph: nx.Graph) -> List[int]:
    """Visit order of MCS; ties go to the smallest vertex"""
    weight = {v: 0 for v in graph.nodes()}
    order = []
    while weight:
        best = max(weight.values())
        v = min(u for u, w in weight.items() if w == best)
        order.append(v)
        del weight[v]
        for u in graph.neighbors(v):
            if u in weight:
                weight[u] += 1
    return order


def is_decomposable(graph: nx.Graph) -> Tuple[bool, Optional[List[int]]]:
    """Chordality test; returns a perfect elimination order when the graph is chordal"""
    visit = maximum_cardinality_search(graph)
    position = {v: i for i, v in enumerate(visit)}
    for v in visit:
        earlier = [u for u in graph.neighbors(v) if position[u] < position[v]]
        if not earlier:
            continue
        parent = max(earlier, key=position.get)
        parent_earlier = {u for u in graph.neighbors(parent) if position[u] < position[parent]}
        if not set(earlier) - {parent} <= parent_earlier:
            return False, None
    return True, visit[::-1]


def minimal_triangulation(graph: nx.Graph) -> nx.Graph:
    """Inclusion-minimal chordal supergraph (MCS-M); chordal input comes back unchanged"""
    graph = canonical(graph)
    if nx.is_chordal(graph):
        return graph
    triangulated, _ = nx.complete_to_chordal_graph(graph)
    logger.debug("triangulated", vertices=graph.number_of_nodes(), fill=len(fill_edges(graph, triangulated)))
    return make_graph(triangulated.nodes(), sorted_edges(triangulated))


def fill_edges(graph: nx.Graph, triangulated: nx.Graph) -> List[Tuple[int, int]]:
    return sorted(set(sorted_edges(triangulated)) - set(sorted_edges(graph)))


def maximal_cliques(graph: nx.Graph) -> List[Tuple[int, ...]]:
    """Maximal cliques of a chordal graph, sorted by vertex tuple"""
    try:
        cliques = nx.chordal_graph_cliques(canonical(graph))
        return sorted(tuple(sorted(c)) for c in cliques)
    except nx.NetworkXError as exc:
        raise ContractViolation(f"graph is not chordal: {exc}") from exc


def cliques_and_separators(graph: nx.Graph) -> CliqueDecomposition:
    """Junction forest: a maximum spanning forest on clique intersection sizes"""
    decomposable, _ = is_decomposable(graph)
    if not decomposable:
        raise ContractViolation("cliques_and_separators needs a chordal graph")
    cliques = maximal_cliques(graph)

    clique_graph = nx.Graph()
    clique_graph.add_nodes_from(range(len(cliques)))
    for i, j in combinations(range(len(cliques)), 2):
        weight = len(set(cliques[i]) & set(cliques[j]))
        if weight > 0:
            clique_graph.add_edge(i, j, weight=weight)
    forest = nx.maximum_spanning_tree(clique_graph, weight='weight')
    tree_edges = sorted(edge_key(u, v) for u, v in forest.edges())

    decomposition = CliqueDecomposition(cliques=tuple(cliques), tree_edges=tuple(tree_edges))
    logger.debug(
        "junction_forest_built",
        cliques=len(cliques),
        separators=len(tree_edges),
        components=decomposition.n_components(),
    )
    return decomposition


def decomposition_graph(decomposition: CliqueDecomposition, vertices: Sequence[int] = None) -> nx.Graph:
    """The chordal graph whose cliques are those of the decomposition"""
    vertices = decomposition.vertices if vertices is None else vertices
    edges = set()
    for clique in decomposition.cliques:
        edges.update(combinations(clique, 2))
    return make_graph(vertices, edges)


def _lookup(table: np.ndarray, cell: Sequence[int], variables: Sequence[int]) -> float:
    return float(np.asarray(table)[tuple(int(cell[v]) for v in variables)])


def _check_consistency(decomposition: CliqueDecomposition, clique_marginals: Mapping, sep_marginals: Mapping):
    for i, j in decomposition.tree_edges:
        separator = decomposition.edge_separator((i, j))
        target = np.asarray(sep_marginals[separator])
        for index in (i, j):
            clique = decomposition.cliques[index]
            axes = tuple(k for k, v in enumerate(clique) if v not in separator)
            collapsed = np.asarray(clique_marginals[clique]).sum(axis=axes)
            if not np.allclose(collapsed, target, atol=CONSISTENCY_TOL, rtol=0.0):
                raise ValidationError(
                    f"clique marginal on {clique} disagrees with separator marginal on {separator}"
                )


def decomposable_density(cell: Sequence[int], clique_marginals: Mapping[Tuple[int, ...], np.ndarray],
                         sep_marginals: Mapping[Tuple[int, ...], np.ndarray],
                         decomposition: CliqueDecomposition, check: bool = True) -> float:
    """p(i) = prod_C p(i_C) / prod_S p(i_S)^nu(S), accumulated in log space

    Marginal tables are dense arrays with one axis per variable of the clique or
    separator (in sorted variable order); `cell` is indexed by global variable.
    """
    missing = [c for c in decomposition.cliques if c not in clique_marginals]
    missing += [s for s in decomposition.separators if s and s not in sep_marginals]
    if missing:
        raise ValidationError(f"no marginal table for {missing}")
    if check:
        _check_consistency(decomposition, clique_marginals, sep_marginals)

    log_numerator = []
    for clique in decomposition.cliques:
        value = _lookup(clique_marginals[clique], cell, clique)
        if value <= 0.0:
            return 0.0
        log_numerator.append(math.log(value))

    log_denominator = []
    for separator, nu in decomposition.separator_index.items():
        if not separator:
            continue
        value = _lookup(sep_marginals[separator], cell, separator)
        if value <= 0.0:
            raise SingularityError(
                f"separator {separator} has zero probability at cell {tuple(cell)} "
                f"while every clique marginal is positive"
            )
        log_denominator.append(nu * math.log(value))
    return math.exp(math.fsum(log_numerator) - math.fsum(log_denominator))


def graph_from_matrix(adjacency: np.ndarray) -> nx.Graph:
    adjacency = np.asarray(adjacency)
    p = adjacency.shape[0]
    return make_graph(range(p), [(i, j) for i, j in combinations(range(p), 2) if adjacency[i, j]])


def edge_difference(estimate: nx.Graph, truth: nx.Graph) -> Dict[str, int]:
    found = set(sorted_edges(estimate))
    true = set(sorted_edges(truth))
    return {
        'true_positive': len(found & true),
        'false_positive': len(found - true),
        'false_negative': len(true - found),
    }
