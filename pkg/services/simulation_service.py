# services/simulation_service.py
"""Synthetic decomposable models for structure-recovery and KL experiments."""
from itertools import combinations
from typing import Sequence, Tuple, Union

import networkx as nx
import numpy as np
import structlog

from errors import ValidationError
from models.graph import CliqueDecomposition, make_graph
from models.loglinear import LogLinearModel, block_width
from models.schema import Dataset, VariableSchema
from models.terms import INTERCEPT, InteractionTerm
from services.data_service import tabulate
from services.design_service import build_design
from services.graph_service import cliques_and_separators, maximal_cliques
from services.junction_service import normalize

logger = structlog.get_logger(__name__)

Levels = Union[int, Sequence[int]]
Simulated = Tuple[LogLinearModel, nx.Graph, CliqueDecomposition]


def simulation_schema(p: int, levels: Levels = 2) -> VariableSchema:
    if p < 1:
        raise ValidationError("a model needs at least one variable")
    levels = (int(levels),) * p if np.isscalar(levels) else tuple(int(k) for k in levels)
    if len(levels) != p:
        raise ValidationError(f"got {len(levels)} level counts for {p} variables")
    return VariableSchema(names=tuple(f"X{v + 1}" for v in range(p)), levels=levels)


def random_chordal_graph(p: int, max_clique: int, rng: np.random.Generator) -> nx.Graph:
    """Grow a chordal graph by attaching each new vertex to part of an existing clique"""
    if max_clique < 1:
        raise ValidationError("max_clique must be positive")
    graph = make_graph([0])
    for v in range(1, p):
        cliques = maximal_cliques(graph)
        host = cliques[int(rng.integers(len(cliques)))]
        size = int(rng.integers(0, min(max_clique - 1, len(host)) + 1))
        neighbours = rng.choice(host, size=size, replace=False) if size else []
        graph.add_node(v)
        graph.add_edges_from((v, int(u)) for u in neighbours)
    return graph


def _graph_terms(graph: nx.Graph, decomposition: CliqueDecomposition, pairwise_only: bool):
    terms = [InteractionTerm((v,)) for v in sorted(graph.nodes())]
    terms += [InteractionTerm(edge) for edge in sorted(graph.edges())]
    if not pairwise_only:
        for clique in decomposition.cliques:
            for size in range(3, len(clique) + 1):
                terms += [InteractionTerm(c) for c in combinations(clique, size)]
    return sorted(set(terms), key=lambda t: t.sort_key)


def model_on_graph(schema: VariableSchema, graph: nx.Graph, coefficients) -> Simulated:
    decomposition = cliques_and_separators(graph)
    model = LogLinearModel(schema=schema, coefficients=coefficients, method='truth')
    return normalize(model, decomposition), graph, decomposition


def random_decomposable_model(p: int, max_clique: int = 3, levels: Levels = 2, strength: float = 1.0,
                              pairwise_only: bool = True, seed: int = 0) -> Simulated:
    """Random chordal graph with N(0, strength^2) interaction blocks on its edges (and cliques)"""
    schema = simulation_schema(p, levels)
    rng = np.random.default_rng(seed)
    graph = random_chordal_graph(p, max_clique, rng)
    decomposition = cliques_and_separators(graph)
    coefficients = {
        term: rng.normal(0.0, strength, size=block_width(schema, term))
        for term in _graph_terms(graph, decomposition, pairwise_only)
    }
    model, graph, decomposition = model_on_graph(schema, graph, coefficients)
    logger.info(
        "decomposable_model_simulated",
        p=p, edges=graph.number_of_edges(), cliques=len(decomposition.cliques), seed=seed,
    )
    return model, graph, decomposition


def chain_model(p: int, strength: float = 1.0, levels: Levels = 2) -> Simulated:
    """Path graph X1 - X2 - ... - Xp with every pairwise block entry equal to `strength`"""
    schema = simulation_schema(p, levels)
    graph = make_graph(range(p), [(v, v + 1) for v in range(p - 1)])
    coefficients = {
        InteractionTerm(edge): np.full(block_width(schema, InteractionTerm(edge)), float(strength))
        for edge in sorted(graph.edges())
    }
    return model_on_graph(schema, graph, coefficients)


def independence_model(data: Dataset, smoothing: float = 0.5) -> LogLinearModel:
    """Main-effects model fit to the one-way margins; empty levels get `smoothing` pseudo-counts"""
    schema = data.schema
    coefficients = {INTERCEPT: np.zeros(1)}
    intercept = 0.0
    for v in range(schema.p):
        counts = tabulate(data, [v]).counts.astype(float)
        counts[counts == 0] = smoothing
        log_p = np.log(counts / counts.sum())
        X, block_map = build_design(schema.restrict([v]))
        beta = np.linalg.solve(X, log_p)
        intercept += float(beta[block_map.slice_of(INTERCEPT)][0])
        coefficients[InteractionTerm((v,))] = beta[block_map.slice_of(InteractionTerm((0,)))]
    coefficients[INTERCEPT] = np.array([intercept])
    graph = make_graph(range(schema.p))
    model = LogLinearModel(schema=schema, coefficients=coefficients, method='independence')
    return normalize(model, cliques_and_separators(graph))
