# services/decomposition_service.py
"""Recursive thinning and clique split-off driven by the symmetric rank matrix."""
from itertools import combinations
from typing import List, Optional, Set, Tuple

import networkx as nx
import numpy as np
import structlog

from config import get_config
from errors import CapacityError, ValidationError
from models.graph import CliqueDecomposition, make_graph, sorted_edges
from models.plan import DecompositionPlan, DeletedEdge, SplitRecord
from models.schema import CollapsedTables, Dataset
from services.data_service import tabulate
from services.graph_service import fill_edges, maximal_cliques, minimal_triangulation

logger = structlog.get_logger(__name__)


def _validate_ranks(rtilde: np.ndarray) -> np.ndarray:
    rtilde = np.array(rtilde, dtype=float)
    if rtilde.ndim != 2 or rtilde.shape[0] != rtilde.shape[1]:
        raise ValidationError("rank matrix must be square")
    off = ~np.eye(rtilde.shape[0], dtype=bool)
    if np.isnan(rtilde[off]).any():
        raise ValidationError("rank matrix has missing off-diagonal entries")
    if not np.array_equal(rtilde[off], rtilde.T[off]):
        raise ValidationError("rank matrix must be symmetric")
    np.fill_diagonal(rtilde, np.inf)
    return rtilde


def _split_candidates(graph: nx.Graph) -> List[Tuple[Tuple[int, ...], Tuple[int, ...], Tuple[int, ...]]]:
    """(C, S, A) for each maximal clique with a nonempty residual A = C minus S"""
    candidates = []
    for clique in maximal_cliques(graph):
        members = set(clique)
        separator = tuple(v for v in clique if any(u not in members for u in graph.neighbors(v)))
        residual = tuple(v for v in clique if v not in separator)
        if residual:
            candidates.append((clique, separator, residual))
    return candidates


def _weakest_edge(graph: nx.Graph, rtilde: np.ndarray) -> Optional[Tuple[int, int]]:
    finite = [(rtilde[u, v], (u, v)) for u, v in sorted_edges(graph) if np.isfinite(rtilde[u, v])]
    return min(finite)[1] if finite else None


def _drop_redundant(cliques: List[Tuple[int, ...]], edges: List[Tuple[int, int]]) -> CliqueDecomposition:
    """Merge every clique contained in another one into a tree neighbour that holds it"""
    tree = nx.Graph()
    tree.add_nodes_from(range(len(cliques)))
    tree.add_edges_from(edges)
    for j in range(len(cliques)):
        holder = next(
            (k for k in tree.nodes if k != j and set(cliques[j]) <= set(cliques[k])
             and (cliques[j] != cliques[k] or k < j)),
            None,
        )
        if holder is None:
            continue
        # every clique on the tree path from j to its holder contains clique j
        target = nx.shortest_path(tree, j, holder)[1] if nx.has_path(tree, j, holder) else holder
        tree.add_edges_from([(target, n) for n in tree.neighbors(j) if n != target])
        tree.remove_node(j)
    kept = sorted(tree.nodes)
    index = {old: new for new, old in enumerate(kept)}
    return CliqueDecomposition(
        cliques=tuple(cliques[k] for k in kept),
        tree_edges=tuple(sorted(tuple(sorted((index[i], index[j]))) for i, j in tree.edges)),
    )


def link_records(records: List[SplitRecord]) -> CliqueDecomposition:
    """Join each record's clique to the first later clique holding its separator, keeping maximal cliques only"""
    cliques = [r.clique for r in records]
    edges = []
    for i, record in enumerate(records):
        if not record.separator:
            continue
        later = next(
            (j for j in range(i + 1, len(records)) if set(record.separator) <= set(records[j].clique)), None
        )
        if later is None:
            raise ValidationError(f"separator {record.separator} is not contained in any later clique")
        edges.append((i, later))
    return _drop_redundant(cliques, edges)


def decompose(rtilde: np.ndarray, smax: Optional[int] = None) -> DecompositionPlan:
    """Thin the complete graph by increasing rank and split off small leaf cliques"""
    smax = get_config().S_MAX if smax is None else int(smax)
    if smax < 2:
        raise ValidationError("smax must be at least 2")
    rtilde = _validate_ranks(rtilde)
    p = rtilde.shape[0]

    # graph is the thinned graph plus completed separators; chordal is its triangulation for this round
    graph = make_graph(range(p), combinations(range(p), 2))
    all_fill: Set[Tuple[int, int]] = set()
    records: List[SplitRecord] = []
    deleted: List[DeletedEdge] = []

    while graph.number_of_nodes():
        if nx.is_chordal(graph):
            chordal = graph
        else:
            chordal = minimal_triangulation(graph)
            all_fill.update(fill_edges(graph, chordal))

        clique, separator, residual = min(_split_candidates(chordal), key=lambda c: (len(c[0]), c[0]))
        if len(clique) <= smax:
            records.append(SplitRecord(clique=clique, separator=separator, residual=residual))
            # only fill completing the separator is carried; it and the separator edges are never deleted
            graph.remove_nodes_from(residual)
            for u, v in combinations(separator, 2):
                rtilde[u, v] = rtilde[v, u] = np.inf
                graph.add_edge(u, v)
            logger.debug("clique_split_off", clique=list(clique), separator=list(separator))
            continue

        edge = _weakest_edge(graph, rtilde)
        if edge is None:
            raise CapacityError(
                f"no deletable edge left but the smallest clique has {len(clique)} > smax={smax} vertices",
                cost=len(clique),
            )
        u, v = edge
        deleted.append(DeletedEdge(edge=edge, rank=float(rtilde[u, v])))
        rtilde[u, v] = rtilde[v, u] = np.inf
        graph.remove_edge(u, v)

    decomposition = link_records(records)
    logger.info(
        "decomposition_finished",
        p=p,
        smax=smax,
        cliques=len(decomposition.cliques),
        deleted=len(deleted),
        fill=len(all_fill),
    )
    return DecompositionPlan(
        records=tuple(records),
        decomposition=decomposition,
        smax=smax,
        deleted_edges=tuple(deleted),
        fill_edges=tuple(sorted(all_fill)),
    )


def collapse_on_plan(data: Dataset, plan: DecompositionPlan) -> CollapsedTables:
    """Tabulate the data on every clique and separator of the plan's decomposition"""
    decomposition = plan.decomposition
    tables = CollapsedTables()
    for clique in decomposition.cliques:
        if clique not in tables.clique_tables:
            tables.clique_tables[clique] = tabulate(data, clique, max_vars=max(plan.smax, len(clique)))
    for separator in decomposition.separators:
        if separator and separator not in tables.separator_tables:
            tables.separator_tables[separator] = tabulate(data, separator, max_vars=plan.smax)
    logger.debug(
        "tables_collapsed",
        cliques=len(tables.clique_tables),
        separators=len(tables.separator_tables),
    )
    return tables
