# services/junction_service.py
"""Exact inference for log-linear models over a junction forest.

Potentials live in log space. Each non-intercept term is assigned to the first
clique containing it; schema variables outside every clique get a singleton
clique of their own, so they contribute a factor of k_v when their block is
empty. Calibration runs one collect and one distribute pass per component.
"""
import math
from dataclasses import replace
from typing import Dict, List, Optional, Sequence, Tuple

import networkx as nx
import numpy as np
import structlog
from scipy.special import logsumexp

from config import get_config
from errors import CapacityError, CoverageError, ValidationError
from models.graph import CliqueDecomposition
from models.loglinear import LogLinearModel
from models.schema import Dataset
from services.data_service import row_indices
from services.design_service import log_probabilities, term_table

logger = structlog.get_logger(__name__)

VertexSet = Tuple[int, ...]


def _broadcast(table: np.ndarray, variables: VertexSet, target: VertexSet) -> np.ndarray:
    """Reshape a table over sorted `variables` so it broadcasts against sorted `target`"""
    present = set(variables)
    shape = [table.shape[variables.index(v)] if v in present else 1 for v in target]
    return np.reshape(table, shape)


def _sum_out(log_table: np.ndarray, variables: VertexSet, keep: VertexSet) -> np.ndarray:
    axes = tuple(i for i, v in enumerate(variables) if v not in keep)
    if not axes:
        return log_table.copy()
    return logsumexp(log_table, axis=axes)


class JunctionTree:
    """Calibrated sum-product state for one model on one clique decomposition"""

    def __init__(self, model: LogLinearModel, decomposition: CliqueDecomposition):
        schema = model.schema
        outside = [v for v in decomposition.vertices if not 0 <= v < schema.p]
        if outside:
            raise ValidationError(f"decomposition uses variables {outside} outside the schema")
        covered = set(decomposition.vertices)
        self.model = model
        self.schema = schema
        self.cliques: List[VertexSet] = list(decomposition.cliques) + [
            (v,) for v in range(schema.p) if v not in covered
        ]
        self.forest = nx.Graph()
        self.forest.add_nodes_from(range(len(self.cliques)))
        self.forest.add_edges_from(sorted(decomposition.tree_edges))

        self._potentials = self._assign_terms()
        self._calibrate()

    def __repr__(self):
        return f'<JunctionTree cliques={len(self.cliques)} log_z={self.log_partition:.6g}>'

    def _levels(self, variables: Sequence[int]) -> Tuple[int, ...]:
        return self.schema.levels_of(variables)

    def _assign_terms(self) -> List[np.ndarray]:
        potentials = [np.zeros(self._levels(c)) for c in self.cliques]
        for term, beta in self.model.coefficients.items():
            if term.is_intercept or not np.any(beta != 0):
                continue
            index = next((i for i, c in enumerate(self.cliques) if term.issubset(c)), -1)
            if index < 0:
                raise CoverageError(f"term {term.variables} is not contained in any clique")
            table = term_table(self.schema, term, beta)
            potentials[index] = potentials[index] + _broadcast(table, term.variables, self.cliques[index])
        return potentials

    def separator(self, i: int, j: int) -> VertexSet:
        return tuple(sorted(set(self.cliques[i]) & set(self.cliques[j])))

    def _calibrate(self):
        self.beliefs: List[np.ndarray] = [p.copy() for p in self._potentials]
        self.parent: Dict[int, int] = {}
        self.component_of: Dict[int, int] = {}
        self.components: List[List[int]] = []
        self.component_log_z: List[float] = []

        for root in sorted(min(c) for c in nx.connected_components(self.forest)):
            order = [root] + [child for _, child in nx.bfs_edges(self.forest, root)]
            for parent, child in nx.bfs_edges(self.forest, root):
                self.parent[child] = parent
            upward = {}
            for node in reversed(order[1:]):
                parent = self.parent[node]
                sep = self.separator(node, parent)
                message = _sum_out(self.beliefs[node], self.cliques[node], sep)
                upward[node] = message
                self.beliefs[parent] = self.beliefs[parent] + _broadcast(message, sep, self.cliques[parent])
            for node in order[1:]:
                parent = self.parent[node]
                sep = self.separator(node, parent)
                down = _sum_out(self.beliefs[parent], self.cliques[parent], sep) - upward[node]
                self.beliefs[node] = self.beliefs[node] + _broadcast(down, sep, self.cliques[node])
            component = len(self.components)
            for node in order:
                self.component_of[node] = component
            self.components.append(order)
            self.component_log_z.append(float(logsumexp(self.beliefs[root])))

    @property
    def log_partition(self) -> float:
        return self.model.intercept + math.fsum(self.component_log_z)

    def clique_log_marginal(self, index: int) -> np.ndarray:
        return self.beliefs[index] - self.component_log_z[self.component_of[index]]

    def clique_marginal(self, index: int) -> np.ndarray:
        return np.exp(self.clique_log_marginal(index))

    def _first_clique(self, v: int) -> int:
        return next(i for i, c in enumerate(self.cliques) if v in c)

    def _component_log_marginal(self, variables: VertexSet, max_cells: int) -> np.ndarray:
        """log p over `variables`, all of which live in one component"""
        single = next((i for i, c in enumerate(self.cliques) if set(variables) <= set(c)), -1)
        if single >= 0:
            return _sum_out(self.clique_log_marginal(single), self.cliques[single], variables)

        anchors = sorted({self._first_clique(v) for v in variables})
        nodes = {anchors[0]}
        edges = set()
        for other in anchors[1:]:
            path = nx.shortest_path(self.forest, anchors[0], other)
            nodes.update(path)
            edges.update(tuple(sorted(pair)) for pair in zip(path, path[1:]))
        union = tuple(sorted({v for n in nodes for v in self.cliques[n]}))
        cost = math.prod(self._levels(union))
        if cost > max_cells:
            raise CapacityError(
                f"margin {variables} spans {len(nodes)} cliques and needs {cost} cells, limit is {max_cells}",
                cost=cost,
            )
        joint = np.zeros(self._levels(union))
        for n in sorted(nodes):
            joint = joint + _broadcast(self.clique_log_marginal(n), self.cliques[n], union)
        for i, j in sorted(edges):
            sep = self.separator(i, j)
            sep_log = _sum_out(self.clique_log_marginal(i), self.cliques[i], sep)
            joint = joint - _broadcast(sep_log, sep, union)
        logger.debug("multi_clique_query", variables=list(variables), cliques=len(nodes), cells=cost)
        return _sum_out(joint, union, variables)

    def marginal(self, variables: Sequence[int], max_cells: Optional[int] = None) -> np.ndarray:
        """Probability table over sorted `variables`, one axis per variable"""
        max_cells = get_config().MAX_QUERY_CELLS if max_cells is None else max_cells
        variables = self.schema.resolve(variables)
        if not variables:
            return np.asarray(1.0)
        size = math.prod(self._levels(variables))
        if size > max_cells:
            raise CapacityError(f"margin over {variables} needs {size} cells, limit is {max_cells}", cost=size)

        groups: Dict[int, List[int]] = {}
        for v in variables:
            groups.setdefault(self.component_of[self._first_clique(v)], []).append(v)
        log_table = np.zeros(self._levels(variables))
        for component in sorted(groups):
            members = tuple(groups[component])
            log_table = log_table + _broadcast(
                self._component_log_marginal(members, max_cells), members, variables
            )
        return np.exp(log_table)

    def sample(self, n: int, seed: int) -> np.ndarray:
        """Forward sampling root to leaves; one separator configuration at a time"""
        if n < 0:
            raise ValidationError("sample size must be nonnegative")
        rng = np.random.default_rng(seed)
        rows = np.zeros((n, self.schema.p), dtype=np.int64)
        if n == 0:
            return rows
        for order in self.components:
            root = order[0]
            clique = self.cliques[root]
            probs = self.clique_marginal(root).ravel()
            draws = rng.choice(probs.size, size=n, p=probs / probs.sum())
            rows[:, list(clique)] = np.column_stack(np.unravel_index(draws, self._levels(clique)))
            for node in order[1:]:
                self._sample_child(node, rows, rng)
        return rows

    def _sample_child(self, node: int, rows: np.ndarray, rng: np.random.Generator):
        clique = self.cliques[node]
        sep = self.separator(node, self.parent[node])
        residual = tuple(v for v in clique if v not in sep)
        if not residual:
            return
        sep_pos = [clique.index(v) for v in sep]
        res_pos = [clique.index(v) for v in residual]
        sep_levels = self._levels(sep)
        res_levels = self._levels(residual)
        joint = np.transpose(self.clique_marginal(node), sep_pos + res_pos)
        joint = joint.reshape(math.prod(sep_levels), math.prod(res_levels))
        conditional = joint / joint.sum(axis=1, keepdims=True)

        keys = row_indices(rows[:, list(sep)], sep_levels)
        configs, inverse = np.unique(keys, return_inverse=True)
        for k, config in enumerate(configs):
            mask = inverse == k
            draws = rng.choice(conditional.shape[1], size=int(mask.sum()), p=conditional[config])
            rows[np.ix_(mask, list(residual))] = np.column_stack(np.unravel_index(draws, res_levels))


def _decomposition_for(model: LogLinearModel, decomposition: Optional[CliqueDecomposition]) -> CliqueDecomposition:
    decomposition = decomposition or model.decomposition
    if decomposition is None:
        raise ValidationError("no clique decomposition available for this model")
    return decomposition


def junction_normalize(model: LogLinearModel, decomposition: CliqueDecomposition = None) -> float:
    """Exact log of the sum over all cells of exp((X beta)_i)"""
    tree = JunctionTree(model, _decomposition_for(model, decomposition))
    logger.debug("model_normalized", cliques=len(tree.cliques), log_partition=tree.log_partition)
    return tree.log_partition


def normalize(model: LogLinearModel, decomposition: CliqueDecomposition = None) -> LogLinearModel:
    decomposition = _decomposition_for(model, decomposition)
    return replace(model, log_partition=junction_normalize(model, decomposition), decomposition=decomposition)


def marginal_query(model: LogLinearModel, decomposition: CliqueDecomposition, cells,
                   variables: Sequence = None, max_cells: Optional[int] = None) -> np.ndarray:
    """Probabilities of full cells (variables=None) or of sub-cells over `variables`"""
    if model.log_partition is None:
        raise ValidationError("model is not normalized; run junction_normalize first")
    cells = np.asarray(cells, dtype=np.int64)
    if variables is None:
        if cells.ndim == 1:
            cells = cells.reshape(1, -1)
        if cells.shape[1] != model.schema.p:
            raise ValidationError(f"full cells need {model.schema.p} coordinates")
        Dataset(schema=model.schema, rows=cells)
        return np.exp(log_probabilities(model, cells))

    variables = model.schema.resolve(variables)
    tree = JunctionTree(model, _decomposition_for(model, decomposition))
    table = tree.marginal(variables, max_cells)
    if not variables:
        return np.ones(cells.shape[0] if cells.ndim == 2 else 1)
    if cells.ndim == 1:
        cells = cells.reshape(1, -1)
    if cells.shape[1] != len(variables):
        raise ValidationError(f"sub-cells need {len(variables)} coordinates")
    levels = np.asarray(model.schema.levels_of(variables))
    if ((cells < 0) | (cells >= levels)).any():
        raise ValidationError("queried sub-cell has a level outside its variable's range")
    return table[tuple(cells.T)]


def sample_from_model(model: LogLinearModel, decomposition: CliqueDecomposition, n: int, seed: int) -> Dataset:
    tree = JunctionTree(model, _decomposition_for(model, decomposition))
    rows = tree.sample(int(n), seed)
    logger.info("model_sampled", n=int(n), seed=seed)
    return Dataset(schema=model.schema, rows=rows)
