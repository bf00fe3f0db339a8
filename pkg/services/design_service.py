# services/design_service.py
"""Orthogonal log-linear design matrices and generating-class utilities.

Every variable with k levels gets k-1 orthogonal polynomial contrast columns,
scaled so each column has squared norm k. A term's block is the row-wise
Kronecker product of its variables' contrasts, multiplied by (-1)^(|a|-1);
the sign makes the interaction of two binary variables [-1, 1, 1, -1] and
changes neither orthogonality nor column spaces. Because the contrasts of a
variable depend only on its level count, every sub-table design shares one
basis with the global design.
"""
from functools import lru_cache
from itertools import combinations
from typing import Dict, Iterable, List, Sequence, Tuple

import networkx as nx
import numpy as np

from errors import CapacityError, ValidationError
from config import get_config
from models.graph import make_graph
from models.loglinear import LogLinearModel
from models.schema import VariableSchema
from models.terms import INTERCEPT, DesignBlockMap, GeneratingClass, InteractionTerm, as_term, sort_terms
from services.data_service import all_cells


@lru_cache(maxsize=None)
def _contrasts(k: int) -> np.ndarray:
    if k < 2:
        raise ValidationError("contrasts need at least 2 levels")
    x = np.arange(k, dtype=float)
    q, _ = np.linalg.qr(np.vander(x, k, increasing=True))
    basis = q[:, 1:]
    # level 0 gets the positive sign in every column
    basis = basis * np.sign(basis[0])
    basis = basis * np.sqrt(k) / np.linalg.norm(basis, axis=0)
    basis.setflags(write=False)
    return basis


def contrasts(k: int) -> np.ndarray:
    """(k, k-1) orthogonal polynomial contrasts for a k-level variable"""
    return _contrasts(int(k))


def term_sign(term: InteractionTerm) -> float:
    return -1.0 if term.order % 2 == 0 and term.order > 0 else 1.0


def block_columns(levels: Sequence[int], cells: np.ndarray, term_positions: Sequence[int],
                  sign: float = 1.0) -> np.ndarray:
    """Design columns of one term evaluated at `cells` (positions index into cells' columns)"""
    block = np.ones((cells.shape[0], 1))
    for pos in term_positions:
        basis = contrasts(levels[pos])[cells[:, pos]]
        block = (block[:, :, None] * basis[:, None, :]).reshape(cells.shape[0], -1)
    return sign * block


def full_terms(variables: Sequence[int]) -> List[InteractionTerm]:
    """Every subset of `variables`, the saturated term set"""
    variables = tuple(sorted(variables))
    return sort_terms(
        InteractionTerm(combo) for size in range(len(variables) + 1) for combo in combinations(variables, size)
    )


def build_design(schema: VariableSchema, terms: Iterable = None,
                 max_cells: int = None) -> Tuple[np.ndarray, DesignBlockMap]:
    """Design matrix over all cells of `schema`; terms use the schema's local indices"""
    max_cells = get_config().MAX_DESIGN_CELLS if max_cells is None else max_cells
    m = schema.cell_count
    if m > max_cells:
        raise CapacityError(f"design needs {m} rows, limit is {max_cells}", cost=m)
    terms = full_terms(range(schema.p)) if terms is None else sort_terms(terms)
    if INTERCEPT not in terms:
        raise ValidationError("the design must include the intercept term")
    for term in terms:
        if any(not 0 <= v < schema.p for v in term.variables):
            raise ValidationError(f"term {term.variables} uses a variable outside the schema")

    cells = all_cells(schema)
    blocks = []
    ranges = []
    start = 0
    for term in terms:
        # even-order blocks flip sign; the binary interaction is [-1, 1, 1, -1], the orthogonal column
        block = block_columns(schema.levels, cells, term.variables, term_sign(term))
        blocks.append(block)
        ranges.append((start, start + block.shape[1]))
        start += block.shape[1]
    return np.hstack(blocks), DesignBlockMap(terms=tuple(terms), column_ranges=tuple(ranges))


def term_table(schema: VariableSchema, term: InteractionTerm, beta: np.ndarray) -> np.ndarray:
    """xi_a as a dense array over the term's own levels (global variable indices)"""
    levels = schema.levels_of(term.variables)
    if term.is_intercept:
        return np.asarray(float(beta[0]))
    sub_levels = tuple(levels)
    cells = all_cells(VariableSchema(names=tuple(str(v) for v in term.variables), levels=sub_levels))
    values = block_columns(sub_levels, cells, range(len(sub_levels)), term_sign(term)) @ np.asarray(beta)
    return values.reshape(sub_levels)


def log_potentials(model: LogLinearModel, rows: np.ndarray, chunk_size: int = 200_000) -> np.ndarray:
    """Unnormalized log-probabilities sum_a x_a(i) beta_a at observation rows"""
    rows = np.asarray(rows, dtype=np.int64)
    if rows.ndim == 1:
        rows = rows.reshape(1, -1)
    tables = {
        t: term_table(model.schema, t, b) for t, b in model.coefficients.items()
        if not t.is_intercept and np.any(b != 0)
    }
    out = np.full(rows.shape[0], model.intercept)
    for start in range(0, rows.shape[0], chunk_size):
        chunk = rows[start:start + chunk_size]
        acc = out[start:start + chunk_size]
        for term, table in tables.items():
            acc += table[tuple(chunk[:, v] for v in term.variables)]
    return out


def log_probabilities(model: LogLinearModel, rows: np.ndarray) -> np.ndarray:
    if model.log_partition is None:
        raise ValidationError("model is not normalized; run junction_normalize first")
    return log_potentials(model, rows) - model.log_partition


def project_log_probabilities(schema: VariableSchema, variables: Sequence[int], log_p: np.ndarray,
                              terms: Iterable[InteractionTerm] = None) -> Dict[InteractionTerm, np.ndarray]:
    """beta_a = X_a^T log p / m for a table over `variables`; returns global terms"""
    variables = tuple(variables)
    local_schema = schema.restrict(variables)
    local_terms = None
    if terms is not None:
        position = {v: i for i, v in enumerate(variables)}
        local_terms = [InteractionTerm(tuple(position[v] for v in as_term(t).variables)) for t in terms]
        if INTERCEPT not in local_terms:
            local_terms.append(INTERCEPT)
    design, block_map = build_design(local_schema, local_terms)
    beta = design.T @ np.asarray(log_p, dtype=float) / local_schema.cell_count
    return {
        term.relabel(variables): beta[sl] for term, sl in block_map.as_dict().items()
    }


def hierarchical_closure(terms: Iterable) -> List[InteractionTerm]:
    """Downward closure of a term set; always contains the intercept"""
    closed = {INTERCEPT}
    for term in terms:
        closed.update(as_term(term).subterms())
    return sort_terms(closed)


def interaction_graph(generating_class: GeneratingClass, schema: VariableSchema) -> nx.Graph:
    edges = set()
    for generator in generating_class:
        edges.update(combinations(generator.variables, 2))
    return make_graph(range(schema.p), edges)


def is_graphical(generating_class: GeneratingClass, schema: VariableSchema) -> bool:
    """True iff the generators are exactly the cliques of their interaction graph"""
    graph = interaction_graph(generating_class, schema)
    covered = generating_class.variables
    cliques = {tuple(sorted(c)) for c in nx.find_cliques(graph.subgraph(covered))}
    generators = {g.variables for g in generating_class if not g.is_intercept}
    return cliques == generators
