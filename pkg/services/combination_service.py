# services/combination_service.py
from dataclasses import replace
from itertools import combinations
from typing import Dict, List, Mapping, Optional, Tuple

import networkx as nx
import numpy as np
import structlog

from errors import ValidationError
from models.graph import make_graph
from models.loglinear import CombinedModel, LogLinearModel, TermProvenance, block_width
from models.plan import DecompositionPlan
from models.schema import VariableSchema
from models.terms import InteractionTerm
from services.junction_service import normalize

logger = structlog.get_logger(__name__)


def _global_blocks(key: Tuple[int, ...], fit, schema: VariableSchema) -> Dict[InteractionTerm, np.ndarray]:
    """Relabel a local fit's blocks onto the global variables `key`"""
    if fit is None:
        raise ValidationError(f"no local fit for {key}")
    local_schema = getattr(fit, 'schema', None)
    if local_schema is not None and local_schema.levels != schema.levels_of(key):
        raise ValidationError(
            f"basis mismatch: fit on {key} has levels {local_schema.levels}, "
            f"schema has {schema.levels_of(key)}"
        )
    blocks = {}
    for term, beta in fit.coefficients.items():
        if any(not 0 <= v < len(key) for v in term.variables):
            raise ValidationError(f"fit on {key} has a term {term.variables} outside its table")
        global_term = term.relabel(key)
        beta = np.asarray(beta, dtype=float).ravel()
        if beta.shape[0] != block_width(schema, global_term):
            raise ValidationError(
                f"basis mismatch: block {global_term.variables} from {key} has {beta.shape[0]} "
                f"coefficients, expected {block_width(schema, global_term)}"
            )
        blocks[global_term] = beta
    return blocks


def combine(plan: DecompositionPlan, fits: Mapping[Tuple[int, ...], object], schema: VariableSchema,
            method: Optional[str] = None) -> CombinedModel:
    """Global blocks = sum over cliques minus nu(S) times the separator blocks

    `fits` maps each clique and separator vertex tuple to a local fit whose
    terms use that table's local indices.
    """
    decomposition = plan.decomposition
    accumulated: Dict[InteractionTerm, np.ndarray] = {}
    clique_sources: Dict[InteractionTerm, List[Tuple[int, ...]]] = {}
    separator_sources: Dict[InteractionTerm, List[Tuple[Tuple[int, ...], int]]] = {}

    for clique in decomposition.cliques:
        for term, beta in _global_blocks(clique, fits.get(clique), schema).items():
            accumulated[term] = accumulated.get(term, 0.0) + beta
            clique_sources.setdefault(term, []).append(clique)

    separators = [s for s in decomposition.separators if s]
    for separator, nu in decomposition.separator_index.items():
        if not separator:
            continue
        for term, beta in _global_blocks(separator, fits.get(separator), schema).items():
            accumulated[term] = accumulated.get(term, 0.0) - nu * beta
            separator_sources.setdefault(term, []).append((separator, nu))

    provenance = {
        term: TermProvenance(
            cliques=tuple(clique_sources.get(term, ())),
            separators=tuple(separator_sources.get(term, ())),
            separator_only=not term.is_intercept and any(term.issubset(s) for s in separators),
        )
        for term in accumulated
    }
    model = LogLinearModel(
        schema=schema,
        coefficients=accumulated,
        method=method,
        decomposition=decomposition,
    )
    logger.info(
        "fits_combined",
        cliques=len(decomposition.cliques),
        separators=len(separators),
        terms=len(accumulated),
    )
    return CombinedModel(model=model, provenance=provenance)


def normalize_combined(combined: CombinedModel) -> CombinedModel:
    return replace(combined, model=normalize(combined.model))


def _rule_threshold(norms: List[Tuple[float, bool]]) -> float:
    """Largest cut zeroing strictly more separator-only than other blocks; 0 when none does"""
    threshold = 0.0
    zeroed_separator = zeroed_other = 0
    ordered = sorted(norms)
    for index, (norm, separator_only) in enumerate(ordered):
        if separator_only:
            zeroed_separator += 1
        else:
            zeroed_other += 1
        # only cut between distinct norms
        if index + 1 < len(ordered) and ordered[index + 1][0] == norm:
            continue
        if zeroed_separator > zeroed_other:
            threshold = float(np.nextafter(norm, np.inf))
    return threshold


def apply_threshold(combined: CombinedModel, threshold: float) -> CombinedModel:
    """Zero every non-intercept block whose norm is below `threshold`"""
    model = combined.model
    coefficients = {
        term: (np.zeros_like(beta) if not term.is_intercept and np.linalg.norm(beta) < threshold else beta)
        for term, beta in model.coefficients.items()
    }
    return replace(combined, model=model.with_coefficients(coefficients), threshold=float(threshold))


def threshold_separator_rule(combined: CombinedModel, renormalize: bool = True) -> CombinedModel:
    """Hard-threshold at the largest norm whose zeroed set is mostly separator-only interactions"""
    flags = {t: p.separator_only for t, p in combined.provenance.items()}
    norms = [
        (norm, flags.get(term, False))
        for term, norm in combined.model.block_norms().items() if norm > 0
    ]
    if not any(separator_only for _, separator_only in norms):
        logger.info("threshold_skipped", reason="no nonzero separator interactions")
        return replace(combined, threshold=0.0)

    threshold = _rule_threshold(norms)
    if threshold == 0.0:
        return replace(combined, threshold=0.0)
    result = apply_threshold(combined, threshold)
    zeroed = len(norms) - len(result.model.nonzero_terms())
    logger.info("separator_threshold_applied", threshold=threshold, zeroed=zeroed, blocks=len(norms))
    if renormalize and result.model.decomposition is not None:
        result = normalize_combined(result)
    return result


def extract_graph(model) -> nx.Graph:
    """Interaction graph of the nonzero terms"""
    model = model.model if isinstance(model, CombinedModel) else model
    edges = set()
    for term in model.nonzero_terms():
        if term.order >= 2:
            edges.update(combinations(term.variables, 2))
    return make_graph(range(model.schema.p), edges)
