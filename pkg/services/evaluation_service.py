# services/evaluation_service.py
import math
from dataclasses import replace
from itertools import combinations
from typing import Dict, Iterable, List, Mapping, Sequence, Tuple

import networkx as nx
import numpy as np
import structlog
from scipy.stats import ttest_rel
from sklearn.metrics import auc

from errors import ValidationError
from models.graph import sorted_edges
from models.loglinear import CombinedModel, LogLinearModel
from models.report import EvaluationReport, RocPoint
from models.schema import Dataset
from services.combination_service import apply_threshold, normalize_combined
from services.design_service import log_potentials

logger = structlog.get_logger(__name__)

Edge = Tuple[int, int]


def edge_strengths(model) -> Dict[Edge, float]:
    """Largest block norm among nonzero terms covering each vertex pair"""
    model = model.model if isinstance(model, CombinedModel) else model
    strengths: Dict[Edge, float] = {}
    for term, norm in model.block_norms().items():
        if norm <= 0 or term.order < 2:
            continue
        for edge in combinations(term.variables, 2):
            strengths[edge] = max(strengths.get(edge, 0.0), norm)
    return strengths


def _sweep(strengths: Mapping[Edge, float], true_graph: nx.Graph, p: int) -> EvaluationReport:
    vertices = sorted(true_graph.nodes())
    if vertices != list(range(p)):
        raise ValidationError(f"true graph must have vertices 0..{p - 1}")
    truth = set(sorted_edges(true_graph))
    n_true = len(truth)
    n_gaps = p * (p - 1) // 2 - n_true

    def rate(count, total):
        return count / total if total else 0.0

    points = [RocPoint(threshold=math.inf, fpr=0.0, tpr=0.0, n_edges=0)]
    ordered = sorted(strengths.items(), key=lambda item: (-item[1], item[0]))
    true_pos = false_pos = 0
    for index, (edge, value) in enumerate(ordered):
        if edge in truth:
            true_pos += 1
        else:
            false_pos += 1
        if index + 1 < len(ordered) and ordered[index + 1][1] == value:
            continue
        points.append(RocPoint(
            threshold=float(value),
            fpr=rate(false_pos, n_gaps),
            tpr=rate(true_pos, n_true),
            n_edges=index + 1,
        ))
    report = EvaluationReport(
        points=tuple(points),
        true_edges=n_true,
        true_gaps=n_gaps,
        estimated_edges=len(ordered),
    )
    return replace(report, auc=roc_auc(report))


def roc_sweep(model, true_graph: nx.Graph) -> EvaluationReport:
    """ROC points from thresholding edge strengths in decreasing order"""
    model_ = model.model if isinstance(model, CombinedModel) else model
    report = _sweep(edge_strengths(model_), true_graph, model_.schema.p)
    logger.info("roc_computed", points=len(report.points), auc=report.auc)
    return report


def graph_roc(estimate: nx.Graph, true_graph: nx.Graph) -> EvaluationReport:
    """Single-threshold sweep for an estimated edge set given without strengths"""
    p = true_graph.number_of_nodes()
    if sorted(estimate.nodes()) != list(range(p)):
        raise ValidationError("estimated and true graph must share the vertex set")
    return _sweep({edge: 1.0 for edge in sorted_edges(estimate)}, true_graph, p)


def importance_roc(rtilde: np.ndarray, true_graph: nx.Graph) -> EvaluationReport:
    """Baseline sweep that adds edges in decreasing symmetric-rank order"""
    rtilde = np.asarray(rtilde, dtype=float)
    p = rtilde.shape[0]
    strengths = {(i, j): float(rtilde[i, j]) for i, j in combinations(range(p), 2)}
    return _sweep(strengths, true_graph, p)


def roc_auc(report: EvaluationReport) -> float:
    """Area under the ROC curve, closed at (1, 1)"""
    fpr = [pt.fpr for pt in report.points] + [1.0]
    tpr = [pt.tpr for pt in report.points] + [1.0]
    order = np.lexsort((tpr, fpr))
    return float(auc(np.asarray(fpr)[order], np.asarray(tpr)[order]))


def tpr_at_fpr(report: EvaluationReport, fpr: float) -> float:
    eligible = [pt.tpr for pt in report.points if pt.fpr <= fpr]
    return max(eligible, default=0.0)


def empirical_kl(reference: Dataset, candidate, notes: List[str] = None) -> float:
    """-(1/N) sum log p_hat over the reference observations (non-normalized KL)"""
    model = candidate.model if isinstance(candidate, CombinedModel) else candidate
    if not isinstance(model, LogLinearModel) or model.log_partition is None:
        raise ValidationError("candidate model must be normalized before computing KL")
    if reference.schema.levels != model.schema.levels:
        raise ValidationError("reference data and candidate model use different schemas")
    if reference.n == 0:
        raise ValidationError("reference sample is empty")

    log_p = log_potentials(model, reference.rows) - model.log_partition
    bad = ~np.isfinite(log_p)
    if bad.any():
        offending = sorted({tuple(int(x) for x in row) for row in reference.rows[bad]})
        message = f"candidate assigns zero probability to {len(offending)} observed cells"
        logger.warning("kl_infinite", cells=offending[:20])
        if notes is not None:
            notes.append(message)
        return math.inf
    return -math.fsum(log_p.tolist()) / reference.n


def threshold_path(combined: CombinedModel, reference: Dataset,
                   fractions: Sequence[float]) -> List[Dict[str, float]]:
    """KL and separator share after zeroing the smallest fraction of nonzero blocks"""
    norms = sorted(
        (norm, term) for term, norm in combined.model.block_norms().items() if norm > 0
    )
    flags = {t: p.separator_only for t, p in combined.provenance.items()}
    path = []
    for fraction in fractions:
        if not 0.0 <= fraction <= 1.0:
            raise ValidationError(f"fraction {fraction} outside [0, 1]")
        k = int(round(fraction * len(norms)))
        if k == 0:
            thresholded = combined if combined.model.log_partition is not None else normalize_combined(combined)
            share = 0.0
        else:
            cut = float(np.nextafter(norms[k - 1][0], np.inf))
            thresholded = normalize_combined(apply_threshold(combined, cut))
            zeroed = [term for norm, term in norms if norm < cut]
            share = sum(flags.get(t, False) for t in zeroed) / len(zeroed)
        path.append({
            'fraction': float(fraction),
            'zeroed': k,
            'kl': empirical_kl(reference, thresholded),
            'separator_share': float(share),
        })
    return path


def paired_comparison(first: Iterable[float], second: Iterable[float]) -> Dict[str, float]:
    """Mean difference and paired t-test across matched runs"""
    first = np.asarray(list(first), dtype=float)
    second = np.asarray(list(second), dtype=float)
    if first.shape != second.shape or first.size < 2:
        raise ValidationError("paired comparison needs two equally long samples of at least 2 values")
    result = ttest_rel(first, second)
    return {
        'n': int(first.size),
        'mean_difference': float(np.mean(first - second)),
        'statistic': float(result.statistic),
        'p_value': float(result.pvalue),
    }
