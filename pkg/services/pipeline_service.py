# services/pipeline_service.py
from typing import Dict, Optional, Tuple

import structlog
from joblib import Parallel, delayed

from config import get_config
from errors import ConvergenceError, ValidationError
from models.importance import ForestConfig, ImportanceMatrices
from models.loglinear import METHOD_TAGS, CombinedModel
from models.plan import DecompositionPlan
from models.schema import ContingencyTable, Dataset
from services.combination_service import combine, normalize_combined, threshold_separator_rule
from services.decomposition_service import collapse_on_plan, decompose
from services.importance_service import importance_matrix
from services.selection_service import (
    cross_validate_lambda, fit_group_lasso, fit_saturated, local_model, stepwise_forward,
)

logger = structlog.get_logger(__name__)

AIC_PENALTY = 2.0


def check_method(method: str, lam: Optional[float] = None, s: Optional[float] = None):
    if method not in METHOD_TAGS:
        raise ValidationError(f"unknown method tag '{method}', expected one of {', '.join(METHOD_TAGS)}")
    if method == 'dgl' and lam is None:
        raise ValidationError("method 'dgl' needs a fixed lambda")
    if method == 'dsf' and s is None:
        raise ValidationError("method 'dsf' needs a fixed s")


def fit_table(table: ContingencyTable, method: str, lam: Optional[float] = None, s: Optional[float] = None,
              folds: Optional[int] = None, seed: int = 0):
    """Model selection on one collapsed table; the fit keeps the table's local indices"""
    if method in ('dgl', 'dgl-cv', 'dgl-f'):
        chosen = lam if method == 'dgl' else cross_validate_lambda(table, folds=folds, seed=seed)
        fit = fit_group_lasso(table, chosen)
        if not fit.converged:
            raise ConvergenceError(
                f"group lasso on {table.variables} did not converge at lambda={chosen:g}",
                last_objective=fit.objective,
            )
        return local_model(table, fit, method)
    if method in ('dsf', 'dsf-aic'):
        penalty = AIC_PENALTY if method == 'dsf-aic' else s
        return local_model(table, stepwise_forward(table, penalty), method)
    return fit_saturated(table)


def fit_plan(data: Dataset, plan: DecompositionPlan, method: str, lam: Optional[float] = None,
             s: Optional[float] = None, folds: Optional[int] = None, seed: int = 0,
             threads: int = 1) -> CombinedModel:
    """Collapse the data on the plan, fit every table, combine, threshold (dgl-f) and normalize"""
    check_method(method, lam, s)
    if data.n == 0:
        raise ValidationError("dataset holds no observations")
    if plan.vertices != tuple(range(data.schema.p)):
        raise ValidationError(
            f"plan covers {len(plan.vertices)} variables but the dataset has {data.schema.p}"
        )
    tables = collapse_on_plan(data, plan)
    keys = list(tables.clique_tables) + list(tables.separator_tables)
    logger.info("plan_fit_started", method=method, tables=len(keys), threads=threads)

    results = Parallel(n_jobs=threads, prefer='threads')(
        delayed(fit_table)(tables.get(key), method, lam, s, folds, seed + index)
        for index, key in enumerate(keys)
    )
    fits: Dict[Tuple[int, ...], object] = dict(zip(keys, results))

    combined = combine(plan, fits, data.schema, method=method)
    if method == 'dgl-f':
        combined = threshold_separator_rule(combined, renormalize=False)
    combined = normalize_combined(combined)
    logger.info(
        "plan_fit_finished",
        method=method,
        nonzero=len(combined.model.nonzero_terms()),
        log_partition=combined.model.log_partition,
    )
    return combined


def estimate(data: Dataset, method: str, smax: Optional[int] = None, lam: Optional[float] = None,
             s: Optional[float] = None, folds: Optional[int] = None, forest: Optional[ForestConfig] = None,
             seed: int = 0, threads: int = 1) -> Tuple[CombinedModel, DecompositionPlan, ImportanceMatrices]:
    """Importance screening, recursive decomposition and local selection in one run"""
    check_method(method, lam, s)
    config = get_config()
    forest = forest or ForestConfig.from_config(config, seed=seed)
    matrices = importance_matrix(data, forest, threads=threads)
    plan = decompose(matrices.symmetric_ranks, smax=smax)
    combined = fit_plan(data, plan, method, lam=lam, s=s, folds=folds, seed=seed, threads=threads)
    return combined, plan, matrices
