# services/selection_service.py
"""Model selection on collapsed tables.

All fits work on one ContingencyTable and use its local variable indices
(0..s-1); the table's `variables` map them back to the global schema.
"""
import math
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np
import structlog
from scipy.special import logsumexp

from config import get_config
from errors import ConvergenceError, MLENonexistenceError, ValidationError
from models.fits import GroupLassoFit, StepwiseFit
from models.loglinear import LogLinearModel, block_width
from models.schema import ContingencyTable
from models.terms import INTERCEPT, DesignBlockMap, GeneratingClass, InteractionTerm, sort_terms
from services.design_service import build_design, full_terms, hierarchical_closure, project_log_probabilities

logger = structlog.get_logger(__name__)

# fitted cells below this are treated as structural zeros of the MLE
ZERO_CELL = 1e-12


def _softmax(eta: np.ndarray) -> np.ndarray:
    return np.exp(eta - logsumexp(eta))


def log_likelihood(counts: np.ndarray, probabilities: np.ndarray) -> float:
    """sum_i n_i log p_i with 0 log 0 = 0"""
    counts = np.asarray(counts, dtype=float)
    observed = counts > 0
    probs = np.asarray(probabilities, dtype=float)[observed]
    if (probs <= 0).any():
        return float('-inf')
    return float(np.dot(counts[observed], np.log(probs)))


# ---------------------------------------------------------------------------
# group lasso
# ---------------------------------------------------------------------------

def _penalty(beta: Sequence[np.ndarray]) -> float:
    return math.fsum(float(np.linalg.norm(b)) for b in beta)


def _objective(eta: np.ndarray, y: np.ndarray, beta: Sequence[np.ndarray], lam: float) -> float:
    return float(-np.dot(y, eta) + logsumexp(eta) + lam * _penalty(beta))


def _block_kkt(gradient: np.ndarray, beta: np.ndarray, lam: float) -> float:
    norm = np.linalg.norm(beta)
    if norm == 0:
        return max(0.0, float(np.linalg.norm(gradient)) - lam)
    return float(np.linalg.norm(gradient + lam * beta / norm))


def lambda_max(table: ContingencyTable, design: Optional[Tuple[np.ndarray, DesignBlockMap]] = None) -> float:
    """Smallest lambda at which every non-intercept block is zero"""
    if table.n == 0:
        raise ValidationError("table holds no observations")
    X, block_map = design or build_design(table.schema)
    y = table.counts / table.n
    # the intercept-only fit is uniform and uniform is orthogonal to every block
    return max(
        (float(np.linalg.norm(X[:, sl].T @ y)) for t, sl in block_map.as_dict().items() if not t.is_intercept),
        default=0.0,
    )


def lambda_grid(lam_max: float, size: Optional[int] = None, ratio: Optional[float] = None) -> np.ndarray:
    """Log-spaced descending grid from lam_max down to lam_max * ratio"""
    config = get_config()
    size = config.LAMBDA_GRID_SIZE if size is None else int(size)
    ratio = config.LAMBDA_MIN_RATIO if ratio is None else float(ratio)
    if size < 1:
        raise ValidationError("lambda grid needs at least one point")
    if lam_max <= 0:
        return np.zeros(1)
    return np.geomspace(lam_max, lam_max * ratio, size)


def fit_group_lasso(table: ContingencyTable, lam: float, tol: Optional[float] = None,
                    max_iter: Optional[int] = None, kkt_tol: Optional[float] = None,
                    warm_start: Optional[Mapping[InteractionTerm, np.ndarray]] = None,
                    design: Optional[Tuple[np.ndarray, DesignBlockMap]] = None) -> GroupLassoFit:
    """Minimize -l(beta)/n + lam * sum_a ||beta_a|| by blockwise majorization

    The intercept is left out of the optimization and set afterwards so that
    fitted probabilities sum to one.
    """
    config = get_config()
    tol = config.GL_TOL if tol is None else tol
    max_iter = config.GL_MAX_ITER if max_iter is None else max_iter
    kkt_tol = config.GL_KKT_TOL if kkt_tol is None else kkt_tol
    if lam < 0 or not np.isfinite(lam):
        raise ValidationError(f"lambda must be a finite nonnegative number, got {lam}")
    if table.n == 0:
        raise ValidationError("table holds no observations")

    X, block_map = design or build_design(table.schema)
    y = table.counts / table.n
    terms = [t for t in block_map.terms if not t.is_intercept]
    columns = [X[:, block_map.slice_of(t)] for t in terms]
    lipschitz = [float(np.max(np.sum(Xa ** 2, axis=1))) for Xa in columns]
    warm_start = warm_start or {}
    beta = [np.array(warm_start.get(t, np.zeros(Xa.shape[1])), dtype=float) for t, Xa in zip(terms, columns)]

    eta = np.zeros(X.shape[0])
    for Xa, b in zip(columns, beta):
        if b.any():
            eta += Xa @ b
    objective = _objective(eta, y, beta, lam)
    residual = float('nan')
    converged = False
    iteration = 0

    for iteration in range(1, max_iter + 1):
        for k, Xa in enumerate(columns):
            gradient = Xa.T @ (_softmax(eta) - y)
            current = beta[k]
            if not current.any() and np.linalg.norm(gradient) <= lam:
                continue
            z = current - gradient / lipschitz[k]
            z_norm = np.linalg.norm(z)
            shrink = max(0.0, 1.0 - lam / (lipschitz[k] * z_norm)) if z_norm > 0 else 0.0
            updated = shrink * z
            delta = updated - current
            if delta.any():
                eta += Xa @ delta
                beta[k] = updated

        new_objective = _objective(eta, y, beta, lam)
        if new_objective > objective + 1e-12 * max(1.0, abs(objective)):
            logger.warning("objective_increased", iteration=iteration, before=objective, after=new_objective)
        change = abs(objective - new_objective) / max(1.0, abs(new_objective))
        objective = new_objective
        if change < tol:
            gradient = X.T @ (_softmax(eta) - y)
            residual = max(
                (_block_kkt(gradient[block_map.slice_of(t)], b, lam) for t, b in zip(terms, beta)), default=0.0
            )
            if residual <= kkt_tol:
                converged = True
                break

    if not converged:
        logger.warning(
            "group_lasso_not_converged", variables=list(table.variables), lam=lam,
            iterations=iteration, objective=objective,
        )
    probabilities = _softmax(eta)
    coefficients = {INTERCEPT: np.array([-float(logsumexp(eta))])}
    coefficients.update({t: b for t, b in zip(terms, beta)})
    return GroupLassoFit(
        lam=float(lam),
        variables=table.variables,
        coefficients=coefficients,
        probabilities=probabilities,
        objective=objective,
        iterations=iteration,
        converged=converged,
        kkt_residual=residual,
    )


def kkt_residual(table: ContingencyTable, fit: GroupLassoFit) -> float:
    """Largest blockwise violation of the optimality conditions of a group-lasso fit"""
    X, block_map = build_design(table.schema)
    y = table.counts / table.n
    gradient = X.T @ (fit.probabilities - y)
    return max(
        (
            _block_kkt(gradient[block_map.slice_of(t)], np.asarray(b), fit.lam)
            for t, b in fit.coefficients.items() if not t.is_intercept
        ),
        default=0.0,
    )


def _fold_counts(table: ContingencyTable, folds: int, seed: int) -> np.ndarray:
    """(folds, m) held-out counts; observations are ordered by cell before shuffling"""
    cells = np.repeat(np.arange(table.counts.shape[0]), table.counts)
    rng = np.random.default_rng(seed)
    held_out = np.zeros((folds, table.counts.shape[0]), dtype=np.int64)
    for f, members in enumerate(np.array_split(rng.permutation(cells.shape[0]), folds)):
        held_out[f] = np.bincount(cells[members], minlength=table.counts.shape[0])
    return held_out


def cross_validate_lambda(table: ContingencyTable, folds: Optional[int] = None,
                          grid: Optional[Sequence[float]] = None, seed: int = 0) -> float:
    """Lambda maximizing the mean held-out multinomial log-likelihood; ties go to the larger lambda"""
    config = get_config()
    folds = config.CV_FOLDS if folds is None else int(folds)
    if folds < 2:
        raise ValidationError("cross-validation needs at least 2 folds")
    design = build_design(table.schema)
    if grid is None:
        grid = lambda_grid(lambda_max(table, design))
    grid = sorted({float(g) for g in grid}, reverse=True)
    if not grid:
        raise ValidationError("lambda grid is empty")
    if len(grid) == 1:
        return grid[0]
    if table.n < folds:
        raise ValidationError(f"{table.n} observations cannot fill {folds} folds")

    held_out = _fold_counts(table, folds, seed)
    scores = np.zeros(len(grid))
    for f in range(folds):
        train = ContingencyTable(schema=table.schema, variables=table.variables, counts=table.counts - held_out[f])
        warm = None
        for g, lam in enumerate(grid):
            fit = fit_group_lasso(train, lam, warm_start=warm, design=design)
            warm = fit.coefficients
            scores[g] += log_likelihood(held_out[f], fit.probabilities)
    scores /= folds

    best = np.max(scores)
    chosen = next(lam for lam, score in zip(grid, scores) if score >= best - 1e-12 * max(1.0, abs(best)))
    logger.info("lambda_selected", variables=list(table.variables), lam=chosen, folds=folds, grid=len(grid))
    return chosen


# ---------------------------------------------------------------------------
# iterative proportional fitting
# ---------------------------------------------------------------------------

def _margin(array: np.ndarray, keep: Tuple[int, ...]) -> np.ndarray:
    axes = tuple(i for i in range(array.ndim) if i not in keep)
    return array.sum(axis=axes, keepdims=True) if axes else array


def fit_mle(table: ContingencyTable, generating_class: GeneratingClass,
            tol: Optional[float] = None, max_iter: Optional[int] = None) -> LogLinearModel:
    """Hierarchical MLE by iterative proportional fitting (generators in local indices)"""
    config = get_config()
    tol = config.IPF_TOL if tol is None else tol
    max_iter = config.IPF_MAX_ITER if max_iter is None else max_iter
    if table.n == 0:
        raise ValidationError("table holds no observations")
    p = table.schema.p
    generators = [g for g in generating_class if not g.is_intercept]
    for g in generators:
        if any(not 0 <= v < p for v in g.variables):
            raise ValidationError(f"generator {g.variables} uses a variable outside the table")

    observed = table.as_array() / table.n
    targets = [_margin(observed, g.variables) for g in generators]
    fitted = np.full(table.shape, 1.0 / table.schema.cell_count)
    error = 0.0
    iteration = 0
    converged = not generators
    for iteration in range(1, max_iter + 1 if generators else 1):
        for g, target in zip(generators, targets):
            current = _margin(fitted, g.variables)
            with np.errstate(divide='ignore', invalid='ignore'):
                ratio = np.where(current > 0, target / current, 0.0)
            fitted = fitted * ratio
        error = max(float(np.max(np.abs(_margin(fitted, g.variables) - t))) for g, t in zip(generators, targets))
        if error < tol:
            converged = True
            break

    if (fitted < ZERO_CELL).any():
        raise MLENonexistenceError(
            f"sampling zeros: the MLE for generators {[g.variables for g in generators]} "
            f"on table {table.variables} does not exist"
        )
    if not converged:
        raise ConvergenceError(
            f"IPF did not match margins within {tol} after {max_iter} cycles", last_objective=error
        )

    fitted = fitted / fitted.sum()
    closure = hierarchical_closure(generators)
    coefficients = project_log_probabilities(
        table.schema, tuple(range(p)), np.log(fitted).ravel(), terms=closure
    )
    return LogLinearModel(
        schema=table.schema,
        coefficients=coefficients,
        log_partition=0.0,
        method='df',
        diagnostics={
            'iterations': iteration,
            'max_margin_error': error,
            'log_likelihood': log_likelihood(table.counts, fitted.ravel()),
            'generators': [list(g.variables) for g in generators],
        },
    )


def model_probabilities(model: LogLinearModel) -> np.ndarray:
    """Cell probabilities of a small, self-normalized local model"""
    X, block_map = build_design(model.schema, model.terms)
    beta = np.concatenate([model.block(t) for t in block_map.terms])
    return _softmax(X @ beta)


def saturated_class(table: ContingencyTable) -> GeneratingClass:
    return GeneratingClass((InteractionTerm(tuple(range(table.schema.p))),))


# ---------------------------------------------------------------------------
# stepwise forward selection
# ---------------------------------------------------------------------------

def _criterion(s: float, k: int, loglik: float) -> float:
    penalty = 0.0 if k == 0 else s * k
    return penalty - 2.0 * loglik


def _feasible(term: InteractionTerm, present: set) -> bool:
    return term not in present and all(sub in present for sub in term.subterms(proper=True))


def stepwise_forward(table: ContingencyTable, s: float) -> StepwiseFit:
    """Add the hierarchically feasible term that lowers s*k - 2 log(l) most, until none does"""
    if s < 0 or math.isnan(s):
        raise ValidationError("s must be nonnegative")
    if table.n == 0:
        raise ValidationError("table holds no observations")
    schema = table.schema
    pool = [t for t in full_terms(range(schema.p)) if not t.is_intercept]

    present = {INTERCEPT}
    model = fit_mle(table, GeneratingClass((INTERCEPT,)))
    loglik = model.diagnostics['log_likelihood']
    k = 0
    current = _criterion(s, k, loglik)
    skipped: List[InteractionTerm] = []

    while True:
        best = None
        for term in pool:
            if not _feasible(term, present) or term in skipped:
                continue
            candidate_class = GeneratingClass.from_terms(present | {term})
            try:
                candidate = fit_mle(table, candidate_class)
            except (MLENonexistenceError, ConvergenceError) as exc:
                logger.warning("stepwise_candidate_skipped", term=list(term.variables), reason=str(exc))
                skipped.append(term)
                continue
            cand_k = k + block_width(schema, term)
            value = _criterion(s, cand_k, candidate.diagnostics['log_likelihood'])
            if best is None or value < best[0]:
                best = (value, term, candidate, cand_k)
        if best is None or not best[0] < current:
            break
        current, term, model, k = best
        present.add(term)
        logger.debug("stepwise_term_added", term=list(term.variables), criterion=current)

    generating_class = GeneratingClass.from_terms(present)
    return StepwiseFit(
        s=float(s),
        variables=table.variables,
        generating_class=generating_class,
        criterion=current,
        degrees_of_freedom=k,
        log_likelihood=model.diagnostics['log_likelihood'],
        probabilities=model_probabilities(model),
        coefficients=dict(model.coefficients),
        skipped=tuple(sort_terms(skipped)),
    )


def stepwise_path(table: ContingencyTable, s_values: Iterable[float]) -> List[StepwiseFit]:
    return [stepwise_forward(table, s) for s in s_values]


def fit_saturated(table: ContingencyTable) -> LogLinearModel:
    """MLE on the full class; falls back to stepwise selection with s=0 under sampling zeros"""
    try:
        return fit_mle(table, saturated_class(table))
    except MLENonexistenceError:
        logger.warning("saturated_mle_missing", variables=list(table.variables))
        fit = stepwise_forward(table, 0.0)
        return LogLinearModel(
            schema=table.schema,
            coefficients=fit.coefficients,
            log_partition=0.0,
            method='df',
            diagnostics=fit.diagnostics(),
        )


def local_model(table: ContingencyTable, fit, method: str) -> LogLinearModel:
    """Wrap a group-lasso or stepwise fit as a self-normalized model over the table"""
    if isinstance(fit, LogLinearModel):
        return fit
    return LogLinearModel(
        schema=table.schema,
        coefficients=fit.coefficients,
        log_partition=0.0,
        method=method,
        diagnostics=fit.diagnostics(),
    )
