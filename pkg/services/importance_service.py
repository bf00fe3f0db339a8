# services/importance_service.py
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Tuple

import numpy as np
import structlog
from joblib import Parallel, delayed
from scipy.stats import mode, rankdata
from sklearn.dummy import DummyClassifier
from sklearn.preprocessing import OneHotEncoder
from sklearn.tree import DecisionTreeClassifier

from errors import ValidationError
from models.importance import ForestConfig, ImportanceMatrices
from models.schema import Dataset

logger = structlog.get_logger(__name__)

# permute(n_rows, rng) -> row positions; the identity hook makes every importance 0
Permutation = Callable[[int, np.random.Generator], np.ndarray]


def random_permutation(n_rows: int, rng: np.random.Generator) -> np.ndarray:
    return rng.permutation(n_rows)


def identity_permutation(n_rows: int, rng: np.random.Generator) -> np.ndarray:
    return np.arange(n_rows)


@dataclass
class Forest:
    """Bagged classification trees for one response on one-hot covariates"""

    response: int
    covariates: Tuple[int, ...]
    config: ForestConfig
    encoder: Optional[OneHotEncoder] = None
    column_groups: List[np.ndarray] = field(default_factory=list)
    trees: list = field(default_factory=list)
    oob_rows: List[np.ndarray] = field(default_factory=list)
    n_classes: int = 2
    degenerate: bool = False
    constant: int = 0

    def __repr__(self):
        return f'<Forest response={self.response} trees={len(self.trees)} degenerate={self.degenerate}>'

    def encode(self, rows: np.ndarray) -> np.ndarray:
        return self.encoder.transform(rows[:, list(self.covariates)])

    def predict(self, rows: np.ndarray) -> np.ndarray:
        """Majority vote; ties go to the smallest class"""
        if self.degenerate:
            return np.full(rows.shape[0], self.constant, dtype=np.int64)
        features = self.encode(rows)
        votes = np.vstack([tree.predict(features) for tree in self.trees])
        return mode(votes, axis=0, keepdims=False).mode.astype(np.int64)

    def oob_accuracy(self, data: Dataset) -> float:
        y = data.column(self.response)
        if self.degenerate:
            return 1.0
        features = self.encode(data.rows)
        votes = np.zeros((data.n, self.n_classes))
        for tree, oob in zip(self.trees, self.oob_rows):
            if oob.size:
                votes[oob, tree.predict(features[oob])] += 1
        seen = votes.sum(axis=1) > 0
        if not seen.any():
            return float('nan')
        return float(np.mean(votes[seen].argmax(axis=1) == y[seen]))


def _one_hot_features(n_columns: int, candidates: int, n_covariates: int) -> Optional[int]:
    """Columns held on average by `candidates` covariates; None lets every split see all columns

    sklearn samples columns, not variables, at each split, so the variable budget is spent as
    the matching share of one-hot columns.
    """
    if candidates >= n_covariates:
        return None
    return max(1, int(round(n_columns * candidates / n_covariates)))


def fit_forest(data: Dataset, response: int, config: ForestConfig) -> Forest:
    p = data.schema.p
    if p < 2:
        raise ValidationError("node-wise regression needs at least 2 variables")
    if not 0 <= response < p:
        raise ValidationError(f"response index {response} outside [0, {p})")
    if data.n < config.min_samples_leaf:
        raise ValidationError(f"{data.n} observations is fewer than min_samples_leaf={config.min_samples_leaf}")

    covariates = tuple(v for v in range(p) if v != response)
    y = data.column(response)
    forest = Forest(response=response, covariates=covariates, config=config,
                    n_classes=data.schema.levels[response])
    if np.unique(y).size < 2:
        logger.warning("degenerate_response", response=response)
        forest.degenerate = True
        forest.constant = int(y[0]) if data.n else 0
        return forest

    levels = data.schema.levels_of(covariates)
    forest.encoder = OneHotEncoder(categories=[np.arange(k) for k in levels], sparse_output=False, dtype=float)
    features = forest.encoder.fit_transform(data.rows[:, list(covariates)])
    offsets = np.concatenate([[0], np.cumsum(levels)])
    forest.column_groups = [np.arange(offsets[i], offsets[i + 1]) for i in range(len(covariates))]
    max_features = _one_hot_features(features.shape[1], config.candidates(p), len(covariates))

    rng = np.random.default_rng(config.seed)
    every_row = np.arange(data.n)
    for _ in range(config.n_trees):
        in_bag = rng.integers(0, data.n, size=data.n)
        oob = np.setdiff1d(every_row, in_bag, assume_unique=False)
        tree_seed = int(rng.integers(0, 2 ** 31 - 1))
        if config.max_depth == 0:
            tree = DummyClassifier(strategy='most_frequent')
        else:
            tree = DecisionTreeClassifier(
                criterion='gini',
                max_features=max_features,
                min_samples_leaf=config.min_samples_leaf,
                max_depth=config.max_depth,
                random_state=tree_seed,
            )
        tree.fit(features[in_bag], y[in_bag])
        forest.trees.append(tree)
        forest.oob_rows.append(oob)

    logger.debug("forest_fitted", response=response, trees=config.n_trees, max_features=max_features)
    return forest


def permutation_importance(forest: Forest, data: Dataset, seed: int,
                           permute: Permutation = random_permutation) -> np.ndarray:
    """Mean drop in out-of-bag accuracy after permuting each covariate; NaN at the response"""
    importance = np.full(data.schema.p, np.nan)
    importance[list(forest.covariates)] = 0.0
    if forest.degenerate:
        return importance

    rng = np.random.default_rng(seed)
    y = data.column(forest.response)
    features = forest.encode(data.rows)
    drops = np.zeros(len(forest.covariates))
    used = 0
    for tree, oob in zip(forest.trees, forest.oob_rows):
        if not oob.size:
            continue
        used += 1
        oob_features = features[oob]
        truth = y[oob]
        baseline = np.mean(tree.predict(oob_features) == truth)
        for j, columns in enumerate(forest.column_groups):
            order = np.asarray(permute(oob.size, rng))
            shuffled = oob_features.copy()
            shuffled[:, columns] = oob_features[order][:, columns]
            drops[j] += baseline - np.mean(tree.predict(shuffled) == truth)
    if used:
        importance[list(forest.covariates)] = drops / used
    return importance


def _importance_row(data: Dataset, response: int, config: ForestConfig,
                    permute: Permutation) -> np.ndarray:
    forest = fit_forest(data, response, config)
    return permutation_importance(forest, data, seed=config.seed, permute=permute)


def rank_rows(importance: np.ndarray) -> np.ndarray:
    """Within-row ranks 1..p-1 of the off-diagonal entries; ties go to the lower index"""
    importance = np.asarray(importance, dtype=float)
    p = importance.shape[0]
    ranks = np.zeros((p, p))
    for i in range(p):
        others = [j for j in range(p) if j != i]
        if others:
            ranks[i, others] = rankdata(importance[i, others], method='ordinal')
    return ranks


def symmetrize_ranks(ranks: np.ndarray) -> np.ndarray:
    symmetric = np.maximum(ranks, ranks.T).astype(float)
    np.fill_diagonal(symmetric, np.inf)
    return symmetric


def matrices_from_importance(importance: np.ndarray) -> ImportanceMatrices:
    importance = np.array(importance, dtype=float)
    np.fill_diagonal(importance, np.nan)
    ranks = rank_rows(importance)
    return ImportanceMatrices(importance=importance, ranks=ranks, symmetric_ranks=symmetrize_ranks(ranks))


def importance_matrix(data: Dataset, config: ForestConfig, threads: int = 1,
                      permute: Permutation = random_permutation) -> ImportanceMatrices:
    """One forest per response variable; row i of M holds covariate importances for response i"""
    p = data.schema.p
    if p < 2:
        raise ValidationError("node-wise regression needs at least 2 variables")
    logger.info("importance_started", p=p, n=data.n, trees=config.n_trees, threads=threads)
    rows = Parallel(n_jobs=threads, prefer='threads')(
        delayed(_importance_row)(data, r, config.for_response(r), permute) for r in range(p)
    )
    matrices = matrices_from_importance(np.vstack(rows))
    logger.info("importance_finished", p=p)
    return matrices
