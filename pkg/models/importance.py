# models/importance.py
import math
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from errors import ValidationError


@dataclass(frozen=True)
class ForestConfig:
    """Hyperparameters of the node-wise random forests"""

    n_trees: int = 500
    max_features: Optional[int] = None  # candidate variables per split, spent as one-hot columns; None -> sqrt(p - 1)
    min_samples_leaf: int = 5
    max_depth: Optional[int] = None
    seed: int = 0

    def __post_init__(self):
        if self.n_trees < 1:
            raise ValidationError("a forest needs at least one tree")
        if self.min_samples_leaf < 1:
            raise ValidationError("min_samples_leaf must be positive")
        if self.max_depth is not None and self.max_depth < 0:
            raise ValidationError("max_depth must be nonnegative")
        if self.max_features is not None and self.max_features < 1:
            raise ValidationError("max_features must be positive")

    def candidates(self, p: int) -> int:
        """Candidate covariates per split, clipped to [1, p - 1]"""
        n_covariates = max(p - 1, 1)
        wanted = self.max_features if self.max_features is not None else round(math.sqrt(n_covariates))
        return int(min(max(wanted, 1), n_covariates))

    def for_response(self, response: int) -> 'ForestConfig':
        # derived seed keeps results independent of execution order
        return replace(self, seed=self.seed + response)

    @classmethod
    def from_config(cls, config, seed: int = 0, **overrides) -> 'ForestConfig':
        values = dict(config.FOREST_CONFIG)
        values.update({k: v for k, v in overrides.items() if v is not None})
        return cls(seed=seed, **values)


@dataclass(frozen=True)
class ImportanceMatrices:
    """Importance matrix M, row ranks R and symmetrized ranks R-tilde"""

    importance: np.ndarray
    ranks: np.ndarray
    symmetric_ranks: np.ndarray

    def __post_init__(self):
        p = self.importance.shape[0]
        for name in ('importance', 'ranks', 'symmetric_ranks'):
            matrix = getattr(self, name)
            if matrix.shape != (p, p):
                raise ValidationError(f"{name} must be a {p}x{p} matrix")
        if not np.array_equal(self.symmetric_ranks, self.symmetric_ranks.T):
            raise ValidationError("symmetric_ranks must be symmetric")

    @property
    def p(self) -> int:
        return int(self.importance.shape[0])

    def __repr__(self):
        return f'<ImportanceMatrices p={self.p}>'
