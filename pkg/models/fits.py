# models/fits.py
from dataclasses import dataclass, field
from typing import Any, Dict, Tuple

import numpy as np

from models.terms import GeneratingClass, InteractionTerm


@dataclass(frozen=True)
class GroupLassoFit:
    """Penalized fit on one collapsed table; terms use the table's local indices, `variables` maps them back"""

    lam: float
    variables: Tuple[int, ...]
    coefficients: Dict[InteractionTerm, np.ndarray]
    probabilities: np.ndarray
    objective: float
    iterations: int
    converged: bool
    kkt_residual: float = float('nan')

    def __repr__(self):
        return f'<GroupLassoFit lam={self.lam:g} active={len(self.active_terms())} converged={self.converged}>'

    def active_terms(self):
        return [t for t, b in self.coefficients.items() if not t.is_intercept and np.any(b != 0)]

    def diagnostics(self) -> Dict[str, Any]:
        return {
            'lambda': float(self.lam),
            'objective': float(self.objective),
            'iterations': int(self.iterations),
            'converged': bool(self.converged),
            'kkt_residual': float(self.kkt_residual),
        }


@dataclass(frozen=True)
class StepwiseFit:
    """Forward selection under the criterion s*k - 2 log(l)"""

    s: float
    variables: Tuple[int, ...]
    generating_class: GeneratingClass
    criterion: float
    degrees_of_freedom: int
    log_likelihood: float
    probabilities: np.ndarray
    coefficients: Dict[InteractionTerm, np.ndarray]
    skipped: Tuple[InteractionTerm, ...] = field(default=())

    def __repr__(self):
        return f'<StepwiseFit s={self.s:g} k={self.degrees_of_freedom}>'

    def diagnostics(self) -> Dict[str, Any]:
        return {
            's': float(self.s),
            'criterion': float(self.criterion),
            'degrees_of_freedom': int(self.degrees_of_freedom),
            'generators': [list(g.variables) for g in self.generating_class],
            'skipped': [list(t.variables) for t in self.skipped],
        }
