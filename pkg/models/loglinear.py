# models/loglinear.py
import math
from dataclasses import dataclass, field, replace
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from errors import ValidationError
from models.graph import CliqueDecomposition
from models.schema import VariableSchema
from models.terms import INTERCEPT, InteractionTerm, as_term, sort_terms

METHOD_TAGS = ('dgl', 'dgl-cv', 'dgl-f', 'dsf', 'dsf-aic', 'df')


def block_width(schema: VariableSchema, term: InteractionTerm) -> int:
    return math.prod(schema.levels[v] - 1 for v in term.variables)


@dataclass(frozen=True)
class LogLinearModel:
    """Coefficient blocks beta_a over the shared orthogonal contrast basis

    log p(i) = sum_a x_a(i_a) . beta_a - log_partition
    """

    schema: VariableSchema
    coefficients: Dict[InteractionTerm, np.ndarray]
    log_partition: Optional[float] = None
    method: Optional[str] = None
    diagnostics: Dict[str, Any] = field(default_factory=dict)
    decomposition: Optional[CliqueDecomposition] = None

    def __post_init__(self):
        blocks = {}
        for term, beta in self.coefficients.items():
            term = as_term(term)
            beta = np.array(beta, dtype=float).ravel()
            for v in term.variables:
                if not 0 <= v < self.schema.p:
                    raise ValidationError(f"term {term.variables} uses unknown variable {v}")
            if beta.shape[0] != block_width(self.schema, term):
                raise ValidationError(
                    f"block for term {term.variables} has {beta.shape[0]} coefficients, "
                    f"expected {block_width(self.schema, term)}"
                )
            blocks[term] = beta
        # hierarchical: every sub-term is present, possibly with a zero block
        for term in list(blocks):
            for sub in term.subterms(proper=True):
                if sub not in blocks:
                    blocks[sub] = np.zeros(block_width(self.schema, sub))
        blocks.setdefault(INTERCEPT, np.zeros(1))
        ordered = {t: blocks[t] for t in sort_terms(blocks)}
        for beta in ordered.values():
            beta.setflags(write=False)
        object.__setattr__(self, 'coefficients', ordered)

    def __repr__(self):
        return f'<LogLinearModel terms={len(self.coefficients)} method={self.method}>'

    @property
    def terms(self) -> List[InteractionTerm]:
        return list(self.coefficients)

    @property
    def intercept(self) -> float:
        return float(self.coefficients[INTERCEPT][0])

    @property
    def is_normalized(self) -> bool:
        return self.log_partition is not None

    def block(self, term) -> np.ndarray:
        term = as_term(term)
        if term in self.coefficients:
            return self.coefficients[term]
        return np.zeros(block_width(self.schema, term))

    def block_norms(self) -> Dict[InteractionTerm, float]:
        return {t: float(np.linalg.norm(b)) for t, b in self.coefficients.items() if not t.is_intercept}

    def nonzero_terms(self, tol: float = 0.0) -> List[InteractionTerm]:
        return [t for t, norm in self.block_norms().items() if norm > tol]

    def with_coefficients(self, coefficients, **changes) -> 'LogLinearModel':
        return replace(self, coefficients=coefficients, log_partition=None, **changes)

    def to_dict(self):
        return {
            'schema': self.schema.to_dict(),
            'terms': [
                {'vars': list(t.variables), 'coefficients': [float(x) for x in beta]}
                for t, beta in self.coefficients.items()
            ],
            'log_partition': self.log_partition,
            'method': self.method,
            'diagnostics': self.diagnostics,
            'decomposition': self.decomposition.to_dict() if self.decomposition else None,
        }

    @classmethod
    def from_dict(cls, data):
        decomposition = data.get('decomposition')
        return cls(
            schema=VariableSchema.from_dict(data['schema']),
            coefficients={
                InteractionTerm(tuple(item['vars'])): np.asarray(item['coefficients'], dtype=float)
                for item in data['terms']
            },
            log_partition=data.get('log_partition'),
            method=data.get('method'),
            diagnostics=data.get('diagnostics') or {},
            decomposition=CliqueDecomposition.from_dict(decomposition) if decomposition else None,
        )


@dataclass(frozen=True)
class TermProvenance:
    """Signed contributions of local fits to one global coefficient block"""

    cliques: Tuple[Tuple[int, ...], ...] = ()
    separators: Tuple[Tuple[Tuple[int, ...], int], ...] = ()
    separator_only: bool = False

    def to_dict(self):
        return {
            'cliques': [list(c) for c in self.cliques],
            'separators': [{'vars': list(s), 'index': nu} for s, nu in self.separators],
            'separator_only': self.separator_only,
        }

    @classmethod
    def from_dict(cls, data):
        return cls(
            cliques=tuple(tuple(c) for c in data['cliques']),
            separators=tuple((tuple(s['vars']), int(s['index'])) for s in data['separators']),
            separator_only=bool(data['separator_only']),
        )


@dataclass(frozen=True)
class CombinedModel:
    """Global model assembled from clique and separator fits"""

    model: LogLinearModel
    provenance: Dict[InteractionTerm, TermProvenance]
    threshold: float = 0.0

    def __repr__(self):
        return f'<CombinedModel terms={len(self.model.coefficients)} threshold={self.threshold:g}>'

    @property
    def decomposition(self) -> Optional[CliqueDecomposition]:
        return self.model.decomposition

    def separator_only_terms(self) -> List[InteractionTerm]:
        return [t for t, prov in self.provenance.items() if prov.separator_only]

    def to_dict(self):
        data = self.model.to_dict()
        data['threshold'] = self.threshold
        data['provenance'] = [
            dict(vars=list(t.variables), **prov.to_dict()) for t, prov in self.provenance.items()
        ]
        return data

    @classmethod
    def from_dict(cls, data):
        model = LogLinearModel.from_dict(data)
        provenance = {
            InteractionTerm(tuple(item['vars'])): TermProvenance.from_dict(item)
            for item in data.get('provenance') or []
        }
        return cls(model=model, provenance=provenance, threshold=float(data.get('threshold') or 0.0))
