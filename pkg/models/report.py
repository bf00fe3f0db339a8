# models/report.py
from dataclasses import dataclass, field
from typing import List, Optional, Tuple


@dataclass(frozen=True)
class RocPoint:
    threshold: float
    fpr: float
    tpr: float
    n_edges: int

    def to_dict(self):
        return {'threshold': self.threshold, 'fpr': self.fpr, 'tpr': self.tpr, 'n_edges': self.n_edges}


@dataclass(frozen=True)
class EvaluationReport:
    """ROC sweep of an estimated structure against a true graph, plus optional KL"""

    points: Tuple[RocPoint, ...]
    true_edges: int
    true_gaps: int
    estimated_edges: int
    kl: Optional[float] = None
    auc: Optional[float] = None
    notes: List[str] = field(default_factory=list)

    def __repr__(self):
        return f'<EvaluationReport points={len(self.points)} auc={self.auc}>'

    @property
    def fpr(self):
        return [pt.fpr for pt in self.points]

    @property
    def tpr(self):
        return [pt.tpr for pt in self.points]

    def to_dict(self):
        return {
            'points': [pt.to_dict() for pt in self.points],
            'true_edges': self.true_edges,
            'true_gaps': self.true_gaps,
            'estimated_edges': self.estimated_edges,
            'kl': self.kl,
            'auc': self.auc,
            'notes': list(self.notes),
        }

    @classmethod
    def from_dict(cls, data):
        return cls(
            points=tuple(RocPoint(**pt) for pt in data['points']),
            true_edges=int(data['true_edges']),
            true_gaps=int(data['true_gaps']),
            estimated_edges=int(data['estimated_edges']),
            kl=data.get('kl'),
            auc=data.get('auc'),
            notes=list(data.get('notes') or []),
        )
