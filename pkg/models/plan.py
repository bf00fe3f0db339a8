# models/plan.py
from dataclasses import dataclass
from typing import List, Tuple

from errors import ValidationError
from models.graph import CliqueDecomposition

VertexSet = Tuple[int, ...]


@dataclass(frozen=True)
class SplitRecord:
    """One split-off step: clique C = residual A + separator S"""

    clique: VertexSet
    separator: VertexSet
    residual: VertexSet

    def __post_init__(self):
        clique = tuple(sorted(self.clique))
        separator = tuple(sorted(self.separator))
        residual = tuple(sorted(self.residual))
        if set(separator) | set(residual) != set(clique) or set(separator) & set(residual):
            raise ValidationError(f"residual {residual} and separator {separator} do not split {clique}")
        object.__setattr__(self, 'clique', clique)
        object.__setattr__(self, 'separator', separator)
        object.__setattr__(self, 'residual', residual)

    def to_dict(self):
        return {'clique': list(self.clique), 'separator': list(self.separator), 'residual': list(self.residual)}

    @classmethod
    def from_dict(cls, data):
        return cls(tuple(data['clique']), tuple(data['separator']), tuple(data['residual']))


@dataclass(frozen=True)
class DeletedEdge:
    edge: Tuple[int, int]
    rank: float

    def to_dict(self):
        return {'edge': list(self.edge), 'rank': self.rank}


@dataclass(frozen=True)
class DecompositionPlan:
    """Ordered split-off records with the resulting clique decomposition"""

    records: Tuple[SplitRecord, ...]
    decomposition: CliqueDecomposition
    smax: int
    deleted_edges: Tuple[DeletedEdge, ...] = ()
    fill_edges: Tuple[Tuple[int, int], ...] = ()

    def __repr__(self):
        return f'<DecompositionPlan records={len(self.records)} smax={self.smax}>'

    @property
    def cliques(self) -> List[VertexSet]:
        return list(self.decomposition.cliques)

    @property
    def vertices(self) -> VertexSet:
        return tuple(sorted({v for r in self.records for v in r.clique}))

    def deletion_order(self) -> List[Tuple[int, int]]:
        return [d.edge for d in self.deleted_edges]

    def to_dict(self):
        return {
            'smax': self.smax,
            'records': [r.to_dict() for r in self.records],
            'decomposition': self.decomposition.to_dict(),
            'deleted_edges': [d.to_dict() for d in self.deleted_edges],
            'fill_edges': [list(e) for e in self.fill_edges],
        }

    @classmethod
    def from_dict(cls, data):
        return cls(
            records=tuple(SplitRecord.from_dict(r) for r in data['records']),
            decomposition=CliqueDecomposition.from_dict(data['decomposition']),
            smax=int(data['smax']),
            deleted_edges=tuple(
                DeletedEdge(tuple(d['edge']), float(d['rank'])) for d in data.get('deleted_edges', [])
            ),
            fill_edges=tuple(tuple(e) for e in data.get('fill_edges', [])),
        )
