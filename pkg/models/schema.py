# models/schema.py
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from errors import ValidationError

Cell = Tuple[int, ...]


@dataclass(frozen=True)
class VariableSchema:
    """Variable names with their level counts; levels are coded 0..k_v-1"""

    names: Tuple[str, ...]
    levels: Tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, 'names', tuple(str(name) for name in self.names))
        object.__setattr__(self, 'levels', tuple(int(k) for k in self.levels))
        if len(self.names) != len(self.levels):
            raise ValidationError("names and levels must have the same length")
        if len(set(self.names)) != len(self.names):
            raise ValidationError("variable names must be unique")
        for name, k in zip(self.names, self.levels):
            if k < 2:
                raise ValidationError(f"variable '{name}' needs at least 2 levels, got {k}")

    def __repr__(self):
        return f'<VariableSchema p={self.p}>'

    @property
    def p(self) -> int:
        return len(self.names)

    @property
    def cell_count(self) -> int:
        # Python ints never overflow; only ever called on small sub-schemas
        return math.prod(self.levels)

    def index_of(self, name: str) -> int:
        try:
            return self.names.index(str(name))
        except ValueError:
            raise ValidationError(f"unknown variable '{name}'")

    def resolve(self, variables: Sequence) -> Tuple[int, ...]:
        """Map names or indices onto sorted, de-duplicated variable indices"""
        indices = set()
        for v in variables:
            if isinstance(v, (int, np.integer)):
                if not 0 <= int(v) < self.p:
                    raise ValidationError(f"variable index {v} outside schema of {self.p} variables")
                indices.add(int(v))
            else:
                indices.add(self.index_of(v))
        return tuple(sorted(indices))

    def restrict(self, variables: Sequence[int]) -> 'VariableSchema':
        variables = self.resolve(variables)
        return VariableSchema(
            names=tuple(self.names[v] for v in variables),
            levels=tuple(self.levels[v] for v in variables),
        )

    def levels_of(self, variables: Sequence[int]) -> Tuple[int, ...]:
        return tuple(self.levels[v] for v in variables)

    def to_dict(self):
        return {'names': list(self.names), 'levels': list(self.levels)}

    @classmethod
    def from_dict(cls, data):
        return cls(names=tuple(data['names']), levels=tuple(data['levels']))


def validate_cell(schema: VariableSchema, cell: Sequence[int]) -> Cell:
    if len(cell) != schema.p:
        raise ValidationError(f"cell has {len(cell)} coordinates, schema has {schema.p} variables")
    for v, (level, k) in enumerate(zip(cell, schema.levels)):
        if not 0 <= int(level) < k:
            raise ValidationError(
                f"level {level} of variable '{schema.names[v]}' outside [0, {k})"
            )
    return tuple(int(level) for level in cell)


@dataclass(frozen=True)
class Dataset:
    """Raw observations: one row per individual, one column per variable"""

    schema: VariableSchema
    rows: np.ndarray

    def __post_init__(self):
        rows = np.asarray(self.rows, dtype=np.int64)
        if rows.size == 0:
            rows = rows.reshape(0, self.schema.p)
        if rows.ndim != 2 or rows.shape[1] != self.schema.p:
            raise ValidationError(
                f"rows must be an (n, {self.schema.p}) array, got shape {rows.shape}"
            )
        if rows.shape[0]:
            levels = np.asarray(self.schema.levels)
            bad = (rows < 0) | (rows >= levels)
            if bad.any():
                r, v = np.argwhere(bad)[0]
                raise ValidationError(
                    f"row {r}: level {rows[r, v]} of variable '{self.schema.names[v]}' "
                    f"outside [0, {levels[v]})"
                )
        rows = rows.copy()
        rows.setflags(write=False)
        object.__setattr__(self, 'rows', rows)

    def __repr__(self):
        return f'<Dataset n={self.n} p={self.schema.p}>'

    @property
    def n(self) -> int:
        return int(self.rows.shape[0])

    def column(self, variable: int) -> np.ndarray:
        return self.rows[:, variable]

    def take(self, indices) -> 'Dataset':
        return Dataset(schema=self.schema, rows=self.rows[np.asarray(indices, dtype=np.int64)])


@dataclass(frozen=True)
class ContingencyTable:
    """Dense cell counts over a (small) set of variables in canonical cell order"""

    schema: VariableSchema
    variables: Tuple[int, ...]
    counts: np.ndarray

    def __post_init__(self):
        counts = np.asarray(self.counts, dtype=np.int64).ravel()
        if counts.shape[0] != self.schema.cell_count:
            raise ValidationError(
                f"table over {self.variables} needs {self.schema.cell_count} cells, got {counts.shape[0]}"
            )
        if (counts < 0).any():
            raise ValidationError("cell counts must be nonnegative")
        counts = counts.copy()
        counts.setflags(write=False)
        object.__setattr__(self, 'variables', tuple(int(v) for v in self.variables))
        object.__setattr__(self, 'counts', counts)

    def __repr__(self):
        return f'<ContingencyTable vars={self.variables} n={self.n}>'

    @property
    def n(self) -> int:
        return int(self.counts.sum())

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.schema.levels

    def as_array(self) -> np.ndarray:
        return self.counts.reshape(self.shape) if self.variables else self.counts.reshape(())

    def proportions(self) -> np.ndarray:
        total = self.n
        if total == 0:
            raise ValidationError("table holds no observations")
        return self.counts / total

    def to_dict(self):
        return {
            'variables': list(self.variables),
            'schema': self.schema.to_dict(),
            'counts': self.counts.tolist(),
        }


@dataclass
class CollapsedTables:
    """Clique and separator tables produced from one dataset"""

    clique_tables: Dict[Tuple[int, ...], ContingencyTable] = field(default_factory=dict)
    separator_tables: Dict[Tuple[int, ...], ContingencyTable] = field(default_factory=dict)

    def all_tables(self) -> List[ContingencyTable]:
        return list(self.clique_tables.values()) + list(self.separator_tables.values())

    def get(self, variables: Tuple[int, ...]) -> Optional[ContingencyTable]:
        return self.clique_tables.get(variables) or self.separator_tables.get(variables)
