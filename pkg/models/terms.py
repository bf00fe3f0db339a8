# models/terms.py
from dataclasses import dataclass
from itertools import combinations
from typing import Dict, Iterable, List, Tuple

from errors import ValidationError


@dataclass(frozen=True)
class InteractionTerm:
    """An interaction over a variable subset; the empty subset is the intercept"""

    variables: Tuple[int, ...] = ()

    def __post_init__(self):
        variables = tuple(sorted(int(v) for v in self.variables))
        if len(set(variables)) != len(variables):
            raise ValidationError(f"interaction term repeats a variable: {variables}")
        object.__setattr__(self, 'variables', variables)

    def __repr__(self):
        return f'<InteractionTerm {self.variables}>'

    def __iter__(self):
        return iter(self.variables)

    def __len__(self):
        return len(self.variables)

    @property
    def order(self) -> int:
        return len(self.variables)

    @property
    def is_intercept(self) -> bool:
        return not self.variables

    @property
    def sort_key(self):
        return (len(self.variables), self.variables)

    def issubset(self, other) -> bool:
        return set(self.variables).issubset(_as_variables(other))

    def subterms(self, proper=False) -> List['InteractionTerm']:
        top = len(self.variables) - 1 if proper else len(self.variables)
        return [
            InteractionTerm(combo)
            for size in range(top + 1)
            for combo in combinations(self.variables, size)
        ]

    def relabel(self, mapping) -> 'InteractionTerm':
        """Rename variables through an index sequence or dict (local -> global)"""
        return InteractionTerm(tuple(mapping[v] for v in self.variables))

    def to_dict(self):
        return {'vars': list(self.variables)}


INTERCEPT = InteractionTerm(())


def _as_variables(obj) -> Tuple[int, ...]:
    if isinstance(obj, InteractionTerm):
        return obj.variables
    return tuple(obj)


def as_term(obj) -> InteractionTerm:
    return obj if isinstance(obj, InteractionTerm) else InteractionTerm(tuple(obj))


def sort_terms(terms: Iterable[InteractionTerm]) -> List[InteractionTerm]:
    """Order by interaction order, ties broken lexicographically on variables"""
    return sorted({as_term(t) for t in terms}, key=lambda t: t.sort_key)


@dataclass(frozen=True)
class GeneratingClass:
    """Maximal interactions of a hierarchical model; generators are pairwise non-nested"""

    generators: Tuple[InteractionTerm, ...]

    def __post_init__(self):
        generators = tuple(sort_terms(self.generators))
        for a, b in combinations(generators, 2):
            if a.issubset(b) or b.issubset(a):
                raise ValidationError(f"generators {a.variables} and {b.variables} are nested")
        object.__setattr__(self, 'generators', generators)

    def __repr__(self):
        return f'<GeneratingClass {[g.variables for g in self.generators]}>'

    def __iter__(self):
        return iter(self.generators)

    def __len__(self):
        return len(self.generators)

    @classmethod
    def from_terms(cls, terms: Iterable) -> 'GeneratingClass':
        """Keep only the maximal terms of an arbitrary collection"""
        candidates = sort_terms(terms)
        maximal = [
            t for t in candidates
            if not any(t != other and t.issubset(other) for other in candidates)
        ]
        if len(maximal) > 1:
            maximal = [t for t in maximal if not t.is_intercept]
        return cls(tuple(maximal))

    @property
    def variables(self) -> Tuple[int, ...]:
        return tuple(sorted({v for g in self.generators for v in g}))

    def to_dict(self):
        return {'generators': [list(g.variables) for g in self.generators]}

    @classmethod
    def from_dict(cls, data):
        return cls(tuple(InteractionTerm(tuple(g)) for g in data['generators']))


@dataclass(frozen=True)
class DesignBlockMap:
    """Which contiguous columns of the design hold each term's coefficient block"""

    terms: Tuple[InteractionTerm, ...]
    column_ranges: Tuple[Tuple[int, int], ...]

    def __post_init__(self):
        if len(self.terms) != len(self.column_ranges):
            raise ValidationError("one column range per term is required")
        expected = 0
        for start, stop in self.column_ranges:
            if start != expected or stop <= start:
                raise ValidationError("column ranges must partition the design columns")
            expected = stop

    @property
    def widths(self) -> Tuple[int, ...]:
        return tuple(stop - start for start, stop in self.column_ranges)

    @property
    def n_columns(self) -> int:
        return self.column_ranges[-1][1] if self.column_ranges else 0

    def slice_of(self, term) -> slice:
        start, stop = self.column_ranges[self.terms.index(as_term(term))]
        return slice(start, stop)

    def as_dict(self) -> Dict[InteractionTerm, slice]:
        return {t: slice(a, b) for t, (a, b) in zip(self.terms, self.column_ranges)}
