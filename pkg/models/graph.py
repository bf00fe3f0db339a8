# models/graph.py
from collections import Counter
from dataclasses import dataclass
from typing import Dict, List, Tuple

import networkx as nx

from errors import ValidationError

VertexSet = Tuple[int, ...]


def make_graph(vertices, edges=()) -> nx.Graph:
    """Build an undirected graph with deterministic (sorted) vertex insertion"""
    graph = nx.Graph()
    graph.add_nodes_from(sorted(int(v) for v in vertices))
    for u, v in edges:
        u, v = int(u), int(v)
        if u == v:
            raise ValidationError(f"self-loop on vertex {u}")
        if u not in graph or v not in graph:
            raise ValidationError(f"edge ({u}, {v}) uses a vertex outside the vertex set")
        graph.add_edge(u, v)
    return graph


def edge_key(u, v) -> Tuple[int, int]:
    return (u, v) if u < v else (v, u)


def sorted_edges(graph: nx.Graph) -> List[Tuple[int, int]]:
    return sorted(edge_key(u, v) for u, v in graph.edges())


@dataclass(frozen=True)
class CliqueDecomposition:
    """Cliques of a chordal graph joined by junction-tree edges (a forest if disconnected)"""

    cliques: Tuple[VertexSet, ...]
    tree_edges: Tuple[Tuple[int, int], ...] = ()

    def __post_init__(self):
        cliques = tuple(tuple(sorted(int(v) for v in c)) for c in self.cliques)
        edges = tuple(tuple(sorted((int(i), int(j)))) for i, j in self.tree_edges)
        for i, j in edges:
            if not (0 <= i < len(cliques) and 0 <= j < len(cliques)) or i == j:
                raise ValidationError(f"junction-tree edge ({i}, {j}) does not join two cliques")
        object.__setattr__(self, 'cliques', cliques)
        object.__setattr__(self, 'tree_edges', edges)

    def __repr__(self):
        return f'<CliqueDecomposition cliques={len(self.cliques)}>'

    @property
    def vertices(self) -> VertexSet:
        return tuple(sorted({v for c in self.cliques for v in c}))

    def edge_separator(self, edge) -> VertexSet:
        i, j = edge
        return tuple(sorted(set(self.cliques[i]) & set(self.cliques[j])))

    @property
    def separator_index(self) -> Dict[VertexSet, int]:
        """nu(S): how many junction-tree edges carry separator S"""
        counts = Counter(self.edge_separator(e) for e in self.tree_edges)
        return {s: counts[s] for s in sorted(counts, key=lambda s: (len(s), s))}

    @property
    def separators(self) -> List[VertexSet]:
        return list(self.separator_index)

    def forest(self) -> nx.Graph:
        tree = nx.Graph()
        tree.add_nodes_from(range(len(self.cliques)))
        tree.add_edges_from(self.tree_edges)
        return tree

    def n_components(self) -> int:
        return nx.number_connected_components(self.forest()) if self.cliques else 0

    def covering_clique(self, variables) -> int:
        """Index of the first clique containing every given variable, or -1"""
        wanted = set(variables)
        for index, clique in enumerate(self.cliques):
            if wanted.issubset(clique):
                return index
        return -1

    def to_dict(self):
        return {
            'cliques': [list(c) for c in self.cliques],
            'tree_edges': [list(e) for e in self.tree_edges],
            'separators': [
                {'vars': list(s), 'index': nu} for s, nu in self.separator_index.items()
            ],
        }

    @classmethod
    def from_dict(cls, data):
        return cls(
            cliques=tuple(tuple(c) for c in data['cliques']),
            tree_edges=tuple(tuple(e) for e in data.get('tree_edges', [])),
        )
