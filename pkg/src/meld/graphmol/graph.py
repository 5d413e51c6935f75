from dataclasses import dataclass, field
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple

import networkx as nx
import numpy as np

from .vocab import Vocabulary


@dataclass(frozen=True, eq=False)
class GraphSample:
    """A labeled graph: node categories plus a symmetric edge-category matrix.

    The diagonal of ``edges`` is structurally excluded; it is stored as 0 and
    never read. Arrays are made read-only on construction.
    """

    nodes: np.ndarray
    edges: np.ndarray
    props: Dict[str, float] = field(default_factory=dict)

    def __post_init__(self) -> None:
        nodes = np.asarray(self.nodes, dtype=np.int64).reshape(-1)
        edges = np.asarray(self.edges, dtype=np.int64)
        n = nodes.shape[0]
        if n < 1:
            raise ValueError("a graph needs at least one node")
        if edges.shape != (n, n):
            raise ValueError(f"edges must be {n}x{n}, got {edges.shape}")
        edges = edges.copy()
        np.fill_diagonal(edges, 0)
        if not np.array_equal(edges, edges.T):
            raise ValueError("edge matrix must be symmetric")
        if (nodes < 0).any() or (edges < 0).any():
            raise ValueError("category ids must be non-negative")
        nodes.setflags(write=False)
        edges.setflags(write=False)
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "edges", edges)
        object.__setattr__(self, "props", dict(self.props))

    @property
    def n(self) -> int:
        return int(self.nodes.shape[0])

    @classmethod
    def from_edge_list(cls,
                       nodes: Sequence[int],
                       edge_list: Iterable[Tuple[int, int, int]],
                       props: Optional[Dict[str, float]] = None) -> "GraphSample":
        """Build a graph from (i, j, category) triples; missing pairs are NO_BOND."""
        n = len(nodes)
        edges = np.zeros((n, n), dtype=np.int64)
        for i, j, kind in edge_list:
            if not (0 <= i < n and 0 <= j < n):
                raise IndexError(f"edge ({i}, {j}) out of range for n={n}")
            if i == j:
                raise ValueError(f"self-bond on node {i}")
            edges[i, j] = kind
            edges[j, i] = kind
        return cls(np.asarray(nodes, dtype=np.int64), edges, props or {})

    def upper_edges(self) -> List[Tuple[int, int, int]]:
        """Non-zero upper-triangle entries as (i, j, category)."""
        rows, cols = np.triu_indices(self.n, k=1)
        return [(int(i), int(j), int(self.edges[i, j]))
                for i, j in zip(rows, cols) if self.edges[i, j] != 0]

    def is_clean(self, vocab: Vocabulary) -> bool:
        return not self.has_masks(vocab)

    def has_masks(self, vocab: Vocabulary) -> bool:
        if (self.nodes >= vocab.node_mask_id).any():
            return True
        off_diagonal = ~np.eye(self.n, dtype=bool)
        return bool((self.edges[off_diagonal] >= vocab.edge_mask_id).any())

    def check_ids(self, vocab: Vocabulary) -> None:
        """Raise if any id exceeds the vocabulary (mask ids included)."""
        if (self.nodes > vocab.node_mask_id).any():
            raise ValueError("node category id beyond vocabulary")
        if (self.edges > vocab.edge_mask_id).any():
            raise ValueError("edge category id beyond vocabulary")

    def permute(self, perm: Sequence[int]) -> "GraphSample":
        """Relabel nodes so that new node k is old node perm[k]."""
        p = np.asarray(perm, dtype=np.int64)
        return GraphSample(self.nodes[p], self.edges[np.ix_(p, p)], self.props)

    def to_networkx(self) -> nx.Graph:
        """Simple graph: any non-zero edge category becomes an edge."""
        g = nx.Graph()
        g.add_nodes_from(range(self.n))
        g.add_edges_from((i, j) for i, j, _ in self.upper_edges())
        return g

    def to_record(self) -> Dict[str, Any]:
        record: Dict[str, Any] = {
            "n": self.n,
            "nodes": [int(x) for x in self.nodes],
            "edges": [list(e) for e in self.upper_edges()],
        }
        if self.props:
            record["props"] = dict(self.props)
        return record

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, GraphSample):
            return NotImplemented
        return (np.array_equal(self.nodes, other.nodes)
                and np.array_equal(self.edges, other.edges)
                and self.props == other.props)

    def __repr__(self) -> str:
        return f"GraphSample(n={self.n}, nodes={self.nodes.tolist()}, edges={self.upper_edges()})"
