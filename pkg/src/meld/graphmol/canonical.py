"""Canonical codes for labeled graphs (mask ids are ordinary labels).

Individualization-refinement: equitable color refinement on
(node label, multiset of (edge label, neighbor color)), then a search over
individualizations of the first non-singleton cell. The code is the minimum
serialization over all leaves; leaves in the same orbit of an automorphism
already found are pruned.
"""

import struct
from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

import numpy as np

from ..errors import TooLarge
from .graph import GraphSample

CODE_VERSION = 0x01
MAX_CANONICAL_NODES = 16


@dataclass(frozen=True, order=True)
class CanonicalCode:
    code: bytes

    def hex(self) -> str:
        return self.code.hex()


def _ranks(keys: List[tuple]) -> np.ndarray:
    order = {key: rank for rank, key in enumerate(sorted(set(keys)))}
    return np.asarray([order[key] for key in keys], dtype=np.int64)


def _refine(colors: np.ndarray, edges: np.ndarray) -> np.ndarray:
    """Refine to the coarsest equitable coloring finer than ``colors``."""
    n = colors.shape[0]
    while True:
        keys = []
        for v in range(n):
            neighborhood = sorted((int(edges[v, u]), int(colors[u])) for u in range(n) if u != v)
            keys.append((int(colors[v]), tuple(neighborhood)))
        refined = _ranks(keys)
        if len(np.unique(refined)) == len(np.unique(colors)):
            return refined
        colors = refined


def _serialize(order: np.ndarray, nodes: np.ndarray, edges: np.ndarray) -> bytes:
    n = order.shape[0]
    relabeled = edges[np.ix_(order, order)]
    upper = relabeled[np.triu_indices(n, k=1)]
    return (struct.pack(">BH", CODE_VERSION, n)
            + bytes(int(x) for x in nodes[order])
            + bytes(int(x) for x in upper))


class _UnionFind:
    def __init__(self, n: int):
        self.parent = list(range(n))

    def find(self, x: int) -> int:
        while self.parent[x] != x:
            self.parent[x] = self.parent[self.parent[x]]
            x = self.parent[x]
        return x

    def union(self, a: int, b: int) -> None:
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            self.parent[max(ra, rb)] = min(ra, rb)


class _Search:
    def __init__(self, nodes: np.ndarray, edges: np.ndarray):
        self.nodes = nodes
        self.edges = edges
        self.n = nodes.shape[0]
        self.best: Optional[bytes] = None
        self.best_order: Optional[np.ndarray] = None
        self.best_path: Tuple[int, ...] = ()
        self.automorphisms: List[np.ndarray] = []

    def _orbits(self, fixed: Tuple[int, ...]) -> _UnionFind:
        uf = _UnionFind(self.n)
        for gamma in self.automorphisms:
            if all(gamma[v] == v for v in fixed):
                for v in range(self.n):
                    uf.union(v, int(gamma[v]))
        return uf

    def _leaf(self, colors: np.ndarray, path: Tuple[int, ...]) -> Optional[int]:
        order = np.argsort(colors, kind="stable")
        code = _serialize(order, self.nodes, self.edges)
        if self.best is None or code < self.best:
            self.best, self.best_order, self.best_path = code, order, path
            return None
        if code > self.best:
            return None
        # same serialization: order -> best_order is an automorphism that fixes
        # the common prefix, so the rest of this subtree mirrors explored leaves
        gamma = np.empty(self.n, dtype=np.int64)
        gamma[order] = self.best_order
        self.automorphisms.append(gamma)
        common = 0
        while path[common] == self.best_path[common]:
            common += 1
        return common

    def run(self, colors: np.ndarray, fixed: Tuple[int, ...]) -> Optional[int]:
        """Explore the subtree below ``fixed``; returns a depth to unwind to."""
        colors = _refine(colors, self.edges)
        counts = np.bincount(colors)
        if counts.max() == 1:
            return self._leaf(colors, fixed)
        depth = len(fixed)
        target = int(np.flatnonzero(counts > 1)[0])
        cell = [int(v) for v in np.flatnonzero(colors == target)]
        explored: List[int] = []
        for v in cell:
            if explored:
                orbits = self._orbits(fixed)
                if any(orbits.find(v) == orbits.find(w) for w in explored):
                    continue
            keys = [(int(colors[u]), 0 if u == v else 1) for u in range(self.n)]
            jump = self.run(_ranks(keys), fixed + (v,))
            explored.append(v)
            if jump is not None and jump < depth:
                return jump
        return None


def canonical_code(g: GraphSample, max_nodes: int = MAX_CANONICAL_NODES) -> CanonicalCode:
    """Permutation-invariant code: equal iff the labeled graphs are isomorphic.

    Serialization: version byte 0x01, n as big-endian uint16, node labels in
    canonical order, then upper-triangle edge labels row-major.
    """
    if g.n > max_nodes:
        raise TooLarge(f"canonical_code supports n <= {max_nodes}, got {g.n}")
    if g.nodes.max() > 255 or g.edges.max() > 255:
        raise ValueError("labels must fit in one byte")
    search = _Search(g.nodes, g.edges)
    search.run(_ranks([(int(x),) for x in g.nodes]), ())
    return CanonicalCode(search.best)


def canonical_codes(graphs: List[GraphSample], max_nodes: int = MAX_CANONICAL_NODES
                    ) -> Dict[CanonicalCode, int]:
    """Count graphs per isomorphism class."""
    counts: Dict[CanonicalCode, int] = {}
    for g in graphs:
        code = canonical_code(g, max_nodes)
        counts[code] = counts.get(code, 0) + 1
    return counts
