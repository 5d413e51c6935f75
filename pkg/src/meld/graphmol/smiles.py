"""Kekulized SMILES subset: organic atoms from the vocabulary, '=' and '#' bonds,
branches and single-digit ring closures. No brackets, charges, isotopes,
stereochemistry, aromatic atoms or dot-disconnected fragments.
"""

from typing import Dict, List, Optional, Tuple

import numpy as np

from ..errors import (
    DisconnectedGraph,
    MaskedInput,
    SmilesSyntaxError,
    UnclosedBranch,
    UnclosedRing,
    UnknownAtom,
)
from .graph import GraphSample
from .valence import component_count
from .vocab import BOND_SYMBOLS, Vocabulary

_BOND_CHARS = {"-": "SINGLE", "=": "DOUBLE", "#": "TRIPLE"}


class _SmilesReader:
    """Single-pass reader over one SMILES string."""

    def __init__(self, text: str, vocab: Vocabulary):
        self.text = text
        self.vocab = vocab
        # longest symbols first so two-letter symbols win over their prefix
        self.symbols = sorted(vocab.atom_types, key=len, reverse=True)
        self.nodes: List[int] = []
        self.bonds: Dict[Tuple[int, int], str] = {}
        self.open_rings: Dict[int, Tuple[int, Optional[str], int]] = {}
        self.branch_stack: List[Tuple[int, int]] = []

    def _add_bond(self, a: int, b: int, kind: str, pos: int) -> None:
        key = (min(a, b), max(a, b))
        if a == b or key in self.bonds:
            raise SmilesSyntaxError(pos, "ring closure to a new neighbor", self.text)
        self.bonds[key] = kind

    def _read_atom(self, pos: int) -> Tuple[int, int]:
        for symbol in self.symbols:
            if self.text.startswith(symbol, pos):
                return self.vocab.atom_index(symbol), pos + len(symbol)
        ch = self.text[pos]
        if ch.isalpha():
            if ch.isupper():
                end = pos + 1
                if end < len(self.text) and self.text[end].islower():
                    end += 1
                raise UnknownAtom(self.text[pos:end], pos)
            raise SmilesSyntaxError(pos, "uppercase atom symbol (aromatic atoms unsupported)",
                                    self.text)
        raise SmilesSyntaxError(pos, "atom symbol", self.text)

    def parse(self) -> GraphSample:
        text = self.text
        if not text:
            raise SmilesSyntaxError(0, "atom symbol", text)
        prev: Optional[int] = None
        pending: Optional[str] = None
        pending_pos = 0
        pos = 0
        while pos < len(text):
            ch = text[pos]
            if ch == "(":
                if prev is None or pending is not None:
                    raise SmilesSyntaxError(pos, "atom before branch", text)
                self.branch_stack.append((prev, pos))
                pos += 1
                if pos >= len(text) or text[pos] == ")":
                    raise SmilesSyntaxError(pos, "branch contents", text)
                continue
            if ch == ")":
                if not self.branch_stack:
                    raise UnclosedBranch(pos)
                if pending is not None:
                    raise SmilesSyntaxError(pos, "atom after bond symbol", text)
                prev, _ = self.branch_stack.pop()
                pos += 1
                continue
            if ch in _BOND_CHARS:
                if prev is None or pending is not None:
                    raise SmilesSyntaxError(pos, "atom symbol", text)
                pending = _BOND_CHARS[ch]
                pending_pos = pos
                pos += 1
                continue
            if ch.isdigit():
                digit = int(ch)
                if prev is None or digit == 0:
                    raise SmilesSyntaxError(pos, "ring-closure digit 1-9 after an atom", text)
                if digit in self.open_rings:
                    partner, opened_kind, _ = self.open_rings.pop(digit)
                    if pending and opened_kind and pending != opened_kind:
                        raise SmilesSyntaxError(pos, "matching ring-closure bond symbols", text)
                    self._add_bond(prev, partner, pending or opened_kind or "SINGLE", pos)
                else:
                    self.open_rings[digit] = (prev, pending, pos)
                pending = None
                pos += 1
                continue
            if ch in "[]%.@/\\+:*":
                raise SmilesSyntaxError(pos, "subset grammar (no brackets, charges, "
                                             "stereo, aromatic bonds or fragments)", text)
            atom, end = self._read_atom(pos)
            self.nodes.append(atom)
            current = len(self.nodes) - 1
            if prev is not None:
                self._add_bond(prev, current, pending or "SINGLE", pos)
            prev = current
            pending = None
            pos = end
        if pending is not None:
            raise SmilesSyntaxError(pending_pos + 1, "atom after bond symbol", text)
        if self.branch_stack:
            raise UnclosedBranch(self.branch_stack[-1][1])
        if self.open_rings:
            raise UnclosedRing(sorted(self.open_rings))
        edges = [(i, j, self.vocab.bond_index(kind)) for (i, j), kind in self.bonds.items()]
        return GraphSample.from_edge_list(self.nodes, edges)


def parse_smiles(text: str, vocab: Vocabulary) -> GraphSample:
    """Parse a SMILES-subset string into a clean graph with implicit hydrogens.

    Args:
        text: SMILES string in the supported subset
        vocab: Vocabulary giving the allowed atom symbols

    Returns:
        GraphSample with nodes in order of appearance
    """
    return _SmilesReader(text.strip(), vocab).parse()


def write_smiles(g: GraphSample, vocab: Vocabulary) -> str:
    """Write a clean connected graph as a SMILES-subset string.

    Depth-first from node 0, neighbors visited in index order, ring-closure
    digits handed out in discovery order (lowest free digit).
    """
    if g.has_masks(vocab):
        raise MaskedInput("cannot write a graph containing mask ids")
    if component_count(g) > 1:
        raise DisconnectedGraph("write_smiles needs a connected graph")

    n = g.n
    adjacency = [[j for j in range(n) if j != i and g.edges[i, j] != 0] for i in range(n)]
    visited = np.zeros(n, dtype=bool)
    children: List[List[int]] = [[] for _ in range(n)]
    closures: List[List[Tuple[int, int]]] = [[] for _ in range(n)]  # (partner, order key)
    seen_edges = set()
    counter = 0

    def dfs(v: int, parent: int) -> None:
        nonlocal counter
        visited[v] = True
        for u in adjacency[v]:
            key = (min(u, v), max(u, v))
            if key in seen_edges:
                continue
            seen_edges.add(key)
            if visited[u]:
                closures[u].append((v, counter))
                closures[v].append((u, counter))
                counter += 1
            else:
                children[v].append(u)
                dfs(u, v)

    dfs(0, -1)

    digits: Dict[Tuple[int, int], int] = {}
    free = list(range(1, 10))
    out: List[str] = []

    def bond_symbol(a: int, b: int) -> str:
        return BOND_SYMBOLS[vocab.bond_types[int(g.edges[a, b])]]

    def emit(v: int) -> None:
        out.append(vocab.atom_types[int(g.nodes[v])])
        for partner, _ in sorted(closures[v], key=lambda c: c[1]):
            key = (min(v, partner), max(v, partner))
            if key in digits:
                digit = digits.pop(key)
                out.append(bond_symbol(v, partner) + str(digit))
                free.append(digit)
                free.sort()
            else:
                if not free:
                    raise ValueError("more than 9 simultaneously open rings")
                digit = free.pop(0)
                digits[key] = digit
                out.append(str(digit))
        for k, child in enumerate(children[v]):
            last = k == len(children[v]) - 1
            if not last:
                out.append("(")
            out.append(bond_symbol(v, child))
            emit(child)
            if not last:
                out.append(")")

    emit(0)
    return "".join(out)
