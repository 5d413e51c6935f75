"""Bundled desk-scale corpora.

``symmetric_ring_corpus`` builds same-size ring graphs with decorated
substituents, the kind of symmetric motif where masking collapses distinct
graphs onto one state. ``random_molecules`` grows valence-respecting kekulized
molecules as a stand-in for a QM9-style subset.
"""

from typing import List, Optional, Set

import numpy as np

from .canonical import canonical_code
from .graph import GraphSample
from .vocab import Vocabulary

_SINGLE, _DOUBLE = 1, 2


def symmetric_ring_corpus(count: int,
                          n_nodes: int,
                          vocab: Vocabulary,
                          rng: np.random.Generator,
                          max_attempts: int = 50) -> List[GraphSample]:
    """Ring graphs of exactly ``n_nodes`` nodes with substituent chains.

    Args:
        count: Number of graphs to return
        n_nodes: Node count shared by all graphs (>= 3)
        vocab: Vocabulary; bond ids for SINGLE/DOUBLE are looked up by name
        rng: Random generator
        max_attempts: Draws per graph before a duplicate is accepted

    Returns:
        List of clean graphs, distinct up to isomorphism whenever possible
    """
    if n_nodes < 3:
        raise ValueError("ring corpus needs at least 3 nodes")
    single = vocab.bond_index("SINGLE")
    double = vocab.bond_index("DOUBLE") if "DOUBLE" in vocab.bond_types else single
    carbon = vocab.atom_index("C") if "C" in vocab.atom_types else 0
    chain_atoms = [vocab.atom_index(a) for a in vocab.atom_types if vocab.valence[a] >= 2]
    terminal_atoms = list(range(vocab.num_atom_types))

    graphs: List[GraphSample] = []
    seen: Set[bytes] = set()
    while len(graphs) < count:
        for _ in range(max_attempts):
            ring = 6 if n_nodes >= 6 else n_nodes
            if n_nodes >= 7 and rng.random() < 0.3:
                ring = 5
            nodes = [carbon] * ring
            edges = []
            kekule = ring == 6 and rng.random() < 0.5
            for k in range(ring):
                kind = double if kekule and k % 2 == 0 else single
                edges.append((k, (k + 1) % ring, kind))
            extra = n_nodes - ring
            anchors = rng.choice(ring, size=min(extra, ring), replace=False) if extra else []
            lengths = np.zeros(len(anchors), dtype=int)
            for k in range(extra):
                lengths[k % len(anchors)] += 1
            for anchor, length in zip(anchors, lengths):
                prev = int(anchor)
                for step in range(length):
                    pool = terminal_atoms if step == length - 1 else chain_atoms
                    nodes.append(int(rng.choice(pool)))
                    edges.append((prev, len(nodes) - 1, single))
                    prev = len(nodes) - 1
            g = GraphSample.from_edge_list(nodes, edges)
            code = canonical_code(g).code
            if code not in seen:
                break
        seen.add(code)
        graphs.append(g)
    return graphs


def random_molecules(count: int,
                     max_atoms: int,
                     vocab: Vocabulary,
                     rng: np.random.Generator,
                     min_atoms: int = 1,
                     ring_prob: float = 0.3,
                     atom_weights: Optional[List[float]] = None) -> List[GraphSample]:
    """Random connected kekulized molecules that pass the valence check."""
    orders = vocab.bond_order_table()
    order_to_id = {order: idx for idx, order in enumerate(orders) if order > 0}
    valences = vocab.valence_table()
    weights = np.asarray(atom_weights or [4.0] + [1.0] * (vocab.num_atom_types - 1), dtype=float)
    weights = weights[:vocab.num_atom_types] / weights[:vocab.num_atom_types].sum()

    molecules = []
    for _ in range(count):
        n = int(rng.integers(min_atoms, max_atoms + 1))
        nodes: List[int] = []
        capacity: List[int] = []
        edges = {}
        for k in range(n):
            if k == 0:
                atom = int(rng.choice(vocab.num_atom_types, p=weights))
                nodes.append(atom)
                capacity.append(valences[atom])
                continue
            hosts = [i for i in range(k) if capacity[i] > 0]
            if not hosts:
                break
            host = int(rng.choice(hosts))
            atom = int(rng.choice(vocab.num_atom_types, p=weights))
            max_order = min(capacity[host], valences[atom], max(order_to_id))
            order = 1 if rng.random() < 0.8 else int(rng.integers(1, max_order + 1))
            order = order if order in order_to_id else 1
            nodes.append(atom)
            capacity.append(valences[atom] - order)
            capacity[host] -= order
            edges[(host, k)] = order_to_id[order]
        if len(nodes) >= 3 and rng.random() < ring_prob:
            open_atoms = [i for i in range(len(nodes)) if capacity[i] > 0]
            pairs = [(a, b) for a in open_atoms for b in open_atoms
                     if a < b and (a, b) not in edges and b - a >= 2]
            if pairs:
                a, b = pairs[int(rng.integers(len(pairs)))]
                edges[(a, b)] = order_to_id[1]
                capacity[a] -= 1
                capacity[b] -= 1
        molecules.append(GraphSample.from_edge_list(
            nodes, [(i, j, kind) for (i, j), kind in edges.items()]))
    return molecules
