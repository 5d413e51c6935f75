import itertools

import numpy as np
import pytest
import torch

from meld.graphmol import GraphSample, default_vocabulary, parse_smiles, random_molecules
from meld.models import GraphDenoiser
from meld.schemas import load_config


@pytest.fixture
def vocab():
    return default_vocabulary()


@pytest.fixture
def ethanol(vocab):
    return parse_smiles("CCO", vocab)


@pytest.fixture
def benzene(vocab):
    return parse_smiles("C1=CC=CC=C1", vocab)


@pytest.fixture
def small_corpus(vocab):
    """32 random valence-respecting molecules with at most 9 atoms."""
    return random_molecules(32, 9, vocab, np.random.default_rng(7), min_atoms=2)


@pytest.fixture
def tiny_config(tmp_path):
    """A run configuration small enough for unit tests."""
    return load_config(overrides=[
        "data.n_max=12",
        "schedule.embed_dim=8",
        "schedule.hidden_dim=8",
        "denoiser.layers=1",
        "denoiser.hidden_dim=16",
        "denoiser.heads=2",
        "denoiser.edge_dim=4",
        "denoiser.ffn_mult=2",
        "train.steps=4",
        "train.batch_size=4",
        "train.log_every=2",
        f"train.out_dir={tmp_path / 'runs'}",
        "sample.steps=6",
        "sample.count=6",
    ])


@pytest.fixture
def tiny_denoiser(vocab):
    torch.manual_seed(0)
    model = GraphDenoiser(vocab.num_atom_types, vocab.num_bond_types, n_max=12,
                          layers=1, hidden_dim=16, heads=2, edge_dim=4, ffn_mult=2)
    model.eval()
    return model


def brute_force_isomorphic(a: GraphSample, b: GraphSample) -> bool:
    """Reference isomorphism test by trying every node permutation."""
    if a.n != b.n:
        return False
    for perm in itertools.permutations(range(a.n)):
        if a.permute(list(perm)) == GraphSample(b.nodes, b.edges, a.props):
            return True
    return False


def random_labeled_graph(rng: np.random.Generator, n: int, node_labels: int, edge_labels: int,
                         density: float = 0.5) -> GraphSample:
    nodes = rng.integers(0, node_labels, size=n)
    edges = np.zeros((n, n), dtype=np.int64)
    for i in range(n):
        for j in range(i + 1, n):
            if rng.random() < density:
                edges[i, j] = edges[j, i] = rng.integers(1, edge_labels)
    return GraphSample(nodes, edges)
