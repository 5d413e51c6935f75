import math

import numpy as np
import pytest
import torch
import torch.nn.functional as F
from torch.func import functional_call

from meld.errors import SizeOverflow
from meld.models import (
    NEG_INF,
    Condition,
    GraphDenoiser,
    apply_carry_over,
    encode_conditions,
    prediction_entropy,
)
from meld.utils import diffcore as dc


def _noisy_inputs(vocab, n, seed=0, batch=1):
    rng = np.random.default_rng(seed)
    nodes = torch.as_tensor(rng.integers(0, vocab.node_mask_id + 1, size=(batch, n)))
    upper = np.triu(rng.integers(0, vocab.edge_mask_id + 1, size=(batch, n, n)), k=1)
    edges = torch.as_tensor(upper + upper.transpose(0, 2, 1))
    return (F.one_hot(nodes, vocab.node_mask_id + 1).float(),
            F.one_hot(edges, vocab.edge_mask_id + 1).float())


def test_output_shapes_and_edge_structure(tiny_denoiser, vocab):
    node_oh, edge_oh = _noisy_inputs(vocab, 5, batch=2)
    valid = torch.ones(2, 5, dtype=torch.bool)
    node_logits, edge_logits = tiny_denoiser(node_oh, edge_oh, valid, torch.tensor([0.3, 0.8]))
    assert node_logits.shape == (2, 5, vocab.num_atom_types)
    assert edge_logits.shape == (2, 5, 5, vocab.num_bond_types)
    assert torch.allclose(edge_logits, edge_logits.transpose(1, 2))
    diag = edge_logits[:, torch.arange(5), torch.arange(5)]
    assert torch.all(diag[..., 0] == 0)
    assert torch.all(diag[..., 1:] == NEG_INF)


@pytest.mark.parametrize("graphs, perms", [(5, 5), pytest.param(20, 50, marks=pytest.mark.slow)])
def test_permutation_equivariance(tiny_denoiser, vocab, graphs, perms):
    rng = np.random.default_rng(1)
    for seed in range(graphs):
        n = 4 + seed % 8
        node_oh, edge_oh = _noisy_inputs(vocab, n, seed=seed)
        valid = torch.ones(1, n, dtype=torch.bool)
        t = torch.tensor([0.5])
        with torch.no_grad():
            node_logits, edge_logits = tiny_denoiser(node_oh, edge_oh, valid, t)
            for _ in range(perms):
                p = torch.as_tensor(rng.permutation(n))
                pn, pe = tiny_denoiser(node_oh[:, p], edge_oh[:, p][:, :, p], valid, t)
                assert (pn - node_logits[:, p]).abs().max().item() <= 1e-5
                assert (pe - edge_logits[:, p][:, :, p]).abs().max().item() <= 1e-5


def test_padding_does_not_change_real_outputs(tiny_denoiser, vocab):
    node_oh, edge_oh = _noisy_inputs(vocab, 4)
    with torch.no_grad():
        node_logits, _ = tiny_denoiser(node_oh, edge_oh, torch.ones(1, 4, dtype=torch.bool),
                                       torch.tensor([0.5]))
        padded_nodes = F.pad(node_oh, (0, 0, 0, 2))
        padded_edges = F.pad(edge_oh, (0, 0, 0, 2, 0, 2))
        valid = torch.tensor([[True] * 4 + [False] * 2])
        padded_logits, _ = tiny_denoiser(padded_nodes, padded_edges, valid, torch.tensor([0.5]))
    assert torch.allclose(padded_logits[:, :4], node_logits, atol=1e-5)


def test_size_overflow(tiny_denoiser, vocab):
    node_oh, edge_oh = _noisy_inputs(vocab, 13)
    with pytest.raises(SizeOverflow):
        tiny_denoiser(node_oh, edge_oh, torch.ones(1, 13, dtype=torch.bool), torch.tensor([0.5]))


def test_gradients_match_finite_differences(vocab):
    """Input and weight gradients of a one-layer, width-8 model in f64."""
    torch.manual_seed(2)
    model = GraphDenoiser(vocab.num_atom_types, vocab.num_bond_types, n_max=8, layers=1,
                          hidden_dim=8, heads=2, edge_dim=4, ffn_mult=2).double()
    node_oh, edge_oh = _noisy_inputs(vocab, 4, seed=3)
    valid = torch.ones(1, 4, dtype=torch.bool)
    t = torch.tensor([0.4], dtype=torch.float64)
    g = torch.Generator().manual_seed(4)
    node_weights = torch.randn(1, 4, vocab.num_atom_types, generator=g, dtype=torch.float64)
    edge_weights = torch.randn(1, 6, vocab.num_bond_types, generator=g, dtype=torch.float64)
    upper = torch.triu_indices(4, 4, offset=1)

    def weighted_logits(node_onehots, edge_onehots, **weights):
        node_logits, edge_logits = functional_call(model, weights, (node_onehots, edge_onehots, valid, t))
        # diagonal logits are constants
        pairs = edge_logits[:, upper[0], upper[1]]
        return (node_logits * node_weights).sum() + (pairs * edge_weights).sum()

    inputs = {"node_onehots": node_oh.double(), "edge_onehots": edge_oh.double()}
    for name in ["blocks.0.qkv.weight", "blocks.0.edge_bias.weight", "blocks.0.modulation.1.bias",
                 "node_head.weight", "pair_head.0.weight"]:
        inputs[name] = model.get_parameter(name).detach()
    report = dc.gradcheck(weighted_logits, inputs, tolerance=1e-4)
    assert report.passed, report.failures[:3]


def test_condition_changes_predictions(vocab):
    torch.manual_seed(0)
    model = GraphDenoiser(vocab.num_atom_types, vocab.num_bond_types, n_max=8, layers=1,
                          hidden_dim=16, heads=2, edge_dim=4, num_properties=1)
    node_oh, edge_oh = _noisy_inputs(vocab, 4)
    valid = torch.ones(1, 4, dtype=torch.bool)
    t = torch.tensor([0.5])
    values, null = encode_conditions([Condition({"qed": 2.0})], ["qed"], {"qed": (0.5, 0.5)})
    assert values.tolist() == [[3.0]]
    assert null.tolist() == [False]
    with torch.no_grad():
        cond = model(node_oh, edge_oh, valid, t, values, null)[0]
        uncond = model(node_oh, edge_oh, valid, t, values, torch.tensor([True]))[0]
    assert not torch.allclose(cond, uncond)


def test_encode_conditions_null_without_properties():
    values, null = encode_conditions([Condition(), Condition.unconditional()], [])
    assert values.shape == (2, 0)
    assert null.tolist() == [True, True]


def test_entropy_values():
    concentrated = torch.tensor([[50.0, 0.0, 0.0, 0.0]])
    assert prediction_entropy(concentrated).item() == pytest.approx(0.0, abs=1e-6)
    uniform = torch.zeros(1, 4)
    assert prediction_entropy(uniform).item() == pytest.approx(math.log(4))
    shifted = torch.tensor([[0.3, -1.0, 2.0]])
    assert prediction_entropy(shifted).item() == pytest.approx(prediction_entropy(shifted + 7.0).item())


def test_pairwise_entropy_diagonal():
    logits = torch.zeros(3, 3, 4)
    logits[..., 0] = 30.0
    ent = prediction_entropy(logits, pairwise=True)
    assert torch.allclose(torch.diagonal(ent), torch.full((3,), math.log(4)))
    assert ent[0, 1].item() == pytest.approx(0.0, abs=1e-6)


def test_carry_over_pins_observed_labels():
    logits = torch.zeros(3, 4)
    observed = torch.tensor([2, 5, 1])
    masked = torch.tensor([False, True, False])
    pinned = apply_carry_over(logits, observed, masked)
    assert pinned[0].argmax().item() == 2
    assert pinned[0, 0].item() == NEG_INF
    assert torch.equal(pinned[1], logits[1])
    assert pinned[2].argmax().item() == 1
