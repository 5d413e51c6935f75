import math
import time

import numpy as np
import pytest
import torch

from meld.corruption import (
    GraphBatch,
    advance_hard,
    corrupt_batch_hard,
    corrupt_batch_stgs,
    corrupt_hard,
    corrupt_stgs,
    mask_fraction,
)
from meld.errors import MaskedInput, NonPositiveTemperature
from meld.graphmol import GraphSample
from meld.schedules import ElementwiseSchedule, FixedPowerLawSchedule, PermAssignment
from meld.utils import diffcore as dc


@pytest.fixture
def schedule():
    torch.manual_seed(0)
    return ElementwiseSchedule(n_max=12, embed_dim=8, hidden_dim=8)


def _perm(n, n_max=12, seed=0):
    return torch.as_tensor(np.random.default_rng(seed).permutation(n_max)[:n])


def test_collate_pads_and_marks_validity(ethanol, benzene):
    batch = GraphBatch.collate([ethanol, benzene])
    assert batch.nodes.shape == (2, 6)
    assert batch.node_valid[0].tolist() == [True] * 3 + [False] * 3
    assert batch.upper_valid[0].sum().item() == 3
    assert batch.upper_valid[1].sum().item() == 15
    assert batch.graph(0) == ethanol


def test_time_zero_keeps_everything(benzene, vocab, schedule):
    ng = corrupt_hard(benzene, 0.0, schedule, PermAssignment.identity(12), vocab,
                      torch.Generator().manual_seed(0))
    assert ng.base == benzene
    assert mask_fraction(ng) == (0.0, 0.0)


def test_corrupted_state_is_symmetric_and_consistent(benzene, vocab, schedule):
    gen = torch.Generator().manual_seed(1)
    for t in [0.3, 0.6, 0.9]:
        ng = corrupt_hard(benzene, t, schedule, PermAssignment.identity(12), vocab, gen)
        edges = np.asarray(ng.base.edges)
        assert np.array_equal(edges, edges.T)
        assert torch.equal(ng.node_onehots.argmax(-1), torch.as_tensor(np.asarray(ng.base.nodes)))
        assert torch.equal(ng.node_onehots.sum(-1), torch.ones(6))
        kept = np.asarray(ng.base.nodes) != vocab.node_mask_id
        assert np.array_equal(np.asarray(ng.base.nodes)[kept], benzene.nodes[kept])


def test_masking_rate_matches_schedule(vocab):
    """With w = 1 the expected masked fraction at t is (1 - eps) t."""
    g = GraphSample(np.zeros(10, dtype=int), np.zeros((10, 10), dtype=int))
    batch = GraphBatch.collate([g] * 400)
    schedule = FixedPowerLawSchedule(n_max=12)
    perm = torch.arange(10).expand(400, 10)
    noisy = corrupt_batch_hard(batch, torch.full((400,), 0.3), schedule, perm, vocab,
                               torch.Generator().manual_seed(2))
    node_rate = noisy.node_masked.float().mean().item()
    edge_rate = noisy.edge_masked[batch.upper_valid].float().mean().item()
    assert node_rate == pytest.approx(0.3, abs=0.02)
    assert edge_rate == pytest.approx(0.3, abs=0.02)


def test_coupled_uniforms_give_growing_masks(benzene, vocab, schedule):
    batch = GraphBatch.collate([benzene])
    gen = torch.Generator().manual_seed(3)
    node_u, edge_u = torch.rand(1, 6, generator=gen), torch.rand(1, 6, 6, generator=gen)
    previous = None
    for t in [0.1, 0.3, 0.5, 0.7, 0.9]:
        noisy = corrupt_batch_hard(batch, torch.tensor([t]), schedule, _perm(6)[None], vocab,
                                   node_uniforms=node_u, edge_uniforms=edge_u)
        if previous is not None:
            assert (previous.node_masked <= noisy.node_masked).all()
            assert (previous.edge_masked <= noisy.edge_masked).all()
        previous = noisy


def test_advance_never_unmasks(benzene, vocab, schedule):
    batch = GraphBatch.collate([benzene] * 8)
    perm = torch.stack([_perm(6, seed=k) for k in range(8)])
    gen = torch.Generator().manual_seed(4)
    noisy = corrupt_batch_hard(batch, torch.full((8,), 0.4), schedule, perm, vocab, gen)
    later = advance_hard(noisy, torch.full((8,), 0.8), schedule, vocab, gen)
    assert (noisy.node_masked <= later.node_masked).all()
    assert (noisy.edge_masked <= later.edge_masked).all()


def test_stgs_forward_is_exact_and_differentiable(benzene, vocab, schedule):
    ng = corrupt_stgs(benzene, 0.5, schedule, PermAssignment.identity(12), vocab, 1.0,
                      torch.Generator().manual_seed(5))
    onehots = ng.edge_onehots
    assert set(torch.unique(onehots.detach()).tolist()) <= {0.0, 1.0}
    assert torch.equal(onehots.detach().sum(-1), torch.ones(6, 6))
    loss = (onehots[..., vocab.edge_mask_id] * torch.arange(36.0).view(6, 6)).sum()
    loss.backward()
    assert schedule.embeddings.grad is not None
    assert schedule.embeddings.grad.abs().sum().item() > 0


def test_stgs_with_fixed_noise_is_deterministic(benzene, vocab, schedule):
    batch = GraphBatch.collate([benzene])
    noise = torch.Generator().manual_seed(6)
    node_noise = torch.randn(1, 6, generator=noise)
    edge_noise = torch.randn(1, 6, 6, generator=noise)
    runs = [corrupt_batch_stgs(batch, torch.tensor([0.5]), schedule, _perm(6)[None], vocab,
                               node_noise=node_noise, edge_noise=edge_noise) for _ in range(2)]
    assert torch.equal(runs[0].nodes, runs[1].nodes)
    assert torch.equal(runs[0].edges, runs[1].edges)


def test_stgs_decisions_match_hard_sampler_on_shared_uniforms(benzene, ethanol, vocab):
    torch.manual_seed(11)
    schedule = ElementwiseSchedule(n_max=12, embed_dim=8, hidden_dim=8).double()
    batch = GraphBatch.collate([benzene, ethanol] * 8)
    perm = torch.stack([_perm(6, seed=k) for k in range(16)])
    gen = torch.Generator().manual_seed(12)
    for t in [0.2, 0.5, 0.8]:
        node_u = torch.rand(16, 6, generator=gen, dtype=torch.float64)
        edge_u = torch.rand(16, 6, 6, generator=gen, dtype=torch.float64)
        at = torch.full((16,), t, dtype=torch.float64)
        hard = corrupt_batch_hard(batch, at, schedule, perm, vocab,
                                  node_uniforms=node_u, edge_uniforms=edge_u)
        relaxed = corrupt_batch_stgs(batch, at, schedule, perm, vocab, temperature=0.5,
                                     node_noise=dc.logistic_from_uniform(node_u),
                                     edge_noise=dc.logistic_from_uniform(edge_u))
        assert torch.equal(hard.nodes, relaxed.nodes)
        assert torch.equal(hard.edges, relaxed.edges)


def test_logistic_noise_keeps_with_probability_alpha():
    alpha = 0.3
    noise = dc.logistic_noise((40000,), torch.Generator().manual_seed(13), torch.float64)
    keep = (math.log(alpha) + noise > math.log(1 - alpha)).double().mean().item()
    assert keep == pytest.approx(alpha, abs=0.01)


@pytest.mark.slow
def test_stgs_costs_little_more_than_hard_corruption(vocab):
    torch.manual_seed(14)
    schedule = ElementwiseSchedule(n_max=64, embed_dim=64, hidden_dim=64)
    chain = GraphSample.from_edge_list([0] * 50, [(i, i + 1, 1) for i in range(49)])
    batch = GraphBatch.collate([chain] * 16)
    perm = torch.stack([_perm(50, n_max=64, seed=k) for k in range(16)])
    t = torch.full((16,), 0.5)
    gen = torch.Generator().manual_seed(15)

    def best_of(run, repeats=7):
        run()
        times = []
        for _ in range(repeats):
            start = time.perf_counter()
            run()
            times.append(time.perf_counter() - start)
        return min(times)

    hard = best_of(lambda: corrupt_batch_hard(batch, t, schedule, perm, vocab, gen))
    relaxed = best_of(lambda: corrupt_batch_stgs(batch, t, schedule, perm, vocab, 1.0, gen))
    assert relaxed <= 1.25 * hard


def test_stgs_rejects_bad_temperature(benzene, vocab, schedule):
    with pytest.raises(NonPositiveTemperature):
        corrupt_stgs(benzene, 0.5, schedule, PermAssignment.identity(12), vocab, temperature=0.0)


def test_corruption_requires_clean_input(vocab, schedule):
    g = GraphSample.from_edge_list([0, vocab.node_mask_id], [(0, 1, 1)])
    with pytest.raises(MaskedInput):
        corrupt_hard(g, 0.5, schedule, PermAssignment.identity(12), vocab)


def test_padding_is_never_masked(ethanol, benzene, vocab, schedule):
    batch = GraphBatch.collate([ethanol, benzene])
    perm = torch.stack([_perm(6, seed=0), _perm(6, seed=1)])
    noisy = corrupt_batch_hard(batch, torch.tensor([0.99, 0.99]), schedule, perm, vocab,
                               torch.Generator().manual_seed(7))
    assert not noisy.node_masked[0, 3:].any()
    assert not noisy.edge_masked[0, 3:, :].any()
    assert not noisy.edge_masked[:, torch.arange(6), torch.arange(6)].any()
