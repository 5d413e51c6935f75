import math

import numpy as np
import pytest
import torch
from torch import nn
from torch.func import functional_call

from meld.errors import DegenerateEmbedding, ModeMismatch, OrderViolation, SizeOverflow
from meld.graphmol import GraphSample, parse_smiles
from meld.schedules import (
    ClasswiseSchedule,
    CosineSchedule,
    ElementwiseSchedule,
    FixedPowerLawSchedule,
    KindSharedSchedule,
    PermAssignment,
    PolynomialSchedule,
    alpha_table,
    build_schedule,
    embedding_similarity,
    schedule_param_count,
    variation_report,
)
from meld.schemas import ScheduleConfig
from meld.utils import diffcore as dc

EPS = 1e-4
MODES = ["fixed_cosine", "fixed_polynomial", "fixed_powerlaw", "learn_node_only", "learn_edge_only",
         "learn_elementwise", "learn_classwise", "learn_kindshared"]


def _randomize(schedule, seed):
    """Spread learnable parameters so exponents differ visibly across elements."""
    g = torch.Generator().manual_seed(seed)
    with torch.no_grad():
        for p in schedule.parameters():
            p.copy_(torch.randn(p.shape, generator=g, dtype=p.dtype) * 0.3)
    return schedule


def _schedule(mode, vocab, n_max=8, seed=0):
    schedule = build_schedule(ScheduleConfig(mode=mode, embed_dim=8, hidden_dim=8), vocab, n_max).double()
    return _randomize(schedule, seed)


def _batch(vocab, n=5, seed=0):
    rng = np.random.default_rng(seed)
    perm = torch.as_tensor(rng.permutation(8)[:n])[None]
    nodes = torch.as_tensor(rng.integers(0, vocab.num_atom_types, size=(1, n)))
    upper = np.triu(rng.integers(0, vocab.num_bond_types, size=(n, n)), k=1)
    edges = torch.as_tensor(upper + upper.T)[None]
    return perm, nodes, edges


@pytest.mark.parametrize("mode", MODES)
def test_boundary_values_for_every_mode(mode, vocab):
    """alpha(0) = 1 and alpha(1) = epsilon for every element."""
    for seed in range(5):
        schedule = _schedule(mode, vocab, seed=seed)
        perm, nodes, edges = _batch(vocab, seed=seed)
        for t, expected in [(0.0, 1.0), (1.0, EPS)]:
            time = torch.tensor([t], dtype=torch.float64)
            node_alpha = schedule.node_terms(time, perm, nodes).alpha
            edge_alpha = schedule.edge_terms(time, perm, edges).alpha
            assert torch.allclose(node_alpha, torch.full_like(node_alpha, expected), atol=1e-12, rtol=0)
            assert torch.allclose(edge_alpha, torch.full_like(edge_alpha, expected), atol=1e-12, rtol=0)


@pytest.mark.parametrize("mode", MODES)
def test_alpha_is_strictly_decreasing(mode, vocab):
    schedule = _schedule(mode, vocab, seed=3)
    perm, nodes, edges = _batch(vocab)
    grid = torch.linspace(0, 1, 1000, dtype=torch.float64)
    alphas = torch.stack([schedule.node_terms(t[None], perm, nodes).alpha[0] for t in grid])
    assert (alphas[1:] < alphas[:-1]).all()


@pytest.mark.parametrize("mode", MODES)
def test_alpha_dot_matches_finite_differences(mode, vocab):
    schedule = _schedule(mode, vocab, seed=4)
    perm, nodes, edges = _batch(vocab)
    h = 1e-6
    for t in [0.2, 0.37, 0.5, 0.83, 0.95]:
        time = torch.tensor([t], dtype=torch.float64)
        terms = schedule.edge_terms(time, perm, edges)
        plus = schedule.edge_terms(time + h, perm, edges).alpha
        minus = schedule.edge_terms(time - h, perm, edges).alpha
        numeric = (plus - minus) / (2 * h)
        rel = (terms.alpha_dot - numeric).abs() / numeric.abs().clamp_min(1e-12)
        assert rel.max().item() < 1e-6


def test_loss_weight_is_nonnegative_and_consistent(vocab):
    schedule = _schedule("learn_elementwise", vocab, seed=1)
    perm, nodes, _ = _batch(vocab)
    terms = schedule.node_terms(torch.tensor([0.4], dtype=torch.float64), perm, nodes)
    assert (terms.weight > 0).all()
    assert torch.allclose(terms.weight, -terms.alpha_dot / (1 - terms.alpha))
    assert torch.allclose(terms.alpha + terms.mask_prob, torch.ones_like(terms.alpha))


def test_power_law_closed_form():
    schedule = FixedPowerLawSchedule(exponent=1.0, epsilon=EPS).double()
    terms = schedule.alpha_at(0, PermAssignment.identity(64), 0.5)
    assert terms.alpha.item() == pytest.approx(1 - (1 - EPS) * 0.5)
    assert terms.alpha_dot.item() == pytest.approx(-(1 - EPS))
    assert terms.weight.item() == pytest.approx(2.0)
    poly = PolynomialSchedule(degree=2.0, epsilon=EPS).double()
    assert poly.alpha_at(0, PermAssignment.identity(64), 0.5).alpha.item() == pytest.approx(1 - (1 - EPS) * 0.25)
    assert math.isinf(schedule.alpha_at(0, PermAssignment.identity(64), 0.0).weight.item())


def test_cosine_closed_form():
    schedule = CosineSchedule(epsilon=EPS).double()
    perm = PermAssignment.identity(64)
    terms = schedule.alpha_at((0, 1), perm, 0.5)
    assert terms.alpha.item() == pytest.approx(EPS + (1 - EPS) * math.cos(math.pi / 4))
    assert terms.weight.item() == pytest.approx((math.pi / 2) / math.tan(math.pi / 8))


def test_step_mask_probability():
    schedule = FixedPowerLawSchedule(epsilon=EPS).double()
    perm = PermAssignment.identity(64)
    p = schedule.step_mask_prob(2, perm, 0.2, 0.6).item()
    a_prev, a = 1 - (1 - EPS) * 0.2, 1 - (1 - EPS) * 0.6
    assert p == pytest.approx((a_prev - a) / a_prev)
    with pytest.raises(OrderViolation):
        schedule.step_mask_prob(2, perm, 0.6, 0.2)
    with pytest.raises(ValueError):
        schedule.alpha_at(2, perm, 1.5)


def test_step_mask_probabilities_telescope(vocab):
    """Surviving every step from 0 to t has probability alpha(t)."""
    schedule = _schedule("learn_elementwise", vocab, seed=6)
    perm = PermAssignment.random(8, np.random.default_rng(6))
    grid = np.linspace(0.0, 0.8, 17)
    for element in [2, (1, 4)]:
        survive = 1.0
        for t_prev, t in zip(grid[:-1], grid[1:]):
            survive *= 1.0 - schedule.step_mask_prob(element, perm, float(t_prev), float(t)).item()
        alpha = schedule.alpha_at(element, perm, 0.8).alpha.item()
        assert survive == pytest.approx(alpha / schedule.alpha_at(element, perm, 0.0).alpha.item(), rel=1e-10)


class _WeightedAlpha(nn.Module):
    """Scalar summary of node and edge survival probabilities at one time."""

    def __init__(self, schedule, t, perm, nodes, edges, node_weights):
        super().__init__()
        self.schedule = schedule
        self.t, self.perm, self.nodes, self.edges = t, perm, nodes, edges
        self.node_weights = node_weights

    def forward(self):
        node = self.schedule.node_terms(self.t, self.perm, self.nodes).alpha
        edge = self.schedule.edge_terms(self.t, self.perm, self.edges).alpha
        return (node * self.node_weights).sum() + edge.triu(1).sum()


def test_alpha_gradients_match_finite_differences(vocab):
    """d alpha / d H and d alpha / d MLP weights against central differences."""
    schedule = _schedule("learn_elementwise", vocab, seed=7)
    perm, nodes, edges = _batch(vocab)
    node_weights = torch.randn(1, 5, generator=torch.Generator().manual_seed(8), dtype=torch.float64)
    summary = _WeightedAlpha(schedule, torch.tensor([0.45], dtype=torch.float64), perm, nodes, edges,
                             node_weights)
    params = {name: p.detach() for name, p in summary.named_parameters()}

    report = dc.gradcheck(lambda **values: functional_call(summary, values, ()), params, tolerance=1e-6)
    assert report.passed, report.failures[:3]
    assert set(report.per_input) == {"schedule.embeddings", "schedule.mlp.0.weight", "schedule.mlp.0.bias",
                                     "schedule.mlp.2.weight", "schedule.mlp.2.bias"}
    assert report.per_input["schedule.embeddings"] < 1e-6


def test_element_exponent_requires_learnable_mode():
    with pytest.raises(ModeMismatch):
        FixedPowerLawSchedule().element_exponent(0, PermAssignment.identity(64))
    schedule = ElementwiseSchedule(n_max=8, embed_dim=4, hidden_dim=4)
    w = schedule.element_exponent((1, 3), PermAssignment.identity(8))
    assert w.dim() == 0 and w.item() > 0


def test_elementwise_exponents_follow_the_permutation(vocab):
    """Relabeling nodes together with their columns leaves each element's exponent attached to it."""
    schedule = _schedule("learn_elementwise", vocab, seed=2)
    perm, nodes, edges = _batch(vocab, n=5)
    node_w = schedule.node_exponents(perm, nodes)[0]
    edge_w = schedule.edge_exponents(perm, edges)[0]
    sigma = torch.tensor([3, 0, 4, 1, 2])
    node_w2 = schedule.node_exponents(perm[:, sigma], nodes[:, sigma])[0]
    edge_w2 = schedule.edge_exponents(perm[:, sigma], edges[:, sigma][:, :, sigma])[0]
    assert torch.allclose(node_w2, node_w[sigma])
    assert torch.allclose(edge_w2, edge_w[sigma][:, sigma])
    assert torch.allclose(edge_w, edge_w.T)


def test_partial_modes_fix_the_other_kind(vocab):
    perm, nodes, edges = _batch(vocab)
    node_only = _schedule("learn_node_only", vocab)
    assert node_only.mode == "learn_node_only"
    assert torch.equal(node_only.edge_exponents(perm, edges), torch.ones(1, 5, 5, dtype=torch.float64))
    edge_only = _schedule("learn_edge_only", vocab)
    assert edge_only.mode == "learn_edge_only"
    assert torch.equal(edge_only.node_exponents(perm, nodes), torch.ones(1, 5, dtype=torch.float64))


def test_classwise_and_kindshared_exponents(vocab):
    perm, nodes, edges = _batch(vocab)
    classwise = ClasswiseSchedule(vocab.num_atom_types, vocab.num_bond_types)
    # zero-initialized tables give softplus(0) for every class
    assert torch.allclose(classwise.node_exponents(perm, nodes), torch.full((1, 5), math.log(2.0)))
    shared = _randomize(KindSharedSchedule(), 0)
    w = shared.node_exponents(perm, nodes)
    assert torch.allclose(w, w[0, 0].expand_as(w))


def test_size_overflow(vocab):
    schedule = ElementwiseSchedule(n_max=4, embed_dim=4, hidden_dim=4)
    with pytest.raises(SizeOverflow):
        schedule.node_terms(torch.tensor([0.5]), torch.arange(5)[None], torch.zeros(1, 5, dtype=torch.long))


def test_epsilon_range():
    with pytest.raises(ValueError):
        FixedPowerLawSchedule(epsilon=0.0)
    with pytest.raises(ValueError):
        CosineSchedule(epsilon=0.5)


def test_parameter_overhead():
    """D * N_max embedding entries plus a two-layer MLP."""
    schedule = ElementwiseSchedule(n_max=200, embed_dim=64, hidden_dim=64)
    assert schedule_param_count(schedule) == 17025
    assert schedule_param_count(FixedPowerLawSchedule()) == 0


def test_variation_report(vocab):
    perms = [PermAssignment.random(8, np.random.default_rng(k)) for k in range(4)]
    grid = [0.25, 0.5, 1.0]
    fixed = variation_report(FixedPowerLawSchedule(n_max=8).double(), perms, 5, grid, 0.01)
    assert list(fixed.columns) == ["t", "node_std", "edge_std"]
    assert (fixed[["node_std", "edge_std"]] == 0).all().all()
    learned = variation_report(_schedule("learn_elementwise", vocab, seed=5), perms, 5, grid, 0.01)
    assert (learned["node_std"] > 0).all()
    with pytest.raises(ValueError):
        variation_report(FixedPowerLawSchedule(n_max=8), perms, 1, grid, 0.01)


def test_embedding_similarity(vocab):
    schedule = ElementwiseSchedule(n_max=8, embed_dim=4, hidden_dim=4)
    with torch.no_grad():
        schedule.embeddings.zero_()
        schedule.embeddings[0, :] = 1.0
    sims = embedding_similarity(schedule, [0, 1, 2], [(0, 1), (1, 2)], PermAssignment.identity(8))
    assert sims["nodes"] == pytest.approx(1.0)
    assert sims["edges"] == pytest.approx(1.0)
    assert math.isnan(embedding_similarity(schedule, [0], [], PermAssignment.identity(8))["nodes"])
    with torch.no_grad():
        schedule.embeddings[:, 2] = 0.0
    with pytest.raises(DegenerateEmbedding):
        embedding_similarity(schedule, [0, 2], [], PermAssignment.identity(8))
    with pytest.raises(ModeMismatch):
        embedding_similarity(CosineSchedule(), [0, 1], [], PermAssignment.identity(64))


def test_alpha_table(vocab):
    g = parse_smiles("CCO", vocab)
    frame = alpha_table(FixedPowerLawSchedule(n_max=8), g, PermAssignment.identity(8), [0.0, 0.5, 1.0])
    assert len(frame) == 3 * (3 + 3)
    at_zero = frame[frame["t"] == 0.0]
    assert np.allclose(at_zero["alpha"], 1.0)


def test_perm_assignment_validation():
    with pytest.raises(ValueError):
        PermAssignment(np.array([0, 0, 1]))
    assert PermAssignment.identity(4).as_tensor(2).tolist() == [0, 1]
