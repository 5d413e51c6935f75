"""Forward masking process.

Graphs are corrupted in padded batches. Every node and every unordered node
pair makes one keep-or-mask decision; edge decisions are drawn on the upper
triangle and mirrored. ``corrupt_batch_hard`` thresholds uniforms against
1 - alpha; ``corrupt_batch_stgs`` relaxes the same binary choice with a
straight-through Gumbel-Softmax so gradients reach the schedule parameters.
"""

from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np
import torch
import torch.nn.functional as F

from .errors import MaskedInput, NonPositiveTemperature
from .graphmol.graph import GraphSample
from .graphmol.vocab import Vocabulary
from .schedules.base import AlphaTerms, NoiseSchedule, PermAssignment
from .utils import diffcore as dc


@dataclass
class GraphBatch:
    """Clean graphs padded to a common node count.

    Padding nodes carry label 0 and are excluded by ``node_valid``.
    """

    nodes: torch.Tensor          # [B, N]
    edges: torch.Tensor          # [B, N, N]
    node_valid: torch.Tensor     # [B, N] bool
    sizes: List[int]
    props: Optional[torch.Tensor] = None   # [B, P], z-scored

    @classmethod
    def collate(cls, graphs: Sequence[GraphSample], n_pad: Optional[int] = None,
                properties: Sequence[str] = (),
                property_stats: Optional[dict] = None) -> "GraphBatch":
        if not graphs:
            raise ValueError("cannot collate an empty batch")
        n_pad = n_pad or max(g.n for g in graphs)
        nodes = torch.zeros(len(graphs), n_pad, dtype=torch.long)
        edges = torch.zeros(len(graphs), n_pad, n_pad, dtype=torch.long)
        valid = torch.zeros(len(graphs), n_pad, dtype=torch.bool)
        for b, g in enumerate(graphs):
            nodes[b, :g.n] = torch.as_tensor(np.array(g.nodes))
            edges[b, :g.n, :g.n] = torch.as_tensor(np.array(g.edges))
            valid[b, :g.n] = True
        props = None
        if properties:
            stats = property_stats or {}
            rows = []
            for g in graphs:
                row = []
                for name in properties:
                    mean, std = stats.get(name, (0.0, 1.0))
                    row.append((g.props.get(name, mean) - mean) / (std or 1.0))
                rows.append(row)
            props = torch.tensor(rows, dtype=torch.float32)
        return cls(nodes, edges, valid, [g.n for g in graphs], props)

    @property
    def batch_size(self) -> int:
        return self.nodes.shape[0]

    @property
    def n_pad(self) -> int:
        return self.nodes.shape[1]

    @property
    def pair_valid(self) -> torch.Tensor:
        """[B, N, N] real node pairs, diagonal excluded."""
        pair = self.node_valid.unsqueeze(2) & self.node_valid.unsqueeze(1)
        eye = torch.eye(self.n_pad, dtype=torch.bool)
        return pair & ~eye

    @property
    def upper_valid(self) -> torch.Tensor:
        return torch.triu(self.pair_valid, diagonal=1)

    def graph(self, b: int, nodes: Optional[torch.Tensor] = None,
              edges: Optional[torch.Tensor] = None) -> GraphSample:
        n = self.sizes[b]
        nodes = self.nodes if nodes is None else nodes
        edges = self.edges if edges is None else edges
        return GraphSample(nodes[b, :n].numpy(), edges[b, :n, :n].numpy())


@dataclass
class NoisyGraph:
    """One corrupted graph with its one-hot representation."""

    base: GraphSample
    node_onehots: torch.Tensor   # [n, A+1]
    edge_onehots: torch.Tensor   # [n, n, B+1]
    t: float
    perm: PermAssignment
    stgs: Optional[Tuple[torch.Tensor, torch.Tensor]] = None

    @property
    def node_mask_id(self) -> int:
        return self.node_onehots.shape[-1] - 1

    @property
    def edge_mask_id(self) -> int:
        return self.edge_onehots.shape[-1] - 1


@dataclass
class NoisyBatch:
    """Corrupted batch plus what the loss needs: decisions and schedule terms.

    ``node_p_mask`` / ``edge_p_mask`` are exactly 0/1 in the forward pass; in
    STGS mode they carry the relaxed Jacobian back to the schedule.
    """

    clean: GraphBatch
    nodes: torch.Tensor
    edges: torch.Tensor
    node_onehots: torch.Tensor
    edge_onehots: torch.Tensor
    node_p_mask: torch.Tensor
    edge_p_mask: torch.Tensor
    t: torch.Tensor
    perm: torch.Tensor
    node_terms: AlphaTerms
    edge_terms: AlphaTerms
    node_soft: Optional[torch.Tensor] = None
    edge_soft: Optional[torch.Tensor] = None

    @property
    def node_masked(self) -> torch.Tensor:
        return self.node_p_mask.detach() > 0.5

    @property
    def edge_masked(self) -> torch.Tensor:
        return self.edge_p_mask.detach() > 0.5

    def noisy_graph(self, b: int) -> NoisyGraph:
        n = self.clean.sizes[b]
        stgs = None
        if self.node_soft is not None and self.edge_soft is not None:
            stgs = (self.node_soft[b, :n], self.edge_soft[b, :n, :n])
        return NoisyGraph(
            base=self.clean.graph(b, self.nodes, self.edges),
            node_onehots=self.node_onehots[b, :n],
            edge_onehots=self.edge_onehots[b, :n, :n],
            t=float(self.t[b]),
            perm=PermAssignment(self.perm[b].numpy()),
            stgs=stgs,
        )


def _mirror_upper(x: torch.Tensor) -> torch.Tensor:
    """Copy the strict upper triangle of [B, N, N, ...] onto the lower one."""
    n = x.shape[1]
    upper = torch.triu(torch.ones(n, n, dtype=torch.bool), diagonal=1)
    upper = upper.reshape((1, n, n) + (1,) * (x.dim() - 3))
    return torch.where(upper, x, x.transpose(1, 2))


def _check_clean(batch: GraphBatch, vocab: Vocabulary) -> None:
    if (batch.nodes >= vocab.node_mask_id).any() or (batch.edges >= vocab.edge_mask_id).any():
        raise MaskedInput("corruption expects clean graphs")


def _assemble(batch: GraphBatch, vocab: Vocabulary, node_p_mask: torch.Tensor,
              edge_p_mask: torch.Tensor, t: torch.Tensor, perm: torch.Tensor,
              node_terms: AlphaTerms, edge_terms: AlphaTerms,
              node_soft: Optional[torch.Tensor] = None,
              edge_soft: Optional[torch.Tensor] = None) -> NoisyBatch:
    node_classes = vocab.node_mask_id + 1
    edge_classes = vocab.edge_mask_id + 1
    dtype = node_p_mask.dtype
    node_p_mask = node_p_mask * batch.node_valid.to(dtype)
    edge_p_mask = edge_p_mask * batch.pair_valid.to(dtype)

    node_keep = (1 - node_p_mask).unsqueeze(-1)
    edge_keep = (1 - edge_p_mask).unsqueeze(-1)
    node_onehots = (node_keep * F.one_hot(batch.nodes, node_classes).to(dtype)
                    + node_p_mask.unsqueeze(-1) * F.one_hot(
                        torch.full_like(batch.nodes, vocab.node_mask_id), node_classes).to(dtype))
    edge_onehots = (edge_keep * F.one_hot(batch.edges, edge_classes).to(dtype)
                    + edge_p_mask.unsqueeze(-1) * F.one_hot(
                        torch.full_like(batch.edges, vocab.edge_mask_id), edge_classes).to(dtype))

    nodes = batch.nodes.masked_fill(node_p_mask.detach() > 0.5, vocab.node_mask_id)
    edges = batch.edges.masked_fill(edge_p_mask.detach() > 0.5, vocab.edge_mask_id)
    return NoisyBatch(batch, nodes, edges, node_onehots, edge_onehots, node_p_mask, edge_p_mask,
                      t, perm, node_terms, edge_terms, node_soft, edge_soft)


def schedule_terms(batch: GraphBatch, t: torch.Tensor, schedule: NoiseSchedule,
                   perm: torch.Tensor) -> Tuple[AlphaTerms, AlphaTerms]:
    return (schedule.node_terms(t, perm, batch.nodes),
            schedule.edge_terms(t, perm, batch.edges))


def corrupt_batch_hard(batch: GraphBatch,
                       t: torch.Tensor,
                       schedule: NoiseSchedule,
                       perm: torch.Tensor,
                       vocab: Vocabulary,
                       generator: Optional[torch.Generator] = None,
                       node_uniforms: Optional[torch.Tensor] = None,
                       edge_uniforms: Optional[torch.Tensor] = None) -> NoisyBatch:
    """Mask each element independently with probability 1 - alpha_t.

    Args:
        batch: Clean padded graphs
        t: Times [B]
        schedule: Forward schedule
        perm: Embedding permutations [B, N]
        vocab: Supplies mask ids
        generator: Source of the uniforms when they are not supplied
        node_uniforms: Optional fixed uniforms [B, N]; reusing them across
            times gives coupled trajectories whose masked sets only grow
        edge_uniforms: Optional fixed uniforms [B, N, N], upper triangle used

    Returns:
        NoisyBatch with exact 0/1 mask indicators
    """
    _check_clean(batch, vocab)
    with torch.no_grad():
        node_terms, edge_terms = schedule_terms(batch, t, schedule, perm)
        dtype = node_terms.alpha.dtype
        if node_uniforms is None:
            node_uniforms = torch.rand(batch.nodes.shape, generator=generator, dtype=dtype)
        if edge_uniforms is None:
            edge_uniforms = torch.rand(batch.edges.shape, generator=generator, dtype=dtype)
        edge_uniforms = _mirror_upper(edge_uniforms.to(dtype))
        node_p_mask = (node_uniforms.to(dtype) < node_terms.mask_prob).to(dtype)
        edge_p_mask = (edge_uniforms < edge_terms.mask_prob).to(dtype)
    return _assemble(batch, vocab, node_p_mask, edge_p_mask, t, perm, node_terms, edge_terms)


def corrupt_batch_stgs(batch: GraphBatch,
                       t: torch.Tensor,
                       schedule: NoiseSchedule,
                       perm: torch.Tensor,
                       vocab: Vocabulary,
                       temperature: float = 1.0,
                       generator: Optional[torch.Generator] = None,
                       node_noise: Optional[torch.Tensor] = None,
                       edge_noise: Optional[torch.Tensor] = None,
                       hard: bool = True) -> NoisyBatch:
    """Differentiable corruption through a binary straight-through Gumbel-Softmax.

    Logits per element are [log alpha, log(1 - alpha)]. The forward value of
    every one-hot row is exact; the backward pass follows the relaxed softmax.
    Each element draws one logistic variable, added to the keep logit, which
    equals the difference of the two Gumbel draws of a two-way relaxation.
    Supplying ``node_noise`` [B, N] and ``edge_noise`` [B, N, N] fixes the
    draws; ``logistic_from_uniform(u)`` reproduces the decisions of
    ``corrupt_batch_hard`` with uniforms ``u``. ``hard=False`` feeds the
    relaxed probabilities forward instead, a smooth function of the schedule
    used as a finite-difference reference.
    """
    if temperature <= 0:
        raise NonPositiveTemperature(f"temperature must be > 0, got {temperature}")
    _check_clean(batch, vocab)
    node_terms, edge_terms = schedule_terms(batch, t, schedule, perm)
    dtype = node_terms.alpha.dtype

    if node_noise is None:
        node_noise = dc.logistic_noise(batch.nodes.shape, generator, dtype)
    if edge_noise is None:
        edge_noise = dc.logistic_noise(batch.edges.shape, generator, dtype)
    edge_noise = _mirror_upper(edge_noise.to(dtype))

    def relax(terms: AlphaTerms, noise: torch.Tensor) -> Tuple[torch.Tensor, torch.Tensor]:
        tiny = torch.finfo(dtype).tiny
        logits = dc.concat([dc.log(terms.alpha.clamp_min(tiny)).unsqueeze(-1),
                            dc.log(terms.mask_prob.clamp_min(tiny)).unsqueeze(-1)], axis=-1)
        noise = noise.to(dtype).unsqueeze(-1)
        noise = dc.concat([noise, torch.zeros_like(noise)], axis=-1)
        soft = dc.gumbel_softmax(logits, temperature, noise)
        return (dc.straight_through(soft) if hard else soft)[..., 1], soft

    node_p_mask, node_soft = relax(node_terms, node_noise)
    edge_p_mask, edge_soft = relax(edge_terms, edge_noise)
    return _assemble(batch, vocab, node_p_mask, edge_p_mask, t, perm, node_terms, edge_terms,
                     node_soft, edge_soft)


def advance_hard(noisy: NoisyBatch,
                 t_next: torch.Tensor,
                 schedule: NoiseSchedule,
                 vocab: Vocabulary,
                 generator: Optional[torch.Generator] = None) -> NoisyBatch:
    """Move an already corrupted batch from its time to ``t_next`` >= t.

    Surviving elements are masked with the conditional probability
    (alpha(t) - alpha(t_next)) / alpha(t); masked elements stay masked.
    """
    batch = noisy.clean
    with torch.no_grad():
        node_terms, edge_terms = schedule_terms(batch, t_next, schedule, noisy.perm)
        node_step = ((noisy.node_terms.alpha - node_terms.alpha) / noisy.node_terms.alpha).clamp(0, 1)
        edge_step = ((noisy.edge_terms.alpha - edge_terms.alpha) / noisy.edge_terms.alpha).clamp(0, 1)
        dtype = node_step.dtype
        node_u = torch.rand(batch.nodes.shape, generator=generator, dtype=dtype)
        edge_u = _mirror_upper(torch.rand(batch.edges.shape, generator=generator, dtype=dtype))
        node_p_mask = torch.maximum(noisy.node_p_mask.detach(), (node_u < node_step).to(dtype))
        edge_p_mask = torch.maximum(noisy.edge_p_mask.detach(), (edge_u < edge_step).to(dtype))
    return _assemble(batch, vocab, node_p_mask, edge_p_mask, t_next, noisy.perm,
                     node_terms, edge_terms)


def _single(g0: GraphSample, t: float, perm: PermAssignment) -> Tuple[GraphBatch, torch.Tensor, torch.Tensor]:
    if len(perm) < g0.n:
        raise ValueError(f"permutation of length {len(perm)} cannot cover {g0.n} nodes")
    batch = GraphBatch.collate([g0])
    return batch, torch.tensor([t], dtype=torch.float64), perm.as_tensor(g0.n)[None]


def corrupt_hard(g0: GraphSample, t: float, schedule: NoiseSchedule, perm: PermAssignment,
                 vocab: Vocabulary, generator: Optional[torch.Generator] = None) -> NoisyGraph:
    """Single-graph view of ``corrupt_batch_hard``."""
    batch, time, perm_t = _single(g0, t, perm)
    return corrupt_batch_hard(batch, time, schedule, perm_t, vocab, generator).noisy_graph(0)


def corrupt_stgs(g0: GraphSample, t: float, schedule: NoiseSchedule, perm: PermAssignment,
                 vocab: Vocabulary, temperature: float = 1.0,
                 generator: Optional[torch.Generator] = None) -> NoisyGraph:
    """Single-graph view of ``corrupt_batch_stgs``; the one-hots stay on the autograd graph."""
    batch, time, perm_t = _single(g0, t, perm)
    return corrupt_batch_stgs(batch, time, schedule, perm_t, vocab, temperature,
                              generator).noisy_graph(0)


def mask_fraction(ng: NoisyGraph) -> Tuple[float, float]:
    """Fraction of masked nodes and of masked upper-triangle edges."""
    nodes = np.asarray(ng.base.nodes)
    node_frac = float(np.mean(nodes == ng.node_mask_id))
    if ng.base.n < 2:
        return node_frac, 0.0
    upper = np.triu_indices(ng.base.n, k=1)
    edge_frac = float(np.mean(np.asarray(ng.base.edges)[upper] == ng.edge_mask_id))
    return node_frac, edge_frac
