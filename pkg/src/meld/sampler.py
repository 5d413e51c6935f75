"""Reverse ancestral sampling with per-element unmasking rates."""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
import torch
import torch.nn.functional as F
from tqdm import tqdm

from .graphmol.graph import GraphSample
from .graphmol.vocab import Vocabulary
from .models.denoiser import Condition, GraphDenoiser, apply_carry_over, encode_conditions
from .schedules.base import NoiseSchedule
from .schemas.config import SampleConfig
from .utils.seeding import numpy_rng, torch_generator

logger = logging.getLogger(__name__)


@dataclass
class TraceStep:
    t: float
    nodes: np.ndarray
    edges: np.ndarray


@dataclass
class SampleTrace:
    """Snapshots from t = 1 down to t = 0 plus the final clean graph."""

    steps: List[TraceStep] = field(default_factory=list)
    final: Optional[GraphSample] = None
    node_mask_id: int = 0
    edge_mask_id: int = 0

    def mask_counts(self) -> List[Tuple[int, int]]:
        counts = []
        for snap in self.steps:
            n = snap.nodes.shape[0]
            upper = np.triu_indices(n, k=1)
            counts.append((int((snap.nodes == self.node_mask_id).sum()),
                           int((snap.edges[upper] == self.edge_mask_id).sum())))
        return counts


def sample_size(histogram: Mapping[int, int], rng: np.random.Generator) -> int:
    """Draw a node count from the empirical training distribution."""
    if not histogram:
        raise ValueError("node-count histogram is empty")
    sizes = np.array(sorted(histogram), dtype=np.int64)
    weights = np.array([histogram[int(s)] for s in sizes], dtype=float)
    return int(rng.choice(sizes, p=weights / weights.sum()))


def unmask_probability(alpha_s: torch.Tensor, alpha_t: torch.Tensor) -> torch.Tensor:
    """(alpha_s - alpha_t) / (1 - alpha_t); exactly 1 when alpha_s = 1."""
    prob = (alpha_s - alpha_t) / (1 - alpha_t).clamp_min(torch.finfo(alpha_t.dtype).tiny)
    return torch.where(alpha_s >= 1, torch.ones_like(prob), prob.clamp(0.0, 1.0))


def _guided(model: GraphDenoiser, node_onehots: torch.Tensor, edge_onehots: torch.Tensor,
            valid: torch.Tensor, t: torch.Tensor, cond_values: torch.Tensor,
            cond_null: torch.Tensor, guidance: float) -> Tuple[torch.Tensor, torch.Tensor]:
    """Logits combined as uncond + g * (cond - uncond); g = 0 is a single unconditional pass."""
    uncond = model(node_onehots, edge_onehots, valid, t, cond_values, torch.ones_like(cond_null))
    if guidance == 0 or bool(cond_null.all()):
        return uncond
    cond = model(node_onehots, edge_onehots, valid, t, cond_values, cond_null)
    return (uncond[0] + guidance * (cond[0] - uncond[0]),
            uncond[1] + guidance * (cond[1] - uncond[1]))


def _mirror(x: torch.Tensor, upper: torch.Tensor) -> torch.Tensor:
    return torch.where(upper, x, x.T)


def _onehots(nodes: torch.Tensor, edges: torch.Tensor, vocab: Vocabulary) -> Tuple[torch.Tensor, torch.Tensor]:
    return (F.one_hot(nodes, vocab.node_mask_id + 1).float(),
            F.one_hot(edges, vocab.edge_mask_id + 1).float())


@torch.no_grad()
def _generate_group(model: GraphDenoiser, schedule: NoiseSchedule, vocab: Vocabulary,
                    n: int, indices: Sequence[int], config: SampleConfig,
                    cond_values: torch.Tensor, cond_null: torch.Tensor,
                    record: bool) -> Tuple[List[GraphSample], List[SampleTrace]]:
    """Sample every graph of one node count in lock step."""
    B = len(indices)
    T = config.steps
    perms = []
    generators = [torch_generator(config.seed, idx, 1) for idx in indices]
    for idx in indices:
        perms.append(numpy_rng(config.seed, idx, 2).permutation(schedule.n_max)[:n])
    perm = torch.as_tensor(np.stack(perms), dtype=torch.long)

    nodes = torch.full((B, n), vocab.node_mask_id, dtype=torch.long)
    edges = torch.full((B, n, n), vocab.edge_mask_id, dtype=torch.long)
    eye = torch.eye(n, dtype=torch.bool)
    edges[:, eye] = 0
    valid = torch.ones(B, n, dtype=torch.bool)
    upper = torch.triu(torch.ones(n, n, dtype=torch.bool), diagonal=1)

    traces = [SampleTrace(node_mask_id=vocab.node_mask_id, edge_mask_id=vocab.edge_mask_id)
              for _ in range(B)]

    def snapshot(t: float) -> None:
        if record:
            for b in range(B):
                traces[b].steps.append(TraceStep(t, nodes[b].numpy().copy(), edges[b].numpy().copy()))

    snapshot(1.0)
    for k in range(T, 0, -1):
        t_val, s_val = k / T, (k - 1) / T
        t = torch.full((B,), t_val)
        s = torch.full((B,), s_val)
        node_onehots, edge_onehots = _onehots(nodes, edges, vocab)
        node_logits, edge_logits = _guided(model, node_onehots, edge_onehots, valid, t,
                                           cond_values, cond_null, config.guidance_scale)
        node_masked = nodes == vocab.node_mask_id
        edge_masked = edges == vocab.edge_mask_id
        node_logits = apply_carry_over(node_logits, nodes, node_masked)
        edge_logits = apply_carry_over(edge_logits, edges, edge_masked)

        # per-sample stream order: node uniforms, node labels, edge uniforms, edge labels
        u_nodes = torch.empty(B, n)
        u_edges = torch.empty(B, n, n)
        draw_nodes = torch.empty(B, n, dtype=torch.long)
        draw_edges = torch.zeros(B, n, n, dtype=torch.long)
        for b, gen in enumerate(generators):
            u_nodes[b] = torch.rand(n, generator=gen)
            node_probs = torch.softmax(node_logits[b].float(), dim=-1)
            draw_nodes[b] = torch.multinomial(node_probs, 1, generator=gen).squeeze(-1)
            u_edges[b] = _mirror(torch.rand(n, n, generator=gen), upper)
            if n > 1:
                edge_probs = torch.softmax(edge_logits[b][upper].float(), dim=-1)
                sym = torch.zeros(n, n, dtype=torch.long)
                sym[upper] = torch.multinomial(edge_probs, 1, generator=gen).squeeze(-1)
                draw_edges[b] = sym + sym.T

        # class-wise rates are read at the label each element would take
        labels_n = torch.where(node_masked, draw_nodes, nodes)
        labels_e = torch.where(edge_masked, draw_edges, edges)
        if s_val == 0:
            p_node = torch.ones(B, n)
            p_edge = torch.ones(B, n, n)
        else:
            p_node = unmask_probability(schedule.node_terms(s, perm, labels_n).alpha,
                                        schedule.node_terms(t, perm, labels_n).alpha)
            p_edge = unmask_probability(schedule.edge_terms(s, perm, labels_e).alpha,
                                        schedule.edge_terms(t, perm, labels_e).alpha)

        node_flip = node_masked & (u_nodes < p_node)
        edge_flip = edge_masked & (u_edges < p_edge) & ~eye
        nodes = torch.where(node_flip, draw_nodes, nodes)
        edges = torch.where(edge_flip, draw_edges, edges)
        snapshot(s_val)

    graphs = [GraphSample(nodes[b].numpy(), edges[b].numpy()) for b in range(B)]
    for b in range(B):
        traces[b].final = graphs[b]
    return graphs, traces


def generate(model: GraphDenoiser,
             schedule: NoiseSchedule,
             config: SampleConfig,
             vocab: Vocabulary,
             histogram: Mapping[int, int],
             properties: Sequence[str] = (),
             property_stats: Optional[Dict[str, Tuple[float, float]]] = None,
             show_progress: bool = False) -> Tuple[List[GraphSample], List[SampleTrace]]:
    """Generate ``config.count`` graphs.

    Sample i draws its size, permutation and every decision from streams
    keyed on (seed, i), so its randomness is fixed by its index alone.

    Returns:
        (graphs in sample order, traces; empty unless ``config.trace``)
    """
    model.eval()
    sizes = [sample_size(histogram, numpy_rng(config.seed, i, 0)) for i in range(config.count)]
    condition = Condition(values=dict(config.condition), null=not config.condition)

    results: Dict[int, Tuple[GraphSample, SampleTrace]] = {}
    groups: Dict[int, List[int]] = {}
    for i, n in enumerate(sizes):
        groups.setdefault(n, []).append(i)
    for n in tqdm(sorted(groups), disable=not show_progress, desc="sample"):
        indices = groups[n]
        values, nulls = encode_conditions([condition] * len(indices), properties, property_stats)
        graphs, traces = _generate_group(model, schedule, vocab, n, indices, config,
                                         values, nulls, config.trace)
        for idx, g, tr in zip(indices, graphs, traces):
            results[idx] = (g, tr)
    logger.info("generated %d graphs with T=%d", config.count, config.steps)
    ordered = [results[i] for i in range(config.count)]
    return [g for g, _ in ordered], ([tr for _, tr in ordered] if config.trace else [])


def reconstruct_report(trace: SampleTrace) -> pd.DataFrame:
    """Newly unmasked nodes and edges per reverse step, with cumulative fractions."""
    counts = trace.mask_counts()
    if not counts:
        return pd.DataFrame(columns=["step", "t", "nodes_unmasked", "edges_unmasked",
                                     "nodes_recovered", "edges_recovered"])
    n = trace.steps[0].nodes.shape[0]
    total_nodes = n
    total_edges = n * (n - 1) // 2
    rows = []
    prev_nodes, prev_edges = counts[0]
    for k, (snap, (masked_nodes, masked_edges)) in enumerate(zip(trace.steps[1:], counts[1:]), start=1):
        rows.append({
            "step": k,
            "t": snap.t,
            "nodes_unmasked": prev_nodes - masked_nodes,
            "edges_unmasked": prev_edges - masked_edges,
            "nodes_recovered": (total_nodes - masked_nodes) / total_nodes,
            "edges_recovered": (total_edges - masked_edges) / total_edges if total_edges else 1.0,
        })
        prev_nodes, prev_edges = masked_nodes, masked_edges
    return pd.DataFrame(rows)
