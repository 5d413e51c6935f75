"""Schedule inspection reports: per-element variation, embedding similarity, alpha curves."""

import itertools
from typing import Dict, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
import torch

from ..errors import DegenerateEmbedding, ModeMismatch
from ..graphmol.graph import GraphSample
from .base import NoiseSchedule, PermAssignment
from .learnable import ElementwiseSchedule


def _batch_inputs(perms: Sequence[PermAssignment], n: int,
                  graph: Optional[GraphSample]) -> Tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
    perm = torch.stack([p.as_tensor(n) for p in perms])
    if graph is None:
        nodes = torch.zeros(len(perms), n, dtype=torch.long)
        edges = torch.zeros(len(perms), n, n, dtype=torch.long)
    else:
        nodes = torch.as_tensor(np.array(graph.nodes)).expand(len(perms), n)
        edges = torch.as_tensor(np.array(graph.edges)).expand(len(perms), n, n)
    return perm, nodes, edges


@torch.no_grad()
def _alphas(schedule: NoiseSchedule, t: float, perm: torch.Tensor, nodes: torch.Tensor,
            edges: torch.Tensor) -> Tuple[np.ndarray, np.ndarray]:
    time = torch.full((perm.shape[0],), t, dtype=schedule.dtype)
    node_alpha = schedule.node_terms(time, perm, nodes).alpha
    edge_alpha = schedule.edge_terms(time, perm, edges).alpha
    upper = torch.triu_indices(perm.shape[1], perm.shape[1], offset=1)
    return (node_alpha.double().numpy().reshape(-1),
            edge_alpha[:, upper[0], upper[1]].double().numpy().reshape(-1))


def variation_report(schedule: NoiseSchedule,
                     perms: Sequence[PermAssignment],
                     n: int,
                     t_grid: Sequence[float],
                     delta: float,
                     graph: Optional[GraphSample] = None) -> pd.DataFrame:
    """Spread of the normalized step masking probability across elements.

    For every t in the grid, the ratio (alpha(t - delta) - alpha(t)) / (1 - alpha(t))
    is evaluated for all nodes and all upper-triangle edges under every
    permutation, and its standard deviation reported per kind. Fixed schedules
    give exactly zero.

    Returns:
        DataFrame with columns t, node_std, edge_std
    """
    if n < 2:
        raise ValueError("variation report needs at least two nodes")
    if not perms:
        raise ValueError("variation report needs at least one permutation")
    perm, nodes, edges = _batch_inputs(perms, n, graph)
    rows = []
    for t in t_grid:
        if not 0.0 < t <= 1.0:
            raise ValueError(f"grid values must lie in (0, 1], got {t}")
        prev_nodes, prev_edges = _alphas(schedule, max(t - delta, 0.0), perm, nodes, edges)
        cur_nodes, cur_edges = _alphas(schedule, t, perm, nodes, edges)
        node_ratio = (prev_nodes - cur_nodes) / (1.0 - cur_nodes)
        edge_ratio = (prev_edges - cur_edges) / (1.0 - cur_edges)
        rows.append({
            "t": float(t),
            "node_std": float(np.std(node_ratio)) if schedule.learnable else 0.0,
            "edge_std": float(np.std(edge_ratio)) if schedule.learnable else 0.0,
        })
    return pd.DataFrame(rows, columns=["t", "node_std", "edge_std"])


def _mean_pairwise_cosine(vectors: torch.Tensor) -> float:
    if vectors.shape[0] < 2:
        return float("nan")
    unit = vectors / vectors.norm(dim=1, keepdim=True)
    sims = unit @ unit.T
    pairs = list(itertools.combinations(range(vectors.shape[0]), 2))
    return float(np.mean([sims[i, j].item() for i, j in pairs]))


@torch.no_grad()
def embedding_similarity(schedule: NoiseSchedule,
                         nodes: Sequence[int],
                         edges: Sequence[Tuple[int, int]],
                         perm: PermAssignment) -> Dict[str, float]:
    """Mean pairwise cosine similarity of node embeddings h^i and edge embeddings h^i + h^j.

    Args:
        schedule: Element-wise schedule
        nodes: Node indices in the subset, e.g. the six atoms of a ring
        edges: Edge pairs in the subset
        perm: Column assignment used to look up embeddings

    Returns:
        {"nodes": ..., "edges": ..., "all": ...}; a group with fewer than two
        members reports NaN
    """
    if not isinstance(schedule, ElementwiseSchedule):
        raise ModeMismatch(f"{schedule.mode} has no element embeddings")
    columns = schedule.embeddings.detach().double().T[torch.as_tensor(perm.perm)]
    node_vecs = columns[list(nodes)] if nodes else columns[:0]
    edge_vecs = (torch.stack([columns[i] + columns[j] for i, j in edges])
                 if edges else columns[:0])
    everything = torch.cat([node_vecs, edge_vecs])
    if (everything.norm(dim=1) == 0).any():
        raise DegenerateEmbedding("an embedding in the subset has zero norm")
    return {
        "nodes": _mean_pairwise_cosine(node_vecs),
        "edges": _mean_pairwise_cosine(edge_vecs),
        "all": _mean_pairwise_cosine(everything),
    }


def schedule_param_count(schedule: NoiseSchedule) -> int:
    return schedule.param_count()


def alpha_table(schedule: NoiseSchedule,
                graph: GraphSample,
                perm: PermAssignment,
                t_grid: Sequence[float]) -> pd.DataFrame:
    """Long-form per-element alpha curves: one row per (t, element)."""
    perm_t, nodes, edges = _batch_inputs([perm], graph.n, graph)
    upper = list(zip(*np.triu_indices(graph.n, k=1)))
    rows = []
    for t in t_grid:
        node_alpha, edge_alpha = _alphas(schedule, float(t), perm_t, nodes, edges)
        for i, a in enumerate(node_alpha):
            rows.append({"t": float(t), "kind": "node", "i": i, "j": i, "alpha": float(a)})
        for (i, j), a in zip(upper, edge_alpha):
            rows.append({"t": float(t), "kind": "edge", "i": int(i), "j": int(j), "alpha": float(a)})
    return pd.DataFrame(rows, columns=["t", "kind", "i", "j", "alpha"])
