from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
import torch
import torch.nn.functional as F

from ..graphmol.graph import GraphSample
from ..graphmol.vocab import Vocabulary
from ..models.denoiser import (
    Condition,
    GraphDenoiser,
    apply_carry_over,
    encode_conditions,
    prediction_entropy,
)


@dataclass
class EntropyMaps:
    node: np.ndarray    # [n]
    edge: np.ndarray    # [n, n]
    masked_nodes: List[int]
    masked_edges: List[Tuple[int, int]]

    def edge_frame(self) -> pd.DataFrame:
        n = self.edge.shape[0]
        return pd.DataFrame(self.edge, index=range(n), columns=[str(j) for j in range(n)])

    def mean_masked_edge_entropy(self) -> float:
        if not self.masked_edges:
            return 0.0
        return float(np.mean([self.edge[i, j] for i, j in self.masked_edges]))


def bonds_of(graph: GraphSample, vocab: Vocabulary, symbol: str) -> List[Tuple[int, int]]:
    """Bonded pairs touching an atom of the given symbol, e.g. every N bond."""
    atom = vocab.atom_index(symbol)
    return [(i, j) for i, j, _ in graph.upper_edges()
            if graph.nodes[i] == atom or graph.nodes[j] == atom]


@torch.no_grad()
def entropy_report(model: GraphDenoiser,
                   graph: GraphSample,
                   vocab: Vocabulary,
                   mask_nodes: Sequence[int] = (),
                   mask_edges: Sequence[Tuple[int, int]] = (),
                   t: Optional[float] = None,
                   condition: Optional[Condition] = None,
                   properties: Sequence[str] = (),
                   property_stats: Optional[Dict[str, Tuple[float, float]]] = None,
                   carry_over: bool = False) -> EntropyMaps:
    """Prediction entropy of the denoiser on a partially masked clean graph.

    Args:
        model: Denoiser (EMA weights for reports)
        graph: Clean input
        vocab: Supplies mask ids
        mask_nodes: Nodes replaced by the mask id
        mask_edges: Pairs replaced by the mask id (mirrored)
        t: Time fed to the model; defaults to the masked fraction
        condition: Optional property condition
        properties, property_stats: Condition layout the model was trained with
        carry_over: Pin unmasked positions to their observed label (entropy 0)

    Returns:
        Node entropies [n] and an edge entropy matrix [n, n] with log(B_real)
        on the diagonal
    """
    nodes = torch.as_tensor(np.array(graph.nodes)).clone()
    edges = torch.as_tensor(np.array(graph.edges)).clone()
    for i in mask_nodes:
        nodes[i] = vocab.node_mask_id
    for i, j in mask_edges:
        edges[i, j] = edges[j, i] = vocab.edge_mask_id
    if t is None:
        pairs = graph.n * (graph.n - 1) // 2
        t = (len(mask_nodes) + len(mask_edges)) / max(graph.n + pairs, 1)

    node_onehots = F.one_hot(nodes, vocab.node_mask_id + 1).float()[None]
    edge_onehots = F.one_hot(edges, vocab.edge_mask_id + 1).float()[None]
    valid = torch.ones(1, graph.n, dtype=torch.bool)
    cond = condition or Condition.unconditional()
    values, nulls = encode_conditions([cond], properties, property_stats)
    model.eval()
    node_logits, edge_logits = model(node_onehots, edge_onehots, valid,
                                     torch.tensor([float(t)]), values, nulls)
    if carry_over:
        node_logits = apply_carry_over(node_logits, nodes[None], nodes[None] == vocab.node_mask_id)
        edge_logits = apply_carry_over(edge_logits, edges[None], edges[None] == vocab.edge_mask_id)
    return EntropyMaps(
        node=prediction_entropy(node_logits[0]).numpy(),
        edge=prediction_entropy(edge_logits[0], pairwise=True).numpy(),
        masked_nodes=list(mask_nodes),
        masked_edges=[tuple(p) for p in mask_edges],
    )
