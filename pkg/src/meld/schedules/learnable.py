"""Learnable power-law schedules.

The element-wise schedule gives every node column ``h^i`` of an embedding
matrix H its own exponent ``w = softplus(mlp(h))``; an edge uses the summed
embedding ``h^i + h^j``. Columns are permuted per example so no node index
owns a fixed rate.
"""

import torch
from torch import nn

from ..utils import diffcore as dc
from .base import NoiseSchedule


def _init_mlp(mlp: nn.Sequential, std: float = 0.02) -> None:
    for layer in mlp:
        if isinstance(layer, nn.Linear):
            nn.init.normal_(layer.weight, std=std)
            nn.init.zeros_(layer.bias)


class ElementwiseSchedule(NoiseSchedule):
    """Per-element exponents from permuted embedding columns.

    ``learn_nodes`` / ``learn_edges`` switch either kind back to the fixed
    power law w = 1, giving the node-only and edge-only ablations.
    """

    mode = "learn_elementwise"
    learnable = True

    def __init__(self,
                 n_max: int = 64,
                 embed_dim: int = 64,
                 hidden_dim: int = 64,
                 epsilon: float = 1e-4,
                 init_std: float = 0.02,
                 learn_nodes: bool = True,
                 learn_edges: bool = True):
        super().__init__(epsilon, n_max)
        if not (learn_nodes or learn_edges):
            raise ValueError("at least one of nodes/edges must be learnable")
        self.learn_nodes = learn_nodes
        self.learn_edges = learn_edges
        if learn_nodes and not learn_edges:
            self.mode = "learn_node_only"
        elif learn_edges and not learn_nodes:
            self.mode = "learn_edge_only"
        self.embeddings = nn.Parameter(torch.randn(embed_dim, n_max) * init_std)
        self.mlp = nn.Sequential(
            nn.Linear(embed_dim, hidden_dim),
            nn.SiLU(),
            nn.Linear(hidden_dim, 1),
        )
        _init_mlp(self.mlp, init_std)

    @property
    def embed_dim(self) -> int:
        return self.embeddings.shape[0]

    def _columns(self, perm: torch.Tensor) -> torch.Tensor:
        # [B, N, D]
        return dc.embedding_lookup(dc.transpose(self.embeddings, 0, 1), perm)

    def _exponent(self, h: torch.Tensor) -> torch.Tensor:
        return dc.softplus(self.mlp(h)).squeeze(-1)

    def node_exponents(self, perm: torch.Tensor, labels: torch.Tensor) -> torch.Tensor:
        if not self.learn_nodes:
            return torch.ones(perm.shape, dtype=self.dtype)
        return self._exponent(self._columns(perm))

    def edge_exponents(self, perm: torch.Tensor, labels: torch.Tensor) -> torch.Tensor:
        if not self.learn_edges:
            return torch.ones(perm.shape + perm.shape[-1:], dtype=self.dtype)
        h = self._columns(perm)
        w = self._exponent(h.unsqueeze(2) + h.unsqueeze(1))
        # h^i + h^j is symmetric; averaging removes kernel-level rounding differences
        return (w + dc.transpose(w, -2, -1)) / 2


class ClasswiseSchedule(NoiseSchedule):
    """One exponent per node category and one per edge category."""

    mode = "learn_classwise"
    learnable = True

    def __init__(self, num_atom_types: int, num_bond_types: int,
                 epsilon: float = 1e-4, n_max: int = 64):
        super().__init__(epsilon, n_max)
        self.node_table = nn.Parameter(torch.zeros(num_atom_types))
        self.edge_table = nn.Parameter(torch.zeros(num_bond_types))

    def node_exponents(self, perm: torch.Tensor, labels: torch.Tensor) -> torch.Tensor:
        # mask ids and padding fall back to category 0
        index = labels.clamp(0, self.node_table.shape[0] - 1)
        return dc.softplus(self.node_table[index])

    def edge_exponents(self, perm: torch.Tensor, labels: torch.Tensor) -> torch.Tensor:
        index = labels.clamp(0, self.edge_table.shape[0] - 1)
        return dc.softplus(self.edge_table[index])


class KindSharedSchedule(NoiseSchedule):
    """Two scalars: one exponent for every node, one for every edge."""

    mode = "learn_kindshared"
    learnable = True

    def __init__(self, epsilon: float = 1e-4, n_max: int = 64):
        super().__init__(epsilon, n_max)
        self.node_logit = nn.Parameter(torch.zeros(()))
        self.edge_logit = nn.Parameter(torch.zeros(()))

    def node_exponents(self, perm: torch.Tensor, labels: torch.Tensor) -> torch.Tensor:
        return dc.softplus(self.node_logit).expand(perm.shape)

    def edge_exponents(self, perm: torch.Tensor, labels: torch.Tensor) -> torch.Tensor:
        return dc.softplus(self.edge_logit).expand(perm.shape + perm.shape[-1:])
