"""Permutation-equivariant graph transformer p_theta(g_0 | g_t).

Nodes are tokens; edge embeddings enter every attention layer as a per-head
additive bias, and a pair head reads (h_i, h_j, e_ij) for edge logits. No
positional information is used, so permuting the input permutes the output.
"""

import math
from dataclasses import dataclass, field
from typing import Dict, Optional, Sequence, Tuple

import torch
import torch.nn.functional as F
from torch import nn

from ..errors import SizeOverflow
from ..utils import diffcore as dc

# logit assigned to excluded categories (diagonal, carried-over positions)
NEG_INF = -1e9


@dataclass
class Condition:
    """Property targets for classifier-free guidance; ``null`` ignores values."""

    values: Dict[str, float] = field(default_factory=dict)
    null: bool = False

    @classmethod
    def unconditional(cls) -> "Condition":
        return cls(null=True)


def encode_conditions(conditions: Sequence[Condition],
                      properties: Sequence[str],
                      stats: Optional[Dict[str, Tuple[float, float]]] = None
                      ) -> Tuple[torch.Tensor, torch.Tensor]:
    """z-score condition values with training statistics.

    Returns:
        (values [B, P], null [B] bool)
    """
    stats = stats or {}
    rows, nulls = [], []
    for cond in conditions:
        row = []
        for name in properties:
            mean, std = stats.get(name, (0.0, 1.0))
            raw = cond.values.get(name, mean)
            row.append((raw - mean) / (std or 1.0))
        rows.append(row)
        nulls.append(cond.null or not properties)
    values = torch.tensor(rows, dtype=torch.float32).reshape(len(conditions), len(properties))
    return values, torch.tensor(nulls, dtype=torch.bool)


def sinusoidal_embedding(t: torch.Tensor, dim: int, scale: float = 1000.0) -> torch.Tensor:
    half = dim // 2
    freqs = torch.exp(-math.log(10000.0) * torch.arange(half, dtype=t.dtype) / max(half, 1))
    args = scale * t.unsqueeze(-1) * freqs
    emb = torch.cat([torch.cos(args), torch.sin(args)], dim=-1)
    if dim % 2:
        emb = F.pad(emb, (0, 1))
    return emb


def _modulate(x: torch.Tensor, shift: torch.Tensor, scale: torch.Tensor) -> torch.Tensor:
    return x * (1 + scale.unsqueeze(1)) + shift.unsqueeze(1)


class GraphTransformerBlock(nn.Module):
    """Self-attention with edge bias and a feed-forward layer, both AdaLN-modulated."""

    def __init__(self, hidden_dim: int, heads: int, edge_dim: int, ffn_mult: int = 4):
        super().__init__()
        if hidden_dim % heads:
            raise ValueError(f"hidden_dim {hidden_dim} not divisible by heads {heads}")
        self.heads = heads
        self.head_dim = hidden_dim // heads
        self.norm1 = nn.LayerNorm(hidden_dim, elementwise_affine=False)
        self.norm2 = nn.LayerNorm(hidden_dim, elementwise_affine=False)
        self.qkv = nn.Linear(hidden_dim, 3 * hidden_dim)
        self.out = nn.Linear(hidden_dim, hidden_dim)
        self.edge_bias = nn.Linear(edge_dim, heads)
        self.ffn = nn.Sequential(
            nn.Linear(hidden_dim, ffn_mult * hidden_dim),
            nn.SiLU(),
            nn.Linear(ffn_mult * hidden_dim, hidden_dim),
        )
        self.modulation = nn.Sequential(nn.SiLU(), nn.Linear(hidden_dim, 6 * hidden_dim))

    def forward(self, x: torch.Tensor, e: torch.Tensor, c: torch.Tensor,
                node_valid: torch.Tensor) -> torch.Tensor:
        B, N, _ = x.shape
        shift1, scale1, gate1, shift2, scale2, gate2 = self.modulation(c).chunk(6, dim=-1)

        h = _modulate(self.norm1(x), shift1, scale1)
        q, k, v = self.qkv(h).view(B, N, 3, self.heads, self.head_dim).permute(2, 0, 3, 1, 4)
        scores = dc.matmul(q, dc.transpose(k)) / math.sqrt(self.head_dim)
        scores = scores + self.edge_bias(e).permute(0, 3, 1, 2)
        scores = dc.masked_fill(scores, ~node_valid[:, None, None, :], float("-inf"))
        attn = dc.softmax(scores, axis=-1)
        h = dc.matmul(attn, v).transpose(1, 2).reshape(B, N, -1)
        x = x + gate1.unsqueeze(1) * self.out(h)

        h = _modulate(self.norm2(x), shift2, scale2)
        return x + gate2.unsqueeze(1) * self.ffn(h)


class GraphDenoiser(nn.Module):
    """Predicts clean node and edge categories from one-hot noisy graphs.

    Args:
        num_atom_types: A_real; inputs have A_real + 1 columns (mask last)
        num_bond_types: B_real; inputs have B_real + 1 columns (mask last)
        n_max: Largest supported node count
        layers, hidden_dim, heads, edge_dim, ffn_mult: Transformer size
        num_properties: Width of the condition vector (0 disables conditioning)
    """

    def __init__(self,
                 num_atom_types: int,
                 num_bond_types: int,
                 n_max: int = 64,
                 layers: int = 2,
                 hidden_dim: int = 64,
                 heads: int = 4,
                 edge_dim: int = 16,
                 ffn_mult: int = 4,
                 num_properties: int = 0):
        super().__init__()
        self.num_atom_types = num_atom_types
        self.num_bond_types = num_bond_types
        self.n_max = n_max
        self.hidden_dim = hidden_dim
        self.num_properties = num_properties

        self.node_embed = nn.Linear(num_atom_types + 1, hidden_dim, bias=False)
        self.edge_embed = nn.Linear(num_bond_types + 1, edge_dim, bias=False)
        self.time_mlp = nn.Sequential(
            nn.Linear(hidden_dim, hidden_dim),
            nn.SiLU(),
            nn.Linear(hidden_dim, hidden_dim),
        )
        self.cond_proj = nn.Linear(num_properties, hidden_dim) if num_properties else None
        self.null_cond = nn.Parameter(torch.zeros(hidden_dim))
        self.blocks = nn.ModuleList(
            GraphTransformerBlock(hidden_dim, heads, edge_dim, ffn_mult) for _ in range(layers))
        self.final_norm = nn.LayerNorm(hidden_dim)
        self.node_head = nn.Linear(hidden_dim, num_atom_types)
        self.pair_head = nn.Sequential(
            nn.Linear(2 * hidden_dim + edge_dim, hidden_dim),
            nn.SiLU(),
            nn.Linear(hidden_dim, num_bond_types),
        )

    def conditioning(self, t: torch.Tensor, cond_values: Optional[torch.Tensor],
                     cond_null: Optional[torch.Tensor]) -> torch.Tensor:
        dtype = self.null_cond.dtype
        c = self.time_mlp(sinusoidal_embedding(t.to(dtype), self.hidden_dim))
        null = self.null_cond.expand_as(c)
        if self.cond_proj is None or cond_values is None:
            return c + null
        projected = self.cond_proj(cond_values.to(dtype))
        if cond_null is None:
            return c + projected
        return c + torch.where(cond_null.unsqueeze(-1), null, projected)

    def forward(self,
                node_onehots: torch.Tensor,
                edge_onehots: torch.Tensor,
                node_valid: torch.Tensor,
                t: torch.Tensor,
                cond_values: Optional[torch.Tensor] = None,
                cond_null: Optional[torch.Tensor] = None) -> Tuple[torch.Tensor, torch.Tensor]:
        """Logits over real categories.

        Args:
            node_onehots: [B, N, A_real + 1]
            edge_onehots: [B, N, N, B_real + 1], symmetric
            node_valid: [B, N] bool, False on padding
            t: [B] corruption times
            cond_values: [B, P] z-scored properties
            cond_null: [B] bool, True selects the learned null condition

        Returns:
            node_logits [B, N, A_real] and symmetric edge_logits [B, N, N, B_real]
            whose diagonal is NEG_INF except NO_BOND (0)
        """
        B, N, _ = node_onehots.shape
        if N > self.n_max:
            raise SizeOverflow(f"{N} nodes exceed N_max={self.n_max}")
        x = self.node_embed(node_onehots)
        e = self.edge_embed(edge_onehots)
        c = self.conditioning(t, cond_values, cond_null)
        for block in self.blocks:
            x = block(x, e, c, node_valid)
        x = self.final_norm(x)

        node_logits = self.node_head(x)
        pair = dc.concat([x.unsqueeze(2).expand(B, N, N, -1),
                          x.unsqueeze(1).expand(B, N, N, -1), e], axis=-1)
        edge_logits = self.pair_head(pair)
        edge_logits = (edge_logits + edge_logits.transpose(1, 2)) / 2

        diagonal = torch.full((self.num_bond_types,), NEG_INF, dtype=edge_logits.dtype)
        diagonal[0] = 0.0
        eye = torch.eye(N, dtype=torch.bool).reshape(1, N, N, 1)
        edge_logits = torch.where(eye, diagonal, edge_logits)
        return node_logits, edge_logits


def apply_carry_over(logits: torch.Tensor, observed: torch.Tensor, masked: torch.Tensor) -> torch.Tensor:
    """Pin logits at unmasked positions to a one-hot of the observed label.

    Args:
        logits: [..., C]
        observed: [...] labels; only read where ``masked`` is False
        masked: [...] bool
    """
    classes = logits.shape[-1]
    onehot = F.one_hot(observed.clamp(0, classes - 1), classes).bool()
    pinned = torch.full_like(logits, NEG_INF).masked_fill(onehot, 0.0)
    return torch.where(masked.unsqueeze(-1), logits, pinned)


def prediction_entropy(logits: torch.Tensor, pairwise: bool = False) -> torch.Tensor:
    """Shannon entropy in nats of softmax(logits) over the last axis.

    With ``pairwise`` the input is [..., n, n, B_real] and the diagonal is
    reported as log(B_real).
    """
    entropy = torch.distributions.Categorical(logits=logits).entropy()
    if pairwise:
        n = logits.shape[-2]
        eye = torch.eye(n, dtype=torch.bool)
        entropy = entropy.masked_fill(eye, math.log(logits.shape[-1]))
    return entropy
