import math
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Optional, Tuple, Union

import numpy as np
import torch
from torch import nn

from ..errors import ModeMismatch, OrderViolation, SizeOverflow
from ..graphmol.graph import GraphSample
from ..utils import diffcore as dc

Element = Union[int, Tuple[int, int]]


@dataclass(frozen=True)
class PermAssignment:
    """Embedding column ``perm[i]`` is assigned to node ``i``.

    A full assignment is a permutation of {0..N_max-1}; the first n entries
    used for an n-node graph are distinct columns.
    """

    perm: np.ndarray

    def __post_init__(self) -> None:
        perm = np.asarray(self.perm, dtype=np.int64)
        if (perm < 0).any() or len(np.unique(perm)) != perm.shape[0]:
            raise ValueError("perm entries must be distinct non-negative columns")
        perm.setflags(write=False)
        object.__setattr__(self, "perm", perm)

    def __len__(self) -> int:
        return int(self.perm.shape[0])

    @classmethod
    def identity(cls, n_max: int) -> "PermAssignment":
        return cls(np.arange(n_max))

    @classmethod
    def random(cls, n_max: int, rng: np.random.Generator) -> "PermAssignment":
        return cls(rng.permutation(n_max))

    def as_tensor(self, n: Optional[int] = None) -> torch.Tensor:
        return torch.as_tensor(self.perm[: n if n is not None else len(self)].copy())


@dataclass
class AlphaTerms:
    """Survival probability, its time derivative and the loss weight -a'/(1-a).

    ``mask_prob`` is 1 - alpha computed without cancellation, so its log stays
    finite at small t even in f32.
    """

    alpha: torch.Tensor
    alpha_dot: torch.Tensor
    weight: torch.Tensor
    mask_prob: torch.Tensor


def expand_time(t: torch.Tensor, like: torch.Tensor) -> torch.Tensor:
    """Broadcast per-sample times [B] against element tensors [B, ...]."""
    t = t.to(like.dtype)
    return t.reshape(t.shape + (1,) * (like.dim() - t.dim()))


def power_law_terms(t: torch.Tensor, w: torch.Tensor, epsilon: float) -> AlphaTerms:
    """alpha = 1 - (1 - eps) t^w, alpha_dot = -(1 - eps) w t^(w-1), weight = w / t."""
    t = expand_time(t, w).expand_as(w)
    positive = t > 0
    tiny = torch.finfo(w.dtype).tiny
    t_safe = t.clamp_min(tiny)
    keep = 1 - epsilon
    t_w = dc.power(t_safe, w)
    mask_prob = torch.where(positive, keep * t_w, torch.zeros_like(t_w))
    alpha = 1 - mask_prob
    slope = -keep * w * dc.power(t_safe, w - 1)
    at_zero = torch.where(w > 1, torch.zeros_like(w),
                          torch.where(w == 1, -keep * torch.ones_like(w),
                                      torch.full_like(w, -math.inf)))
    alpha_dot = torch.where(positive, slope, at_zero)
    weight = torch.where(positive, w / t_safe, torch.full_like(w, math.inf))
    return AlphaTerms(alpha, alpha_dot, weight, mask_prob)


class NoiseSchedule(nn.Module, ABC):
    """Forward masking schedule q_phi.

    Every schedule is evaluated on padded batches: per-sample times [B],
    embedding permutations [B, N] and clean labels ([B, N] nodes,
    [B, N, N] edges). Element-level helpers wrap the batch path with B = 1.
    """

    mode: str = ""
    learnable: bool = False

    def __init__(self, epsilon: float = 1e-4, n_max: int = 64):
        super().__init__()
        if not 0 < epsilon <= 0.01:
            raise ValueError(f"epsilon must be in (0, 0.01], got {epsilon}")
        self.n_max = n_max
        # python float keeps alpha(1) = eps exact at any dtype
        self.epsilon_value = float(epsilon)
        self.register_buffer("epsilon", torch.tensor(float(epsilon)))

    @property
    def dtype(self) -> torch.dtype:
        return self.epsilon.dtype

    # exponent fields (power-law family)

    @abstractmethod
    def node_exponents(self, perm: torch.Tensor, labels: torch.Tensor) -> torch.Tensor:
        """Per-node exponents w, shape [B, N]."""

    @abstractmethod
    def edge_exponents(self, perm: torch.Tensor, labels: torch.Tensor) -> torch.Tensor:
        """Per-edge exponents w, shape [B, N, N], symmetric."""

    def terms(self, t: torch.Tensor, w: torch.Tensor) -> AlphaTerms:
        return power_law_terms(t, w, self.epsilon_value)

    def node_terms(self, t: torch.Tensor, perm: torch.Tensor, labels: torch.Tensor) -> AlphaTerms:
        self._check_size(perm)
        return self.terms(t, self.node_exponents(perm, labels))

    def edge_terms(self, t: torch.Tensor, perm: torch.Tensor, labels: torch.Tensor) -> AlphaTerms:
        self._check_size(perm)
        return self.terms(t, self.edge_exponents(perm, labels))

    def _check_size(self, perm: torch.Tensor) -> None:
        if perm.shape[-1] > self.n_max:
            raise SizeOverflow(f"{perm.shape[-1]} nodes exceed N_max={self.n_max}")

    def param_count(self) -> int:
        return sum(p.numel() for p in self.parameters())

    # element-level views

    def _element_inputs(self, element: Element, perm: PermAssignment,
                        graph: Optional[GraphSample]) -> Tuple[torch.Tensor, torch.Tensor, bool]:
        if isinstance(element, tuple):
            i, j = element
            n = max(i, j) + 1 if graph is None else graph.n
            labels = (torch.zeros(1, n, n, dtype=torch.long) if graph is None
                      else torch.as_tensor(np.array(graph.edges))[None])
            return perm.as_tensor(n)[None], labels, True
        n = element + 1 if graph is None else graph.n
        labels = (torch.zeros(1, n, dtype=torch.long) if graph is None
                  else torch.as_tensor(np.array(graph.nodes))[None])
        return perm.as_tensor(n)[None], labels, False

    def _pick(self, field: torch.Tensor, element: Element) -> torch.Tensor:
        if isinstance(element, tuple):
            return field[0, element[0], element[1]]
        return field[0, element]

    def element_exponent(self, element: Element, perm: PermAssignment,
                         graph: Optional[GraphSample] = None) -> torch.Tensor:
        """Exponent w of one node ``i`` or edge ``(i, j)``.

        Args:
            element: Node index or (i, j) pair
            perm: Embedding column assignment
            graph: Clean graph supplying labels (class-wise mode)

        Returns:
            0-dim tensor w > 0
        """
        if not self.learnable:
            raise ModeMismatch(f"{self.mode} has no learnable exponents")
        perm_t, labels, is_edge = self._element_inputs(element, perm, graph)
        field = (self.edge_exponents if is_edge else self.node_exponents)(perm_t, labels)
        return self._pick(field, element)

    def alpha_at(self, element: Element, perm: PermAssignment, t: float,
                 graph: Optional[GraphSample] = None) -> AlphaTerms:
        """alpha, alpha_dot and weight for one element at time t in [0, 1]."""
        if not 0.0 <= t <= 1.0:
            raise ValueError(f"t must be in [0, 1], got {t}")
        perm_t, labels, is_edge = self._element_inputs(element, perm, graph)
        time = torch.tensor([t], dtype=self.dtype)
        terms = (self.edge_terms if is_edge else self.node_terms)(time, perm_t, labels)
        return AlphaTerms(self._pick(terms.alpha, element),
                          self._pick(terms.alpha_dot, element),
                          self._pick(terms.weight, element),
                          self._pick(terms.mask_prob, element))

    def step_mask_prob(self, element: Element, perm: PermAssignment, t_prev: float, t: float,
                       graph: Optional[GraphSample] = None) -> torch.Tensor:
        """P(masked by t | survived to t_prev) = (alpha(t_prev) - alpha(t)) / alpha(t_prev)."""
        if not 0.0 <= t_prev < t <= 1.0:
            raise OrderViolation(f"need 0 <= t_prev < t <= 1, got {t_prev}, {t}")
        before = self.alpha_at(element, perm, t_prev, graph).alpha
        after = self.alpha_at(element, perm, t, graph).alpha
        return ((before - after) / before).clamp(0.0, 1.0)
