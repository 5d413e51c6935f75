import math

import torch

from .base import AlphaTerms, NoiseSchedule, expand_time


class FixedPowerLawSchedule(NoiseSchedule):
    """alpha = 1 - (1 - eps) t^w with one constant exponent for every element."""

    mode = "fixed_powerlaw"

    def __init__(self, exponent: float = 1.0, epsilon: float = 1e-4, n_max: int = 64):
        super().__init__(epsilon, n_max)
        if exponent <= 0:
            raise ValueError(f"exponent must be positive, got {exponent}")
        self.exponent = float(exponent)

    def node_exponents(self, perm: torch.Tensor, labels: torch.Tensor) -> torch.Tensor:
        return torch.full(perm.shape, self.exponent, dtype=self.dtype)

    def edge_exponents(self, perm: torch.Tensor, labels: torch.Tensor) -> torch.Tensor:
        return torch.full(perm.shape + perm.shape[-1:], self.exponent, dtype=self.dtype)


class PolynomialSchedule(FixedPowerLawSchedule):
    """Degree-p polynomial baseline, p = 2 by default."""

    mode = "fixed_polynomial"

    def __init__(self, degree: float = 2.0, epsilon: float = 1e-4, n_max: int = 64):
        super().__init__(degree, epsilon, n_max)


class CosineSchedule(FixedPowerLawSchedule):
    """alpha = eps + (1 - eps) cos(pi t / 2)."""

    mode = "fixed_cosine"

    def __init__(self, epsilon: float = 1e-4, n_max: int = 64):
        super().__init__(1.0, epsilon, n_max)

    def terms(self, t: torch.Tensor, w: torch.Tensor) -> AlphaTerms:
        t = expand_time(t, w).expand_as(w)
        keep = 1 - self.epsilon_value
        half = math.pi / 2
        quarter = math.pi / 4 * t
        alpha = self.epsilon_value + keep * torch.cos(half * t)
        alpha_dot = -keep * half * torch.sin(half * t)
        # 1 - cos(x) = 2 sin^2(x/2), so the weight reduces to (pi/2) cot(pi t / 4)
        mask_prob = 2 * keep * torch.sin(quarter) ** 2
        weight = torch.where(t > 0,
                             half * torch.cos(quarter) / torch.sin(quarter).clamp_min(torch.finfo(w.dtype).tiny),
                             torch.full_like(w, math.inf))
        return AlphaTerms(alpha, alpha_dot, weight, mask_prob)
