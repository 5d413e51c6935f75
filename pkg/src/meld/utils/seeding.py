"""Deterministic random streams derived from (seed, step, index) keys."""

import random
from typing import Optional

import numpy as np
import torch


def derive_seed(*keys: int) -> int:
    """63-bit seed from an ordered key tuple via ``numpy.random.SeedSequence``."""
    state = np.random.SeedSequence([int(k) for k in keys]).generate_state(1, dtype=np.uint64)
    return int(state[0] & np.uint64(0x7FFFFFFFFFFFFFFF))


def numpy_rng(*keys: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(k) for k in keys]))


def torch_generator(*keys: int, device: Optional[torch.device] = None) -> torch.Generator:
    generator = torch.Generator(device=device or "cpu")
    generator.manual_seed(derive_seed(*keys))
    return generator


def seed_everything(seed: int, deterministic: bool = True) -> None:
    """Seed the global generators and pin torch to deterministic kernels."""
    random.seed(seed)
    np.random.seed(seed % 2**32)
    torch.manual_seed(seed)
    if deterministic:
        torch.use_deterministic_algorithms(True, warn_only=True)
