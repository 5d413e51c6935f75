"""State-clashing counter: how many distinct corrupted states a corpus reaches."""

import logging
from typing import List, Sequence, Union

import numpy as np
import pandas as pd
import torch

from ..corruption import GraphBatch, corrupt_batch_hard
from ..errors import MixedSizes
from ..graphmol.canonical import MAX_CANONICAL_NODES, canonical_code
from ..graphmol.graph import GraphSample
from ..graphmol.vocab import Vocabulary
from ..schedules.base import NoiseSchedule
from ..utils.seeding import numpy_rng, torch_generator

logger = logging.getLogger(__name__)

PERM_POLICIES = ("random", "identity")


def timestep_grid(labels: Sequence[int], grid: int = 100) -> List[float]:
    """Map "T-k" offsets to continuous times t = (T - k) / T."""
    return [(grid - k) / grid for k in labels]


def _count_states(batch: GraphBatch, nodes: torch.Tensor, edges: torch.Tensor, max_nodes: int) -> int:
    codes = {canonical_code(batch.graph(b, nodes, edges), max_nodes).code
             for b in range(batch.batch_size)}
    return len(codes)


def clash_count(graphs: Sequence[GraphSample],
                schedule: NoiseSchedule,
                vocab: Vocabulary,
                timesteps: Sequence[float],
                seeds: Union[int, Sequence[int]] = 3,
                perm_policy: str = "random",
                max_nodes: int = MAX_CANONICAL_NODES) -> pd.DataFrame:
    """Distinct canonical states after corrupting every graph once per (seed, t).

    Each graph follows one coupled trajectory per seed: its uniforms and
    permutation are fixed and thresholded against 1 - alpha_t at every t, so
    masked sets only grow with t. At t >= 1 every element is masked.

    Args:
        graphs: Corpus subset; all graphs share one node count
        schedule: Forward schedule (fixed or trained)
        vocab: Supplies mask ids
        timesteps: Times in [0, 1]
        seeds: Seed count (seeds 0..k-1) or explicit seed list
        perm_policy: "random" draws a column permutation per (seed, graph)
        max_nodes: Canonical-code size guard

    Returns:
        DataFrame indexed by t with one column per seed plus "mean"
    """
    if not graphs:
        raise ValueError("clash_count needs at least one graph")
    sizes = {g.n for g in graphs}
    if len(sizes) != 1:
        raise MixedSizes(f"clash corpus mixes node counts {sorted(sizes)}")
    if perm_policy not in PERM_POLICIES:
        raise ValueError(f"perm_policy must be one of {PERM_POLICIES}")
    seed_list = list(range(seeds)) if isinstance(seeds, int) else list(seeds)
    n = sizes.pop()
    batch = GraphBatch.collate(graphs)
    dtype = schedule.dtype

    table = {}
    for seed in seed_list:
        perms, node_u, edge_u = [], [], []
        for gi in range(len(graphs)):
            if perm_policy == "random":
                perms.append(numpy_rng(seed, gi).permutation(schedule.n_max)[:n])
            else:
                perms.append(np.arange(n))
            gen = torch_generator(seed, gi)
            node_u.append(torch.rand(n, generator=gen, dtype=dtype))
            edge_u.append(torch.rand(n, n, generator=gen, dtype=dtype))
        perm = torch.as_tensor(np.stack(perms), dtype=torch.long)
        node_uniforms = torch.stack(node_u)
        edge_uniforms = torch.stack(edge_u)

        column = []
        for t in timesteps:
            if t >= 1.0:
                # fully masked: every graph collapses onto one state
                column.append(1)
                continue
            time = torch.full((len(graphs),), float(t), dtype=dtype)
            noisy = corrupt_batch_hard(batch, time, schedule, perm, vocab,
                                       node_uniforms=node_uniforms, edge_uniforms=edge_uniforms)
            column.append(_count_states(batch, noisy.nodes, noisy.edges, max_nodes))
        table[f"seed_{seed}"] = column
        logger.debug("seed %d clash counts %s", seed, column)

    frame = pd.DataFrame(table, index=pd.Index([float(t) for t in timesteps], name="t"))
    frame["mean"] = frame.mean(axis=1)
    return frame
