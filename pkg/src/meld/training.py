"""Joint training of the denoiser and the forward schedule."""

import copy
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
import torch
import torch.nn.functional as F
from torch import nn
from tqdm import tqdm

from . import __version__
from .corruption import GraphBatch, NoisyBatch, corrupt_batch_stgs
from .errors import CheckpointError, SizeOverflow
from .graphmol.dataset import Dataset
from .graphmol.graph import GraphSample
from .graphmol.vocab import Vocabulary
from .logging_system import TrainingLogger
from .models.denoiser import Condition, GraphDenoiser
from .schedules.base import NoiseSchedule
from .schedules.factory import build_schedule
from .schemas.config import RunConfig, load_config
from .utils.checkpoint import load_checkpoint, save_checkpoint
from .utils.seeding import numpy_rng, seed_everything, torch_generator

logger = logging.getLogger(__name__)

ADAM_BETAS = (0.9, 0.999)
ADAM_EPS = 1e-8

# stream ids mixed into per-step seeds
_BATCH_STREAM = 0
_NOISE_STREAM = 1


@dataclass
class LossTerms:
    """Batch-mean loss and its node / lambda-scaled edge components."""

    total: torch.Tensor
    node: torch.Tensor
    edge: torch.Tensor
    t_mean: float


def masked_diffusion_loss(node_logits: torch.Tensor,
                          edge_logits: torch.Tensor,
                          noisy: NoisyBatch,
                          lambda_edge: float) -> LossTerms:
    """Weighted cross-entropy over masked elements.

    Each masked node contributes weight * CE(clean label, logits) and each
    masked upper-triangle edge lambda * weight * CE, where weight is
    -alpha_dot / (1 - alpha). Sums are per graph, then averaged over the batch.
    """
    clean = noisy.clean
    B, N = clean.nodes.shape
    node_ce = F.cross_entropy(node_logits.reshape(B * N, -1), clean.nodes.reshape(-1),
                              reduction="none").view(B, N)
    edge_ce = F.cross_entropy(edge_logits.reshape(B * N * N, -1), clean.edges.reshape(-1),
                              reduction="none").view(B, N, N)

    node_weight = noisy.node_terms.weight * noisy.node_p_mask
    edge_weight = noisy.edge_terms.weight * noisy.edge_p_mask * clean.upper_valid.to(edge_ce.dtype)
    # unmasked elements have zero weight; keep inf * 0 out of the sum
    node_weight = torch.where(noisy.node_masked, node_weight, torch.zeros_like(node_weight))
    edge_weight = torch.where(noisy.edge_masked & clean.upper_valid, edge_weight,
                              torch.zeros_like(edge_weight))

    node = (node_weight * node_ce).sum(dim=1).mean()
    edge = lambda_edge * (edge_weight * edge_ce).sum(dim=(1, 2)).mean()
    return LossTerms(node + edge, node, edge, float(noisy.t.detach().float().mean()))


def diffusion_loss(denoiser: GraphDenoiser,
                   schedule: NoiseSchedule,
                   batch: GraphBatch,
                   vocab: Vocabulary,
                   t: torch.Tensor,
                   perm: torch.Tensor,
                   lambda_edge: float = 5.0,
                   temperature: float = 1.0,
                   generator: Optional[torch.Generator] = None,
                   node_noise: Optional[torch.Tensor] = None,
                   edge_noise: Optional[torch.Tensor] = None,
                   cond_null: Optional[torch.Tensor] = None,
                   hard: bool = True) -> Tuple[LossTerms, NoisyBatch]:
    """Corrupt with STGS, run the denoiser and score the masked elements."""
    noisy = corrupt_batch_stgs(batch, t, schedule, perm, vocab, temperature, generator,
                               node_noise, edge_noise, hard=hard)
    node_logits, edge_logits = denoiser(noisy.node_onehots, noisy.edge_onehots, batch.node_valid,
                                        t, batch.props, cond_null)
    return masked_diffusion_loss(node_logits, edge_logits, noisy, lambda_edge), noisy


def condition_dropout(cond: Condition, rng: np.random.Generator, p: float) -> Condition:
    """Replace ``cond`` by the null condition with probability p."""
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"dropout probability must be in [0, 1], got {p}")
    if rng.random() < p:
        return Condition.unconditional()
    return cond


@dataclass
class ModelBundle:
    """Everything sampling and inspection need from a checkpoint."""

    config: RunConfig
    vocab: Vocabulary
    denoiser: GraphDenoiser
    ema: GraphDenoiser
    schedule: NoiseSchedule
    size_histogram: Dict[int, int]
    property_stats: Dict[str, Tuple[float, float]] = field(default_factory=dict)
    step: int = 0

    @property
    def properties(self) -> List[str]:
        return list(self.config.train.properties)

    def sampling_model(self, use_ema: bool = True) -> GraphDenoiser:
        return self.ema if use_ema else self.denoiser


def _build_modules(config: RunConfig, vocab: Vocabulary, n_max: int
                   ) -> Tuple[GraphDenoiser, GraphDenoiser, NoiseSchedule]:
    torch.manual_seed(config.train.seed)
    schedule = build_schedule(config.schedule, vocab, n_max)
    d = config.denoiser
    denoiser = GraphDenoiser(
        num_atom_types=vocab.num_atom_types,
        num_bond_types=vocab.num_bond_types,
        n_max=n_max,
        layers=d.layers,
        hidden_dim=d.hidden_dim,
        heads=d.heads,
        edge_dim=d.edge_dim,
        ffn_mult=d.ffn_mult,
        num_properties=len(config.train.properties),
    )
    ema = copy.deepcopy(denoiser)
    ema.requires_grad_(False)
    return denoiser, ema, schedule


class Trainer:
    """Runs and records training of the denoiser and schedule together."""

    def __init__(self,
                 config: RunConfig,
                 dataset: Dataset,
                 output_dir: Optional[Union[str, Path]] = None,
                 show_progress: bool = False):
        """Initialize training state.

        Args:
            config: Resolved run configuration
            dataset: Training corpus
            output_dir: Run directory for logs and checkpoints
            show_progress: Draw a tqdm bar in ``run``
        """
        self.config = config
        self.dataset = dataset
        self.vocab = config.data.vocabulary()
        if dataset.max_nodes > config.data.n_max:
            raise SizeOverflow(f"dataset has {dataset.max_nodes}-node graphs, N_max={config.data.n_max}")
        self.n_max = config.data.n_max
        self.output_dir = Path(output_dir) if output_dir else None
        self.show_progress = show_progress

        seed_everything(config.train.seed)
        self.denoiser, self.ema, self.schedule = _build_modules(config, self.vocab, self.n_max)
        self.optimizer = torch.optim.AdamW(
            self.parameter_groups(),
            lr=config.train.learning_rate,
            betas=ADAM_BETAS,
            eps=ADAM_EPS,
            weight_decay=0.0,
        )
        self.step = 0
        self.logger = TrainingLogger(self.output_dir or config.train.out_dir)

    def named_parameters(self) -> List[Tuple[str, nn.Parameter]]:
        return ([(f"theta/{k}", p) for k, p in self.denoiser.named_parameters()]
                + [(f"phi/{k}", p) for k, p in self.schedule.named_parameters()])

    def parameter_groups(self) -> List[nn.Parameter]:
        return [p for _, p in self.named_parameters()]

    # batch assembly

    def draw_batch(self, step: int) -> Tuple[GraphBatch, torch.Tensor, torch.Tensor, torch.Tensor]:
        """Graphs, times, permutations and null flags for ``step``.

        Everything is derived from (seed, step, index) so a resumed run draws
        the same batches as an uninterrupted one.
        """
        train = self.config.train
        rng = numpy_rng(train.seed, step, _BATCH_STREAM)
        size = len(self.dataset)
        index = rng.choice(size, size=train.batch_size, replace=size < train.batch_size)
        graphs = [self.dataset.samples[i] for i in index]
        batch = GraphBatch.collate(graphs, properties=train.properties,
                                   property_stats=self.dataset.property_stats)

        times, perms, nulls = [], [], []
        for b in range(batch.batch_size):
            sample_rng = numpy_rng(train.seed, step, _BATCH_STREAM, b + 1)
            times.append(train.t_min + (1.0 - train.t_min) * sample_rng.random())
            perms.append(sample_rng.permutation(self.n_max)[:batch.n_pad])
            cond = condition_dropout(Condition(), sample_rng, train.cond_dropout_prob)
            nulls.append(cond.null)
        t = torch.tensor(times, dtype=torch.float32)
        perm = torch.as_tensor(np.stack(perms), dtype=torch.long)
        return batch, t, perm, torch.tensor(nulls, dtype=torch.bool)

    def loss(self, step: Optional[int] = None) -> LossTerms:
        step = self.step if step is None else step
        batch, t, perm, nulls = self.draw_batch(step)
        terms, _ = diffusion_loss(
            self.denoiser, self.schedule, batch, self.vocab, t, perm,
            lambda_edge=self.config.train.lambda_edge,
            temperature=self.config.train.eta_stgs,
            generator=torch_generator(self.config.train.seed, step, _NOISE_STREAM),
            cond_null=nulls,
        )
        return terms

    @torch.no_grad()
    def update_ema(self) -> None:
        decay = self.config.train.ema_decay
        for ema_p, p in zip(self.ema.parameters(), self.denoiser.parameters()):
            ema_p.lerp_(p, 1.0 - decay)

    def train_step(self) -> Tuple[LossTerms, float]:
        """One AdamW update of theta and phi followed by the EMA update."""
        self.denoiser.train()
        self.optimizer.zero_grad(set_to_none=True)
        terms = self.loss()
        terms.total.backward()
        grad_norm = nn.utils.clip_grad_norm_(self.parameter_groups(), self.config.train.grad_clip)
        self.optimizer.step()
        self.update_ema()
        self.step += 1
        return terms, float(grad_norm)

    def run(self, num_steps: Optional[int] = None, save: bool = True) -> pd.DataFrame:
        """Train until ``num_steps`` total steps (default: config.train.steps).

        Returns:
            DataFrame with one row per step taken in this call
        """
        target = num_steps if num_steps is not None else self.config.train.steps
        train = self.config.train
        if self.logger.current_run_dir is None:
            self.logger.start_new_run(self.output_dir)
        logger.info("training %s schedule from step %d to %d", self.schedule.mode, self.step, target)

        bar = tqdm(total=target - self.step, disable=not self.show_progress, desc="train")
        while self.step < target:
            terms, grad_norm = self.train_step()
            self.logger.log_step(self.step, terms.t_mean, float(terms.total), float(terms.node),
                                 float(terms.edge), grad_norm)
            bar.update(1)
            bar.set_postfix(loss=f"{float(terms.total):.4f}")
            if self.step % train.log_every == 0:
                logger.info("step %d loss %.4f (node %.4f, edge %.4f)", self.step,
                            float(terms.total), float(terms.node), float(terms.edge))
            if save and train.checkpoint_every and self.step % train.checkpoint_every == 0:
                self.save_checkpoint(self.logger.current_run_dir / f"step_{self.step}.ckpt")
        bar.close()

        if save:
            self.save_checkpoint(self.logger.current_run_dir / "model.ckpt")
            self.logger.save_logs({"schedule_mode": self.schedule.mode,
                                   "schedule_params": self.schedule.param_count()})
        return self.logger.get_step_data()

    def generate_report(self) -> Dict[str, Any]:
        """Summary of the run so far."""
        return {
            "step": self.step,
            "schedule_mode": self.schedule.mode,
            "schedule_params": self.schedule.param_count(),
            "denoiser_params": sum(p.numel() for p in self.denoiser.parameters()),
            **self.logger.summary(),
        }

    # checkpoints

    def state_tensors(self) -> Dict[str, torch.Tensor]:
        tensors: Dict[str, torch.Tensor] = {}
        for k, v in self.denoiser.state_dict().items():
            tensors[f"theta/{k}"] = v
        for k, v in self.ema.state_dict().items():
            tensors[f"ema/{k}"] = v
        for k, v in self.schedule.state_dict().items():
            tensors[f"phi/{k}"] = v
        for name, p in self.named_parameters():
            state = self.optimizer.state.get(p)
            if not state:
                continue
            for key in ("exp_avg", "exp_avg_sq"):
                tensors[f"opt/{key}/{name}"] = state[key]
            tensors[f"opt/step/{name}"] = torch.as_tensor(state["step"], dtype=torch.float32)
        return tensors

    def checkpoint_meta(self) -> Dict[str, Any]:
        return {
            "meld_version": __version__,
            "config": self.config.model_dump(mode="json"),
            "vocab": self.vocab.model_dump(),
            "n_max": self.n_max,
            "size_histogram": {str(k): v for k, v in self.dataset.size_histogram.items()},
            "property_stats": {k: list(v) for k, v in self.dataset.property_stats.items()},
            "rng_state": {"seed": self.config.train.seed, "step": self.step},
        }

    def save_checkpoint(self, path: Union[str, Path]) -> Path:
        save_checkpoint(path, self.state_tensors(), self.checkpoint_meta())
        logger.info("checkpoint written to %s (step %d)", path, self.step)
        return Path(path)

    def load_state(self, path: Union[str, Path]) -> None:
        """Restore parameters, EMA, optimizer moments and the step counter."""
        manifest, tensors = load_checkpoint(path)
        _load_module(self.denoiser, tensors, "theta/")
        _load_module(self.ema, tensors, "ema/")
        _load_module(self.schedule, tensors, "phi/")
        for name, p in self.named_parameters():
            if f"opt/step/{name}" not in tensors:
                continue
            self.optimizer.state[p] = {
                "step": tensors[f"opt/step/{name}"].clone(),
                "exp_avg": tensors[f"opt/exp_avg/{name}"].clone(),
                "exp_avg_sq": tensors[f"opt/exp_avg_sq/{name}"].clone(),
            }
        self.step = int(manifest["rng_state"]["step"])

    @classmethod
    def resume(cls, path: Union[str, Path], dataset: Dataset,
               output_dir: Optional[Union[str, Path]] = None, **kwargs: Any) -> "Trainer":
        manifest, _ = load_checkpoint(path)
        config = load_config(base=manifest["config"])
        trainer = cls(config, dataset, output_dir, **kwargs)
        trainer.load_state(path)
        return trainer


def _load_module(module: nn.Module, tensors: Dict[str, torch.Tensor], prefix: str) -> None:
    state = {k[len(prefix):]: v for k, v in tensors.items() if k.startswith(prefix)}
    expected = module.state_dict()
    missing = sorted(set(expected) - set(state))
    if missing:
        raise CheckpointError(f"checkpoint lacks {prefix}{missing[0]}")
    for key, value in expected.items():
        if tuple(state[key].shape) != tuple(value.shape):
            raise CheckpointError(
                f"{prefix}{key}: shape {tuple(state[key].shape)} != {tuple(value.shape)}")
    module.load_state_dict({k: state[k].to(expected[k].dtype) for k in expected})


def load_model(path: Union[str, Path]) -> ModelBundle:
    """Rebuild denoiser, EMA copy and schedule from a checkpoint."""
    manifest, tensors = load_checkpoint(path)
    config = load_config(base=manifest["config"])
    vocab = Vocabulary.model_validate(manifest["vocab"])
    denoiser, ema, schedule = _build_modules(config, vocab, int(manifest["n_max"]))
    _load_module(denoiser, tensors, "theta/")
    _load_module(ema, tensors, "ema/")
    _load_module(schedule, tensors, "phi/")
    denoiser.eval()
    ema.eval()
    return ModelBundle(
        config=config,
        vocab=vocab,
        denoiser=denoiser,
        ema=ema,
        schedule=schedule,
        size_histogram={int(k): int(v) for k, v in manifest["size_histogram"].items()},
        property_stats={k: (float(v[0]), float(v[1])) for k, v in manifest["property_stats"].items()},
        step=int(manifest["rng_state"]["step"]),
    )


def train_graphs(config: RunConfig, graphs: Sequence[GraphSample],
                 output_dir: Optional[Union[str, Path]] = None) -> Trainer:
    """Convenience wrapper: train on in-memory graphs and return the trainer."""
    trainer = Trainer(config, Dataset.from_samples(graphs), output_dir)
    trainer.run()
    return trainer
