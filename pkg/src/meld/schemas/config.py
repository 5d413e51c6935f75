import json

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Sequence, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError

from ..errors import ConfigError
from ..graphmol.vocab import NO_BOND, Vocabulary

ScheduleMode = Literal[
    "fixed_cosine",
    "fixed_polynomial",
    "fixed_powerlaw",
    "learn_node_only",
    "learn_edge_only",
    "learn_elementwise",
    "learn_classwise",
    "learn_kindshared",
]


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid", validate_assignment=True)


class DataConfig(_Section):
    """Corpus location and vocabulary."""
    train_path: Optional[str] = Field(default=None, description="JSON Lines training corpus")
    atom_types: List[str] = Field(default_factory=lambda: ["C", "N", "O", "F"],
                                  description="Ordered atom symbols")
    bond_types: List[str] = Field(default_factory=lambda: [NO_BOND, "SINGLE", "DOUBLE", "TRIPLE"],
                                  description="Ordered bond categories, NO_BOND first")
    valence: Dict[str, int] = Field(default_factory=lambda: {"C": 4, "N": 3, "O": 2, "F": 1},
                                    description="Maximum valence per atom symbol")
    n_max: int = Field(default=64, ge=1, description="Largest node count the schedule supports")

    def vocabulary(self) -> Vocabulary:
        return Vocabulary(atom_types=self.atom_types, bond_types=self.bond_types, valence=self.valence)


class ScheduleConfig(_Section):
    """Forward masking schedule."""
    mode: ScheduleMode = Field(default="learn_elementwise", description="Schedule family")
    epsilon: float = Field(default=1e-4, gt=0, le=0.01, description="Survival probability at t=1")
    embed_dim: int = Field(default=64, ge=1, description="Rows D of the embedding matrix H")
    hidden_dim: int = Field(default=64, ge=1, description="Hidden width of the scheduling MLP")
    init_std: float = Field(default=0.02, gt=0, description="Normal init std for H and the MLP")
    exponent: float = Field(default=1.0, gt=0, description="Exponent w of fixed_powerlaw")
    degree: float = Field(default=2.0, gt=0, description="Degree p of fixed_polynomial")


class DenoiserConfig(_Section):
    """Graph-transformer denoiser size."""
    layers: int = Field(default=2, ge=1, description="Transformer blocks L")
    hidden_dim: int = Field(default=64, ge=1, description="Token width d")
    heads: int = Field(default=4, ge=1, description="Attention heads")
    edge_dim: int = Field(default=16, ge=1, description="Edge embedding width d_e")
    ffn_mult: int = Field(default=4, ge=1, description="Feed-forward expansion factor")


class TrainConfig(_Section):
    """Optimization of the denoiser and schedule together."""
    lambda_edge: float = Field(default=5.0, ge=0, description="Edge term weight lambda")
    batch_size: int = Field(default=8, ge=1)
    steps: int = Field(default=300, ge=1)
    learning_rate: float = Field(default=2e-4, gt=0)
    ema_decay: float = Field(default=0.999, ge=0, le=1)
    eta_stgs: float = Field(default=1.0, gt=0, description="Gumbel-Softmax temperature")
    t_min: float = Field(default=1e-4, gt=0, lt=1, description="Lower bound of sampled times")
    cond_dropout_prob: float = Field(default=0.1, ge=0, le=1)
    grad_clip: float = Field(default=1.0, gt=0, description="Global gradient-norm clip")
    properties: List[str] = Field(default_factory=list, description="Conditioning properties")
    seed: int = Field(default=0, ge=0)
    log_every: int = Field(default=25, ge=1, description="Steps between progress log lines")
    checkpoint_every: int = Field(default=0, ge=0, description="0 saves only at the end")
    out_dir: str = Field(default="runs", description="Parent directory for run folders")


class SampleConfig(_Section):
    """Reverse sampling."""
    steps: int = Field(default=200, ge=1, description="Discrete reverse steps T")
    count: int = Field(default=64, ge=1)
    guidance_scale: float = Field(default=0.0, ge=0, description="CFG scale g; 0 is unconditional")
    condition: Dict[str, float] = Field(default_factory=dict, description="Raw property targets")
    seed: int = Field(default=0, ge=0)
    use_ema: bool = True
    trace: bool = Field(default=False, description="Record per-step snapshots")


class EvalConfig(_Section):
    """Metrics and analysis reports."""
    mmd: bool = True
    kernel_sigma: float = Field(default=1.0, gt=0)
    clustering_bins: int = Field(default=50, ge=1)
    spectral_bins: int = Field(default=200, ge=1)
    clash_grid: int = Field(default=100, ge=1, description="T of the T-k timestep labels")
    clash_timesteps: List[float] = Field(default_factory=lambda: [0.0, 0.25, 0.5, 0.75, 0.9, 1.0])
    clash_seeds: int = Field(default=3, ge=1)
    canonical_max_nodes: int = Field(default=16, ge=1)


class RunConfig(_Section):
    """Complete, resolved configuration of one run."""
    data: DataConfig = Field(default_factory=DataConfig)
    schedule: ScheduleConfig = Field(default_factory=ScheduleConfig)
    denoiser: DenoiserConfig = Field(default_factory=DenoiserConfig)
    train: TrainConfig = Field(default_factory=TrainConfig)
    sample: SampleConfig = Field(default_factory=SampleConfig)
    eval: EvalConfig = Field(default_factory=EvalConfig)


def _parse_value(raw: str) -> Any:
    try:
        return json.loads(raw)
    except json.JSONDecodeError:
        return raw


def apply_overrides(payload: Dict[str, Any], overrides: Sequence[str]) -> Dict[str, Any]:
    """Apply ``section.key=value`` strings; values are JSON when they parse as JSON."""
    for item in overrides:
        key, sep, raw = item.partition("=")
        section, dot, name = key.strip().partition(".")
        if not sep or not dot or not name:
            raise ConfigError(f"override must look like section.key=value, got {item!r}")
        if section not in RunConfig.model_fields:
            raise ConfigError(f"unknown config section {section!r}")
        payload.setdefault(section, {})[name] = _parse_value(raw.strip())
    return payload


def read_config_file(path: Union[str, Path]) -> Dict[str, Any]:
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    try:
        if path.suffix == ".json":
            return json.loads(text)
        return tomllib.loads(text)
    except (json.JSONDecodeError, tomllib.TOMLDecodeError) as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def load_config(path: Optional[Union[str, Path]] = None,
                overrides: Sequence[str] = (),
                base: Optional[Dict[str, Any]] = None) -> RunConfig:
    """Build a validated RunConfig.

    Args:
        path: TOML (or .json) config file; defaults apply when None
        overrides: ``section.key=value`` strings applied after the file
        base: Starting payload, e.g. a config echoed in a checkpoint

    Returns:
        RunConfig with every default filled in
    """
    payload: Dict[str, Any] = json.loads(json.dumps(base)) if base else {}
    if path is not None:
        for section, values in read_config_file(path).items():
            if isinstance(values, dict):
                payload.setdefault(section, {}).update(values)
            else:
                payload[section] = values
    apply_overrides(payload, overrides)
    try:
        return RunConfig.model_validate(payload)
    except ValidationError as exc:
        first = exc.errors()[0]
        where = ".".join(str(p) for p in first["loc"])
        raise ConfigError(f"{where}: {first['msg']}") from exc
