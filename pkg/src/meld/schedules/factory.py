from ..graphmol.vocab import Vocabulary
from ..schemas.config import ScheduleConfig
from .base import NoiseSchedule
from .fixed import CosineSchedule, FixedPowerLawSchedule, PolynomialSchedule
from .learnable import ClasswiseSchedule, ElementwiseSchedule, KindSharedSchedule


def build_schedule(config: ScheduleConfig, vocab: Vocabulary, n_max: int) -> NoiseSchedule:
    """Instantiate the schedule named by ``config.mode``."""
    mode = config.mode
    eps = config.epsilon
    if mode == "fixed_cosine":
        return CosineSchedule(eps, n_max)
    if mode == "fixed_polynomial":
        return PolynomialSchedule(config.degree, eps, n_max)
    if mode == "fixed_powerlaw":
        return FixedPowerLawSchedule(config.exponent, eps, n_max)
    if mode == "learn_classwise":
        return ClasswiseSchedule(vocab.num_atom_types, vocab.num_bond_types, eps, n_max)
    if mode == "learn_kindshared":
        return KindSharedSchedule(eps, n_max)
    if mode in ("learn_elementwise", "learn_node_only", "learn_edge_only"):
        return ElementwiseSchedule(
            n_max=n_max,
            embed_dim=config.embed_dim,
            hidden_dim=config.hidden_dim,
            epsilon=eps,
            init_std=config.init_std,
            learn_nodes=mode != "learn_edge_only",
            learn_edges=mode != "learn_node_only",
        )
    raise ValueError(f"unknown schedule mode {mode!r}")
