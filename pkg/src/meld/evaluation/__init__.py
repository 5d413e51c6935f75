"""Generation metrics, graph-statistic MMD, clash counting and entropy maps."""

from .clash import PERM_POLICIES, clash_count, timestep_grid
from .entropy import EntropyMaps, bonds_of, entropy_report
from .metrics import basic_metrics, isomorphism_key
from .mmd import STATISTICS, gaussian_tv, mmd, mmd_from_histograms, mmd_report

__all__ = [
    'PERM_POLICIES',
    'clash_count',
    'timestep_grid',
    'EntropyMaps',
    'bonds_of',
    'entropy_report',
    'basic_metrics',
    'isomorphism_key',
    'STATISTICS',
    'gaussian_tv',
    'mmd',
    'mmd_from_histograms',
    'mmd_report',
]
