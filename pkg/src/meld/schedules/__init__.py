from .base import AlphaTerms, NoiseSchedule, PermAssignment, power_law_terms
from .factory import build_schedule
from .fixed import CosineSchedule, FixedPowerLawSchedule, PolynomialSchedule
from .learnable import ClasswiseSchedule, ElementwiseSchedule, KindSharedSchedule
from .reports import alpha_table, embedding_similarity, schedule_param_count, variation_report

__all__ = [
    'AlphaTerms',
    'NoiseSchedule',
    'PermAssignment',
    'power_law_terms',
    'build_schedule',
    'CosineSchedule',
    'FixedPowerLawSchedule',
    'PolynomialSchedule',
    'ClasswiseSchedule',
    'ElementwiseSchedule',
    'KindSharedSchedule',
    'alpha_table',
    'embedding_similarity',
    'schedule_param_count',
    'variation_report',
]
