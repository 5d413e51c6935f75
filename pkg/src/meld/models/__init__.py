from .denoiser import (
    NEG_INF,
    Condition,
    GraphDenoiser,
    GraphTransformerBlock,
    apply_carry_over,
    encode_conditions,
    prediction_entropy,
)

__all__ = [
    'NEG_INF',
    'Condition',
    'GraphDenoiser',
    'GraphTransformerBlock',
    'apply_carry_over',
    'encode_conditions',
    'prediction_entropy',
]
