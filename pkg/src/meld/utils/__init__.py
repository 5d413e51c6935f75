from .checkpoint import CHECKPOINT_VERSION, load_checkpoint, save_checkpoint
from .io import atomic_write, read_jsonl, write_csv, write_json, write_jsonl, write_text
from .seeding import derive_seed, numpy_rng, seed_everything, torch_generator

__all__ = [
    'CHECKPOINT_VERSION',
    'load_checkpoint',
    'save_checkpoint',
    'atomic_write',
    'read_jsonl',
    'write_csv',
    'write_json',
    'write_jsonl',
    'write_text',
    'derive_seed',
    'numpy_rng',
    'seed_everything',
    'torch_generator',
]
