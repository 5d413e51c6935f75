"""Graph data model, SMILES subset, valence checks and canonical codes."""

from .canonical import CanonicalCode, canonical_code
from .dataset import Dataset, graph_records, load_dataset, record_to_graph
from .graph import GraphSample
from .smiles import parse_smiles, write_smiles
from .synthetic import random_molecules, symmetric_ring_corpus
from .valence import ValidityVerdict, check_valence, component_count
from .vocab import NO_BOND, Vocabulary, default_vocabulary

__all__ = [
    'CanonicalCode',
    'canonical_code',
    'Dataset',
    'graph_records',
    'load_dataset',
    'record_to_graph',
    'GraphSample',
    'parse_smiles',
    'write_smiles',
    'random_molecules',
    'symmetric_ring_corpus',
    'ValidityVerdict',
    'check_valence',
    'component_count',
    'NO_BOND',
    'Vocabulary',
    'default_vocabulary',
]
