from dataclasses import dataclass

import networkx as nx
import numpy as np

from ..errors import MaskedInput
from .graph import GraphSample
from .vocab import Vocabulary


@dataclass(frozen=True)
class ValidityVerdict:
    """Outcome of the valence check for one graph."""

    valid: bool
    per_atom_excess: np.ndarray
    connected: bool
    component_count: int


def component_count(g: GraphSample) -> int:
    return nx.number_connected_components(g.to_networkx())


def bond_order_sums(g: GraphSample, vocab: Vocabulary) -> np.ndarray:
    """Per atom, the sum of incident bond orders (diagonal ignored)."""
    orders = np.asarray(vocab.bond_order_table(), dtype=np.int64)
    edge_orders = orders[g.edges]
    np.fill_diagonal(edge_orders, 0)
    return edge_orders.sum(axis=1)


def check_valence(g: GraphSample, vocab: Vocabulary) -> ValidityVerdict:
    """Check every atom's bond-order sum against its maximum valence.

    Implicit hydrogens fill any deficit, so only an excess invalidates the
    graph. Connectivity is reported but does not affect ``valid``.
    """
    if g.has_masks(vocab):
        raise MaskedInput("valence check needs a clean graph")
    valences = np.asarray(vocab.valence_table(), dtype=np.int64)[g.nodes]
    excess = np.clip(bond_order_sums(g, vocab) - valences, 0, None)
    components = component_count(g)
    return ValidityVerdict(
        valid=bool((excess == 0).all()),
        per_atom_excess=excess,
        connected=components == 1,
        component_count=components,
    )
