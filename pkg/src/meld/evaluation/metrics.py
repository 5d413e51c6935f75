import logging
from typing import Hashable, List, Optional, Sequence, Set, Tuple

import networkx as nx

from ..errors import MaskedInput
from ..graphmol.canonical import MAX_CANONICAL_NODES, canonical_code
from ..graphmol.graph import GraphSample
from ..graphmol.valence import check_valence
from ..graphmol.vocab import Vocabulary
from ..schemas.reports import MetricsReport
from .mmd import mmd_report

logger = logging.getLogger(__name__)


def isomorphism_key(g: GraphSample, max_nodes: int = MAX_CANONICAL_NODES) -> Hashable:
    """Canonical code up to ``max_nodes``; a labeled WL hash above it."""
    if g.n <= max_nodes:
        return canonical_code(g, max_nodes).code
    nxg = nx.Graph()
    nxg.add_nodes_from((i, {"label": str(int(x))}) for i, x in enumerate(g.nodes))
    nxg.add_edges_from((i, j, {"label": str(k)}) for i, j, k in g.upper_edges())
    return ("wl", g.n, nx.weisfeiler_lehman_graph_hash(nxg, node_attr="label", edge_attr="label"))


def _valid(generated: Sequence[GraphSample], vocab: Vocabulary) -> Tuple[List[GraphSample], int]:
    valid, connected = [], 0
    for g in generated:
        try:
            verdict = check_valence(g, vocab)
        except MaskedInput:
            continue
        if verdict.valid:
            valid.append(g)
            connected += int(verdict.connected)
    return valid, connected


def basic_metrics(generated: Sequence[GraphSample],
                  training: Sequence[GraphSample],
                  vocab: Vocabulary,
                  max_nodes: int = MAX_CANONICAL_NODES,
                  with_mmd: bool = False,
                  mmd_kwargs: Optional[dict] = None) -> MetricsReport:
    """Validity, uniqueness and novelty of a generated set.

    Uniqueness and novelty are computed over valid graphs by exact
    isomorphism. An empty valid set reports both as 0 and sets
    ``empty_valid_set``.
    """
    total = len(generated)
    valid, connected = _valid(generated, vocab)
    notes = []
    if any(g.n > max_nodes for g in list(valid) + list(training)):
        notes.append(f"graphs above {max_nodes} nodes compared by WL hash")

    keys = [isomorphism_key(g, max_nodes) for g in valid]
    unique = len(set(keys))
    train_keys: Set[Hashable] = {isomorphism_key(g, max_nodes) for g in training}
    novel = sum(1 for k in keys if k not in train_keys)

    report = MetricsReport(
        generated=total,
        valid=len(valid),
        unique=unique,
        novel=novel,
        validity_pct=100.0 * len(valid) / total if total else 0.0,
        uniqueness_pct=100.0 * unique / len(valid) if valid else 0.0,
        novelty_pct=100.0 * novel / len(valid) if valid else 0.0,
        empty_valid_set=not valid,
        connected_pct=100.0 * connected / len(valid) if valid else 0.0,
        notes=notes,
    )
    if with_mmd and generated and training:
        report.mmd = mmd_report(generated, training, **(mmd_kwargs or {}))
    logger.info("validity %.2f%%, uniqueness %.2f%%, novelty %.2f%%",
                report.validity_pct, report.uniqueness_pct, report.novelty_pct)
    return report
