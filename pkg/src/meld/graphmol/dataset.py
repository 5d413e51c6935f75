import json
import logging
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from ..errors import DatasetError, EmptyDataset, RecordIndexError
from .graph import GraphSample
from .smiles import parse_smiles, write_smiles
from .vocab import Vocabulary

logger = logging.getLogger(__name__)

# abort when more than this fraction of lines fails to parse
MAX_FAILURE_RATE = 0.01


@dataclass
class Dataset:
    """Parsed corpus with the statistics sampling and conditioning need."""

    samples: List[GraphSample]
    size_histogram: Dict[int, int]
    property_stats: Dict[str, Tuple[float, float]] = field(default_factory=dict)
    failures: List[Tuple[int, str]] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def max_nodes(self) -> int:
        return max(self.size_histogram)

    @classmethod
    def from_samples(cls, samples: Sequence[GraphSample]) -> "Dataset":
        if not samples:
            raise EmptyDataset("dataset contains no graphs")
        histogram = dict(sorted(Counter(g.n for g in samples).items()))
        values: Dict[str, List[float]] = {}
        for g in samples:
            for name, value in g.props.items():
                values.setdefault(name, []).append(float(value))
        stats = {name: (float(np.mean(v)), float(np.std(v))) for name, v in sorted(values.items())}
        return cls(list(samples), histogram, stats)


def record_to_graph(record: Dict[str, Any], vocab: Vocabulary) -> GraphSample:
    """Decode one JSONL record ({"smiles": ...} or explicit n/nodes/edges)."""
    props = {str(k): float(v) for k, v in (record.get("props") or {}).items()}
    if "smiles" in record and "nodes" not in record:
        g = parse_smiles(str(record["smiles"]), vocab)
        return GraphSample(g.nodes, g.edges, props) if props else g
    n = int(record["n"])
    nodes = [int(x) for x in record["nodes"]]
    if len(nodes) != n:
        raise ValueError(f"record declares n={n} but lists {len(nodes)} nodes")
    if any(x < 0 or x > vocab.node_mask_id for x in nodes):
        raise ValueError("node category out of vocabulary")
    edge_list = []
    for entry in record.get("edges", []):
        i, j, kind = (int(x) for x in entry)
        if not (0 <= i < n and 0 <= j < n):
            raise RecordIndexError(f"edge ({i}, {j}) out of range for n={n}")
        if kind < 0 or kind > vocab.edge_mask_id:
            raise ValueError("edge category out of vocabulary")
        edge_list.append((i, j, kind))
    return GraphSample.from_edge_list(nodes, edge_list, props)


def _parse_line(args: Tuple[int, str, Vocabulary]) -> Tuple[int, Union[GraphSample, Exception]]:
    line_no, line, vocab = args
    try:
        return line_no, record_to_graph(json.loads(line), vocab)
    except Exception as exc:  # collected and reported per line
        if isinstance(exc, RecordIndexError):
            exc = RecordIndexError(f"line {line_no}: {exc}", line=line_no)
        return line_no, exc


def load_dataset(path: Union[str, Path], vocab: Vocabulary, workers: int = 1) -> Dataset:
    """Load a JSON Lines corpus.

    Args:
        path: File with one record per line
        vocab: Vocabulary used to decode SMILES and check category ids
        workers: Thread count for per-line parsing; file order is preserved

    Returns:
        Dataset with samples, node-count histogram and property mean/std
    """
    lines = [(k + 1, line, vocab)
             for k, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines())
             if line.strip()]
    if not lines:
        raise EmptyDataset(f"{path} contains no records")
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parsed = list(pool.map(_parse_line, lines))
    else:
        parsed = [_parse_line(item) for item in lines]

    samples = [g for _, g in parsed if isinstance(g, GraphSample)]
    failures = [(line_no, err) for line_no, err in parsed if isinstance(err, Exception)]
    if len(failures) > MAX_FAILURE_RATE * len(lines):
        if len(failures) == 1 and isinstance(failures[0][1], RecordIndexError):
            raise failures[0][1]
        raise DatasetError(failures, len(lines))
    for line_no, err in failures:
        logger.warning("skipping %s line %d: %s", path, line_no, err)
    dataset = Dataset.from_samples(samples)
    dataset.failures = [(line_no, str(err)) for line_no, err in failures]
    logger.info("loaded %d graphs from %s (%d skipped)", len(samples), path, len(failures))
    return dataset


def graph_records(graphs: Sequence[GraphSample], vocab: Optional[Vocabulary] = None
                  ) -> List[Dict[str, Any]]:
    """Records in the dataset schema, with a SMILES column when writable."""
    records = []
    for g in graphs:
        record = g.to_record()
        if vocab is not None:
            try:
                record["smiles"] = write_smiles(g, vocab)
            except (ValueError, IndexError):
                pass
        records.append(record)
    return records
