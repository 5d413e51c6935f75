import json
import os
import tempfile
from contextlib import contextmanager
from pathlib import Path
from typing import Any, Dict, IO, Iterable, Iterator, List, Union

import pandas as pd

PathLike = Union[str, Path]

# CSV reports print floats at 9 significant digits
FLOAT_FORMAT = "%.9g"


@contextmanager
def atomic_write(path: PathLike, mode: str = "w") -> Iterator[IO]:
    """Write to a temp file in the target directory, then rename over ``path``.

    The target is never left half-written: on error the temp file is removed.
    """
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=target.parent, prefix=f".{target.name}.", suffix=".tmp")
    try:
        encoding = None if "b" in mode else "utf-8"
        with os.fdopen(fd, mode, encoding=encoding) as handle:
            yield handle
            handle.flush()
            os.fsync(handle.fileno())
        os.replace(tmp, target)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_text(path: PathLike, text: str) -> None:
    with atomic_write(path) as handle:
        handle.write(text)


def write_json(path: PathLike, payload: Any) -> None:
    with atomic_write(path) as handle:
        json.dump(payload, handle, indent=2, sort_keys=False)
        handle.write("\n")


def write_jsonl(path: PathLike, records: Iterable[Dict[str, Any]]) -> int:
    count = 0
    with atomic_write(path) as handle:
        for record in records:
            handle.write(json.dumps(record) + "\n")
            count += 1
    return count


def read_jsonl(path: PathLike) -> List[Dict[str, Any]]:
    with open(path, encoding="utf-8") as handle:
        return [json.loads(line) for line in handle if line.strip()]


def write_csv(path: PathLike, frame: pd.DataFrame, index: bool = False) -> None:
    with atomic_write(path) as handle:
        frame.to_csv(handle, index=index, float_format=FLOAT_FORMAT)
