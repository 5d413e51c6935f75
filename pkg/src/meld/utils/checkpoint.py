"""Single-file checkpoint format.

Layout: an 8-byte little-endian manifest length, the UTF-8 JSON manifest,
then every tensor as raw little-endian f32 bytes, concatenated in manifest
order. Tensor offsets in the manifest are relative to the start of the
buffer section.
"""

import json
import struct
from pathlib import Path
from typing import Any, Dict, Mapping, Tuple, Union

import numpy as np
import torch

from ..errors import CorruptBuffer, VersionMismatch
from .io import atomic_write

CHECKPOINT_VERSION = 1
_HEADER = struct.Struct("<Q")
_DTYPE = "<f4"


def save_checkpoint(path: Union[str, Path],
                    tensors: Mapping[str, torch.Tensor],
                    meta: Mapping[str, Any]) -> Dict[str, Any]:
    """Write tensors plus JSON metadata.

    Args:
        path: Output file, replaced atomically
        tensors: Name -> tensor; stored as f32
        meta: JSON-serializable fields merged into the manifest

    Returns:
        The manifest that was written
    """
    directory = []
    buffers = []
    offset = 0
    for name, tensor in tensors.items():
        data = tensor.detach().cpu().to(torch.float32).contiguous().numpy().astype(_DTYPE).tobytes()
        directory.append({
            "name": name,
            "shape": list(tensor.shape),
            "dtype": "f32",
            "offset": offset,
            "nbytes": len(data),
        })
        buffers.append(data)
        offset += len(data)

    manifest = {"version": CHECKPOINT_VERSION, **dict(meta), "tensors": directory}
    encoded = json.dumps(manifest).encode("utf-8")
    with atomic_write(path, "wb") as handle:
        handle.write(_HEADER.pack(len(encoded)))
        handle.write(encoded)
        for data in buffers:
            handle.write(data)
    return manifest


def load_checkpoint(path: Union[str, Path]) -> Tuple[Dict[str, Any], Dict[str, torch.Tensor]]:
    """Read a checkpoint back as (manifest, tensors)."""
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise CorruptBuffer(f"{path}: file shorter than header")
    (length,) = _HEADER.unpack_from(raw)
    if _HEADER.size + length > len(raw):
        raise CorruptBuffer(f"{path}: manifest length {length} exceeds file size")
    try:
        manifest = json.loads(raw[_HEADER.size:_HEADER.size + length].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CorruptBuffer(f"{path}: unreadable manifest ({exc})") from exc
    if manifest.get("version") != CHECKPOINT_VERSION:
        raise VersionMismatch(
            f"{path}: checkpoint version {manifest.get('version')}, expected {CHECKPOINT_VERSION}")

    body = memoryview(raw)[_HEADER.size + length:]
    expected = sum(entry["nbytes"] for entry in manifest["tensors"])
    if len(body) != expected:
        raise CorruptBuffer(f"{path}: buffer holds {len(body)} bytes, manifest declares {expected}")

    tensors = {}
    for entry in manifest["tensors"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        if entry["nbytes"] != 4 * count or entry["offset"] + entry["nbytes"] > len(body):
            raise CorruptBuffer(f"{path}: tensor {entry['name']} has an inconsistent extent")
        array = np.frombuffer(body, dtype=_DTYPE, count=count, offset=entry["offset"])
        tensors[entry["name"]] = torch.from_numpy(array.astype(np.float32).reshape(shape))
    return manifest, tensors
