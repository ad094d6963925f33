"""Single-file checkpoint container.

Layout: 8-byte magic, uint32 format version, uint64 header length, a UTF-8
JSON header, then the little-endian tensor payload. The header lists every
tensor as (name, dtype, shape, offset) plus free-form metadata.
"""
from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

MAGIC = b"CFNETCKP"
VERSION = 1
_PREFIX = struct.Struct("<8sIQ")


class CheckpointError(ValueError):
    pass


@dataclass
class Checkpoint:
    tensors: dict[str, np.ndarray]
    meta: dict[str, Any] = field(default_factory=dict)
    version: int = VERSION

    def section(self, prefix: str) -> dict[str, np.ndarray]:
        p = prefix + "/"
        return {k[len(p):]: v for k, v in self.tensors.items() if k.startswith(p)}


def save(path, ckpt: Checkpoint) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    table, blobs, offset = [], [], 0
    for name, arr in ckpt.tensors.items():
        a = np.ascontiguousarray(arr)
        le = a.astype(a.dtype.newbyteorder("<"), copy=False)
        raw = le.tobytes()
        table.append({"name": name, "dtype": le.dtype.str, "shape": list(a.shape),
                      "offset": offset, "nbytes": len(raw)})
        blobs.append(raw)
        offset += len(raw)
    header = json.dumps({"tensors": table, "meta": ckpt.meta}, sort_keys=True).encode()
    tmp = path.with_suffix(path.suffix + ".tmp")
    with tmp.open("wb") as fh:
        fh.write(_PREFIX.pack(MAGIC, ckpt.version, len(header)))
        fh.write(header)
        for raw in blobs:
            fh.write(raw)
    tmp.replace(path)
    return path


def load(path) -> Checkpoint:
    data = Path(path).read_bytes()
    if len(data) < _PREFIX.size:
        raise CheckpointError(f"{path}: truncated header")
    magic, version, hlen = _PREFIX.unpack_from(data)
    if magic != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint (bad magic)")
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported format version {version}")
    start = _PREFIX.size + hlen
    header = json.loads(data[_PREFIX.size:start])
    tensors = {}
    for entry in header["tensors"]:
        lo = start + entry["offset"]
        hi = lo + entry["nbytes"]
        if hi > len(data):
            raise CheckpointError(f"{path}: tensor {entry['name']} runs past end of file")
        dt = np.dtype(entry["dtype"])
        arr = np.frombuffer(data[lo:hi], dtype=dt).reshape(entry["shape"])
        tensors[entry["name"]] = arr.astype(dt.newbyteorder("="))
    return Checkpoint(tensors, header["meta"], version)
