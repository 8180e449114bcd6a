"""Binary checkpoint container: named float64 tensors plus a JSON metadata block.

Layout (little-endian): 4-byte magic, 1-byte version, u32 metadata length,
metadata JSON, u32 tensor count, then per tensor: u16 name length, name bytes,
u32 rows, u32 cols, rows*cols float64 payload.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .errors import CheckpointError

MAGIC = b"STGN"
VERSION = 1


def save_checkpoint(path: str | Path, tensors: dict[str, np.ndarray],
                    meta: dict | None = None) -> None:
    meta_bytes = json.dumps(meta or {}, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<B", VERSION))
        fh.write(struct.pack("<I", len(meta_bytes)))
        fh.write(meta_bytes)
        fh.write(struct.pack("<I", len(tensors)))
        for name, tensor in tensors.items():
            arr = np.ascontiguousarray(tensor, dtype=np.float64)
            if arr.ndim != 2:
                raise CheckpointError(f"tensor {name!r} is not 2-D")
            encoded = name.encode("utf-8")
            fh.write(struct.pack("<H", len(encoded)))
            fh.write(encoded)
            fh.write(struct.pack("<II", arr.shape[0], arr.shape[1]))
            fh.write(arr.astype("<f8").tobytes())


def load_checkpoint(path: str | Path) -> tuple[dict[str, np.ndarray], dict]:
    try:
        blob = Path(path).read_bytes()
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc

    view = memoryview(blob)
    if len(view) < 9 or bytes(view[:4]) != MAGIC:
        raise CheckpointError(f"{path}: bad magic header")
    version = view[4]
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported version {version}")
    offset = 5

    def take(fmt: str):
        nonlocal offset
        size = struct.calcsize(fmt)
        if offset + size > len(view):
            raise CheckpointError(f"{path}: truncated checkpoint")
        values = struct.unpack_from(fmt, view, offset)
        offset += size
        return values

    (meta_len,) = take("<I")
    if offset + meta_len > len(view):
        raise CheckpointError(f"{path}: truncated metadata")
    try:
        meta = json.loads(bytes(view[offset:offset + meta_len]).decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{path}: corrupt metadata") from exc
    offset += meta_len

    (count,) = take("<I")
    tensors: dict[str, np.ndarray] = {}
    for _ in range(count):
        (name_len,) = take("<H")
        if offset + name_len > len(view):
            raise CheckpointError(f"{path}: truncated tensor name")
        name = bytes(view[offset:offset + name_len]).decode("utf-8")
        offset += name_len
        rows, cols = take("<II")
        nbytes = rows * cols * 8
        if offset + nbytes > len(view):
            raise CheckpointError(f"{path}: truncated payload for {name!r}")
        data = np.frombuffer(view, dtype="<f8", count=rows * cols,
                             offset=offset).reshape(rows, cols)
        tensors[name] = np.array(data, dtype=np.float64)
        offset += nbytes
    return tensors, meta
