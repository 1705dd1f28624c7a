"""
Versioned binary checkpoint container.

Layout (all integers little-endian)::

    b"SPCT" | u16 version | u64 global_step | u32 meta_len | meta (UTF-8 JSON) | u32 count
    count x ( u16 name_len | name | u8 dtype | u8 ndim | ndim x u32 dim | payload )

dtype 1 is IEEE-754 binary32, 2 is binary64; payloads are row-major.

Copyright (c) 2025, Jim Schilling

This module is licensed under the MIT License.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from ..exceptions import SplurgeContextTransformerCheckpointError
from ..utils.file_io_adapter import FileIoAdapter

# Module domains
DOMAINS = ["numerics", "checkpoint", "persistence"]

__all__ = ["CHECKPOINT_MAGIC", "CHECKPOINT_VERSION", "Checkpoint", "save_checkpoint", "load_checkpoint"]

CHECKPOINT_MAGIC = b"SPCT"
CHECKPOINT_VERSION = 1

_DTYPE_CODES = {np.dtype("<f4"): 1, np.dtype("<f8"): 2}
_CODE_DTYPES = {code: dtype for dtype, code in _DTYPE_CODES.items()}


@dataclass
class Checkpoint:
    """Named parameter arrays plus the global step and free-form metadata."""

    tensors: dict[str, np.ndarray]
    global_step: int = 0
    metadata: dict[str, Any] = field(default_factory=dict)


def encode_checkpoint(checkpoint: Checkpoint) -> bytes:
    meta = json.dumps(checkpoint.metadata, sort_keys=True).encode("utf-8")
    chunks = [
        CHECKPOINT_MAGIC,
        struct.pack("<HQI", CHECKPOINT_VERSION, checkpoint.global_step, len(meta)),
        meta,
        struct.pack("<I", len(checkpoint.tensors)),
    ]
    for name, array in checkpoint.tensors.items():
        dtype = np.dtype(array.dtype).newbyteorder("<")
        if dtype not in _DTYPE_CODES:
            raise SplurgeContextTransformerCheckpointError(
                f"Unsupported dtype {array.dtype} for '{name}'", details={"name": name}
            )
        encoded_name = name.encode("utf-8")
        chunks.append(struct.pack("<H", len(encoded_name)))
        chunks.append(encoded_name)
        chunks.append(struct.pack("<BB", _DTYPE_CODES[dtype], array.ndim))
        chunks.append(struct.pack(f"<{array.ndim}I", *array.shape))
        chunks.append(np.ascontiguousarray(array, dtype=dtype).tobytes(order="C"))
    return b"".join(chunks)


def decode_checkpoint(blob: bytes) -> Checkpoint:
    """Parse a container produced by :func:`encode_checkpoint`.

    Raises:
        SplurgeContextTransformerCheckpointError: On bad magic, unknown version or truncation
    """
    if blob[:4] != CHECKPOINT_MAGIC:
        raise SplurgeContextTransformerCheckpointError("Not a checkpoint file (bad magic)")
    try:
        offset = 4
        version, global_step, meta_len = struct.unpack_from("<HQI", blob, offset)
        offset += struct.calcsize("<HQI")
        if version != CHECKPOINT_VERSION:
            raise SplurgeContextTransformerCheckpointError(
                f"Unsupported checkpoint version {version}", details={"expected": CHECKPOINT_VERSION}
            )
        metadata = json.loads(blob[offset : offset + meta_len].decode("utf-8")) if meta_len else {}
        offset += meta_len
        (count,) = struct.unpack_from("<I", blob, offset)
        offset += 4
        tensors: dict[str, np.ndarray] = {}
        for _ in range(count):
            (name_len,) = struct.unpack_from("<H", blob, offset)
            offset += 2
            name = blob[offset : offset + name_len].decode("utf-8")
            offset += name_len
            code, ndim = struct.unpack_from("<BB", blob, offset)
            offset += 2
            shape = struct.unpack_from(f"<{ndim}I", blob, offset)
            offset += 4 * ndim
            dtype = _CODE_DTYPES.get(code)
            if dtype is None:
                raise SplurgeContextTransformerCheckpointError(f"Unknown dtype code {code} for '{name}'")
            nbytes = int(np.prod(shape, dtype=np.int64)) * dtype.itemsize
            if offset + nbytes > len(blob):
                raise SplurgeContextTransformerCheckpointError(f"Truncated payload for '{name}'")
            tensors[name] = np.frombuffer(blob, dtype=dtype, count=nbytes // dtype.itemsize, offset=offset).reshape(
                shape
            ).astype(dtype.newbyteorder("="))
            offset += nbytes
    except (struct.error, UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise SplurgeContextTransformerCheckpointError(f"Malformed checkpoint: {exc}") from exc
    return Checkpoint(tensors=tensors, global_step=int(global_step), metadata=metadata)


def save_checkpoint(path: str | Path, checkpoint: Checkpoint) -> Path:
    """Write a checkpoint atomically and return its path."""
    target = Path(path)
    FileIoAdapter.write_bytes(target, encode_checkpoint(checkpoint), context_type="checkpoint")
    return target


def load_checkpoint(path: str | Path) -> Checkpoint:
    """Read a checkpoint.

    Raises:
        SplurgeContextTransformerFileError: If the file is missing or unreadable
        SplurgeContextTransformerCheckpointError: If the container is malformed
    """
    return decode_checkpoint(FileIoAdapter.read_bytes(path, context_type="checkpoint"))
