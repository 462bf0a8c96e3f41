"""Flat binary tensor container.

Layout (little-endian): magic ``MGNN``, u32 version, u32 tensor count,
u32 metadata length + UTF-8 JSON metadata, then per tensor: u16 name length,
name, u8 ndim, u64 per dim, raw float64 values.
"""

from __future__ import annotations

import json
import struct

import numpy as np

MAGIC = b"MGNN"
VERSION = 1


class CheckpointFormatError(ValueError):
    pass


def dump_tensors(tensors: dict, meta: dict | None = None) -> bytes:
    meta_blob = json.dumps(meta or {}, sort_keys=True, separators=(",", ":")).encode()
    out = [MAGIC, struct.pack("<III", VERSION, len(tensors), len(meta_blob)), meta_blob]
    for name, arr in tensors.items():
        arr = np.ascontiguousarray(arr, dtype="<f8")
        nb = name.encode()
        out.append(struct.pack("<H", len(nb)) + nb + struct.pack("<B", arr.ndim))
        out.append(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        out.append(arr.tobytes())
    return b"".join(out)


def load_tensors(blob: bytes) -> tuple:
    """Inverse of :func:`dump_tensors`; returns ``(tensors, meta)``."""
    if blob[:4] != MAGIC:
        raise CheckpointFormatError("bad magic")
    try:
        version, count, mlen = struct.unpack_from("<III", blob, 4)
        if version != VERSION:
            raise CheckpointFormatError(f"unsupported version {version}")
        pos = 16
        meta = json.loads(blob[pos:pos + mlen].decode())
        pos += mlen
        tensors = {}
        for _ in range(count):
            (nlen,) = struct.unpack_from("<H", blob, pos)
            pos += 2
            name = blob[pos:pos + nlen].decode()
            pos += nlen
            (ndim,) = struct.unpack_from("<B", blob, pos)
            pos += 1
            shape = struct.unpack_from(f"<{ndim}Q", blob, pos)
            pos += 8 * ndim
            size = int(np.prod(shape)) if ndim else 1
            arr = np.frombuffer(blob, dtype="<f8", count=size, offset=pos).reshape(shape)
            pos += 8 * size
            tensors[name] = arr.astype(np.float64)
    except (struct.error, ValueError) as exc:
        if isinstance(exc, CheckpointFormatError):
            raise
        raise CheckpointFormatError(f"truncated or corrupt checkpoint: {exc}") from None
    if pos != len(blob):
        raise CheckpointFormatError("trailing bytes after last tensor")
    return tensors, meta
