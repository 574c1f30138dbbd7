"""Flat binary checkpoint format.

Layout (all integers little-endian)::

    b"SCG1"  u32 version
    repeated until EOF:
        u32 name_len, name (UTF-8), u32 rank, rank x u64 dims, f64 payload
"""
from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from ..errors import CheckpointError

MAGIC = b"SCG1"
VERSION = 1


def save_arrays(path, named_arrays):
    """Write ``(name, ndarray)`` pairs in the given order."""
    chunks = [MAGIC, struct.pack("<I", VERSION)]
    seen = set()
    for name, arr in named_arrays:
        if name in seen:
            raise CheckpointError(f"duplicate parameter name {name!r}")
        seen.add(name)
        arr = np.ascontiguousarray(arr, dtype="<f8")
        raw = name.encode("utf-8")
        chunks.append(struct.pack("<I", len(raw)))
        chunks.append(raw)
        chunks.append(struct.pack("<I", arr.ndim))
        chunks.append(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        chunks.append(arr.tobytes())
    Path(path).write_bytes(b"".join(chunks))


def load_arrays(path):
    """Read a checkpoint into an ordered ``{name: ndarray}`` dict."""
    buf = Path(path).read_bytes()
    if buf[:4] != MAGIC:
        raise CheckpointError(f"{path}: bad magic {buf[:4]!r}")
    if len(buf) < 8:
        raise CheckpointError(f"{path}: truncated header")
    (version,) = struct.unpack_from("<I", buf, 4)
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
    pos, out = 8, {}
    try:
        while pos < len(buf):
            (nlen,) = struct.unpack_from("<I", buf, pos)
            pos += 4
            name = buf[pos:pos + nlen].decode("utf-8")
            pos += nlen
            (rank,) = struct.unpack_from("<I", buf, pos)
            pos += 4
            dims = struct.unpack_from(f"<{rank}Q", buf, pos)
            pos += 8 * rank
            count = int(np.prod(dims)) if rank else 1
            end = pos + 8 * count
            if end > len(buf):
                raise CheckpointError(f"{path}: truncated payload for {name!r}")
            out[name] = np.frombuffer(buf[pos:end], dtype="<f8").reshape(dims).astype(np.float64)
            pos = end
    except struct.error as exc:
        raise CheckpointError(f"{path}: truncated record ({exc})") from exc
    return out
