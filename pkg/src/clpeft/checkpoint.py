"""Binary tensor container shared by every persisted model.

Layout (all integers little-endian)::

    magic      8 bytes  b"PEFTCKPT"
    version    u32      = 1
    count      u32      number of entries
    entry*     name_len u32, name (UTF-8), dtype u8 (0 = f64), ndim u8,
               dims u32 * ndim, payload f64 * prod(dims)
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

MAGIC = b"PEFTCKPT"
VERSION = 1
DTYPE_F64 = 0


class CheckpointError(ValueError):
    pass


def encode(tensors: dict[str, np.ndarray]) -> bytes:
    parts = [MAGIC, struct.pack("<II", VERSION, len(tensors))]
    for name, value in tensors.items():
        arr = np.asarray(value, dtype="<f8")
        if arr.ndim > 255:
            raise CheckpointError(f"{name}: too many dimensions")
        raw_name = name.encode("utf-8")
        parts.append(struct.pack("<I", len(raw_name)))
        parts.append(raw_name)
        parts.append(struct.pack("<BB", DTYPE_F64, arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        parts.append(np.ascontiguousarray(arr).tobytes())
    return b"".join(parts)


def decode(blob: bytes) -> dict[str, np.ndarray]:
    if blob[:8] != MAGIC:
        raise CheckpointError("bad magic; not a PEFTCKPT container")
    try:
        version, count = struct.unpack_from("<II", blob, 8)
        if version != VERSION:
            raise CheckpointError(f"unsupported container version {version}")
        off = 16
        out: dict[str, np.ndarray] = {}
        for _ in range(count):
            (name_len,) = struct.unpack_from("<I", blob, off)
            off += 4
            name = blob[off:off + name_len].decode("utf-8")
            off += name_len
            dtype, ndim = struct.unpack_from("<BB", blob, off)
            off += 2
            if dtype != DTYPE_F64:
                raise CheckpointError(f"{name}: unknown dtype tag {dtype}")
            dims = struct.unpack_from(f"<{ndim}I", blob, off)
            off += 4 * ndim
            n = int(np.prod(dims, dtype=np.int64))
            end = off + 8 * n
            if end > len(blob):
                raise CheckpointError(f"{name}: payload truncated")
            if name in out:
                raise CheckpointError(f"duplicate entry {name!r}")
            out[name] = np.frombuffer(blob, dtype="<f8", count=n, offset=off).reshape(dims).copy()
            off = end
    except struct.error as exc:
        raise CheckpointError(f"truncated container: {exc}") from None
    if off != len(blob):
        raise CheckpointError(f"{len(blob) - off} trailing bytes after last entry")
    return out


def write_checkpoint(path, tensors: dict[str, np.ndarray]) -> None:
    Path(path).write_bytes(encode(tensors))


def read_checkpoint(path) -> dict[str, np.ndarray]:
    return decode(Path(path).read_bytes())
