"""PCTN: a minimal bit-exact binary container for dense float64 arrays.

Layout, all little-endian regardless of host:

* magic bytes ``PCTN``
* ``u32`` version (currently 1)
* ``u32`` ndim (at most 4)
* ``u64`` per dimension
* payload: row-major IEEE-754 binary64 values
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

__all__ = ["read_array", "write_array"]

_MAGIC = b"PCTN"
_VERSION = 1
_MAX_NDIM = 4
_HEADER = struct.Struct("<4sII")


def write_array(path: str | Path, values: np.ndarray) -> None:
    """Write ``values`` (converted to float64) to ``path`` in PCTN format."""
    arr = np.ascontiguousarray(values, dtype=np.float64)
    if arr.ndim > _MAX_NDIM:
        raise ValueError(f"PCTN supports at most {_MAX_NDIM} dimensions, got {arr.ndim}")
    with open(path, "wb") as f:
        f.write(_HEADER.pack(_MAGIC, _VERSION, arr.ndim))
        for dim in arr.shape:
            f.write(struct.pack("<Q", dim))
        f.write(arr.astype("<f8", copy=False).tobytes(order="C"))


def read_array(path: str | Path) -> np.ndarray:
    """Read a PCTN file back into a float64 array, bit-exactly."""
    with open(path, "rb") as f:
        data = f.read()

    if len(data) < _HEADER.size:
        raise ValueError(f"{path}: truncated header ({len(data)} bytes)")
    magic, version, ndim = _HEADER.unpack_from(data)
    if magic != _MAGIC:
        raise ValueError(f"{path}: bad magic {magic!r}, expected {_MAGIC!r}")
    if version != _VERSION:
        raise ValueError(f"{path}: unsupported version {version}")
    if ndim > _MAX_NDIM:
        raise ValueError(f"{path}: ndim {ndim} exceeds maximum {_MAX_NDIM}")

    offset = _HEADER.size
    if len(data) < offset + 8 * ndim:
        raise ValueError(f"{path}: truncated header (missing dims)")
    dims = struct.unpack_from(f"<{ndim}Q", data, offset) if ndim else ()
    offset += 8 * ndim

    count = 1
    for dim in dims:
        count *= dim
    expected = offset + 8 * count
    if len(data) < expected:
        raise ValueError(
            f"{path}: truncated payload ({len(data) - offset} of {8 * count} bytes)"
        )
    if len(data) > expected:
        raise ValueError(f"{path}: {len(data) - expected} trailing bytes after payload")

    flat = np.frombuffer(data, dtype="<f8", count=count, offset=offset)
    return flat.astype(np.float64).reshape(dims)
