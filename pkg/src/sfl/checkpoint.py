"""Flat binary checkpoint format.

Layout (all integers little-endian)::

    magic        8 bytes   b"SFLCKPT\\x00"
    version      u32
    n_arrays     u32
    meta_len     u32       length of the UTF-8 JSON metadata blob
    meta         meta_len bytes
    shape table  n_arrays entries of:
                   name_len u16, name (UTF-8), dtype u8 (0=float64, 1=int64),
                   ndim u8, dims u64 * ndim
    values       each array's values, row-major, in table order

The format is deliberately dumb: it can be read back without numpy pickling
and diffed byte-for-byte between deterministic runs.
"""

from __future__ import annotations

import io
import json
import struct
from pathlib import Path

import numpy as np

MAGIC = b"SFLCKPT\x00"
VERSION = 1
_DTYPES = {0: np.dtype("<f8"), 1: np.dtype("<i8")}
_CODES = {np.dtype("<f8"): 0, np.dtype("<i8"): 1}


class CheckpointError(ValueError):
    pass


def _normalize(arr) -> np.ndarray:
    arr = np.asarray(arr)
    if arr.dtype.kind in "iub":
        return arr.astype("<i8", order="C")
    if arr.dtype.kind == "f":
        return arr.astype("<f8", order="C")
    raise CheckpointError(f"unsupported dtype {arr.dtype}")


def dumps(arrays: dict[str, np.ndarray], meta: dict | None = None) -> bytes:
    buf = io.BytesIO()
    meta_blob = json.dumps(meta or {}, sort_keys=True).encode()
    items = [(name, _normalize(a)) for name, a in arrays.items()]
    buf.write(MAGIC)
    buf.write(struct.pack("<III", VERSION, len(items), len(meta_blob)))
    buf.write(meta_blob)
    for name, a in items:
        raw = name.encode()
        buf.write(struct.pack("<H", len(raw)))
        buf.write(raw)
        buf.write(struct.pack("<BB", _CODES[a.dtype], a.ndim))
        buf.write(struct.pack(f"<{a.ndim}Q", *a.shape))
    for _, a in items:
        buf.write(a.tobytes(order="C"))
    return buf.getvalue()


def loads(data: bytes) -> tuple[dict[str, np.ndarray], dict]:
    if data[:8] != MAGIC:
        raise CheckpointError("bad magic bytes")
    version, n, meta_len = struct.unpack_from("<III", data, 8)
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    off = 20
    meta = json.loads(data[off:off + meta_len].decode())
    off += meta_len
    table = []
    for _ in range(n):
        (name_len,) = struct.unpack_from("<H", data, off)
        off += 2
        name = data[off:off + name_len].decode()
        off += name_len
        code, ndim = struct.unpack_from("<BB", data, off)
        off += 2
        shape = struct.unpack_from(f"<{ndim}Q", data, off)
        off += 8 * ndim
        table.append((name, _DTYPES[code], shape))
    arrays = {}
    for name, dtype, shape in table:
        count = int(np.prod(shape)) if shape else 1
        nbytes = count * dtype.itemsize
        if off + nbytes > len(data):
            raise CheckpointError("truncated checkpoint")
        arrays[name] = np.frombuffer(data, dtype=dtype, count=count, offset=off).reshape(shape).copy()
        off += nbytes
    return arrays, meta


def save(path: str | Path, arrays: dict[str, np.ndarray], meta: dict | None = None) -> None:
    Path(path).write_bytes(dumps(arrays, meta))


def load(path: str | Path) -> tuple[dict[str, np.ndarray], dict]:
    return loads(Path(path).read_bytes())
