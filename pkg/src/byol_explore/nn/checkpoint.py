"""Flat binary checkpoints for parameter trees.

Layout (all integers little-endian):

    magic   4 bytes  b"BXPT"
    version u32      currently 1
    count   u32      number of entries
    per entry:
        name_len u32, name (utf-8, name_len bytes)
        rank     u32, dims (rank x u64)
        data     prod(dims) x float64 (little-endian, C order)
"""

from __future__ import annotations

import io
import os
import struct

import numpy as np

from byol_explore.errors import ConfigurationError
from byol_explore.nn.tree import ParameterTree

MAGIC = b"BXPT"
VERSION = 1


def dumps(tree: ParameterTree) -> bytes:
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<II", VERSION, len(tree)))
    for name, value in tree.items():
        raw = name.encode("utf-8")
        buf.write(struct.pack("<I", len(raw)))
        buf.write(raw)
        buf.write(struct.pack("<I", value.ndim))
        buf.write(struct.pack(f"<{value.ndim}Q", *value.shape))
        buf.write(np.ascontiguousarray(value, dtype="<f8").tobytes())
    return buf.getvalue()


def loads(data: bytes) -> ParameterTree:
    view = memoryview(data)
    if bytes(view[:4]) != MAGIC:
        raise ConfigurationError("not a parameter checkpoint (bad magic)")
    try:
        return _read_entries(view)
    except (struct.error, ValueError, UnicodeDecodeError) as exc:
        raise ConfigurationError(f"corrupt or truncated checkpoint: {exc}") from None


def _read_entries(view: memoryview) -> ParameterTree:
    version, count = struct.unpack_from("<II", view, 4)
    if version != VERSION:
        raise ConfigurationError(f"unsupported checkpoint version {version}")
    pos = 12
    entries = {}
    for _ in range(count):
        (n,) = struct.unpack_from("<I", view, pos)
        pos += 4
        name = bytes(view[pos:pos + n]).decode("utf-8")
        pos += n
        (rank,) = struct.unpack_from("<I", view, pos)
        pos += 4
        dims = struct.unpack_from(f"<{rank}Q", view, pos)
        pos += 8 * rank
        size = int(np.prod(dims)) if rank else 1
        if pos + 8 * size > len(view):
            raise ConfigurationError(f"truncated checkpoint: entry {name!r} needs {8 * size} bytes")
        arr = np.frombuffer(view, dtype="<f8", count=size, offset=pos).reshape(dims)
        pos += 8 * size
        entries[name] = arr.astype(np.float64)
    if pos != len(view):
        raise ConfigurationError(f"trailing bytes in checkpoint ({len(view) - pos})")
    return ParameterTree(entries)


def save(tree: ParameterTree, path: str | os.PathLike) -> None:
    with open(path, "wb") as fh:
        fh.write(dumps(tree))


def load(path: str | os.PathLike) -> ParameterTree:
    with open(path, "rb") as fh:
        return loads(fh.read())
