"""Portable little-endian weight file.

Layout::

    b"UVMW"            magic
    u16                version (1)
    u32                entry count
    per entry, names in strictly increasing lexicographic order:
        u16            name length in bytes
        bytes          UTF-8 name
        u8             rank (1..4)
        u32 * rank     extents
        f32 * prod     payload, row-major
"""

from __future__ import annotations

import os
import struct
from typing import Mapping

import numpy as np

from .errors import ParseError
from .segnet import NetWeights

MAGIC = b"UVMW"
VERSION = 1
_LE_F32 = np.dtype("<f4")


def encode_weights(tensors: Mapping[str, np.ndarray]) -> bytes:
    parts = [MAGIC, struct.pack("<HI", VERSION, len(tensors))]
    for name in sorted(tensors):
        arr = np.asarray(tensors[name], dtype=np.float32)
        if not 1 <= arr.ndim <= 4:
            raise ValueError(f"{name}: rank must be 1..4, got {arr.ndim}")
        raw = name.encode("utf-8")
        if len(raw) > 0xFFFF:
            raise ValueError(f"{name}: name too long")
        parts.append(struct.pack("<H", len(raw)) + raw)
        parts.append(struct.pack(f"<B{arr.ndim}I", arr.ndim, *arr.shape))
        parts.append(np.ascontiguousarray(arr, dtype=_LE_F32).tobytes())
    return b"".join(parts)


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int, what: str) -> bytes:
        if self.pos + n > len(self.data):
            raise ParseError(f"truncated file while reading {what}", self.pos)
        chunk = self.data[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt: str, what: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), what))


def decode_weights(data: bytes) -> dict[str, np.ndarray]:
    r = _Reader(data)
    if r.take(4, "magic") != MAGIC:
        raise ParseError("bad magic, not a UVMW weight file", 0)
    (version,) = r.unpack("<H", "version")
    if version != VERSION:
        raise ParseError(f"unsupported version {version}", 4)
    (count,) = r.unpack("<I", "entry count")
    tensors: dict[str, np.ndarray] = {}
    previous = None
    for _ in range(count):
        start = r.pos
        (name_len,) = r.unpack("<H", "name length")
        try:
            name = r.take(name_len, "name").decode("utf-8")
        except UnicodeDecodeError:
            raise ParseError("entry name is not valid UTF-8", start + 2) from None
        if name in tensors:
            raise ParseError(f"duplicate entry name {name!r}", start)
        if previous is not None and name < previous:
            raise ParseError(f"entry {name!r} out of canonical order", start)
        rank_pos = r.pos
        (rank,) = r.unpack("<B", "rank")
        if not 1 <= rank <= 4:
            raise ParseError(f"entry {name!r} has rank {rank}, expected 1..4", rank_pos)
        extents = r.unpack(f"<{rank}I", "extents")
        if min(extents) < 1:
            raise ParseError(f"entry {name!r} has a zero extent", rank_pos + 1)
        n = int(np.prod(extents))
        payload = r.take(4 * n, f"payload of {name!r}")
        tensors[name] = np.frombuffer(payload, dtype=_LE_F32).astype(np.float32).reshape(extents)
        previous = name
    if r.pos != len(data):
        raise ParseError("trailing bytes after last entry", r.pos)
    return tensors


def save_weights(path: str | os.PathLike, tensors: Mapping[str, np.ndarray]) -> None:
    with open(path, "wb") as fh:
        fh.write(encode_weights(tensors))


def load_weights(path: str | os.PathLike) -> NetWeights:
    with open(path, "rb") as fh:
        return NetWeights(decode_weights(fh.read()))
