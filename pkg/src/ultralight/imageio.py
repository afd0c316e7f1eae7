"""Binary PGM (P5) and PPM (P6) images with maxval 255."""

from __future__ import annotations

import os

import numpy as np

from .errors import ParseError
from .tensor import DTYPE

MASK_THRESHOLD = 128


def _parse_header(data: bytes, magic: bytes) -> tuple[int, int, int]:
    """Return ``(width, height, raster_offset)``."""
    if data[:2] != magic:
        raise ParseError(f"expected magic {magic.decode()}, got {data[:2]!r}", 0)
    pos = 2
    fields = []
    while len(fields) < 3:
        if pos >= len(data):
            raise ParseError("header ends early", pos)
        ch = data[pos:pos + 1]
        if ch == b"#":
            end = data.find(b"\n", pos)
            if end < 0:
                raise ParseError("unterminated header comment", pos)
            pos = end + 1
        elif ch.isspace():
            pos += 1
        elif ch.isdigit():
            start = pos
            while pos < len(data) and data[pos:pos + 1].isdigit():
                pos += 1
            fields.append((int(data[start:pos]), start))
        else:
            raise ParseError(f"unexpected byte {ch!r} in header", pos)
    (width, _), (height, _), (maxval, mpos) = fields
    if width < 1 or height < 1:
        raise ParseError(f"bad image size {width}x{height}", fields[0][1])
    if maxval != 255:
        raise ParseError(f"only maxval 255 is supported, got {maxval}", mpos)
    if pos >= len(data) or not data[pos:pos + 1].isspace():
        raise ParseError("missing whitespace before raster", pos)
    return width, height, pos + 1


def _read_raster(path, magic: bytes, channels: int) -> np.ndarray:
    with open(path, "rb") as fh:
        data = fh.read()
    width, height, offset = _parse_header(data, magic)
    need = width * height * channels
    if len(data) - offset < need:
        raise ParseError(f"raster needs {need} bytes, file has {len(data) - offset}", len(data))
    raster = np.frombuffer(data, dtype=np.uint8, count=need, offset=offset)
    return raster.reshape(height, width, channels).transpose(2, 0, 1)


def read_pgm_bytes(path: str | os.PathLike) -> np.ndarray:
    """Raw H x W uint8 raster of a P5 file."""
    return _read_raster(path, b"P5", 1)[0].copy()


def load_image_pgm(path: str | os.PathLike) -> np.ndarray:
    """Grayscale image as a 1 x H x W tensor scaled to [0, 1]."""
    return (_read_raster(path, b"P5", 1).astype(DTYPE) / DTYPE(255))


def load_mask_pgm(path: str | os.PathLike) -> np.ndarray:
    """Binary 1 x H x W mask: bytes >= 128 are foreground."""
    return (_read_raster(path, b"P5", 1) >= MASK_THRESHOLD).astype(DTYPE)


def load_image_ppm(path: str | os.PathLike) -> np.ndarray:
    """RGB image as a 3 x H x W tensor scaled to [0, 1]."""
    return (_read_raster(path, b"P6", 3).astype(DTYPE) / DTYPE(255))


def load_image(path: str | os.PathLike) -> np.ndarray:
    """Dispatch on the magic number: P5 gives 1 channel, P6 gives 3."""
    with open(path, "rb") as fh:
        magic = fh.read(2)
    if magic == b"P6":
        return load_image_ppm(path)
    if magic == b"P5":
        return load_image_pgm(path)
    raise ParseError(f"not a binary PGM/PPM file (magic {magic!r})", 0)


def write_pgm(path: str | os.PathLike, pixels) -> None:
    """Write an H x W uint8 array as P5."""
    px = np.asarray(pixels)
    if px.ndim != 2 or px.dtype != np.uint8:
        raise ValueError(f"write_pgm expects an H x W uint8 array, got {px.dtype} {px.shape}")
    h, w = px.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(np.ascontiguousarray(px).tobytes())


def write_ppm(path: str | os.PathLike, pixels) -> None:
    """Write a 3 x H x W uint8 array as P6."""
    px = np.asarray(pixels)
    if px.ndim != 3 or px.shape[0] != 3 or px.dtype != np.uint8:
        raise ValueError(f"write_ppm expects a 3 x H x W uint8 array, got {px.dtype} {px.shape}")
    _, h, w = px.shape
    with open(path, "wb") as fh:
        fh.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        fh.write(np.ascontiguousarray(px.transpose(1, 2, 0)).tobytes())


def probability_to_bytes(prob) -> np.ndarray:
    """Map a probability map (H x W or 1 x H x W) to rounded 255-scale bytes."""
    p = np.asarray(prob, dtype=np.float64)
    if p.ndim == 3:
        p = p[0]
    return np.clip(np.rint(p * 255), 0, 255).astype(np.uint8)
