"""Minimal PGM (portable graymap) reader and writer.

Reads both the ASCII (P2) and binary (P5) flavors with header comments;
writes 8-bit binary P5. No external imaging dependency.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .errors import ImageFormatError


def _header_tokens(data: bytes, count: int) -> tuple[list[bytes], int]:
    """First ``count`` whitespace-separated header tokens, skipping '#'
    comments; returns the tokens and the offset just past the final
    whitespace byte."""
    tokens: list[bytes] = []
    i = 0
    n = len(data)
    while len(tokens) < count:
        while i < n and data[i : i + 1].isspace():
            i += 1
        if i < n and data[i : i + 1] == b"#":
            while i < n and data[i] not in (10, 13):
                i += 1
            continue
        start = i
        while i < n and not data[i : i + 1].isspace() and data[i : i + 1] != b"#":
            i += 1
        if start == i:
            raise ImageFormatError("truncated PGM header")
        tokens.append(data[start:i])
    if i >= n or not data[i : i + 1].isspace():
        raise ImageFormatError("missing whitespace after PGM header")
    return tokens, i + 1


def read_pgm(path) -> np.ndarray:
    """Read a PGM file into a 2-D integer array (height x width)."""
    data = Path(path).read_bytes()
    if len(data) < 2 or data[:1] != b"P" or data[1:2] not in (b"2", b"5"):
        raise ImageFormatError(f"{path} is not a PGM file")
    try:
        tokens, offset = _header_tokens(data, 4)
        width, height, maxval = (int(t) for t in tokens[1:])
    except (ValueError, ImageFormatError) as exc:
        raise ImageFormatError(f"{path}: bad header ({exc})") from exc
    if width < 1 or height < 1 or not 0 < maxval < 65536:
        raise ImageFormatError(f"{path}: invalid dimensions or maxval")

    if tokens[0] == b"P2":
        try:
            values = [int(t) for t in data[offset:].split()]
        except ValueError as exc:
            raise ImageFormatError(f"{path}: bad ASCII raster") from exc
        if len(values) != width * height:
            raise ImageFormatError(f"{path}: raster size mismatch")
        img = np.asarray(values)
    else:
        dtype = np.uint8 if maxval < 256 else np.dtype(">u2")
        need = width * height * dtype.itemsize if maxval >= 256 else width * height
        raster = data[offset : offset + need]
        if len(raster) != need:
            raise ImageFormatError(f"{path}: raster size mismatch")
        img = np.frombuffer(raster, dtype=dtype).astype(int)
    img = img.reshape(height, width)
    if img.min() < 0 or img.max() > maxval:
        raise ImageFormatError(f"{path}: pixel values exceed maxval")
    return img


def write_pgm(path, img: np.ndarray) -> None:
    """Write a 2-D uint8-compatible array as binary P5 with maxval 255."""
    img = np.asarray(img)
    if img.ndim != 2:
        raise ValueError("image must be 2-D")
    if img.min() < 0 or img.max() > 255:
        raise ValueError("pixel values must lie in [0, 255]")
    header = f"P5\n{img.shape[1]} {img.shape[0]}\n255\n".encode("ascii")
    Path(path).write_bytes(header + img.astype(np.uint8).tobytes())


def to_uint8(img: np.ndarray) -> np.ndarray:
    """Min-max rescale a float image to the 0..255 range."""
    img = np.asarray(img, dtype=float)
    lo = img.min()
    hi = img.max()
    if hi <= lo:
        return np.zeros(img.shape, dtype=np.uint8)
    return np.round((img - lo) / (hi - lo) * 255.0).astype(np.uint8)
