"""Binary grid file format for frames, saliency maps and feature matrices.

Layout, little-endian: magic "SGRD", u32 width, u32 height, u32 channels,
then float32 values in C order with shape (channels, height, width).
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

MAGIC = b"SGRD"
_HEADER = struct.Struct("<4sIII")


class FormatError(Exception):
    """Raised when a binary container is malformed or unsupported."""


def write_grid(path: str | Path, values: np.ndarray) -> None:
    """Write a 2-D (height, width) or 3-D (channels, height, width) array."""
    arr = np.asarray(values, dtype=np.float32)
    if arr.ndim == 2:
        arr = arr[None, :, :]
    if arr.ndim != 3:
        raise ValueError(f"grid must be 2-D or 3-D, got shape {values.shape}")
    channels, height, width = arr.shape
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, width, height, channels))
        fh.write(arr.tobytes(order="C"))


def read_grid(path: str | Path) -> np.ndarray:
    """Read a grid file, returning a (channels, height, width) float32 array."""
    with open(path, "rb") as fh:
        head = fh.read(_HEADER.size)
        if len(head) < _HEADER.size:
            raise FormatError(f"{path}: truncated header")
        magic, width, height, channels = _HEADER.unpack(head)
        if magic != MAGIC:
            raise FormatError(f"{path}: bad magic {magic!r}")
        expected = channels * height * width * 4
        payload = fh.read(expected + 1)
    if len(payload) < expected:
        raise FormatError(f"{path}: truncated payload ({len(payload)} of {expected} bytes)")
    if len(payload) > expected:
        raise FormatError(f"{path}: trailing bytes after payload")
    return np.frombuffer(payload, dtype="<f4").reshape(channels, height, width).copy()
