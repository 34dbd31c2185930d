"""CHQF field file format.

Layout (little endian, bit exact): ASCII magic "CHQF", u32 version=1,
u32 N, u32 M, f64 L, then M^N f64 samples row-major (last axis fastest).
"""

from __future__ import annotations

import struct

import numpy as np

from .grid import Field, Grid

__all__ = ["read_chqf", "write_chqf", "ChqfError"]

_MAGIC = b"CHQF"
_VERSION = 1
_HEADER = struct.Struct("<4sIIId")


class ChqfError(ValueError):
    pass


def write_chqf(path, f: Field) -> None:
    """Write a field to `path` in CHQF format."""
    g = f.grid
    header = _HEADER.pack(_MAGIC, _VERSION, g.dim, g.points_per_axis, g.box_length)
    payload = np.ascontiguousarray(f.values, dtype="<f8").tobytes(order="C")
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(payload)


def read_chqf(path) -> Field:
    """Read a CHQF field file."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _HEADER.size:
        raise ChqfError(f"{path}: truncated header")
    magic, version, dim, m, box = _HEADER.unpack_from(raw, 0)
    if magic != _MAGIC:
        raise ChqfError(f"{path}: bad magic {magic!r}")
    if version != _VERSION:
        raise ChqfError(f"{path}: unsupported version {version}")
    grid = Grid(dim=int(dim), points_per_axis=int(m), box_length=float(box))
    n_samples = m**dim
    expected = _HEADER.size + 8 * n_samples
    if len(raw) != expected:
        raise ChqfError(f"{path}: expected {expected} bytes, got {len(raw)}")
    values = np.frombuffer(raw, dtype="<f8", count=n_samples, offset=_HEADER.size)
    return Field(grid, values.reshape(grid.shape).astype(np.float64))
