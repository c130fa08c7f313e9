"""File formats: RSG binary grids, CSV gathers and 16-bit PGM panels.

RSG layout (little-endian)::

    b"RSG1"  u32 n1  u32 n2  f64 o1  f64 d1  f64 o2  f64 d2  float32[n1 * n2]

Samples are stored with axis 1 varying fastest, i.e. trace after trace.
"""
from __future__ import annotations

import os
import re
import struct

import numpy as np

from .grid import CmpGather, RadonImage, RegularGrid2

MAGIC = b"RSG1"
_HEADER = struct.Struct("<4sII4d")
MAX_SAMPLES = 1 << 31


class RsgFormatError(ValueError):
    """Malformed RSG file."""


class CsvFormatError(ValueError):
    """Malformed CSV gather."""


def encode_rsg(grid: RegularGrid2, data) -> bytes:
    arr = np.asarray(data, dtype=np.float64)
    if arr.shape != grid.shape:
        raise ValueError(f"data shape {arr.shape} does not match grid {grid.shape}")
    head = _HEADER.pack(MAGIC, grid.n1, grid.n2, grid.o1, grid.d1, grid.o2, grid.d2)
    return head + np.ascontiguousarray(arr.T, dtype="<f4").tobytes()


def decode_rsg(buf: bytes) -> tuple[RegularGrid2, np.ndarray]:
    if len(buf) < _HEADER.size:
        raise RsgFormatError(f"file too short for header ({len(buf)} bytes)")
    magic, n1, n2, o1, d1, o2, d2 = _HEADER.unpack_from(buf)
    if magic != MAGIC:
        raise RsgFormatError(f"bad magic {magic!r}, expected {MAGIC!r}")
    if n1 * n2 > MAX_SAMPLES:
        raise RsgFormatError(f"dimensions {n1}x{n2} exceed the supported size")
    need = _HEADER.size + 4 * n1 * n2
    if len(buf) < need:
        raise RsgFormatError(f"truncated payload: {len(buf)} bytes, expected {need}")
    if len(buf) > need:
        raise RsgFormatError(f"{len(buf) - need} trailing bytes after payload")
    try:
        grid = RegularGrid2(n1, n2, o1, d1, o2, d2)
    except ValueError as exc:
        raise RsgFormatError(f"invalid grid in header: {exc}") from None
    samples = np.frombuffer(buf, dtype="<f4", count=n1 * n2, offset=_HEADER.size)
    return grid, samples.reshape(n2, n1).T.astype(np.float32)


def write_rsg(path, field_or_grid, data=None) -> None:
    """Write a gather/panel (or a grid plus an array) as float32 RSG."""
    if data is None:
        grid, data = field_or_grid.grid, field_or_grid.data
    else:
        grid = field_or_grid
    payload = encode_rsg(grid, data)
    with open(path, "wb") as fh:
        fh.write(payload)


def read_rsg(path) -> tuple[RegularGrid2, np.ndarray]:
    """Grid and float32 samples of shape ``(n1, n2)``."""
    with open(path, "rb") as fh:
        return decode_rsg(fh.read())


def read_gather(path) -> CmpGather:
    """Load a gather from ``.csv`` or RSG, chosen by file extension."""
    if str(path).lower().endswith(".csv"):
        return read_csv_gather(path)
    grid, data = read_rsg(path)
    return CmpGather(grid, data)


def read_image(path) -> RadonImage:
    grid, data = read_rsg(path)
    return RadonImage(grid, data)


_META = re.compile(r"(t0|dt|x0|dx)\s*=\s*([^,\s]+)")


def read_csv_gather(path) -> CmpGather:
    """Rows are time samples, columns are traces.

    An optional first line ``#t0=...,dt=...,x0=...,dx=...`` sets the axes;
    missing keys default to origin 0 and unit steps.
    """
    meta = {"t0": 0.0, "dt": 1.0, "x0": 0.0, "dx": 1.0}
    rows = []
    width = None
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            s = line.strip()
            if not s:
                continue
            if s.startswith("#"):
                for key, val in _META.findall(s):
                    try:
                        meta[key] = float(val)
                    except ValueError:
                        raise CsvFormatError(f"{path}:{lineno}: bad value for {key}") from None
                continue
            cells = s.split(",")
            try:
                row = [float(c) for c in cells]
            except ValueError:
                raise CsvFormatError(f"{path}:{lineno}: non-numeric cell") from None
            if width is None:
                width = len(row)
            elif len(row) != width:
                raise CsvFormatError(f"{path}:{lineno}: ragged row with {len(row)} cells, expected {width}")
            rows.append(row)
    if not rows:
        raise CsvFormatError(f"{path}: no data rows")
    data = np.array(rows, dtype=np.float64)
    grid = RegularGrid2(data.shape[0], data.shape[1], meta["t0"], meta["dt"], meta["x0"], meta["dx"])
    return CmpGather(grid, data)


def write_csv_gather(path, gather) -> None:
    g = gather.grid
    with open(path, "w") as fh:
        fh.write(f"#t0={g.o1!r},dt={g.d1!r},x0={g.o2!r},dx={g.d2!r}\n")
        for row in np.asarray(gather.data):
            fh.write(",".join(repr(float(v)) for v in row) + "\n")


def pgm_bytes(data, clip_percentile: float = 99.0) -> bytes:
    """16-bit binary PGM of ``data`` with a symmetric clip; rows follow axis 1."""
    if not 50 < clip_percentile <= 100:
        raise ValueError("clip_percentile must lie in (50, 100]")
    arr = np.asarray(data, dtype=np.float64)
    clip = float(np.percentile(np.abs(arr), clip_percentile))
    if clip > 0:
        scaled = np.clip(arr / clip, -1.0, 1.0)
    else:
        scaled = np.zeros_like(arr)
    levels = np.rint((scaled + 1.0) * 0.5 * 65535.0).astype(">u2")
    head = f"P5\n{arr.shape[1]} {arr.shape[0]}\n65535\n".encode("ascii")
    return head + levels.tobytes()


def render_pgm(field, path, clip_percentile: float = 99.0) -> None:
    data = field.data if hasattr(field, "data") else field
    payload = pgm_bytes(data, clip_percentile)
    tmp = f"{path}.tmp{os.getpid()}"
    with open(tmp, "wb") as fh:
        fh.write(payload)
    os.replace(tmp, path)
