"""Regularly sampled 2-D fields: CMP gathers and Radon panels.

Axis 1 is always time / intercept (the fastest-varying axis on disk), axis 2
is offset / slowness. In memory a field is a float64 array of shape
``(n1, n2)`` indexed ``data[i1, i2]``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class GridError(ValueError):
    """Invalid grid or field construction."""


@dataclass(frozen=True)
class RegularGrid2:
    """Origins, steps and counts of a regular 2-D sampling."""

    n1: int
    n2: int
    o1: float = 0.0
    d1: float = 1.0
    o2: float = 0.0
    d2: float = 1.0

    def __post_init__(self):
        if int(self.n1) != self.n1 or int(self.n2) != self.n2:
            raise GridError("sample counts must be integers")
        if self.n1 < 2 or self.n2 < 2:
            raise GridError(f"need at least 2 samples per axis, got {self.n1}x{self.n2}")
        if not (self.d1 > 0 and self.d2 > 0):
            raise GridError(f"steps must be positive, got d1={self.d1}, d2={self.d2}")
        for v in (self.o1, self.o2, self.d1, self.d2):
            if not np.isfinite(v):
                raise GridError("grid parameters must be finite")
        object.__setattr__(self, "n1", int(self.n1))
        object.__setattr__(self, "n2", int(self.n2))

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n1, self.n2)

    @property
    def axis1(self) -> np.ndarray:
        return self.o1 + np.arange(self.n1) * self.d1

    @property
    def axis2(self) -> np.ndarray:
        return self.o2 + np.arange(self.n2) * self.d2

    @property
    def end1(self) -> float:
        return self.o1 + (self.n1 - 1) * self.d1

    @property
    def end2(self) -> float:
        return self.o2 + (self.n2 - 1) * self.d2

    def coordinate(self, i, j):
        return (self.o1 + np.asarray(i) * self.d1, self.o2 + np.asarray(j) * self.d2)


def _as_field(data, grid: RegularGrid2) -> np.ndarray:
    arr = np.array(data, dtype=np.float64, copy=True)
    if arr.shape != grid.shape:
        raise GridError(f"data shape {arr.shape} does not match grid {grid.shape}")
    if not np.all(np.isfinite(arr)):
        raise GridError("field contains non-finite values")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class _Field:
    grid: RegularGrid2
    data: np.ndarray = field(repr=False)

    def __post_init__(self):
        object.__setattr__(self, "data", _as_field(self.data, self.grid))

    def scaled(self, c: float):
        return type(self)(self.grid, c * self.data)

    def axpy(self, a: float, other):
        """Return ``a * other + self``."""
        if other.grid != self.grid:
            raise GridError("grids differ")
        return type(self)(self.grid, a * other.data + self.data)

    def with_data(self, data):
        return type(self)(self.grid, data)

    def __add__(self, other):
        return self.axpy(1.0, other)

    def __sub__(self, other):
        return self.axpy(-1.0, other)


@dataclass(frozen=True)
class CmpGather(_Field):
    """Amplitudes f(t, x); axis 1 is time (s), axis 2 is offset (km, >= 0)."""

    def __post_init__(self):
        super().__post_init__()
        if self.grid.o2 < 0:
            raise GridError("offsets must be non-negative (fold the gather first)")
        if self.grid.o1 < 0:
            raise GridError("times must be non-negative")

    @classmethod
    def zeros(cls, grid: RegularGrid2) -> "CmpGather":
        return cls(grid, np.zeros(grid.shape))


@dataclass(frozen=True)
class RadonImage(_Field):
    """Amplitudes g(tau, q); axis 1 is intercept time, axis 2 is slowness."""

    def __post_init__(self):
        super().__post_init__()
        if self.grid.o1 <= 0:
            raise GridError("intercept axis must be strictly positive")
        if self.grid.o2 <= 0:
            raise GridError("slowness axis must start above zero (q_min > 0)")

    @classmethod
    def zeros(cls, grid: RegularGrid2) -> "RadonImage":
        return cls(grid, np.zeros(grid.shape))


@dataclass(frozen=True)
class ScaleRecord:
    """Record of the map of a gather onto the unit square.

    Physical requests ``(tau, q)`` become ``(tau / T, q * X / T)`` internally and
    transform outputs are multiplied by ``X``.
    """

    T: float
    X: float

    def __post_init__(self):
        if not (self.T > 0 and self.X > 0):
            raise GridError(f"T and X must be positive, got T={self.T}, X={self.X}")

    @property
    def output_factor(self) -> float:
        return self.X

    @property
    def is_identity(self) -> bool:
        return self.T == 1.0 and self.X == 1.0

    def to_internal(self, tau, q):
        return np.asarray(tau) / self.T, np.asarray(q) * self.X / self.T

    def to_physical(self, tau, q):
        return np.asarray(tau) * self.T, np.asarray(q) * self.T / self.X

    def grid_to_internal(self, grid: RegularGrid2, kind: str) -> RegularGrid2:
        """Rescale a ``"gather"`` or ``"radon"`` grid to internal units."""
        if kind == "gather":
            s1, s2 = 1.0 / self.T, 1.0 / self.X
        elif kind == "radon":
            s1, s2 = 1.0 / self.T, self.X / self.T
        else:
            raise ValueError(kind)
        return RegularGrid2(grid.n1, grid.n2, grid.o1 * s1, grid.d1 * s1, grid.o2 * s2, grid.d2 * s2)

    def grid_to_physical(self, grid: RegularGrid2, kind: str) -> RegularGrid2:
        if kind == "gather":
            s1, s2 = self.T, self.X
        elif kind == "radon":
            s1, s2 = self.T, self.T / self.X
        else:
            raise ValueError(kind)
        return RegularGrid2(grid.n1, grid.n2, grid.o1 * s1, grid.d1 * s1, grid.o2 * s2, grid.d2 * s2)


def scale_record_for(grid: RegularGrid2) -> ScaleRecord:
    """Scale record mapping ``[0, T] x [0, X]`` covered by ``grid`` to the unit square."""
    return ScaleRecord(grid.end1, grid.end2)


def rescale_to_unit(g: CmpGather) -> tuple[CmpGather, ScaleRecord]:
    """Map a gather on ``[0, T] x [0, X]`` onto ``[0, 1] x [0, 1]``.

    Amplitudes are unchanged; only the sampling coordinates are rescaled. The
    returned record converts ``(tau, q)`` requests and carries the output
    factor ``X``.
    """
    rec = scale_record_for(g.grid)
    return CmpGather(rec.grid_to_internal(g.grid, "gather"), g.data), rec


def to_squared_coords_weight(f, x, jacobian_over_2x):
    """Gridding weight ``f / (2 x) * J`` of samples in squared coordinates.

    Substituting ``(s, y) = (t**2, x**2)`` turns ``f(t, x)`` into ``f / (2 x)``
    per unit ``s``-``y`` area, and the Jacobian ``J`` of the log-polar map
    carries an explicit factor ``2 x``. The caller passes ``J / (2 x)``, which is
    bounded, so the product is formed without dividing by ``x`` and the x = 0
    trace keeps its finite weight.
    """
    f = np.asarray(f, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    if np.any(x < 0):
        raise GridError("offsets must be non-negative")
    return f * np.asarray(jacobian_over_2x, dtype=np.float64)
