"""Synthetic CMP gathers and trace-decimation masks."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid import CmpGather, GridError, RegularGrid2

WAVELETS = ("ricker", "gauss-derivative")


def ricker(t, freq: float) -> np.ndarray:
    """Zero-phase Ricker wavelet with unit peak at ``t = 0``."""
    a = (np.pi * freq * np.asarray(t, dtype=np.float64)) ** 2
    return (1.0 - 2.0 * a) * np.exp(-a)


def gauss_derivative(t, freq: float) -> np.ndarray:
    """First derivative of a Gaussian, unit peak magnitude, spectral peak at ``freq``."""
    t = np.asarray(t, dtype=np.float64)
    a = 2.0 * (np.pi * freq) ** 2
    t_star = 1.0 / np.sqrt(2.0 * a)
    return -(t / t_star) * np.exp(0.5 - a * t * t)


@dataclass(frozen=True)
class EventSpec:
    """One hyperbolic event ``t = sqrt(tau0**2 + q0**2 x**2)``.

    ``q0`` is the slowness (s/km when offsets are in km); use
    :meth:`from_velocity` to give a velocity instead.
    """

    tau0: float
    q0: float
    amplitude: float = 1.0
    freq: float = 25.0
    wavelet: str = "ricker"
    polarity: int = 1

    def __post_init__(self):
        if not self.tau0 > 0:
            raise ValueError(f"tau0 must be positive, got {self.tau0}")
        if not self.q0 >= 0:
            raise ValueError(f"moveout must be non-negative, got {self.q0}")
        if not self.freq > 0:
            raise ValueError(f"peak frequency must be positive, got {self.freq}")
        if self.wavelet not in WAVELETS:
            raise ValueError(f"unknown wavelet {self.wavelet!r}; choose from {WAVELETS}")
        if self.polarity not in (1, -1):
            raise ValueError("polarity must be +1 or -1")

    @classmethod
    def from_velocity(cls, tau0: float, velocity: float, **kw) -> "EventSpec":
        if not velocity > 0:
            raise ValueError("velocity must be positive")
        return cls(tau0, 1.0 / velocity, **kw)

    def traveltime(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        return np.sqrt(self.tau0 ** 2 + (self.q0 * x) ** 2)

    def pulse(self, t) -> np.ndarray:
        w = ricker(t, self.freq) if self.wavelet == "ricker" else gauss_derivative(t, self.freq)
        return self.polarity * self.amplitude * w


def synth_gather(grid: RegularGrid2, events, noise_rms: float = 0.0, seed: int = 0) -> CmpGather:
    """Sum of wavelets along hyperbolas plus white Gaussian noise.

    Raises
    ------
    ValueError
        If an event's intercept lies outside the time axis or its peak
        frequency is at or above the Nyquist frequency of the grid.
    """
    if noise_rms < 0:
        raise ValueError("noise_rms must be non-negative")
    t = grid.axis1[:, None]
    x = grid.axis2[None, :]
    nyquist = 0.5 / grid.d1
    out = np.zeros(grid.shape)
    for ev in events:
        if not grid.o1 <= ev.tau0 <= grid.end1:
            raise ValueError(f"event tau0={ev.tau0} outside time axis [{grid.o1}, {grid.end1}]")
        if ev.freq >= nyquist:
            raise ValueError(f"event frequency {ev.freq} Hz is not below Nyquist {nyquist:.4g} Hz")
        out += ev.pulse(t - ev.traveltime(x))
    if noise_rms > 0:
        out += noise_rms * np.random.default_rng(seed).standard_normal(grid.shape)
    return CmpGather(grid, out)


def parse_event_lines(lines, source: str = "<events>") -> list[EventSpec]:
    """Parse ``tau0 q0 amp freq`` lines; blank lines and ``#`` comments are skipped."""
    events = []
    for lineno, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 4:
            raise ValueError(f"{source}:{lineno}: expected 4 fields 'tau0 q0 amp freq', got {len(parts)}")
        try:
            tau0, q0, amp, freq = (float(p) for p in parts)
        except ValueError:
            raise ValueError(f"{source}:{lineno}: non-numeric field") from None
        try:
            events.append(EventSpec(tau0, q0, amp, freq))
        except ValueError as exc:
            raise ValueError(f"{source}:{lineno}: {exc}") from None
    return events


def read_event_spec(path) -> list[EventSpec]:
    with open(path) as fh:
        return parse_event_lines(fh, str(path))


@dataclass(frozen=True)
class MaskSpec:
    """Fraction of dead traces, random seed and decimation pattern."""

    fraction: float
    seed: int = 0
    pattern: str = "random-traces"

    def __post_init__(self):
        if not 0 <= self.fraction < 1:
            raise ValueError(f"missing fraction must lie in [0, 1), got {self.fraction}")
        if self.pattern not in ("random-traces", "regular-decimation"):
            raise ValueError(f"unknown mask pattern {self.pattern!r}")


def make_mask(grid: RegularGrid2, spec: MaskSpec) -> np.ndarray:
    """Boolean ``(n1, n2)`` field, true on live traces; whole columns are killed."""
    n2 = grid.n2
    live = np.ones(n2, dtype=bool)
    if spec.pattern == "random-traces":
        n_dead = int(round(spec.fraction * n2))
        dead = np.random.default_rng(spec.seed).permutation(n2)[:n_dead]
        live[dead] = False
    else:
        keep_every = max(1, int(round(1.0 / (1.0 - spec.fraction))))
        live[:] = False
        live[::keep_every] = True
    if not live.any():
        raise GridError("mask leaves no live trace")
    return np.broadcast_to(live[None, :], grid.shape).copy()
