"""Cubic cardinal B-spline gridding on a regular (theta, rho) lattice.

Scattered samples are smeared onto the lattice through tensor-product cubic
B-splines, and lattice fields are read back at scattered points with the same
stencil, so interpolation is the exact transpose of smearing. The smoothing
this introduces is undone in the Fourier domain by dividing by the spline's
transform inside a rectangular window where that transform is not too small.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit
from scipy.fft import next_fast_len
from scipy.optimize import brentq

# lattice cells between any sample and the lattice edge; the cubic stencil reaches 2
EDGE_CELLS = 3


class LatticeError(ValueError):
    """Degenerate lattice or a point outside the padded lattice."""


def bspline3(u):
    """Centred cubic cardinal B-spline, support ``[-2, 2]``."""
    a = np.abs(np.asarray(u, dtype=np.float64))
    out = np.where(a < 1.0, 2.0 / 3.0 - a * a + 0.5 * a ** 3, 0.0)
    return np.where((a >= 1.0) & (a < 2.0), (2.0 - a) ** 3 / 6.0, out)


def _sinc4(w):
    w = np.asarray(w, dtype=np.float64)
    return np.sinc(w / (2 * np.pi)) ** 4


def bspline3_hat(omega1, omega2=0.0):
    """Fourier transform of the tensor B-spline, frequencies in radians per cell."""
    return _sinc4(omega1) * _sinc4(omega2)


def bspline3_hat_periodized(omega):
    """``sum_m bspline3_hat(omega + 2 pi m)`` in one dimension.

    This is the discrete symbol ``sum_n bspline3(n) exp(-i omega n)`` that
    smearing exactly at lattice nodes multiplies by.
    """
    return 2.0 / 3.0 + np.cos(np.asarray(omega, dtype=np.float64)) / 3.0


def window_cutoff(threshold: float) -> float:
    """Largest ``omega`` in ``[0, 2 pi)`` with ``(sin(omega/2)/(omega/2))**4 >= threshold``."""
    if not (0 < threshold < 1):
        raise LatticeError("window threshold must lie in (0, 1)")
    return brentq(lambda w: _sinc4(w) - threshold, 1e-12, 2 * np.pi - 1e-12, xtol=1e-15)


@dataclass(frozen=True)
class SpectralWindow:
    """Rectangle of retained frequencies, as index half-widths.

    With ``rolloff > 0`` the outer fraction of each half-width is tapered
    smoothly to zero instead of being cut, which keeps the lattice kernel
    short-ranged.
    """

    half_theta: int
    half_rho: int
    threshold: float
    rolloff: float = 0.0

    def mask_rfft(self, n_theta: int, n_rho: int) -> np.ndarray:
        """Boolean mask in ``rfft2`` layout (theta full, rho non-negative)."""
        k1 = np.fft.fftfreq(n_theta, 1.0 / n_theta)
        k2 = np.arange(n_rho // 2 + 1)
        return (np.abs(k1)[:, None] <= self.half_theta) & (k2[None, :] <= self.half_rho)

    def weights_rfft(self, n_theta: int, n_rho: int) -> np.ndarray:
        """Window weights in ``rfft2`` layout; 1 inside the flat part, 0 outside the mask."""
        k1 = np.abs(np.fft.fftfreq(n_theta, 1.0 / n_theta))
        k2 = np.arange(n_rho // 2 + 1, dtype=np.float64)
        return _taper(k1, self.half_theta, self.rolloff)[:, None] * _taper(k2, self.half_rho, self.rolloff)[None, :]


def _taper(k, half, rolloff):
    from .kernel import smooth_step
    w = (k <= half).astype(np.float64)
    if rolloff > 0:
        edge = (1.0 - rolloff) * (half + 1)
        w *= smooth_step((half + 1 - k) / (half + 1 - edge))
    return w


def spectral_window(n_theta: int, n_rho: int, threshold: float = 0.1,
                    rolloff: float = 0.0) -> SpectralWindow:
    wc = window_cutoff(threshold)
    h1 = int(np.floor(wc * n_theta / (2 * np.pi) + 1e-12))
    h2 = int(np.floor(wc * n_rho / (2 * np.pi) + 1e-12))
    # self-conjugate Nyquist bins are never retained
    h1 = min(h1, (n_theta - 1) // 2)
    h2 = min(h2, (n_rho - 1) // 2)
    return SpectralWindow(h1, h2, threshold, rolloff)


@dataclass(frozen=True)
class LatticeSpec:
    """Regular periodic lattice in ``(theta, rho)``.

    ``kernel_theta`` is the interval of angle differences on which the
    convolution kernel must be exact and ``kernel_taper`` the angular width of
    its smooth cut-off on either side.
    """

    theta0: float
    rho0: float
    dtheta: float
    drho: float
    n_theta: int
    n_rho: int
    pad_theta: int
    pad_rho: int
    kernel_theta: tuple[float, float] = (0.0, 0.0)
    kernel_taper: float = 0.0

    def __post_init__(self):
        if not (self.dtheta > 0 and self.drho > 0):
            raise LatticeError("lattice spacings must be positive")
        if self.n_theta < 8 or self.n_rho < 8:
            raise LatticeError("lattice too small")

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n_theta, self.n_rho)

    @property
    def period_theta(self) -> float:
        return self.n_theta * self.dtheta

    @property
    def period_rho(self) -> float:
        return self.n_rho * self.drho

    @property
    def theta_nodes(self) -> np.ndarray:
        return self.theta0 + self.dtheta * np.arange(self.n_theta)

    @property
    def rho_nodes(self) -> np.ndarray:
        return self.rho0 + self.drho * np.arange(self.n_rho)

    def locate(self, theta, rho) -> "Stencil":
        """Stencil positions of points; raises if any point leaves the lattice."""
        return Stencil.build(self, theta, rho)


def _split(p: np.ndarray, n: int, axis: str):
    f = np.floor(p)
    if p.size and (f.min() < 1 or f.max() > n - 3):
        raise LatticeError(f"point outside the padded lattice along {axis}")
    return (f - 1).astype(np.int32), p - f


@dataclass(frozen=True)
class Stencil:
    """Precomputed 4x4 stencil anchors and fractional offsets of points."""

    i0: np.ndarray
    u: np.ndarray
    j0: np.ndarray
    v: np.ndarray
    shape: tuple[int, int]

    @classmethod
    def build(cls, lattice: LatticeSpec, theta, rho) -> "Stencil":
        pt = (np.ravel(np.asarray(theta, dtype=np.float64)) - lattice.theta0) / lattice.dtheta
        pr = (np.ravel(np.asarray(rho, dtype=np.float64)) - lattice.rho0) / lattice.drho
        i0, u = _split(pt, lattice.n_theta, "theta")
        j0, v = _split(pr, lattice.n_rho, "rho")
        return cls(i0, u, j0, v, lattice.shape)

    def __len__(self):
        return self.i0.size

    def smear(self, weights, out=None) -> np.ndarray:
        w = np.ascontiguousarray(np.ravel(weights), dtype=np.float64)
        if w.size != self.i0.size:
            raise LatticeError("weight count does not match point count")
        if out is None:
            out = np.zeros(self.shape)
        _smear(self.i0, self.u, self.j0, self.v, w, out)
        return out

    def interpolate(self, field_values) -> np.ndarray:
        f = np.ascontiguousarray(field_values, dtype=np.float64)
        if f.shape != self.shape:
            raise LatticeError("field does not match the lattice")
        out = np.empty(self.i0.size)
        _interp(f, self.i0, self.u, self.j0, self.v, out)
        return out


@njit(cache=True, inline="always")
def _bweights(u):
    u2 = u * u
    u3 = u2 * u
    om = 1.0 - u
    return (om * om * om / 6.0,
            (3.0 * u3 - 6.0 * u2 + 4.0) / 6.0,
            (-3.0 * u3 + 3.0 * u2 + 3.0 * u + 1.0) / 6.0,
            u3 / 6.0)


@njit(cache=True)
def _smear(i0, u, j0, v, w, out):
    # fixed sample order keeps accumulation bit-stable
    for p in range(w.size):
        wp = w[p]
        if wp == 0.0:
            continue
        a0, a1, a2, a3 = _bweights(u[p])
        b0, b1, b2, b3 = _bweights(v[p])
        ii = i0[p]
        jj = j0[p]
        for a, wa in enumerate((a0, a1, a2, a3)):
            row = out[ii + a]
            c = wp * wa
            row[jj] += c * b0
            row[jj + 1] += c * b1
            row[jj + 2] += c * b2
            row[jj + 3] += c * b3


@njit(cache=True)
def _interp(field, i0, u, j0, v, out):
    for p in range(out.size):
        a0, a1, a2, a3 = _bweights(u[p])
        b0, b1, b2, b3 = _bweights(v[p])
        ii = i0[p]
        jj = j0[p]
        acc = 0.0
        for a, wa in enumerate((a0, a1, a2, a3)):
            row = field[ii + a]
            acc += wa * (b0 * row[jj] + b1 * row[jj + 1] + b2 * row[jj + 2] + b3 * row[jj + 3])
        out[p] = acc


def smear_to_lattice(samples, lattice: LatticeSpec) -> np.ndarray:
    """Scatter ``(theta, rho, weight)`` samples onto the lattice.

    Node value = sum of ``weight * B3(node - sample)`` in lattice units.
    """
    samples = np.asarray(samples, dtype=np.float64).reshape(-1, 3)
    st = lattice.locate(samples[:, 0], samples[:, 1])
    return st.smear(samples[:, 2])


def interpolate_from_lattice(field_values, points, lattice: LatticeSpec) -> np.ndarray:
    """Evaluate ``sum_nodes field * B3(point - node)`` at ``(theta, rho)`` points."""
    points = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    return lattice.locate(points[:, 0], points[:, 1]).interpolate(field_values)


def neighbour_spacing(geometry, t_axis, x_axis) -> tuple[float, float]:
    """Largest neighbour differences of ``(theta, rho)`` over a data grid.

    The maximum is taken over steps along either data axis, separately for
    the angular and the log-radial coordinate.
    """
    t_axis = np.asarray(t_axis, dtype=np.float64)
    x_axis = np.asarray(x_axis, dtype=np.float64)
    if t_axis.size < 2 or x_axis.size < 2:
        raise LatticeError("data grid needs two samples per axis")
    th, rh = geometry.phi_eta_data(t_axis[:, None], x_axis[None, :])
    dth = max(np.abs(np.diff(th, axis=0)).max(), np.abs(np.diff(th, axis=1)).max())
    drh = max(np.abs(np.diff(rh, axis=0)).max(), np.abs(np.diff(rh, axis=1)).max())
    if not (dth > 0 and drh > 0):
        raise LatticeError("degenerate data grid")
    return float(dth), float(drh)


def _fast_len(n: int) -> int:
    return int(next_fast_len(int(n), real=True))


def lattice_for_points(data_theta, data_rho, out_theta, out_rho, dtheta: float, drho: float,
                       taper_cells: int = 8, guard_cells: int = 8) -> LatticeSpec:
    """Periodic lattice holding both point sets without convolution wrap-around.

    The kernel only has to be exact for differences ``output - input`` (plus
    the reach of the two spline stencils). The period along each axis is
    large enough that a wrapped copy of the tapered kernel never reaches a
    difference that actually occurs.
    """
    dth = np.asarray(data_theta).ravel()
    drh = np.asarray(data_rho).ravel()
    oth = np.asarray(out_theta).ravel()
    orh = np.asarray(out_rho).ravel()
    reach_t, reach_r = 4 * dtheta, 4 * drho
    dlo = oth.min() - dth.max() - reach_t
    dhi = oth.max() - dth.min() + reach_t
    taper = taper_cells * dtheta
    if max(abs(dlo), abs(dhi)) + taper >= np.pi / 2 - 1e-3:
        raise LatticeError("angular differences reach the kernel singularity")
    klo, khi = dlo - taper, dhi + taper
    # the whole tapered kernel fits in one period, so wrapped copies miss [dlo, dhi]
    span_t = khi - klo
    # log-radial differences and the kernel curve rho = log cos(theta)
    rlo = orh.min() - drh.max() - reach_r
    rhi = orh.max() - drh.min() + reach_r
    cos_lo = np.cos(max(abs(klo), abs(khi)))
    kr_lo = np.log(cos_lo)
    kr_hi = 0.0 if klo <= 0 <= khi else np.log(np.cos(min(abs(klo), abs(khi))))
    span_r = max(kr_hi - rlo, rhi - kr_lo)

    lo_t = min(dth.min(), oth.min()) - EDGE_CELLS * dtheta
    hi_t = max(dth.max(), oth.max()) + EDGE_CELLS * dtheta
    lo_r = min(drh.min(), orh.min()) - EDGE_CELLS * drho
    hi_r = max(drh.max(), orh.max()) + EDGE_CELLS * drho
    core_t = int(np.ceil((hi_t - lo_t) / dtheta)) + 1
    core_r = int(np.ceil((hi_r - lo_r) / drho)) + 1
    n_t = _fast_len(max(np.ceil(span_t / dtheta) + guard_cells, core_t + 1))
    n_r = _fast_len(max(np.ceil(span_r / drho) + guard_cells, core_r + 1))
    return LatticeSpec(theta0=float(lo_t), rho0=float(lo_r), dtheta=float(dtheta), drho=float(drho),
                       n_theta=n_t, n_rho=n_r, pad_theta=n_t - core_t, pad_rho=n_r - core_r,
                       kernel_theta=(float(dlo), float(dhi)), kernel_taper=float(taper))


def choose_lattice(geometry, data_grid, radon_grid, oversample: float = 1.0,
                   window_threshold: float = 0.1) -> tuple[LatticeSpec, SpectralWindow]:
    """Lattice and spectral window for rescaled data and Radon grids.

    Spacings follow the largest neighbour differences of the mapped data
    samples, divided by ``oversample`` (1 gives the coarsest admissible
    lattice); counts are rounded up to FFT-friendly sizes.
    """
    dth, drh = neighbour_spacing(geometry, data_grid.axis1, data_grid.axis2)
    dth /= oversample
    drh /= oversample
    th, rh = geometry.phi_eta_data(data_grid.axis1[:, None], data_grid.axis2[None, :])
    oth, orh = geometry.phi_eta_radon(radon_grid.axis1[:, None], radon_grid.axis2[None, :])
    lat = lattice_for_points(th, rh, oth, orh, dth, drh)
    return lat, spectral_window(lat.n_theta, lat.n_rho, window_threshold)
