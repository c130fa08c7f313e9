"""Spectrum of the log-polar incidence kernel and the lattice convolutions.

In log-polar coordinates a point ``(theta', rho')`` lies on the line
``(theta, rho)`` when ``rho - rho' = log cos(theta - theta')``. Integrating data
along a line is therefore a convolution with the singular curve measure

    K(theta, rho) = delta(rho - log cos theta) / cos theta,

whose Fourier transform is

    zeta_hat(w1, w2) = integral of W(theta) sec(theta) exp(-i (w1 theta + w2 log cos theta)) dtheta.

``W`` restricts the curve to the angles that can actually occur between an
input and an output point. It equals one there and falls smoothly to zero in
the variable ``u = asinh(tan theta)``, in which ``sec(theta) dtheta = du``; that
keeps the zero-frequency value available in closed form.
"""
from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import fft as sfft
from scipy.integrate import quad

from .spline import LatticeSpec, SpectralWindow, bspline3_hat

CACHE_VERSION = 1
_MAX_FINE = 1 << 24
_CHUNK_BYTES = 64 << 20


class QuadratureError(RuntimeError):
    """Kernel spectrum did not converge to the requested tolerance."""


def smooth_step(x):
    """C-infinity step: 0 for x <= 0, 1 for x >= 1, with ``s(x) + s(1 - x) = 1``."""
    x = np.clip(np.asarray(x, dtype=np.float64), 0.0, 1.0)
    with np.errstate(divide="ignore", over="ignore"):
        a = np.where(x > 0, np.exp(-1.0 / np.where(x > 0, x, 1.0)), 0.0)
        b = np.where(x < 1, np.exp(-1.0 / np.where(x < 1, 1.0 - x, 1.0)), 0.0)
    return a / (a + b)


@dataclass(frozen=True)
class KernelTaper:
    """Angular support of the tapered kernel, expressed in ``u = asinh(tan theta)``."""

    u_lo: float   # taper starts (W = 0 below)
    u_a: float    # flat part starts
    u_b: float    # flat part ends
    u_hi: float   # taper ends (W = 0 above)

    @classmethod
    def from_lattice(cls, lattice: LatticeSpec) -> "KernelTaper":
        (ta, tb), d = lattice.kernel_theta, lattice.kernel_taper
        if not (-np.pi / 2 < ta - d and tb + d < np.pi / 2 and ta < tb):
            raise QuadratureError("kernel angular window reaches the singular angle")
        u = np.arcsinh(np.tan([ta - d, ta, tb, tb + d]))
        return cls(*map(float, u))

    @property
    def theta_support(self) -> tuple[float, float]:
        return float(np.arctan(np.sinh(self.u_lo))), float(np.arctan(np.sinh(self.u_hi)))

    def weight_u(self, u):
        u = np.asarray(u, dtype=np.float64)
        return (smooth_step((u - self.u_lo) / (self.u_a - self.u_lo))
                * smooth_step((self.u_hi - u) / (self.u_hi - self.u_b)))

    def weight(self, theta):
        return self.weight_u(np.arcsinh(np.tan(np.asarray(theta, dtype=np.float64))))

    @property
    def dc_value(self) -> float:
        """Exact ``zeta_hat(0, 0)``: the measure ``du`` weighted by ``W``."""
        return 0.5 * (self.u_hi + self.u_b) - 0.5 * (self.u_a + self.u_lo)


def zeta_hat_direct(omega1, omega2, taper: KernelTaper, epsabs: float = 1e-12) -> np.ndarray:
    """Kernel spectrum at arbitrary frequencies by adaptive quadrature.

    Slow; meant for spot checks. Integrates in ``u`` where the measure is flat.
    """
    o1 = np.atleast_1d(np.asarray(omega1, dtype=np.float64))
    o2 = np.atleast_1d(np.asarray(omega2, dtype=np.float64))
    o1, o2 = np.broadcast_arrays(o1, o2)
    out = np.empty(o1.shape, dtype=np.complex128)
    for idx in np.ndindex(o1.shape):
        w1, w2 = o1[idx], o2[idx]

        def phase(u):
            return w1 * np.arctan(np.sinh(u)) - w2 * np.log(np.cosh(u))

        kw = dict(limit=4000, epsabs=epsabs, epsrel=1e-12)
        re = quad(lambda u: taper.weight_u(u) * np.cos(phase(u)), taper.u_lo, taper.u_hi, **kw)[0]
        im = quad(lambda u: taper.weight_u(u) * np.sin(phase(u)), taper.u_lo, taper.u_hi, **kw)[0]
        out[idx] = re - 1j * im
    return out


@dataclass
class KernelSpectrum:
    """Kernel spectrum and lattice transfer function, both in ``rfft2`` layout.

    ``zeta_hat`` holds the kernel transform on the lattice frequency grid
    (rows beyond the retained log-radial band are not evaluated and left at
    zero; plans drop it to save memory). ``transfer`` is the windowed,
    spline-compensated multiplier that the convolutions apply; it is the exact
    transform of a real lattice kernel.
    """

    lattice: LatticeSpec
    window: SpectralWindow
    zeta_hat: np.ndarray | None = field(repr=False)
    transfer: np.ndarray = field(repr=False)
    fine_points: int
    achieved_tol: float

    @property
    def nbytes(self) -> int:
        return (0 if self.zeta_hat is None else self.zeta_hat.nbytes) + self.transfer.nbytes


def _lattice_freqs(lattice: LatticeSpec):
    k1 = np.fft.fftfreq(lattice.n_theta, 1.0 / lattice.n_theta)
    k2 = np.arange(lattice.n_rho // 2 + 1, dtype=np.float64)
    return 2 * np.pi * k1 / lattice.period_theta, 2 * np.pi * k2 / lattice.period_rho, k1


def _rows(lattice: LatticeSpec, taper: KernelTaper, omega2, n_fine: int) -> np.ndarray:
    """``zeta_hat`` for the given log-radial frequencies at all angular lattice frequencies."""
    P = lattice.period_theta
    step = P / n_fine
    th_lo, th_hi = taper.theta_support
    n_sup = int(np.floor((th_hi - th_lo) / step)) + 1
    if n_sup >= n_fine:
        raise QuadratureError("kernel support exceeds the angular period")
    theta = th_lo + step * np.arange(n_sup)
    base = taper.weight(theta) / np.cos(theta)
    logc = np.log(np.cos(theta))
    om1, _, k1 = _lattice_freqs(lattice)
    idx = np.mod(k1.astype(np.int64), n_fine)
    shift = step * np.exp(-1j * om1 * th_lo)
    out = np.empty((lattice.n_theta, len(omega2)), dtype=np.complex128)
    per = max(1, _CHUNK_BYTES // (16 * n_fine))
    for c0 in range(0, len(omega2), per):
        w2 = np.asarray(omega2[c0:c0 + per])
        h = base[None, :] * np.exp(-1j * w2[:, None] * logc[None, :])
        spec = sfft.fft(h, n=n_fine, axis=1)
        out[:, c0:c0 + per] = (spec[:, idx] * shift[None, :]).T
    return out


def _initial_fine(lattice: LatticeSpec, window: SpectralWindow, taper: KernelTaper) -> int:
    om1, om2, _ = _lattice_freqs(lattice)
    w1 = 2 * np.pi * window.half_theta / lattice.period_theta
    w2 = om2[min(window.half_rho, om2.size - 1)]
    th_lo, th_hi = taper.theta_support
    tmax = np.tan(max(abs(th_lo), abs(th_hi)))
    width = min(np.arctan(np.sinh(taper.u_a)) - th_lo, th_hi - np.arctan(np.sinh(taper.u_b)))
    band = 1.5 * (w1 + w2 * tmax) + 40.0 / width
    n = int(np.ceil(band * lattice.period_theta / (2 * np.pi)))
    return int(sfft.next_fast_len(max(n, 2 * lattice.n_theta)))


def _check_rows(lattice, window, taper, n_fine):
    _, om2, _ = _lattice_freqs(lattice)
    keep = np.abs(np.fft.fftfreq(lattice.n_theta, 1.0 / lattice.n_theta)) <= window.half_theta
    probe = om2[[0, min(window.half_rho, om2.size - 1)]]
    a = _rows(lattice, taper, probe, n_fine)[keep]
    b = _rows(lattice, taper, probe, 2 * n_fine)[keep]
    return float(np.max(np.abs(a - b)) / max(np.max(np.abs(b)), 1e-300))


def _cache_key(lattice: LatticeSpec, window: SpectralWindow, quad_tol: float) -> str:
    payload = json.dumps({"v": CACHE_VERSION, "lattice": [repr(getattr(lattice, f)) for f in (
        "theta0", "rho0", "dtheta", "drho", "n_theta", "n_rho", "kernel_theta", "kernel_taper")],
        "window": [window.half_theta, window.half_rho, repr(window.threshold), repr(window.rolloff)],
        "tol": repr(quad_tol)})
    return hashlib.sha256(payload.encode()).hexdigest()[:32]


def default_cache_dir() -> Path | None:
    env = os.environ.get("HYPRADON_CACHE")
    if env is not None:
        return Path(env) if env else None
    return None


def precompute_zeta_hat(lattice: LatticeSpec, window: SpectralWindow, quad_tol: float = 1e-8,
                        cache_dir: str | os.PathLike | None = None,
                        keep_zeta: bool = True) -> KernelSpectrum:
    """Evaluate the tapered kernel spectrum and the lattice transfer function.

    Each retained log-radial frequency row is computed with one FFT of the
    integrand sampled on a fine uniform angular grid. Since the integrand is
    smooth and compactly supported this is spectrally accurate; the grid is
    doubled until two successive refinements agree to ``quad_tol`` (relative to
    the largest coefficient).

    Parameters
    ----------
    cache_dir
        If given, spectra are stored there as ``.npz`` files keyed by a hash of
        the lattice, window and tolerance, and reused on later calls.

    Raises
    ------
    QuadratureError
        If the tolerance cannot be met.
    """
    path = None
    if cache_dir is not None:
        path = Path(cache_dir) / f"zeta_{_cache_key(lattice, window, quad_tol)}.npz"
        if path.exists():
            with np.load(path) as z:
                return KernelSpectrum(lattice, window, z["zeta_hat"] if keep_zeta else None,
                                      z["transfer"],
                                      int(z["fine_points"]), float(z["achieved_tol"]))
    taper = KernelTaper.from_lattice(lattice)
    n_fine = _initial_fine(lattice, window, taper)
    while True:
        err = _check_rows(lattice, window, taper, n_fine)
        if err <= quad_tol:
            break
        n_fine = int(sfft.next_fast_len(2 * n_fine))
        if n_fine > _MAX_FINE:
            raise QuadratureError(f"kernel spectrum stalled at relative error {err:.3g}")
    _, om2, _ = _lattice_freqs(lattice)
    nr = min(window.half_rho, om2.size - 1) + 1
    zeta = np.zeros((lattice.n_theta, om2.size), dtype=np.complex128)
    zeta[:, :nr] = _rows(lattice, taper, om2[:nr], n_fine)
    transfer = transfer_function(zeta, lattice, window)
    spec = KernelSpectrum(lattice, window, zeta if keep_zeta else None, transfer, n_fine, err)
    if path is not None:
        path.parent.mkdir(parents=True, exist_ok=True)
        tmp = path.with_suffix(".tmp.npz")
        np.savez(tmp, zeta_hat=zeta, transfer=transfer, fine_points=n_fine, achieved_tol=err)
        os.replace(tmp, path)
    return spec


def transfer_function(zeta: np.ndarray, lattice: LatticeSpec, window: SpectralWindow) -> np.ndarray:
    """Windowed, spline-compensated lattice multiplier for ``zeta``.

    Smearing and interpolation each multiply by the spline transform, and the
    lattice DFT of samples spaced ``(dtheta, drho)`` carries ``1 / (dtheta drho)``.
    """
    n1, n2 = lattice.shape
    w1 = 2 * np.pi * np.fft.fftfreq(n1)
    w2 = 2 * np.pi * np.arange(n2 // 2 + 1) / n2
    b = bspline3_hat(w1[:, None], w2[None, :])
    mask = window.mask_rfft(n1, n2)
    H = np.zeros_like(zeta)
    H[mask] = (window.weights_rfft(n1, n2)[mask] * zeta[mask]
               / (lattice.dtheta * lattice.drho * b[mask] ** 2))
    # project onto transforms of real kernels so forward and adjoint are exact transposes
    return sfft.rfft2(sfft.irfft2(H, s=(n1, n2)))


def lp_forward_convolve(field_values: np.ndarray, spectrum: KernelSpectrum) -> np.ndarray:
    """Circular convolution of a lattice field with the kernel."""
    s = spectrum.lattice.shape
    return sfft.irfft2(sfft.rfft2(field_values) * spectrum.transfer, s=s)


def lp_adjoint_convolve(field_values: np.ndarray, spectrum: KernelSpectrum) -> np.ndarray:
    """Transpose of :func:`lp_forward_convolve` (correlation with the kernel)."""
    s = spectrum.lattice.shape
    return sfft.irfft2(sfft.rfft2(field_values) * np.conj(spectrum.transfer), s=s)
