"""Fast hyperbolic Radon transform and its adjoint.

For a gather ``f(t, x)`` on ``[0, T] x [0, X]`` the transform is

    R f(tau, q) = integral over [0, X] of f(sqrt(tau**2 + q**2 x**2), x) dx,

so that a constant gather maps to ``X`` for small slowness. Computation goes
through squared coordinates, where hyperbolas are lines, and log-polar
coordinates, where integration along lines is a convolution. Data samples are
smeared onto a lattice, convolved by FFT and read back at the requested
``(tau, q)`` points. The data may be cut into bands of time and groups of
slowness ("splits"); each split gets its own geometry and lattice and the
contributions are summed.

The adjoint applies the transposes of the same steps in reverse order, so
``<R f, g> = <f, R* g>`` holds to rounding.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .geometry import build_geometry, SectorGeometry
from .grid import CmpGather, RadonImage, RegularGrid2, ScaleRecord, scale_record_for
from .kernel import KernelSpectrum, smooth_step, lp_adjoint_convolve, lp_forward_convolve, precompute_zeta_hat
from .spline import LatticeSpec, SpectralWindow, Stencil, lattice_for_points, spectral_window

DEFAULT_OVERSAMPLE = 3.0
DEFAULT_THRESHOLD = 0.6
DEFAULT_ROLLOFF = 0.5


class PlanError(ValueError):
    """Invalid plan request or operator input."""


@dataclass
class ApplyStats:
    """Timing and size figures of the most recent operator application."""

    seconds_total: float = 0.0
    seconds_gridding: float = 0.0
    seconds_fft: float = 0.0
    seconds_interpolation: float = 0.0
    lattice_shapes: list = field(default_factory=list)
    points_in: int = 0
    points_out: int = 0

    def as_dict(self) -> dict:
        return {
            "seconds_total": self.seconds_total,
            "seconds_gridding": self.seconds_gridding,
            "seconds_fft": self.seconds_fft,
            "seconds_interpolation": self.seconds_interpolation,
            "lattice_shapes": [list(s) for s in self.lattice_shapes],
            "points_in": self.points_in,
            "points_out": self.points_out,
        }


@dataclass
class SplitPlan:
    """One time band crossed with one slowness group."""

    geometry: SectorGeometry
    lattice: LatticeSpec
    window: SpectralWindow
    spectrum: KernelSpectrum = field(repr=False)
    data_index: np.ndarray = field(repr=False)
    data_weight: np.ndarray = field(repr=False)
    data_stencil: Stencil = field(repr=False)
    out_index: np.ndarray = field(repr=False)
    out_factor: np.ndarray = field(repr=False)
    out_stencil: Stencil = field(repr=False)


@dataclass
class OperatorPlan:
    """Precomputed state shared by :func:`forward` and :func:`adjoint`."""

    data_grid: RegularGrid2
    radon_grid: RegularGrid2
    record: ScaleRecord
    splits: list
    n_splits: tuple[int, int]
    oversample: float
    window_threshold: float
    rolloff: float
    tau_min: float
    mute_slope: float
    last_stats: ApplyStats = field(default_factory=ApplyStats)

    @property
    def nbytes(self) -> int:
        total = 0
        for s in self.splits:
            total += s.spectrum.nbytes
            for arr in (s.data_index, s.data_weight, s.out_index, s.out_factor):
                total += arr.nbytes
            for st in (s.data_stencil, s.out_stencil):
                total += st.i0.nbytes + st.u.nbytes + st.j0.nbytes + st.v.nbytes
        return total


def _trapezoid(n: int) -> np.ndarray:
    w = np.ones(n)
    w[0] = w[-1] = 0.5
    return w


def _band_edges(t_axis: np.ndarray, tau_min: float, n: int) -> list[int]:
    """Row indices splitting ``[tau_min, 1]`` into ``n`` geometric bands."""
    edges = [0]
    for i in range(1, n):
        target = tau_min ** (1.0 - i / n)
        edges.append(int(np.argmin(np.abs(t_axis - target))))
    edges.append(t_axis.size - 1)
    if any(b <= a for a, b in zip(edges[:-1], edges[1:])):
        raise PlanError("too many time splits for the sampling")
    return edges


def _seam(t: np.ndarray, e: int, hw: int) -> np.ndarray:
    """Weight falling smoothly from 1 at row ``e - hw`` to 0 at row ``e + hw``."""
    return smooth_step((t[e + hw] - t) / (t[e + hw] - t[e - hw]))


def _slowness_groups(q: np.ndarray, n: int) -> list[np.ndarray]:
    """Contiguous column groups, cut geometrically in ``arctan(q**2)``."""
    ang = np.arctan(q * q)
    cuts = ang[0] * (ang[-1] / ang[0]) ** (np.arange(1, n) / n)
    label = np.searchsorted(cuts, ang, side="right")
    groups = [np.flatnonzero(label == i) for i in range(n)]
    if any(g.size == 0 for g in groups):
        raise PlanError("too many slowness splits for the sampling")
    return groups


def _band_region(s0: float, s1: float, k2: float) -> np.ndarray:
    """Convex polygon ``{s0 <= s <= s1, 0 <= y <= min(1, s / k2)}``."""
    pts = [(s0, 0.0), (s1, 0.0), (s1, min(1.0, s1 / k2))]
    if s0 / k2 < 1.0 < s1 / k2:
        pts.append((k2, 1.0))
    if s0 > 0:
        pts.append((s0, min(1.0, s0 / k2)))
    out = []
    for p in pts:
        if not out or np.hypot(p[0] - out[-1][0], p[1] - out[-1][1]) > 1e-14:
            out.append(p)
    return np.array(out)


def _masked_spacing(th: np.ndarray, rh: np.ndarray, valid: np.ndarray) -> tuple[float, float]:
    dth = drh = 0.0
    for ax in (0, 1):
        ok = np.logical_and(np.take(valid, range(1, valid.shape[ax]), axis=ax),
                            np.take(valid, range(0, valid.shape[ax] - 1), axis=ax))
        if ok.any():
            dth = max(dth, np.abs(np.diff(th, axis=ax))[ok].max())
            drh = max(drh, np.abs(np.diff(rh, axis=ax))[ok].max())
    if not (dth > 0 and drh > 0):
        raise PlanError("split holds too few data samples")
    return float(dth), float(drh)


def plan(data_grid: RegularGrid2, radon_grid: RegularGrid2, splits: tuple[int, int] = (1, 1),
         oversample: float = DEFAULT_OVERSAMPLE, window_threshold: float = DEFAULT_THRESHOLD,
         quad_tol: float = 1e-8, tau_min: float | None = None, mute_slope: float | None = None,
         cache_dir=None, seam_fraction: float = 1 / 8,
         margin_rows: int = 8, rolloff: float = DEFAULT_ROLLOFF,
         max_lattice_cells: int = 1 << 27) -> OperatorPlan:
    """Build the geometry, lattices and kernel spectra for a pair of grids.

    Parameters
    ----------
    data_grid, radon_grid
        Physical sampling of the gather ``(t, x)`` and of the panel ``(tau, q)``.
    splits
        ``(n_time, n_slowness)``: number of additional cuts of the time range
        and of the slowness range; ``(0, 0)`` is a single domain.
    oversample
        Lattice refinement relative to the largest neighbour distance of the
        mapped data samples. Values near 1 leave too little room between the
        data spectrum and its sampling replicas; 3 keeps errors near 1e-4 on
        band-limited data.
    window_threshold
        Spline-transform level bounding the retained frequency window.
    quad_tol
        Relative accuracy of the kernel spectrum.
    tau_min, mute_slope
        Smallest intercept time of interest and slope ``t / x`` of the mute
        (both in physical units). ``tau_min`` defaults to the first intercept
        time and the mute passes ``margin_rows`` samples below ``tau_min`` at
        the far offset. Data above the mute line ``t < mute_slope * x`` are
        ignored.
    cache_dir
        Optional directory for reusing kernel spectra.
    seam_fraction
        Width of the overlap between neighbouring time bands, as a fraction
        of the number of time samples. Data in the overlap are shared between
        the bands with smoothly varying weights that sum to one.
    margin_rows
        Time samples kept below ``tau_min`` so that lines near ``tau_min``
        see data on both sides.
    rolloff
        Fraction of the spectral window over which it is tapered to zero.
    max_lattice_cells
        Upper bound on the cells of any one lattice.

    Raises
    ------
    PlanError
        Invalid options or a lattice above the memory budget.
    GeometryError
        No sector placement exists for the slowness range.
    """
    if int(splits[0]) < 0 or int(splits[1]) < 0:
        raise PlanError("split counts must be non-negative")
    n_t, n_q = int(splits[0]) + 1, int(splits[1]) + 1
    if not oversample > 0:
        raise PlanError("oversample must be positive")
    if radon_grid.o1 <= 0 or radon_grid.o2 <= 0:
        raise PlanError("intercept and slowness axes must start above zero")
    if data_grid.o1 < 0 or data_grid.o2 < 0:
        raise PlanError("data axes must be non-negative")
    rec = scale_record_for(data_grid)
    dg = rec.grid_to_internal(data_grid, "gather")
    rg = rec.grid_to_internal(radon_grid, "radon")
    tmin = rg.o1 if tau_min is None else tau_min / rec.T
    if not (0 < tmin < 1):
        raise PlanError("tau_min must lie inside the record")
    # default mute runs margin_rows below the first line at the far offset
    t_lo = max(tmin - margin_rows * dg.d1, 0.5 * tmin)
    k = t_lo if mute_slope is None else mute_slope * rec.X / rec.T
    if rg.end2 ** 2 >= 1e6:
        raise PlanError("slowness range too large")
    if n_q > rg.n2:
        raise PlanError("more slowness splits than slowness samples")

    t, x = dg.axis1, dg.axis2
    dt, dx = dg.d1, dg.d2
    tau, q = rg.axis1, rg.axis2
    # rows below the smallest intercept (less a stencil margin) never meet a line
    margin = margin_rows * dt
    edges = _band_edges(t, max(tmin, t[1]), n_t)
    edges[0] = max(edges[0], int(np.searchsorted(t, t_lo, side="right")) - 1)
    if edges[0] >= edges[1]:
        raise PlanError("first time band is empty")
    q_groups = _slowness_groups(q, n_q)
    wt = _trapezoid(dg.n1) * dt
    wx = _trapezoid(dg.n2) * dx

    # neighbouring bands overlap by 2*hw rows with a smooth partition of unity
    hw = max(2, int(round(seam_fraction * dg.n1 / 2)))
    if n_t > 1:
        hw = min(hw, (min(np.diff(edges)) - 1) // 2)
        if hw < 2:
            raise PlanError("time bands too narrow for a seam")

    out_splits = []
    for i in range(n_t):
        r0 = edges[i] - hw if i > 0 else edges[0]
        r1 = edges[i + 1] + hw if i < n_t - 1 else edges[-1]
        rows = np.arange(r0, r1 + 1)
        tw = wt[rows].copy()
        if i > 0:
            tw *= 1.0 - _seam(t, edges[i], hw)[rows]
        if i < n_t - 1:
            tw *= _seam(t, edges[i + 1], hw)[rows]
        ti = t[rows]
        valid = (ti[:, None] >= k * x[None, :] - 1e-12) & (ti[:, None] > 0)
        region = _band_region(ti[0] ** 2, ti[-1] ** 2, k * k)
        # lines meeting the band (with a stencil margin)
        s_lo, s_hi = max(ti[0] - margin, 0.0), ti[-1] + margin
        for cols in q_groups:
            qc = q[cols]
            # half a column of slack on either side keeps one-column groups valid
            geo = build_geometry(max(qc[0] - rg.d2 / 2, qc[0] / 2), qc[-1] + rg.d2 / 2,
                                 tmin, k, region=region)
            th, rh = np.full(valid.shape, np.nan), np.full(valid.shape, np.nan)
            tt, xx = np.broadcast_arrays(ti[:, None], x[None, :])
            th[valid], rh[valid] = geo.phi_eta_data(tt[valid], xx[valid])
            dth, drh = _masked_spacing(th, rh, valid)
            dth /= oversample
            drh /= oversample

            TAU, Q = np.meshgrid(tau, qc, indexing="ij")
            hit = (TAU <= s_hi) & (np.sqrt(TAU ** 2 + Q ** 2) >= s_lo)
            if not hit.any():
                continue
            oth, orh = geo.phi_eta_radon(TAU[hit], Q[hit])
            lat = lattice_for_points(th[valid], rh[valid], oth, orh, dth, drh)
            if lat.n_theta * lat.n_rho > max_lattice_cells:
                raise PlanError(f"lattice {lat.shape} exceeds the memory budget of "
                                f"{max_lattice_cells} cells; lower oversample or add splits")
            win = spectral_window(lat.n_theta, lat.n_rho, window_threshold, rolloff)
            spec = precompute_zeta_hat(lat, win, quad_tol, cache_dir=cache_dir, keep_zeta=False)

            data_index = (rows[:, None] * dg.n2 + np.arange(dg.n2)[None, :])[valid]
            weight = ((tw[:, None] * wx[None, :])[valid] * 2.0 * tt[valid] * np.exp(-rh[valid]))
            out_index = (np.arange(rg.n1)[:, None] * rg.n2 + cols[None, :])[hit]
            out_factor = geo.a / np.sqrt(1.0 + Q[hit] ** 4)
            out_splits.append(SplitPlan(
                geometry=geo, lattice=lat, window=win, spectrum=spec,
                data_index=data_index.astype(np.intp), data_weight=weight,
                data_stencil=lat.locate(th[valid], rh[valid]),
                out_index=out_index.astype(np.intp), out_factor=out_factor,
                out_stencil=lat.locate(oth, orh)))
    return OperatorPlan(data_grid=data_grid, radon_grid=radon_grid, record=rec, splits=out_splits,
                        n_splits=(n_t - 1, n_q - 1), oversample=float(oversample),
                        window_threshold=float(window_threshold), rolloff=float(rolloff),
                        tau_min=float(tmin * rec.T),
                        mute_slope=float(k * rec.T / rec.X))


def _check(field_obj, grid: RegularGrid2, kind: str):
    if field_obj.grid != grid:
        raise PlanError(f"{kind} grid does not match the plan")


def forward(p: OperatorPlan, gather: CmpGather) -> RadonImage:
    """Apply the fast transform to a gather sampled on ``p.data_grid``."""
    _check(gather, p.data_grid, "data")
    stats = ApplyStats()
    t_all = time.perf_counter()
    f = gather.data.ravel()
    out = np.zeros(p.radon_grid.n1 * p.radon_grid.n2)
    for s in p.splits:
        t0 = time.perf_counter()
        G = s.data_stencil.smear(f[s.data_index] * s.data_weight)
        t1 = time.perf_counter()
        U = lp_forward_convolve(G, s.spectrum)
        t2 = time.perf_counter()
        _accumulate(out, s.out_index, s.out_stencil.interpolate(U) * s.out_factor)
        t3 = time.perf_counter()
        stats.seconds_gridding += t1 - t0
        stats.seconds_fft += t2 - t1
        stats.seconds_interpolation += t3 - t2
        stats.lattice_shapes.append(s.lattice.shape)
        stats.points_in += len(s.data_index)
        stats.points_out += len(s.out_index)
    out *= p.record.output_factor
    stats.seconds_total = time.perf_counter() - t_all
    p.last_stats = stats
    return RadonImage(p.radon_grid, out.reshape(p.radon_grid.shape))


def adjoint(p: OperatorPlan, image: RadonImage) -> CmpGather:
    """Apply the exact transpose of :func:`forward`."""
    _check(image, p.radon_grid, "radon")
    stats = ApplyStats()
    t_all = time.perf_counter()
    g = image.data.ravel()
    out = np.zeros(p.data_grid.n1 * p.data_grid.n2)
    for s in p.splits:
        t0 = time.perf_counter()
        G = s.out_stencil.smear(g[s.out_index] * s.out_factor)
        t1 = time.perf_counter()
        U = lp_adjoint_convolve(G, s.spectrum)
        t2 = time.perf_counter()
        _accumulate(out, s.data_index, s.data_stencil.interpolate(U) * s.data_weight)
        t3 = time.perf_counter()
        stats.seconds_gridding += t1 - t0
        stats.seconds_fft += t2 - t1
        stats.seconds_interpolation += t3 - t2
        stats.lattice_shapes.append(s.lattice.shape)
        stats.points_in += len(s.out_index)
        stats.points_out += len(s.data_index)
    out *= p.record.output_factor
    stats.seconds_total = time.perf_counter() - t_all
    p.last_stats = stats
    return CmpGather(p.data_grid, out.reshape(p.data_grid.shape))


def _accumulate(out: np.ndarray, index: np.ndarray, values: np.ndarray) -> None:
    # indices are unique within a split
    out[index] += values


# ---------------------------------------------------------------- direct summation

def _catmull_rom(u):
    u2, u3 = u * u, u * u * u
    return ((-u3 + 2 * u2 - u) / 2, (3 * u3 - 5 * u2 + 2) / 2,
            (-3 * u3 + 4 * u2 + u) / 2, (u3 - u2) / 2)


def _direct_taps(data_grid: RegularGrid2, radon_grid: RegularGrid2, cols):
    """Flat data indices and weights of the samples feeding each ``(tau, q)`` output."""
    t0, dt, nt = data_grid.o1, data_grid.d1, data_grid.n1
    x = data_grid.axis2
    wx = _trapezoid(data_grid.n2) * data_grid.d2
    tau = radon_grid.axis1
    q = radon_grid.axis2[cols]
    tt = np.sqrt(tau[None, :, None] ** 2 + (q[:, None, None] * x[None, None, :]) ** 2)
    pos = (tt - t0) / dt
    base = np.floor(pos)
    u = pos - base
    base = base.astype(np.int64)
    idx, wts = [], []
    for off, w in zip((-1, 0, 1, 2), _catmull_rom(u)):
        r = base + off
        ok = (r >= 0) & (r < nt)
        idx.append(np.where(ok, r, 0) * data_grid.n2 + np.arange(data_grid.n2)[None, None, :])
        wts.append(np.where(ok, w, 0.0) * wx[None, None, :])
    return idx, wts


def direct_forward(gather: CmpGather, radon_grid: RegularGrid2, chunk: int | None = None) -> RadonImage:
    """Reference transform by interpolating along each hyperbola.

    Each trace is sampled at ``sqrt(tau**2 + q**2 x**2)`` with four-point
    Catmull-Rom interpolation (zero outside the record) and the offset integral
    uses the trapezoid rule. Cost grows like ``n_tau * n_q * n_x``.
    """
    dg = gather.grid
    f = gather.data.ravel()
    out = np.empty((radon_grid.n2, radon_grid.n1))
    chunk = chunk or max(1, int(4_000_000 // (radon_grid.n1 * dg.n2)))
    for c0 in range(0, radon_grid.n2, chunk):
        cols = np.arange(c0, min(c0 + chunk, radon_grid.n2))
        idx, wts = _direct_taps(dg, radon_grid, cols)
        acc = sum(f[i] * w for i, w in zip(idx, wts))
        out[cols] = acc.sum(axis=2)
    return RadonImage(radon_grid, out.T)


def direct_adjoint(image: RadonImage, data_grid: RegularGrid2, chunk: int | None = None) -> CmpGather:
    """Exact transpose of :func:`direct_forward`."""
    rg = image.grid
    out = np.zeros(data_grid.n1 * data_grid.n2)
    chunk = chunk or max(1, int(4_000_000 // (rg.n1 * data_grid.n2)))
    for c0 in range(0, rg.n2, chunk):
        cols = np.arange(c0, min(c0 + chunk, rg.n2))
        idx, wts = _direct_taps(data_grid, rg, cols)
        g = image.data[:, cols].T[:, :, None]
        for i, w in zip(idx, wts):
            out += np.bincount(i.ravel(), weights=(w * g).ravel(), minlength=out.size)
    return CmpGather(data_grid, out.reshape(data_grid.shape))


def estimate_norm(p: OperatorPlan, iterations: int = 30, seed: int = 0, tol: float = 1e-6) -> float:
    """Largest singular value of the fast transform by power iteration."""
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(p.data_grid.shape)
    v /= np.linalg.norm(v)
    sigma = 0.0
    for _ in range(iterations):
        w = adjoint(p, forward(p, CmpGather(p.data_grid, v))).data
        lam = float(np.linalg.norm(w))
        if lam == 0:
            return 0.0
        v = w / lam
        new = np.sqrt(lam)
        if abs(new - sigma) <= tol * new:
            sigma = new
            break
        sigma = new
    return sigma
