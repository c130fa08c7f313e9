"""Sparse Radon representations by iterative soft thresholding.

A gather ``f`` is modelled as ``R* g`` with a sparse panel ``g``, minimising

    J(g) = ||R* g - f||**2 + mu * ||g||_1

by the iteration ``g <- S_{c**2 mu}(g + c**2 R (f - R* g))`` with ``c ||R|| < 1``.
With missing traces the residual is taken on live traces only.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .grid import CmpGather, RadonImage
from .operators import OperatorPlan, adjoint, estimate_norm, forward

DEFAULT_MU_FRACTION = 0.05
STEP_SAFETY = 0.95


class IstaError(RuntimeError):
    """Invalid iteration set-up or a broken descent."""


def soft_threshold(v, mu):
    """Shrink towards zero: zero on ``|v| < mu / 2``, shift by ``mu / 2`` outside.

    >>> soft_threshold(3.0, 2.0), soft_threshold(0.5, 2.0), soft_threshold(-3.0, 2.0)
    (2.0, 0.0, -2.0)
    """
    if mu < 0:
        raise ValueError("mu must be non-negative")
    v = np.asarray(v, dtype=np.float64)
    out = np.sign(v) * np.maximum(np.abs(v) - 0.5 * mu, 0.0)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class IstaConfig:
    """Parameters of the thresholding iteration.

    Use :meth:`for_plan` to fill in ``mu`` and ``c`` from the data and the
    operator norm.
    """

    mu: float
    c: float
    n_iters: int = 30
    mask: np.ndarray | None = field(default=None, repr=False)
    norm_estimate: float | None = None
    rel_tol: float | None = None

    def __post_init__(self):
        if not self.mu >= 0:
            raise IstaError("mu must be non-negative")
        if not self.c > 0:
            raise IstaError("c must be positive")
        if int(self.n_iters) != self.n_iters or self.n_iters < 1:
            raise IstaError("n_iters must be a positive integer")
        if self.norm_estimate is not None and self.c * self.norm_estimate >= 1:
            raise IstaError(f"step too large: c * ||R|| = {self.c * self.norm_estimate:.4g} >= 1")
        if self.mask is not None:
            m = np.asarray(self.mask, dtype=bool)
            if not m.any():
                raise IstaError("mask has no live samples")
            object.__setattr__(self, "mask", m)

    @classmethod
    def for_plan(cls, p: OperatorPlan, f: CmpGather, mu: float | None = None, c: float | None = None,
                 n_iters: int = 30, mask=None, mu_scale: float = 1.0, rel_tol: float | None = None,
                 norm: float | None = None) -> "IstaConfig":
        """Config with ``mu`` defaulting to ``0.05 * max|R f|`` (times ``mu_scale``)
        and ``c`` to ``0.95 / ||R||``."""
        if norm is None:
            norm = estimate_norm(p)
        if not norm > 0:
            raise IstaError("operator norm estimate is zero")
        if c is None:
            c = STEP_SAFETY / norm
        if mu is None:
            data = f.data if mask is None else np.where(mask, f.data, 0.0)
            mu = DEFAULT_MU_FRACTION * float(np.abs(forward(p, f.with_data(data)).data).max())
        return cls(mu=mu * mu_scale, c=c, n_iters=n_iters, mask=mask, norm_estimate=norm,
                   rel_tol=rel_tol)


@dataclass
class IstaTrace:
    """Objective, residual norm and support size after each iteration."""

    objective: list = field(default_factory=list)
    residual_norm: list = field(default_factory=list)
    nonzeros: list = field(default_factory=list)

    def __len__(self):
        return len(self.objective)


def objective(p: OperatorPlan, g: RadonImage, f: CmpGather, mu: float, mask=None) -> float:
    """``||chi (R* g) - f||**2 + mu ||g||_1`` with ``chi`` the optional live-sample mask."""
    model = adjoint(p, g).data
    fdat = f.data
    if mask is not None:
        model = np.where(mask, model, 0.0)
        fdat = np.where(mask, fdat, 0.0)
    return float(np.sum((model - fdat) ** 2) + mu * np.abs(g.data).sum())


def _iterate(p: OperatorPlan, f: CmpGather, cfg: IstaConfig, mask, g0):
    if f.grid != p.data_grid:
        raise IstaError("gather grid does not match the plan")
    fdat = f.data if mask is None else np.where(mask, f.data, 0.0)
    g = np.zeros(p.radon_grid.shape) if g0 is None else np.array(g0.data, dtype=np.float64)
    c2 = cfg.c * cfg.c
    trace = IstaTrace()
    prev = None
    for _ in range(cfg.n_iters):
        model = adjoint(p, RadonImage(p.radon_grid, g)).data
        if mask is not None:
            model = np.where(mask, model, 0.0)
        resid = fdat - model
        if prev is not None:
            # objective of the current iterate, available from this residual
            _record(trace, resid, g, cfg.mu, prev)
        grad = forward(p, CmpGather(p.data_grid, resid)).data
        g = soft_threshold(g + c2 * grad, c2 * cfg.mu)
        prev = trace.objective[-1] if trace.objective else np.inf
        if cfg.rel_tol is not None and len(trace) >= 2:
            a, b = trace.objective[-2], trace.objective[-1]
            if abs(a - b) <= cfg.rel_tol * max(abs(a), 1e-300):
                break
    model = adjoint(p, RadonImage(p.radon_grid, g)).data
    if mask is not None:
        model = np.where(mask, model, 0.0)
    _record(trace, fdat - model, g, cfg.mu, prev)
    return RadonImage(p.radon_grid, g), trace


def _record(trace: IstaTrace, resid, g, mu, prev):
    r2 = float(np.sum(resid * resid))
    obj = r2 + mu * float(np.abs(g).sum())
    if prev is not None and np.isfinite(prev) and obj > prev + 1e-9 * abs(prev):
        raise IstaError(f"objective increased from {prev:.6g} to {obj:.6g}; "
                        "check the step size or the adjoint")
    if not np.isfinite(obj):
        raise IstaError("objective is not finite")
    trace.objective.append(obj)
    trace.residual_norm.append(np.sqrt(r2))
    trace.nonzeros.append(int(np.count_nonzero(g)))


def ista(p: OperatorPlan, f: CmpGather, cfg: IstaConfig, g0: RadonImage | None = None):
    """Sparse panel ``g`` with ``R* g`` close to ``f``.

    Returns
    -------
    (RadonImage, IstaTrace)
        The final iterate and one trace entry per completed iterate
        (``trace.objective[k]`` belongs to the ``k+1``-th iterate).

    Raises
    ------
    IstaError
        If the objective increases by more than ``1e-9`` relative, which
        points to ``c`` being too large or to an adjoint mismatch.
    """
    return _iterate(p, f, cfg, None, g0)


def ista_masked(p: OperatorPlan, f: CmpGather, cfg: IstaConfig, g0: RadonImage | None = None):
    """As :func:`ista` but fitting only the samples where ``cfg.mask`` is true.

    Samples off the mask are treated as zero. The interpolated gather is
    ``adjoint(p, g)``.
    """
    if cfg.mask is None:
        raise IstaError("masked iteration needs a mask")
    if cfg.mask.shape != p.data_grid.shape:
        raise IstaError("mask does not match the gather grid")
    return _iterate(p, f, cfg, cfg.mask, g0)


def read_polyline(path) -> np.ndarray:
    """Read ``tau q`` pairs (one per line, ``#`` comments) with strictly increasing ``tau``."""
    pts = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.replace(",", " ").split()
            if len(parts) != 2:
                raise ValueError(f"{path}:{lineno}: expected 'tau q'")
            try:
                pts.append((float(parts[0]), float(parts[1])))
            except ValueError:
                raise ValueError(f"{path}:{lineno}: non-numeric value") from None
    arr = np.array(pts, dtype=np.float64).reshape(-1, 2)
    _check_polyline(arr)
    return arr


def _check_polyline(boundary: np.ndarray):
    if boundary.ndim != 2 or boundary.shape[1] != 2 or len(boundary) < 1:
        raise ValueError("boundary must be a non-empty list of (tau, q) pairs")
    if np.any(np.diff(boundary[:, 0]) <= 0):
        raise ValueError("boundary tau values must be strictly increasing")


def mute_and_split(g: RadonImage, boundary) -> tuple[RadonImage, RadonImage]:
    """Split a panel along a curve ``q_b(tau)`` given as a ``(tau, q)`` polyline.

    Samples with ``q < q_b(tau)`` form the first image (primaries), the rest
    the second (multiples); ``q_b`` is linear between vertices and constant
    beyond the end vertices. The two parts add up to ``g`` exactly.
    """
    b = np.asarray(boundary, dtype=np.float64)
    _check_polyline(b)
    grid = g.grid
    if b[-1, 0] < grid.o1 or b[0, 0] > grid.end1:
        raise ValueError("boundary lies outside the intercept range")
    qb = np.interp(grid.axis1, b[:, 0], b[:, 1])
    keep = grid.axis2[None, :] < qb[:, None]
    prim = np.where(keep, g.data, 0.0)
    mult = np.where(keep, 0.0, g.data)
    return RadonImage(grid, prim), RadonImage(grid, mult)
