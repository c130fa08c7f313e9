"""Placement of the data in a circle sector and the log-polar coordinate maps.

Data live in squared coordinates ``(s, y) = (t**2, x**2)`` where hyperbolas
become straight lines ``s = tau**2 + q**2 * y``. A similarity map ``T`` puts the
data region inside a sector of radius 1 and opening ``beta`` so that the lines
of interest have normal angles in ``[-beta/2, beta/2]``. In the plane a point is
described by ``(theta, rho) = (angle, log radius)``; a line with normal angle
``theta`` at distance ``exp(rho)`` passes through a point ``(theta', rho')``
exactly when ``cos(theta - theta') = exp(rho - rho')``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog

# margin keeping tan/log arguments away from their singular points
SINGULAR_MARGIN = 1e-6


class GeometryError(ValueError):
    """Infeasible sector geometry or a coordinate map outside its domain."""


def _rot(alpha: float) -> np.ndarray:
    c, s = np.cos(alpha), np.sin(alpha)
    return np.array([[c, -s], [s, c]])


@dataclass(frozen=True)
class AffineMap2:
    """``p -> matrix @ p + shift`` on the plane."""

    matrix: np.ndarray
    shift: np.ndarray

    def __post_init__(self):
        m = np.array(self.matrix, dtype=np.float64).reshape(2, 2)
        b = np.array(self.shift, dtype=np.float64).reshape(2)
        if abs(np.linalg.det(m)) <= 1e-12:
            raise GeometryError("affine map is singular")
        m.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "matrix", m)
        object.__setattr__(self, "shift", b)

    def __call__(self, p1, p2):
        p1, p2 = np.asarray(p1, dtype=np.float64), np.asarray(p2, dtype=np.float64)
        m, b = self.matrix, self.shift
        return m[0, 0] * p1 + m[0, 1] * p2 + b[0], m[1, 0] * p1 + m[1, 1] * p2 + b[1]

    def inverse(self) -> "AffineMap2":
        mi = np.linalg.inv(self.matrix)
        return AffineMap2(mi, -mi @ self.shift)


def closed_form_side(alpha: float, beta: float) -> float:
    """Side of the largest square (rotated by ``alpha``) fitting the sector."""
    s2a = np.sin(2 * alpha)
    return np.sin(beta) / np.sqrt(s2a * np.sin(beta) + np.cos(beta) * (s2a + np.sin(beta)) + 1)


def map_P1(u, v):
    """Cartesian ``(u, v)`` to ``(rho, theta) = (log |p|, angle of p)``."""
    u, v = np.asarray(u, dtype=np.float64), np.asarray(v, dtype=np.float64)
    r2 = u * u + v * v
    if np.any(r2 <= 0):
        raise GeometryError("log-polar map undefined at the origin")
    return 0.5 * np.log(r2), np.arctan2(v, u)


def map_P1_inv(rho, theta):
    r = np.exp(np.asarray(rho, dtype=np.float64))
    return r * np.cos(theta), r * np.sin(theta)


def map_P2(x_mapped, slope_mapped):
    """Line given by ``map_S`` output to ``(rho, theta)``.

    ``slope_mapped = tan(theta)`` for the normal angle ``theta`` and
    ``x_mapped`` is where the line crosses the horizontal axis, so the line
    distance from the origin is ``x_mapped * cos(theta)``.
    """
    x_mapped = np.asarray(x_mapped, dtype=np.float64)
    theta = np.arctan(np.asarray(slope_mapped, dtype=np.float64))
    arg = x_mapped * np.cos(theta)
    if np.any(arg <= 0):
        raise GeometryError("line passes on the wrong side of the sector apex")
    return np.log(arg), theta


def map_P2_inv(rho, theta):
    theta = np.asarray(theta, dtype=np.float64)
    return np.exp(rho) / np.cos(theta), np.tan(theta)


def inscribe(vertices, alpha: float, beta: float, n_tangents: int = 4096) -> tuple[float, np.ndarray]:
    """Largest similarity placement of a convex polygon inside the sector.

    The polygon (given in ``(s, y)``) is rotated by ``alpha`` about ``(1/2, 1/2)``,
    scaled by ``a`` and shifted to ``O``; ``a`` is maximised subject to every
    vertex having radius <= 1 and angle within ``[-beta/2, beta/2]``.

    The angular constraints are linear in ``(O, a)``. Inside the sector the
    unit arc is replaced by its tangents at ``n_tangents`` angles, which turns
    the problem into a linear program; the result is then shrunk about the
    apex so that the true radius bound holds.
    """
    vertices = np.asarray(vertices, dtype=np.float64)
    v = (_rot(alpha) @ (vertices - 0.5).T).T
    n_up = np.array([-np.sin(beta / 2), np.cos(beta / 2)])
    n_lo = np.array([np.sin(beta / 2), np.cos(beta / 2)])
    psi = np.linspace(-beta / 2, beta / 2, n_tangents)
    dirs = np.stack([np.cos(psi), np.sin(psi)], axis=1)
    rows, rhs = [], []
    for vi in v:
        # d . (O + a v) <= 1 for every tangent direction d
        rows.append(np.column_stack([dirs, dirs @ vi]))
        rhs.append(np.ones(n_tangents))
        rows.append(np.array([[*n_up, n_up @ vi], [*(-n_lo), -(n_lo @ vi)]]))
        rhs.append(np.zeros(2))
    res = linprog(c=[0.0, 0.0, -1.0], A_ub=np.vstack(rows), b_ub=np.concatenate(rhs),
                  bounds=[(None, None), (None, None), (0, None)], method="highs")
    if res.status != 0 or res.x[2] <= 0:
        raise GeometryError(f"could not inscribe data region: {res.message}")
    z = res.x
    corners = z[:2] + z[2] * v
    r_max = np.sqrt(np.max(np.sum(corners * corners, axis=1)))
    shrink = (1.0 - 1e-12) / max(r_max, 1.0)
    return float(z[2] * shrink), z[:2] * shrink


def trapezoid_vertices(k: float) -> np.ndarray:
    """Unit square in ``(s, y)`` with the corner above ``s = k**2 y`` cut off."""
    k2 = min(k * k, 1.0)
    return np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [k2, 1.0]])


@dataclass(frozen=True)
class SectorGeometry:
    """Sector constants for one slowness range and one data region."""

    beta: float
    alpha: float
    a: float
    origin: tuple[float, float]
    a_r: float
    gamma: float
    region: np.ndarray = field(repr=False)

    @property
    def T(self) -> AffineMap2:
        m = self.a * _rot(self.alpha)
        return AffineMap2(m, np.asarray(self.origin) - m @ np.array([0.5, 0.5]))

    @property
    def theta_range(self) -> tuple[float, float]:
        return (-self.beta / 2, self.beta / 2)

    @property
    def working_rectangle(self) -> tuple[tuple[float, float], tuple[float, float]]:
        return ((-self.beta, self.beta), (float(np.log(self.a_r)), 0.0))

    def map_T(self, s, y):
        return self.T(s, y)

    def map_T_inv(self, u, v):
        return self.T.inverse()(u, v)

    def normal_angle(self, q_sq):
        q_sq = np.asarray(q_sq, dtype=np.float64)
        theta = self.alpha - np.arctan(q_sq)
        if np.any(np.abs(theta) >= np.pi / 2 - SINGULAR_MARGIN):
            raise GeometryError("slowness outside the representable angular range")
        return theta

    def map_S(self, tau_sq, q_sq):
        """Line ``s = tau**2 + q**2 y`` to ``(x_mapped, slope_mapped)``."""
        phi = np.tan(self.normal_angle(q_sq))
        u0, v0 = self.T(tau_sq, 0.0)
        return u0 + v0 * phi, phi

    def map_S_inv(self, x_mapped, slope_mapped):
        x_mapped = np.asarray(x_mapped, dtype=np.float64)
        phi = np.asarray(slope_mapped, dtype=np.float64)
        q_sq = np.tan(self.alpha - np.arctan(phi))
        ca, sa, a = np.cos(self.alpha), np.sin(self.alpha), self.a
        o1, o2 = self.origin
        rest = x_mapped - 0.5 * a * (sa - phi * ca) - o1 - o2 * phi
        tau_sq = 0.5 + rest / (a * (ca + phi * sa))
        return tau_sq, q_sq

    def line_distance(self, tau_sq, q_sq):
        theta = self.normal_angle(q_sq)
        u0, v0 = self.T(tau_sq, 0.0)
        return u0 * np.cos(theta) + v0 * np.sin(theta)

    def phi_eta_data(self, t, x):
        """Log-polar ``(theta, rho)`` of the data point ``(t, x)``."""
        t, x = np.asarray(t, dtype=np.float64), np.asarray(x, dtype=np.float64)
        rho, theta = map_P1(*self.T(t * t, x * x))
        return theta, rho

    def jacobian_data(self, t, x):
        """``|d(theta, rho) / d(t, x)|``; vanishes like ``2 x`` at zero offset."""
        x = np.asarray(x, dtype=np.float64)
        return 2.0 * x * self.jacobian_data_over_2x(t, x)

    def jacobian_data_over_2x(self, t, x):
        t, x = np.asarray(t, dtype=np.float64), np.asarray(x, dtype=np.float64)
        u, v = self.T(t * t, x * x)
        return 2.0 * t * self.a ** 2 / (u * u + v * v)

    def phi_eta_radon(self, tau, q):
        """Log-polar ``(theta, rho)`` of the line indexed by ``(tau, q)``."""
        tau, q = np.asarray(tau, dtype=np.float64), np.asarray(q, dtype=np.float64)
        rho, theta = map_P2(*self.map_S(tau * tau, q * q))
        return theta, rho

    def data_polar_extent(self):
        """Angular and log-radial bounds of the mapped region vertices."""
        rho, theta = map_P1(*self.T(self.region[:, 0], self.region[:, 1]))
        return (theta.min(), theta.max()), (rho.min(), rho.max())


def sector_angles(q_min: float, q_max: float) -> tuple[float, float]:
    """``(beta, alpha)`` for a slowness interval."""
    lo, hi = np.arctan(q_min ** 2), np.arctan(q_max ** 2)
    return float(hi - lo), float(0.5 * (hi + lo))


def inner_radius(T: AffineMap2, vertices, beta: float) -> float:
    """Smallest distance from the apex to a line with normal angle in
    ``[-beta/2, beta/2]`` through a region vertex."""
    u, v = T(vertices[:, 0], vertices[:, 1])
    d = np.minimum(u * np.cos(beta / 2) + v * np.sin(beta / 2),
                   u * np.cos(beta / 2) - v * np.sin(beta / 2))
    return float(d.min())


def build_geometry(q_min: float, q_max: float, tau_min: float, mute_slope_k: float | None = None,
                   region=None) -> SectorGeometry:
    """Sector constants for the rescaled slowness range ``[q_min, q_max]``.

    ``region`` is the convex data region in ``(s, y)`` (vertex list); by default
    the unit square with the muted corner above ``t = k x`` removed, ``k``
    defaulting to ``tau_min``.
    """
    if not (0 < q_min < q_max):
        raise GeometryError(f"need 0 < q_min < q_max, got {q_min}, {q_max}")
    if not (0 < tau_min < 1):
        raise GeometryError(f"need 0 < tau_min < 1, got {tau_min}")
    k = tau_min if mute_slope_k is None else float(mute_slope_k)
    if not (0 < k < np.inf):
        raise GeometryError("mute slope must be positive")
    beta, alpha = sector_angles(q_min, q_max)
    if beta <= 1e-9:
        raise GeometryError("empty slowness interval")
    if region is None:
        region = trapezoid_vertices(k)
        if k * k >= 1.0:
            raise GeometryError("mute slope removes the whole data region")
    region = np.asarray(region, dtype=np.float64)
    a, origin = inscribe(region, alpha, beta)
    T = AffineMap2(a * _rot(alpha), origin - a * _rot(alpha) @ np.array([0.5, 0.5]))
    a_r = inner_radius(T, region, beta)
    if not (0 < a_r < 1):
        raise GeometryError(f"inner radius {a_r} outside (0, 1)")
    region = region.copy()
    region.setflags(write=False)
    return SectorGeometry(beta=beta, alpha=alpha, a=a, origin=(float(origin[0]), float(origin[1])),
                          a_r=a_r, gamma=float(np.arctan(k * k)), region=region)
