"""Shape space of the planar three-body problem (and gauge-fixed shapes for general N).

Configurations are quotiented by translations, rotations and dilatations.  For
three bodies in the plane the quotient is the shape sphere: mass-weighted
Jacobi vectors rho1, rho2 are read as complex numbers z1, z2 and sent through
the Hopf map

    n = (|z1|^2 - |z2|^2, 2 Re(conj(z1) z2), 2 Im(conj(z1) z2)) / I_cm,

a unit vector.  The kinematic metric descends to the round metric of a sphere
of radius 1/2, so the embedded shape point is ``n / 2``.  Equilateral
triangles sit at the poles n_z = +-1 (for equal masses), collinear shapes on
the equator n_z = 0.

Two charts cover the sphere.  ``"std"`` uses spherical angles about the n_z
axis; ``"rot"`` uses spherical angles about the n_y axis, which keeps
integrations away from coordinate poles.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import UndefinedDirectionError, ZeroInertiaError

SPHERE_RADIUS = 0.5

# Rows map a standard-frame unit vector n to the chart frame.
CHART_FRAMES = {
    "std": np.eye(3),
    "rot": np.array([[0.0, 0.0, 1.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]),
}
SPHERE_CHARTS = tuple(CHART_FRAMES)
CHART_SWITCH_SIN = 0.3


@dataclass(frozen=True, eq=False)
class Configuration:
    """Positions (N, d) and positive masses (N,) of point particles."""

    positions: np.ndarray
    masses: np.ndarray

    def __post_init__(self):
        pos = np.array(self.positions, dtype=float)
        m = np.array(self.masses, dtype=float).reshape(-1)
        if pos.ndim != 2 or pos.shape[1] not in (2, 3):
            raise ValueError(f"positions must have shape (N, 2) or (N, 3), got {pos.shape}")
        if pos.shape[0] < 3:
            raise ValueError("shape space needs at least three particles")
        if m.shape[0] != pos.shape[0]:
            raise ValueError("one mass per particle required")
        if np.any(m <= 0) or not np.all(np.isfinite(m)):
            raise ValueError("masses must be positive and finite")
        if not np.all(np.isfinite(pos)):
            raise ValueError("positions must be finite")
        pos.setflags(write=False)
        m.setflags(write=False)
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "masses", m)
        if self.moment_of_inertia() <= 0.0:
            raise ZeroInertiaError("all particles coincide")

    @property
    def n_bodies(self) -> int:
        return self.positions.shape[0]

    @property
    def dim(self) -> int:
        return self.positions.shape[1]

    def centre_of_mass(self) -> np.ndarray:
        return self.masses @ self.positions / self.masses.sum()

    def moment_of_inertia(self) -> float:
        """Centre-of-mass moment of inertia sum_i m_i |r_i - r_cm|^2."""
        rel = self.positions - self.masses @ self.positions / self.masses.sum()
        return float(np.sum(self.masses * np.sum(rel * rel, axis=1)))

    def transformed(self, scale=1.0, rotation=None, shift=None) -> "Configuration":
        """Return scale * R x + shift."""
        pos = self.positions
        if rotation is not None:
            pos = pos @ np.asarray(rotation, dtype=float).T
        pos = scale * pos
        if shift is not None:
            pos = pos + np.asarray(shift, dtype=float)
        return Configuration(pos, self.masses)


def jacobi_vectors(positions, masses) -> np.ndarray:
    """Mass-weighted Jacobi vectors, shape (N-1, d).

    rho_k = sqrt(mu_k) (r_k - c_k), c_k the centre of mass of particles 0..k-1
    and mu_k = m_k M_k / (M_k + m_k).  Their squared norms sum to I_cm.
    """
    positions = np.asarray(positions, dtype=float)
    masses = np.asarray(masses, dtype=float)
    out = np.empty(positions.shape[:-2] + (positions.shape[-2] - 1, positions.shape[-1]))
    inner_mass = masses[0]
    inner_com = positions[..., 0, :]
    for k in range(1, masses.shape[0]):
        mu = masses[k] * inner_mass / (inner_mass + masses[k])
        out[..., k - 1, :] = np.sqrt(mu) * (positions[..., k, :] - inner_com)
        inner_com = (inner_mass * inner_com + masses[k] * positions[..., k, :]) / (inner_mass + masses[k])
        inner_mass += masses[k]
    return out


def _three_body_reduced_masses(masses):
    m0, m1, m2 = (float(x) for x in masses)
    m01 = m0 + m1
    mu1 = m0 * m1 / m01
    mu2 = m01 * m2 / (m01 + m2)
    return m0, m1, m2, m01, mu1, mu2


def positions_from_jacobi(rho1, rho2, masses) -> np.ndarray:
    """Inverse of :func:`jacobi_vectors` for three bodies, centre of mass at the origin."""
    m0, m1, m2, m01, mu1, mu2 = _three_body_reduced_masses(masses)
    e = np.asarray(rho1) / np.sqrt(mu1)
    d = np.asarray(rho2) / np.sqrt(mu2)
    total = m01 + m2
    c01 = -m2 * d / total
    r0 = c01 - (m1 / m01) * e
    r1 = c01 + (m0 / m01) * e
    r2 = c01 + d
    return np.stack([r0, r1, r2], axis=-2)


def pair_separation_coefficients(masses):
    """Return [(i, j, c, a)] with |r_i - r_j|^2 = c + a . n on the I_cm = 1 slice."""
    m0, m1, m2, m01, mu1, mu2 = _three_body_reduced_masses(masses)
    # r_j - r_i = alpha rho1 + beta rho2
    combos = [
        (0, 1, 1.0 / np.sqrt(mu1), 0.0),
        (0, 2, (m1 / m01) / np.sqrt(mu1), 1.0 / np.sqrt(mu2)),
        (1, 2, -(m0 / m01) / np.sqrt(mu1), 1.0 / np.sqrt(mu2)),
    ]
    out = []
    for i, j, a, b in combos:
        c = 0.5 * (a * a + b * b)
        vec = np.array([0.5 * (a * a - b * b), a * b, 0.0])
        out.append((i, j, c, vec))
    return out


def hopf_point(rho1, rho2) -> np.ndarray:
    """Unit shape vector of planar Jacobi vectors (arrays broadcast over leading axes)."""
    rho1 = np.asarray(rho1, dtype=float)
    rho2 = np.asarray(rho2, dtype=float)
    a = np.sum(rho1 * rho1, axis=-1)
    b = np.sum(rho2 * rho2, axis=-1)
    dot = np.sum(rho1 * rho2, axis=-1)
    cross = rho1[..., 0] * rho2[..., 1] - rho1[..., 1] * rho2[..., 0]
    inertia = a + b
    return np.stack([a - b, 2.0 * dot, 2.0 * cross], axis=-1) / inertia[..., None]


def hopf_velocity(rho1, rho2, drho1, drho2) -> np.ndarray:
    """Time derivative of :func:`hopf_point` along (drho1, drho2)."""
    rho1, rho2, drho1, drho2 = (np.asarray(x, dtype=float) for x in (rho1, rho2, drho1, drho2))
    a = np.sum(rho1 * rho1, axis=-1)
    b = np.sum(rho2 * rho2, axis=-1)
    inertia = a + b
    raw = np.stack(
        [a - b, 2.0 * np.sum(rho1 * rho2, axis=-1),
         2.0 * (rho1[..., 0] * rho2[..., 1] - rho1[..., 1] * rho2[..., 0])],
        axis=-1,
    )
    da = 2.0 * np.sum(rho1 * drho1, axis=-1)
    db = 2.0 * np.sum(rho2 * drho2, axis=-1)
    draw = np.stack(
        [da - db,
         2.0 * (np.sum(drho1 * rho2, axis=-1) + np.sum(rho1 * drho2, axis=-1)),
         2.0 * (drho1[..., 0] * rho2[..., 1] - drho1[..., 1] * rho2[..., 0]
                + rho1[..., 0] * drho2[..., 1] - rho1[..., 1] * drho2[..., 0])],
        axis=-1,
    )
    dinertia = da + db
    return draw / inertia[..., None] - raw * (dinertia / inertia**2)[..., None]


def representative_positions(n, masses) -> np.ndarray:
    """Gauge-fixed planar positions for unit shape vector(s) n.

    Centre of mass at the origin, I_cm = 1, and the longer Jacobi vector
    (rho1 when n_x >= 0, rho2 otherwise) along the positive x axis.
    """
    n = np.asarray(n, dtype=float)
    nx, ny, nz = n[..., 0], n[..., 1], n[..., 2]
    w = 0.5 * (ny + 1j * nz)  # conj(z1) z2
    first = nx >= 0.0
    with np.errstate(divide="ignore", invalid="ignore"):
        a1 = np.sqrt(np.clip(0.5 * (1.0 + nx), 0.0, None))
        a2 = np.sqrt(np.clip(0.5 * (1.0 - nx), 0.0, None))
        z1 = np.where(first, a1 + 0j, np.conj(w) / np.where(first, 1.0, a2))
        z2 = np.where(first, w / np.where(first, a1, 1.0), a2 + 0j)
    rho1 = np.stack([z1.real, z1.imag], axis=-1)
    rho2 = np.stack([z2.real, z2.imag], axis=-1)
    return positions_from_jacobi(rho1, rho2, masses)


# --------------------------------------------------------------------------- charts


def chart_coords(n, chart="std") -> np.ndarray:
    """(colatitude, longitude) of unit vector(s) n in the named chart."""
    m = np.asarray(n, dtype=float) @ CHART_FRAMES[chart].T
    theta = np.arctan2(np.hypot(m[..., 0], m[..., 1]), m[..., 2])
    lon = np.mod(np.arctan2(m[..., 1], m[..., 0]), 2.0 * np.pi)
    return np.stack([theta, lon], axis=-1)


def chart_embedding(coords, chart="std") -> np.ndarray:
    coords = np.asarray(coords, dtype=float)
    theta, lon = coords[..., 0], coords[..., 1]
    m = np.stack([np.sin(theta) * np.cos(lon), np.sin(theta) * np.sin(lon), np.cos(theta)], axis=-1)
    return m @ CHART_FRAMES[chart]


def chart_frame(coords, chart="std"):
    """Unit vectors (e_theta, e_lon) of the chart at ``coords``, in the standard frame."""
    theta, lon = float(coords[0]), float(coords[1])
    e_theta = np.array([np.cos(theta) * np.cos(lon), np.cos(theta) * np.sin(lon), -np.sin(theta)])
    e_lon = np.array([-np.sin(lon), np.cos(lon), 0.0])
    frame = CHART_FRAMES[chart]
    return e_theta @ frame, e_lon @ frame


def chart_jacobian(coords, chart="std") -> np.ndarray:
    """Rows dn/dtheta and dn/dlon (standard frame), shape (2, 3)."""
    e_theta, e_lon = chart_frame(coords, chart)
    return np.stack([e_theta, np.sin(coords[0]) * e_lon])


def preferred_chart(n) -> str:
    """Chart in which n is farthest from a coordinate pole."""
    n = np.asarray(n, dtype=float)
    return "std" if abs(n[2]) <= abs(n[1]) else "rot"


def geodesic_distance(n1, n2):
    """Distance on the radius-1/2 shape sphere between unit vectors."""
    n1 = np.asarray(n1, dtype=float)
    n2 = np.asarray(n2, dtype=float)
    cross = np.linalg.norm(np.cross(n1, n2), axis=-1)
    dot = np.sum(n1 * n2, axis=-1)
    return SPHERE_RADIUS * np.arctan2(cross, dot)


# --------------------------------------------------------------------------- types


@dataclass(frozen=True, eq=False)
class ShapePoint:
    """A point of shape space.

    For three bodies in the plane ``chart`` is ``"std"`` or ``"rot"`` and
    ``coords`` are (colatitude, longitude).  For other N the chart is
    ``"planar-gauge"`` or ``"spatial-gauge"`` and ``coords`` is the flattened
    gauge-fixed representative.
    """

    chart: str
    coords: np.ndarray
    representative: Optional[Configuration] = None

    def __post_init__(self):
        coords = np.array(self.coords, dtype=float).reshape(-1)
        if self.chart in CHART_FRAMES:
            if coords.shape != (2,):
                raise ValueError("sphere charts take two coordinates")
            theta, lon = coords
            if not (-1e-12 <= theta <= np.pi + 1e-12):
                raise ValueError(f"colatitude {theta} outside [0, pi]")
            coords = np.array([min(max(theta, 0.0), np.pi), np.mod(lon, 2.0 * np.pi)])
        elif self.chart not in ("planar-gauge", "spatial-gauge"):
            raise ValueError(f"unknown chart {self.chart!r}")
        coords.setflags(write=False)
        object.__setattr__(self, "coords", coords)

    @classmethod
    def from_embedding(cls, n, chart="std", masses=None) -> "ShapePoint":
        n = np.asarray(n, dtype=float)
        n = n / np.linalg.norm(n)
        rep = None
        if masses is not None:
            rep = Configuration(representative_positions(n, masses), masses)
        return cls(chart, chart_coords(n, chart), rep)

    @property
    def on_sphere(self) -> bool:
        return self.chart in CHART_FRAMES

    @property
    def embedding(self) -> np.ndarray:
        """Unit vector n; the shape sphere itself is n / 2."""
        if not self.on_sphere:
            raise ValueError(f"chart {self.chart!r} has no sphere embedding")
        return chart_embedding(self.coords, self.chart)

    def in_chart(self, chart: str) -> "ShapePoint":
        if chart == self.chart:
            return self
        return ShapePoint(chart, chart_coords(self.embedding, chart), self.representative)

    def distance(self, other: "ShapePoint") -> float:
        if self.on_sphere and other.on_sphere:
            return float(geodesic_distance(self.embedding, other.embedding))
        return float(np.linalg.norm(self.coords - other.coords))


@dataclass(frozen=True)
class ShapeMetric:
    """Kinematic metric of the shape sphere in a chart.

    Mass-weighted Jacobi coordinates make the quotient metric the round
    metric of radius 1/2 for every choice of masses; ``masses`` is kept for
    bookkeeping and for building potentials on the same chart.
    """

    masses: tuple = (1.0, 1.0, 1.0)
    chart: str = "std"
    radius: float = SPHERE_RADIUS

    def g(self, coords) -> np.ndarray:
        s = np.sin(coords[0])
        return self.radius**2 * np.diag([1.0, s * s])

    def inverse(self, coords) -> np.ndarray:
        s = np.sin(coords[0])
        return np.diag([1.0, 1.0 / (s * s)]) / self.radius**2

    def g_derivative(self, coords) -> np.ndarray:
        """d g_ab / d q^c indexed [c, a, b]."""
        out = np.zeros((2, 2, 2))
        out[0, 1, 1] = self.radius**2 * np.sin(2.0 * coords[0])
        return out

    def inverse_derivative(self, coords) -> np.ndarray:
        """d g^ab / d q^c indexed [c, a, b]."""
        out = np.zeros((2, 2, 2))
        s = np.sin(coords[0])
        out[0, 1, 1] = -2.0 * np.cos(coords[0]) / (s**3 * self.radius**2)
        return out

    def volume(self) -> float:
        return 4.0 * np.pi * self.radius**2


@dataclass(frozen=True)
class Direction:
    """Angle of a unit tangent measured from d/dtheta toward d/dlon."""

    angle: float
    chart: str = "std"

    def __post_init__(self):
        object.__setattr__(self, "angle", float(np.angle(np.exp(1j * self.angle))))


# --------------------------------------------------------------------------- projection


def _rotation_to_x(vec):
    """2x2 rotation taking the planar vector ``vec`` onto the positive x axis."""
    c, s = vec / np.linalg.norm(vec)
    return np.array([[c, s], [-s, c]])


def project(config: Configuration) -> ShapePoint:
    """Quotient a configuration by translations, rotations and dilatations."""
    pos = config.positions - config.centre_of_mass()
    inertia = config.moment_of_inertia()
    pos = pos / np.sqrt(inertia)
    masses = config.masses
    if config.n_bodies == 3:
        rho = jacobi_vectors(pos, masses)
        if config.dim == 2:
            n = hopf_point(rho[0], rho[1])
        else:
            a, b = rho[0] @ rho[0], rho[1] @ rho[1]
            area = np.linalg.norm(np.cross(rho[0], rho[1]))
            # a mirror image is a rotation in three dimensions
            n = np.array([a - b, 2.0 * rho[0] @ rho[1], 2.0 * area]) / (a + b)
        n = n / np.linalg.norm(n)
        rep = Configuration(representative_positions(n, masses), masses)
        return ShapePoint("std", chart_coords(n, "std"), rep)
    if config.dim == 2:
        rho = jacobi_vectors(pos, masses)
        norms = np.einsum("ij,ij->i", rho, rho)
        k = int(np.argmax(norms > 1e-12))
        rot = _rotation_to_x(rho[k])
        rep = Configuration(pos @ rot.T, masses)
        return ShapePoint("planar-gauge", rep.positions.reshape(-1), rep)
    tensor = np.einsum("i,ij,ik->jk", masses, pos, pos)
    _, vecs = np.linalg.eigh(tensor)
    axes = vecs[:, ::-1].T.copy()
    for a in range(2):
        proj = pos @ axes[a]
        skew = np.sum(masses * proj**3)
        if abs(skew) < 1e-12:
            skew = proj[np.argmax(np.abs(proj) > 1e-12)]
        if skew < 0:
            axes[a] = -axes[a]
    axes[2] = np.cross(axes[0], axes[1])
    rep = Configuration(pos @ axes.T, masses)
    return ShapePoint("spatial-gauge", rep.positions.reshape(-1), rep)


# --------------------------------------------------------------------------- tangent algebra


def tangent_components(coords, angle, metric: ShapeMetric = ShapeMetric()):
    """Contravariant u^a and covariant u_a of the unit tangent with direction ``angle``."""
    gd = np.diag(metric.g(coords))
    h = np.sqrt(gd)
    up = np.array([np.cos(angle) / h[0], np.sin(angle) / h[1]])
    return up, gd * up


def tangent_vector(coords, chart, angle) -> np.ndarray:
    """Unit tangent on the unit sphere (standard frame) for a chart direction angle."""
    e_theta, e_lon = chart_frame(coords, chart)
    return np.cos(angle) * e_theta + np.sin(angle) * e_lon


def direction_from_vector(coords, chart, vec) -> float:
    """Chart direction angle of a tangent vector given in the standard frame."""
    e_theta, e_lon = chart_frame(coords, chart)
    return float(np.arctan2(vec @ e_lon, vec @ e_theta))


def direction_angle(coords, u_cov, metric: ShapeMetric = ShapeMetric()) -> float:
    """The direction function: angle of a covector, homogeneous of degree zero."""
    h = np.sqrt(np.diag(metric.g(coords)))
    return float(np.arctan2(u_cov[1] / h[1], u_cov[0] / h[0]))


def direction_partials(coords, u_cov, metric: ShapeMetric = ShapeMetric()):
    """Partial derivatives of :func:`direction_angle` with respect to q^a and u_a.

    The metric is diagonal in both charts; the direction is
    atan2(u_lon / h_lon, u_theta / h_theta) with h_a = sqrt(g_aa).
    """
    gd = np.diag(metric.g(coords))
    dg = metric.g_derivative(coords)
    h = np.sqrt(gd)
    x = u_cov[0] / h[0]
    y = u_cov[1] / h[1]
    norm2 = x * x + y * y
    d_u = np.array([-y / h[0], x / h[1]]) / norm2
    d_q = np.empty(2)
    for c in range(2):
        dx = -0.5 * x * dg[c, 0, 0] / gd[0]
        dy = -0.5 * y * dg[c, 1, 1] / gd[1]
        d_q[c] = (x * dy - y * dx) / norm2
    return d_q, d_u


def unit_tangent(q: ShapePoint, p, metric: Optional[ShapeMetric] = None) -> Direction:
    """Direction of u^a = g^ab p_b / sqrt(g^cd p_c p_d) for a shape momentum covector p."""
    metric = metric or ShapeMetric(chart=q.chart)
    p = np.asarray(p, dtype=float)
    ginv = metric.inverse(q.coords)
    norm2 = p @ ginv @ p
    if not norm2 > 0.0 or not np.isfinite(norm2):
        raise UndefinedDirectionError("shape momentum vanishes; direction undefined")
    return Direction(direction_angle(q.coords, p / np.sqrt(norm2), metric), q.chart)


def arc_length_element(q: ShapePoint, dq, metric: Optional[ShapeMetric] = None) -> float:
    """ds = sqrt(g_ab dq^a dq^b)."""
    metric = metric or ShapeMetric(chart=q.chart)
    dq = np.asarray(dq, dtype=float)
    return float(np.sqrt(max(dq @ metric.g(q.coords) @ dq, 0.0)))
