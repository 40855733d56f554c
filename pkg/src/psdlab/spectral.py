"""Spectral discretization of scalar fields on the shape sphere.

Fields are sampled on a Gauss-Legendre (colatitude) by uniform (longitude)
grid in the standard chart and expanded in orthonormal spherical harmonics
Y_lm of the unit sphere (Condon-Shortley phase, as in scipy).  Coefficients
are stored as complex arrays indexed ``[l, m + lmax]``.

Angular-momentum operators L = -i n x grad act on coefficients exactly; they
give tangent gradients (grad f = -i n x L f) and, combined with products of
point values, exact derivatives of nonlinear expressions at any point.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.special import roots_legendre, sph_legendre_p_all

from .errors import ShapeMismatchError
from .shape_space import SPHERE_RADIUS, ShapeMetric, chart_embedding

DEFAULT_LMAX = 32


def legendre_table(lmax, theta):
    """Normalized associated Legendre values, shape (lmax+1, 2 lmax+1, len(theta)).

    Entry [l, m + lmax] multiplies exp(i m lon) to give Y_lm.
    """
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    raw = sph_legendre_p_all(lmax, lmax, theta)[0]
    # scipy stores negative orders at wrapped indices
    order = np.r_[np.arange(lmax + 1, 2 * lmax + 1), np.arange(0, lmax + 1)]
    return raw[:, order, :]


def degree_mask(lmax):
    l = np.arange(lmax + 1)[:, None]
    m = np.arange(-lmax, lmax + 1)[None, :]
    return np.abs(m) <= l


@dataclass(frozen=True)
class SphereGrid:
    """Quadrature grid resolving spherical harmonics up to degree ``lmax``."""

    lmax: int = DEFAULT_LMAX
    radius: float = SPHERE_RADIUS
    oversample: int = 1

    def __post_init__(self):
        if not (2 <= int(self.lmax) <= 256):
            raise ValueError(f"lmax must lie in [2, 256], got {self.lmax}")
        object.__setattr__(self, "lmax", int(self.lmax))

    @cached_property
    def nlat(self):
        n = (self.lmax + 2) * self.oversample
        return n + (n % 2)  # even count keeps nodes off the collinear equator

    @cached_property
    def nlon(self):
        return (2 * self.lmax + 2) * self.oversample

    @cached_property
    def _gauss(self):
        x, w = roots_legendre(self.nlat)
        return np.arccos(x)[::-1], w[::-1]

    @property
    def theta(self):
        return self._gauss[0]

    @property
    def weights(self):
        """Unit-sphere quadrature weights per node, shape (nlat, nlon)."""
        return np.outer(self._gauss[1], np.full(self.nlon, 2.0 * np.pi / self.nlon))

    @cached_property
    def lon(self):
        return (np.arange(self.nlon) + 0.5) * (2.0 * np.pi / self.nlon)

    @cached_property
    def coords(self):
        """(nlat, nlon, 2) array of (colatitude, longitude)."""
        th, ph = np.meshgrid(self.theta, self.lon, indexing="ij")
        return np.stack([th, ph], axis=-1)

    @cached_property
    def points(self):
        """Unit vectors n of the nodes, shape (nlat, nlon, 3)."""
        return chart_embedding(self.coords, "std")

    @cached_property
    def _plm(self):
        return legendre_table(self.lmax, self.theta)

    @cached_property
    def _phase(self):
        m = np.arange(-self.lmax, self.lmax + 1)
        return np.exp(1j * np.outer(m, self.lon))

    @cached_property
    def mask(self):
        return degree_mask(self.lmax)

    def same_as(self, other) -> bool:
        return (self.lmax, self.radius, self.oversample) == (other.lmax, other.radius, other.oversample)

    def analyse(self, values):
        """Spherical-harmonic coefficients of grid values (complex or real)."""
        values = np.asarray(values)
        if values.shape != (self.nlat, self.nlon):
            raise ShapeMismatchError(f"grid values have shape {values.shape}, expected {(self.nlat, self.nlon)}")
        w = self._gauss[1][:, None] * (2.0 * np.pi / self.nlon)
        fourier = np.einsum("ij,mj->im", values * w, np.conj(self._phase))
        return np.einsum("lmi,im->lm", self._plm, fourier) * self.mask

    def synthesise(self, coeffs):
        coeffs = np.asarray(coeffs)
        if coeffs.shape != self.mask.shape:
            raise ShapeMismatchError(f"coefficients have shape {coeffs.shape}, expected {self.mask.shape}")
        fourier = np.einsum("lmi,lm->im", self._plm, coeffs)
        return fourier @ self._phase

    def integrate(self, values):
        """Integral over the shape sphere (area element of radius ``radius``)."""
        return float(np.sum(np.real(values) * self.weights)) * self.radius**2

    def area(self):
        return 4.0 * np.pi * self.radius**2


# --------------------------------------------------------------------------- coefficient operators


def lm_indices(lmax):
    l = np.arange(lmax + 1)[:, None] * np.ones((1, 2 * lmax + 1), dtype=int)
    m = np.arange(-lmax, lmax + 1)[None, :] * np.ones((lmax + 1, 1), dtype=int)
    return l, m


def unit_laplacian(coeffs):
    """Unit-sphere Laplacian on coefficients: multiply by -l(l+1)."""
    lmax = coeffs.shape[0] - 1
    l = np.arange(lmax + 1)[:, None]
    return -l * (l + 1) * coeffs


def angular_momentum(coeffs):
    """Return (L_x c, L_y c, L_z c) for coefficient array c."""
    lmax = coeffs.shape[0] - 1
    l, m = lm_indices(lmax)
    c = np.asarray(coeffs)
    # (L+ f)_{l,m} = sqrt((l-m+1)(l+m)) c_{l,m-1}
    shifted_down = np.zeros_like(c)
    shifted_down[:, 1:] = c[:, :-1]
    raise_coef = np.sqrt(np.clip((l - m + 1) * (l + m), 0, None))
    lplus = raise_coef * shifted_down
    # (L- f)_{l,m} = sqrt((l+m+1)(l-m)) c_{l,m+1}
    shifted_up = np.zeros_like(c)
    shifted_up[:, :-1] = c[:, 1:]
    lower_coef = np.sqrt(np.clip((l + m + 1) * (l - m), 0, None))
    lminus = lower_coef * shifted_up
    mask = degree_mask(lmax)
    lx = 0.5 * (lplus + lminus) * mask
    ly = (lplus - lminus) / 2j * mask
    lz = m * c
    return np.stack([lx, ly, lz])


def point_basis(lmax, n):
    """Values Y_lm(n), shape (lmax+1, 2 lmax+1), for a single unit vector n."""
    n = np.asarray(n, dtype=float)
    theta = np.arctan2(np.hypot(n[0], n[1]), n[2])
    lon = np.arctan2(n[1], n[0])
    plm = legendre_table(lmax, theta)[..., 0]
    m = np.arange(-lmax, lmax + 1)
    return plm * np.exp(1j * m * lon)[None, :]


def evaluate(coeffs, n, basis=None):
    """Point value of the expansion at unit vector n."""
    if basis is None:
        basis = point_basis(coeffs.shape[0] - 1, n)
    return np.sum(coeffs * basis)


def tangent_gradient(ang_values, n):
    """grad f on the unit sphere from point values of (L_x f, L_y f, L_z f)."""
    return -1j * np.cross(np.asarray(n, dtype=float), ang_values)


# --------------------------------------------------------------------------- fields


@dataclass(frozen=True, eq=False)
class ShapeField:
    """Real scalar field sampled on a :class:`SphereGrid`."""

    grid: SphereGrid
    values: np.ndarray

    def __post_init__(self):
        vals = np.array(self.values, dtype=float)
        if vals.shape != (self.grid.nlat, self.grid.nlon):
            raise ShapeMismatchError(
                f"field values have shape {vals.shape}, grid needs {(self.grid.nlat, self.grid.nlon)}"
            )
        if not np.all(np.isfinite(vals)):
            raise ValueError("field values must be finite")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @classmethod
    def from_function(cls, grid, func):
        """Sample ``func(n)`` with n of shape (nlat, nlon, 3)."""
        return cls(grid, np.broadcast_to(func(grid.points), (grid.nlat, grid.nlon)))

    @classmethod
    def from_coefficients(cls, grid, coeffs):
        return cls(grid, np.real(grid.synthesise(coeffs)))

    @cached_property
    def coefficients(self):
        return self.grid.analyse(self.values)

    def integrate(self):
        return self.grid.integrate(self.values)

    def inner(self, other):
        _check_same(self, other)
        return self.grid.integrate(self.values * other.values)

    def at(self, n):
        return float(np.real(evaluate(self.coefficients, n)))

    def gradient_at(self, n):
        """Unit-sphere tangent gradient (3-vector) at n."""
        basis = point_basis(self.grid.lmax, n)
        ang = np.array([evaluate(c, n, basis) for c in angular_momentum(self.coefficients)])
        return np.real(tangent_gradient(ang, n))

    def gradient_field(self):
        """Unit-sphere tangent gradient at every node, shape (nlat, nlon, 3)."""
        ang = np.stack([self.grid.synthesise(c) for c in angular_momentum(self.coefficients)], axis=-1)
        return np.real(-1j * np.cross(self.grid.points, ang))

    def __add__(self, other):
        _check_same(self, other)
        return ShapeField(self.grid, self.values + other.values)

    def __sub__(self, other):
        _check_same(self, other)
        return ShapeField(self.grid, self.values - other.values)

    def scaled(self, factor):
        return ShapeField(self.grid, factor * self.values)


def _check_same(a, b):
    if not a.grid.same_as(b.grid):
        raise ShapeMismatchError("fields live on different grids")


def laplace_beltrami(field: ShapeField, metric: ShapeMetric = None) -> ShapeField:
    """Laplace-Beltrami operator of the shape-sphere metric (radius from ``metric``)."""
    radius = field.grid.radius if metric is None else metric.radius
    if abs(radius - field.grid.radius) > 1e-15:
        raise ShapeMismatchError("metric radius differs from the field discretization")
    lap = unit_laplacian(field.coefficients) / radius**2
    return ShapeField.from_coefficients(field.grid, lap)


def metric_dot(grad_f, grad_h, radius=SPHERE_RADIUS):
    """g^ab f_a h_b from unit-sphere tangent gradients."""
    return np.sum(grad_f * grad_h, axis=-1) / radius**2


def real_harmonic_coefficients(lmax, l, m):
    """Coefficients of the real spherical harmonic (cos-type for m > 0, sin-type for m < 0)."""
    if not 0 <= abs(m) <= l <= lmax:
        raise ValueError(f"need |m| <= l <= lmax, got l={l}, m={m}, lmax={lmax}")
    coeffs = np.zeros((lmax + 1, 2 * lmax + 1), dtype=complex)
    if m == 0:
        coeffs[l, lmax] = 1.0
    elif m > 0:
        coeffs[l, lmax + m] = 1.0 / np.sqrt(2.0)
        coeffs[l, lmax - m] = (-1) ** m / np.sqrt(2.0)
    else:
        k = -m
        coeffs[l, lmax + k] = 1.0 / (1j * np.sqrt(2.0))
        coeffs[l, lmax - k] = -((-1) ** k) / (1j * np.sqrt(2.0))
    return coeffs


def spherical_harmonic_field(grid, l, m):
    """Real spherical harmonic of degree l sampled on ``grid``."""
    return ShapeField(grid, np.real(grid.synthesise(real_harmonic_coefficients(grid.lmax, l, m))))
