"""Complexity of N-body configurations, the arrow of time it defines, and Kepler-pair detection."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InsufficientDataError, SingularPotentialError
from .shape_space import Configuration, pair_separation_coefficients

MIN_ARROW_SAMPLES = 100


@dataclass(frozen=True)
class ComplexityRecord:
    com: float
    l_rms: float
    l_mhl: float
    i_cm: float
    v_n: float


def _pair_data(config: Configuration):
    pos = config.positions
    m = config.masses
    i, j = np.triu_indices(len(m), k=1)
    r = np.linalg.norm(pos[i] - pos[j], axis=1)
    if np.any(r <= 1e-300) or np.any(r <= 1e-14 * np.sqrt(config.moment_of_inertia() / m.sum())):
        raise SingularPotentialError("coincident particles")
    return m[i] * m[j], r


def newton_potential(config: Configuration) -> float:
    """V_N = -sum_{i<j} m_i m_j / r_ij with G = 1."""
    mm, r = _pair_data(config)
    return float(-np.sum(mm / r))


def complexity(config: Configuration) -> ComplexityRecord:
    """Com = l_rms / l_mhl, with

    l_rms^2 = sum m_i m_j r_ij^2 / M^2 and 1 / l_mhl = sum m_i m_j / (r_ij M^2).
    """
    mm, r = _pair_data(config)
    total = config.masses.sum()
    l_rms = np.sqrt(np.sum(mm * r * r)) / total
    l_mhl = total**2 / np.sum(mm / r)
    return ComplexityRecord(
        com=float(l_rms / l_mhl),
        l_rms=float(l_rms),
        l_mhl=float(l_mhl),
        i_cm=config.moment_of_inertia(),
        v_n=float(-np.sum(mm / r)),
    )


def complexity_from_potential(config: Configuration) -> float:
    """Com = -sqrt(I_cm) V_N / M^(5/2)."""
    total = config.masses.sum()
    return -np.sqrt(config.moment_of_inertia()) * newton_potential(config) / total**2.5


def complexity_on_sphere(points, masses) -> np.ndarray:
    """Com at unit shape vectors of the planar three-body sphere (vectorized)."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    masses = np.asarray(masses, dtype=float)
    total = masses.sum()
    inv = np.zeros(points.shape[:-1])
    for i, j, c, a in pair_separation_coefficients(masses):
        r2 = c + points @ a
        if np.any(r2 <= 1e-28):
            raise SingularPotentialError("collision shape on the trajectory")
        inv += masses[i] * masses[j] / np.sqrt(r2)
    # I_cm = 1 on the representative, so Com = -V_N / M^(5/2)
    return inv / total**2.5


# --------------------------------------------------------------------------- arrow of time


@dataclass(frozen=True)
class ArrowReport:
    """Verdict of the secular-growth test.

    ``orientation`` is ``"forward"`` when the lower envelope of complexity
    grows along increasing arc-length, ``"backward"`` when it decreases and
    ``"undetermined"`` when the slope is not significant.
    """

    orientation: str
    slope: float
    stderr: float
    significance: float
    windows: int
    envelope_s: tuple
    envelope_com: tuple

    @property
    def determinate(self):
        return self.orientation != "undetermined"


def flip_orientation(orientation):
    return {"forward": "backward", "backward": "forward"}.get(orientation, orientation)


def lower_envelope(param, values, windows):
    """Minimum of ``values`` in ``windows`` equal parameter bins; returns bin centres and minima."""
    lo, hi = float(param.min()), float(param.max())
    edges = np.linspace(lo, hi, windows + 1)
    which = np.clip(np.searchsorted(edges, param, side="right") - 1, 0, windows - 1)
    centres, mins = [], []
    for k in range(windows):
        sel = which == k
        if np.any(sel):
            centres.append(0.5 * (edges[k] + edges[k + 1]))
            mins.append(float(values[sel].min()))
    return np.array(centres), np.array(mins)


def arrow_of_time(trajectory, windows=16, threshold=3.0, flat_tolerance=1e-12) -> ArrowReport:
    """Detect secular growth of the complexity lower envelope."""
    com = np.asarray(trajectory.com, dtype=float)
    if com.size < MIN_ARROW_SAMPLES:
        raise InsufficientDataError(f"arrow of time needs >= {MIN_ARROW_SAMPLES} samples, got {com.size}")
    if windows < 10:
        raise ValueError("at least 10 windows are required")
    s = np.asarray(trajectory.s, dtype=float)
    param = s if np.all(np.diff(s) > 0) else np.arange(com.size, dtype=float)
    x, y = lower_envelope(param, com, windows)
    xm, ym = x.mean(), y.mean()
    sxx = np.sum((x - xm) ** 2)
    slope = float(np.sum((x - xm) * (y - ym)) / sxx)
    resid = y - ym - slope * (x - xm)
    dof = max(len(x) - 2, 1)
    stderr = float(np.sqrt(np.sum(resid**2) / dof / sxx))
    scale = max(np.abs(y).max(), 1e-300) * flat_tolerance / max(x.max() - x.min(), 1e-300)
    if abs(slope) <= scale:
        orientation, signif = "undetermined", 0.0
    else:
        signif = abs(slope) / stderr if stderr > 0 else np.inf
        orientation = ("forward" if slope > 0 else "backward") if signif > threshold else "undetermined"
    return ArrowReport(orientation, slope, stderr, float(signif), len(x), tuple(x), tuple(y))


# --------------------------------------------------------------------------- Kepler pairs


@dataclass(frozen=True)
class KeplerPairReport:
    pair: tuple
    semi_major_axis: float
    eccentricity: float
    isolation: float
    window: tuple
    index: int


def osculating_elements(rel_pos, rel_vel, mu):
    """(semi-major axis, eccentricity) of relative motion under G M = mu (arrays broadcast)."""
    rel_pos = np.asarray(rel_pos, dtype=float)
    rel_vel = np.asarray(rel_vel, dtype=float)
    r = np.linalg.norm(rel_pos, axis=-1)
    v2 = np.sum(rel_vel**2, axis=-1)
    energy = 0.5 * v2 - mu / r
    with np.errstate(divide="ignore"):
        a = -mu / (2.0 * energy)
    rv = np.sum(rel_pos * rel_vel, axis=-1)
    evec = (v2 / mu - 1.0 / r)[..., None] * rel_pos - (rv / mu)[..., None] * rel_vel
    return a, np.linalg.norm(evec, axis=-1)


def isolation_ratio(positions, masses, i, j):
    """Pair separation over the distance from the pair's centre of mass to the nearest other body."""
    positions = np.asarray(positions, dtype=float)
    sep = np.linalg.norm(positions[..., j, :] - positions[..., i, :], axis=-1)
    centre = (masses[i] * positions[..., i, :] + masses[j] * positions[..., j, :]) / (masses[i] + masses[j])
    others = [k for k in range(len(masses)) if k not in (i, j)]
    dist = np.min(
        np.stack([np.linalg.norm(positions[..., k, :] - centre, axis=-1) for k in others], axis=-1), axis=-1
    )
    return sep / dist


def _trailing_run(flags):
    """Start index of the trailing run of True values (len if the last is False)."""
    idx = len(flags)
    while idx > 0 and flags[idx - 1]:
        idx -= 1
    return idx


def detect_kepler_pairs(trajectory, isolation=0.2, drift=0.05, min_samples=20):
    """Pairs that end the record as isolated, bound, slowly drifting Kepler binaries.

    For each pair the trailing window where the pair is isolated and bound is
    found; the pair qualifies when that window holds at least ``min_samples``
    samples and the osculating semi-major axis drifts by less than ``drift``
    (relative) and the eccentricity by less than ``drift`` (absolute).
    Elements are reported at the last sample of the window.
    """
    if trajectory.positions is None or trajectory.velocities is None:
        raise InsufficientDataError("Kepler-pair detection needs configurations and velocities")
    masses = np.asarray(trajectory.masses, dtype=float)
    if len(masses) < 3:
        raise ValueError("Kepler-pair detection needs at least three bodies")
    pos = trajectory.positions
    vel = trajectory.velocities
    s = trajectory.s
    reports = []
    for i in range(len(masses)):
        for j in range(i + 1, len(masses)):
            mu = masses[i] + masses[j]
            a, e = osculating_elements(pos[:, j] - pos[:, i], vel[:, j] - vel[:, i], mu)
            iso = isolation_ratio(pos, masses, i, j)
            ok = (iso < isolation) & (a > 0) & (e < 1.0) & np.isfinite(a)
            start = _trailing_run(ok)
            if len(s) - start < min_samples:
                continue
            wa, we = a[start:], e[start:]
            if (wa.max() - wa.min()) / wa.mean() >= drift or we.max() - we.min() >= drift:
                continue
            reports.append(
                KeplerPairReport(
                    pair=(i, j),
                    semi_major_axis=float(wa[-1]),
                    eccentricity=float(we[-1]),
                    isolation=float(iso[start:].max()),
                    window=(float(s[start]), float(s[-1])),
                    index=len(s) - 1,
                )
            )
    return reports
