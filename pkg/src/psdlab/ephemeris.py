"""Recovering Newtonian time and scale from a shape-space curve.

With kappa = |v_h|^2 R^(-gamma) (v_h the shape part of the mass-weighted
velocity) and zero total energy, the scale and time obey, per unit shape
arc-length,

    d ln R / ds = branch * sqrt(-(1 + 2 V / kappa))
    dt / ds     = R^((2 - gamma) / 2) / sqrt(kappa)

Both are integrated by cumulative Simpson quadrature on the record's samples.
The scale carries one free multiplicative constant and time an affine
freedom; time runs in the direction picked by the arrow of time.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.integrate import cumulative_simpson

from .complexity import arrow_of_time, flip_orientation
from .errors import InsufficientDataError

ROOT_GAP_TOLERANCE = 1e-8


@dataclass(frozen=True)
class ScaleSeries:
    s: np.ndarray
    scale: np.ndarray
    gaps: tuple  # sample indices where the root argument was negative


@dataclass(frozen=True)
class EphemerisReconstruction:
    """Time and scale along the record's samples.

    ``orientation`` is the arrow verdict used to orient time.  When it is
    ``"undetermined"``, ``time`` follows increasing arc-length and
    ``alternate_time`` gives the opposite orientation.
    """

    s: np.ndarray
    time: np.ndarray
    scale: np.ndarray
    orientation: str
    alternate_time: np.ndarray = None
    gaps: tuple = ()


def _quadrature(s, rate):
    if len(s) < 2:
        return np.zeros(len(s))
    if len(s) == 2:
        return np.array([0.0, 0.5 * (rate[0] + rate[1]) * (s[1] - s[0])])
    return cumulative_simpson(rate, x=s, initial=0.0)


def _log_scale_rate(trajectory):
    kappa = np.asarray(trajectory.kappa, dtype=float)
    value = np.asarray(trajectory.potential, dtype=float)
    arg = -(1.0 + 2.0 * value / kappa)
    gaps = tuple(int(i) for i in np.flatnonzero(arg < -ROOT_GAP_TOLERANCE))
    return np.asarray(trajectory.branch) * np.sqrt(np.clip(arg, 0.0, None)), gaps


def reconstruct_scale(trajectory, initial_scale=1.0) -> ScaleSeries:
    """Scale R(s) from the transport d ln R / ds, starting at ``initial_scale``."""
    if not initial_scale > 0:
        raise ValueError("initial scale must be positive")
    rate, gaps = _log_scale_rate(trajectory)
    s = np.asarray(trajectory.s, dtype=float)
    log_r = _quadrature(s, rate)
    return ScaleSeries(s, initial_scale * np.exp(log_r), gaps)


def reconstruct_time(trajectory, initial_scale=1.0, orientation=None) -> EphemerisReconstruction:
    """Emergent time t(s) (origin at the first sample) and scale.

    ``orientation`` overrides the arrow-of-time verdict when given.
    """
    scale = reconstruct_scale(trajectory, initial_scale)
    kappa = np.asarray(trajectory.kappa, dtype=float)
    gamma = trajectory.gamma
    rate = scale.scale ** ((2.0 - gamma) / 2.0) / np.sqrt(kappa)
    elapsed = _quadrature(scale.s, rate)
    if orientation is None:
        try:
            orientation = arrow_of_time(trajectory).orientation
        except InsufficientDataError:
            orientation = "undetermined"
    if orientation == "backward":
        return EphemerisReconstruction(scale.s, elapsed[-1] - elapsed if len(elapsed) else elapsed,
                                       scale.scale, orientation, None, scale.gaps)
    if orientation == "undetermined":
        warnings.warn("arrow of time undetermined: returning both time orientations", RuntimeWarning)
        alternate = elapsed[-1] - elapsed if len(elapsed) else elapsed
        return EphemerisReconstruction(scale.s, elapsed, scale.scale, orientation, alternate, scale.gaps)
    return EphemerisReconstruction(scale.s, elapsed, scale.scale, orientation, None, scale.gaps)


def reversed_orientation(reconstruction: EphemerisReconstruction) -> str:
    return flip_orientation(reconstruction.orientation)


def affine_error(reconstructed, reference):
    """Relative sup error of the best affine fit reference ~ a * reconstructed + b."""
    x = np.asarray(reconstructed, dtype=float)
    y = np.asarray(reference, dtype=float)
    design = np.column_stack([x, np.ones_like(x)])
    coef, *_ = np.linalg.lstsq(design, y, rcond=None)
    span = np.ptp(y)
    return float(np.max(np.abs(design @ coef - y)) / span) if span > 0 else float(np.max(np.abs(design @ coef - y)))


def ratio_error(reconstructed, reference):
    """Relative spread of reference / reconstructed about its mean."""
    ratio = np.asarray(reference, dtype=float) / np.asarray(reconstructed, dtype=float)
    return float(np.max(np.abs(ratio / ratio.mean() - 1.0)))
