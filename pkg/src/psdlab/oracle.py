"""Newtonian three-body oracle projected to the shape sphere.

Planar Newtonian gravity (G = 1) is integrated in time with an explicit
high-order Runge-Kutta method while the shape arc-length s is carried along
through ds/dt = |dn/dt| / 2.  Samples are taken at prescribed values of s by
root-finding on the dense output, which yields the curve in the same
parametrization as the intrinsic integrator.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import brentq

from .classical import CurveState
from .complexity import complexity_on_sphere
from .errors import UndefinedDirectionError
from .shape_space import Configuration, hopf_point, hopf_velocity, jacobi_vectors

GAMMA = -1.0


def accelerations(pos, masses):
    diff = pos[None, :, :] - pos[:, None, :]  # r_j - r_i
    dist3 = np.sum(diff * diff, axis=-1) ** 1.5
    np.fill_diagonal(dist3, np.inf)
    return np.einsum("j,ijk,ij->ik", masses, diff, 1.0 / dist3)


def energy(pos, vel, masses):
    kinetic = 0.5 * np.sum(masses * np.sum(vel * vel, axis=-1))
    i, j = np.triu_indices(len(masses), k=1)
    return kinetic - np.sum(masses[i] * masses[j] / np.linalg.norm(pos[i] - pos[j], axis=-1))


def angular_momentum(pos, vel, masses):
    return float(np.sum(masses * (pos[:, 0] * vel[:, 1] - pos[:, 1] * vel[:, 0])))


def dilatational_momentum(pos, vel, masses):
    com = masses @ pos / masses.sum()
    vcom = masses @ vel / masses.sum()
    return float(np.sum(masses[:, None] * (pos - com) * (vel - vcom)))


def shape_observables(pos, vel, masses):
    """Shape point n, unit tangent, ds/dt, kappa, branch and scale of planar Newtonian data."""
    masses = np.asarray(masses, dtype=float)
    com = masses @ pos / masses.sum()
    vcom = masses @ vel / masses.sum()
    rho = jacobi_vectors(pos - com, masses)
    drho = jacobi_vectors(vel - vcom, masses)
    n = hopf_point(rho[0], rho[1])
    dn = hopf_velocity(rho[0], rho[1], drho[0], drho[1])
    speed = 0.5 * np.linalg.norm(dn)
    scale = np.sqrt(np.sum(rho * rho))
    # |v_h| = scale * ds/dt; kappa = |v_h|^2 scale^(-gamma)
    kappa = (scale * speed) ** 2 * scale ** (-GAMMA)
    tangent = dn / np.linalg.norm(dn) if speed > 0 else np.full(3, np.nan)
    branch = 1 if dilatational_momentum(pos, vel, masses) >= 0 else -1
    return n, tangent, speed, kappa, branch, scale


def curve_state_from_newton(positions, velocities, masses) -> CurveState:
    """Initial curve state matching planar Newtonian data."""
    pos = np.asarray(positions, dtype=float)
    vel = np.asarray(velocities, dtype=float)
    n, tangent, speed, kappa, branch, _ = shape_observables(pos, vel, masses)
    if not speed > 0:
        raise UndefinedDirectionError("the shape does not change: zero shape momentum")
    return CurveState.from_vectors(n, tangent, kappa, branch)


@dataclass
class OracleResult:
    times: np.ndarray
    positions: np.ndarray
    velocities: np.ndarray
    record: object
    energy_drift: float
    status: str
    message: str


def _flat(pos, vel, s):
    return np.concatenate([pos.ravel(), vel.ravel(), [s]])


def newtonian_oracle(config: Configuration, velocities, t_span=None, arclen=None, samples=201,
                     rtol=1e-12, atol=1e-14, collision_ratio=1e-3, max_time=1e4):
    """Integrate planar Newtonian gravity and project to the shape sphere.

    Exactly one of ``t_span`` (a time horizon) or ``arclen`` (a shape
    arc-length horizon) selects the stopping rule.  Samples are uniform in
    shape arc-length (``arclen``) or in time (``t_span``).  A near collision
    (pair distance below ``collision_ratio`` times the scale) stops the run
    and returns the partial data.
    """
    if (t_span is None) == (arclen is None):
        raise ValueError("give exactly one of t_span or arclen")
    masses = np.asarray(config.masses, dtype=float)
    if config.dim != 2 or config.n_bodies != 3:
        raise ValueError("the oracle integrates planar three-body data")
    pos0 = config.positions - config.centre_of_mass()
    vel0 = np.asarray(velocities, dtype=float)
    vel0 = vel0 - masses @ vel0 / masses.sum()
    nb = len(masses)

    def rhs(_t, y):
        pos = y[: 2 * nb].reshape(nb, 2)
        vel = y[2 * nb: 4 * nb].reshape(nb, 2)
        acc = accelerations(pos, masses)
        rho = jacobi_vectors(pos, masses)
        drho = jacobi_vectors(vel, masses)
        dn = hopf_velocity(rho[0], rho[1], drho[0], drho[1])
        return np.concatenate([vel.ravel(), acc.ravel(), [0.5 * np.linalg.norm(dn)]])

    def collision(_t, y):
        pos = y[: 2 * nb].reshape(nb, 2)
        i, j = np.triu_indices(nb, k=1)
        dmin = np.min(np.linalg.norm(pos[i] - pos[j], axis=-1))
        scale = np.sqrt(np.sum(masses * np.sum(pos * pos, axis=-1)) / masses.sum())
        return dmin - collision_ratio * scale

    collision.terminal = True
    collision.direction = -1
    events = [collision]
    if arclen is not None:
        def reached(_t, y):
            return y[-1] - arclen

        reached.terminal = True
        reached.direction = 1
        events.append(reached)
        horizon = (0.0, max_time)
    else:
        horizon = (float(t_span[0]), float(t_span[1])) if np.ndim(t_span) else (0.0, float(t_span))
    y0 = _flat(pos0, vel0, 0.0)
    sol = solve_ivp(rhs, horizon, y0, method="DOP853", rtol=rtol, atol=atol, dense_output=True, events=events)
    status, message = "complete", ""
    t_end = sol.t[-1]
    if len(sol.t_events[0]):
        status, message = "partial", f"SingularPotentialError: near collision at t={sol.t_events[0][0]:.6g}"
    elif sol.status == -1:
        status, message = "partial", f"integrator failure: {sol.message}"
    elif arclen is not None and not len(sol.t_events[1]):
        status, message = "partial", "time horizon exhausted before the arc-length target"

    if arclen is not None:
        s_end = sol.sol(t_end)[-1] if status != "complete" else arclen
        s_grid = np.linspace(0.0, arclen, samples) if arclen > 0 else np.array([0.0])
        s_grid = s_grid[s_grid <= s_end + 1e-15]
        times = [horizon[0]]
        for sk in s_grid[1:]:
            lo = times[-1]
            f = lambda t: sol.sol(t)[-1] - sk
            if f(t_end) <= 0.0:
                times.append(t_end)
            else:
                times.append(brentq(f, lo, t_end, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=200))
        times = np.array(times)
    else:
        times = np.linspace(horizon[0], t_end, samples)
    states = sol.sol(times).T if len(times) > 1 else y0[None, :]
    pos = states[:, : 2 * nb].reshape(-1, nb, 2)
    vel = states[:, 2 * nb: 4 * nb].reshape(-1, nb, 2)
    s_vals = states[:, -1].copy()
    if arclen is not None:
        s_vals = s_grid[: len(times)]
        s_vals[0] = 0.0

    obs = [shape_observables(p, v, masses) for p, v in zip(pos, vel)]
    points = np.array([o[0] for o in obs])
    tangents = np.array([o[1] for o in obs])
    kappa = np.array([o[3] for o in obs])
    branch = np.array([float(o[4]) for o in obs])
    scale = np.array([o[5] for o in obs])
    from .classical import ShapePotential

    pot = ShapePotential(masses)
    values = np.array([pot.value(p) for p in points])
    energies = np.array([energy(p, v, masses) for p, v in zip(pos, vel)])
    drift = float(np.max(np.abs(energies - energies[0])) / max(abs(energies[0]), np.max(np.abs(values / scale))))

    from .trajectory import TrajectoryRecord

    record = TrajectoryRecord(
        s=s_vals,
        points=points,
        tangents=tangents,
        kappa=kappa,
        branch=branch,
        potential=values,
        com=complexity_on_sphere(points, masses),
        masses=tuple(masses),
        gamma=GAMMA,
        extra={"t": times, "scale": scale, "energy": energies},
        positions=pos,
        velocities=vel,
        status=status,
        message=message,
        meta={"kind": "oracle"},
    )
    return OracleResult(times, pos, vel, record, drift, status, message)


def zero_energy_data(positions, velocities, masses, positive_dilatation=True, remove_rotation=True):
    """Adjust velocities to P = 0, optionally J = 0, and E = 0 (and D >= 0 if asked)."""
    masses = np.asarray(masses, dtype=float)
    pos = np.asarray(positions, dtype=float)
    pos = pos - masses @ pos / masses.sum()
    vel = np.asarray(velocities, dtype=float)
    vel = vel - masses @ vel / masses.sum()
    if remove_rotation:
        inertia = np.sum(masses * np.sum(pos * pos, axis=-1))
        omega = angular_momentum(pos, vel, masses) / inertia
        vel = vel - omega * np.stack([-pos[:, 1], pos[:, 0]], axis=-1)
    kinetic = 0.5 * np.sum(masses * np.sum(vel * vel, axis=-1))
    potential = energy(pos, np.zeros_like(vel), masses)
    vel = vel * np.sqrt(-potential / kinetic)
    if positive_dilatation and dilatational_momentum(pos, vel, masses) < 0:
        vel = -vel
    return pos, vel


def random_initial_data(rng, masses=(1.0, 1.0, 1.0), min_separation=0.5, check_arclen=1.0):
    """Random planar data with P = 0, J = 0, E = 0 and D > 0, away from collisions.

    Candidates whose oracle run over ``check_arclen`` nears a collision
    (pair distance below 5% of the scale) are rejected.
    """
    masses = np.asarray(masses, dtype=float)
    for _ in range(1000):
        pos = rng.normal(size=(3, 2))
        vel = rng.normal(size=(3, 2))
        pos, vel = zero_energy_data(pos, vel, masses)
        scale = np.sqrt(np.sum(masses * np.sum(pos * pos, axis=-1)) / masses.sum())
        i, j = np.triu_indices(3, k=1)
        if np.min(np.linalg.norm(pos[i] - pos[j], axis=-1)) < min_separation * scale:
            continue
        if check_arclen:
            res = newtonian_oracle(Configuration(pos, masses), vel, arclen=check_arclen, samples=2,
                                   collision_ratio=0.05, rtol=1e-9, atol=1e-12)
            if res.status != "complete":
                continue
        return pos, vel
    raise RuntimeError("could not draw non-degenerate initial data")
