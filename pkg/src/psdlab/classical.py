"""Classical equation of state of an unparametrized curve on the shape sphere.

The state is a shape point q, a direction angle phi of the unit tangent and
the scalar kappa measuring deviation from geodesic motion.  Per unit
shape arc-length s

    dq^a   = u^a(phi)
    dphi   = dPhi/dq^a u^a - dPhi/du_a (1/2 g^bc_,a u_b u_c + V_,a / kappa)
    dkappa = -2 u^a V_,a + gamma * branch * kappa * sqrt(-(1 + 2 V / kappa))

where ``branch`` is the sign of the dilatational momentum.  For integration
the pair (kappa, branch) is traded for the signed root
w = branch * sqrt(-(1 + 2V/kappa)), in which the turning point of the scale
(w = 0) is a regular point:

    kappa = -2 V / (1 + w^2),   dw = -(1 + w^2) (gamma + w u^a V_,a / V) / 2.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp

from .complexity import complexity_on_sphere
from .errors import BranchDomainError, SingularPotentialError
from .shape_space import (
    CHART_SWITCH_SIN,
    Direction,
    ShapeMetric,
    ShapePoint,
    chart_coords,
    chart_embedding,
    chart_jacobian,
    direction_from_vector,
    direction_partials,
    pair_separation_coefficients,
    preferred_chart,
    tangent_components,
    tangent_vector,
)
from .trajectory import TrajectoryRecord

ROOT_TOLERANCE = 1e-9
COLLISION_R2 = 1e-8


class ShapePotential:
    """Scale-free Newtonian potential V(n) = -sum m_i m_j / sqrt(r_ij^2 + softening^2).

    Separations are those of the I_cm = 1 representative, so the Newtonian
    potential of a configuration of scale R is R^gamma V(n) with gamma = -1.
    ``softening`` > 0 removes the collision singularities (used for fields).
    """

    def __init__(self, masses=(1.0, 1.0, 1.0), softening=0.0, gamma=-1.0):
        self.masses = tuple(float(m) for m in masses)
        if len(self.masses) != 3:
            raise ValueError("the shape-sphere potential is defined for three bodies")
        if gamma != -1.0:
            raise ValueError("only the gravitational homogeneity degree gamma = -1 is supported")
        self.softening = float(softening)
        self.gamma = float(gamma)
        self._pairs = [
            (self.masses[i] * self.masses[j], c, a) for i, j, c, a in pair_separation_coefficients(self.masses)
        ]

    def __repr__(self):
        return f"ShapePotential(masses={self.masses}, softening={self.softening})"

    def separations_squared(self, n):
        n = np.asarray(n, dtype=float)
        return np.stack([c + n @ a for _, c, a in self._pairs], axis=-1)

    def value(self, n):
        n = np.asarray(n, dtype=float)
        total = 0.0
        eps2 = self.softening**2
        for mm, c, a in self._pairs:
            r2 = c + n @ a
            if eps2 == 0.0 and np.any(r2 <= 1e-28):
                raise SingularPotentialError("collision shape")
            total = total - mm / np.sqrt(r2 + eps2)
        return total

    def gradient(self, n):
        """Ambient gradient dV/dn (its tangential part is the sphere gradient)."""
        n = np.asarray(n, dtype=float)
        eps2 = self.softening**2
        grad = np.zeros(n.shape)
        for mm, c, a in self._pairs:
            r2 = c + n @ a
            if eps2 == 0.0 and np.any(r2 <= 1e-28):
                raise SingularPotentialError("collision shape")
            grad = grad + 0.5 * mm * np.multiply.outer((r2 + eps2) ** -1.5, a)
        return grad

    def chart_value(self, coords, chart="std"):
        """(V, V_,a) in the chart."""
        n = chart_embedding(coords, chart)
        return float(self.value(n)), chart_jacobian(coords, chart) @ self.gradient(n)

    def min_separation_squared(self, n):
        return float(np.min(self.separations_squared(n)))


class ConstantPotential:
    """V = constant: curves are geodesics of the shape sphere."""

    def __init__(self, value=-1.0, masses=(1.0, 1.0, 1.0)):
        self.constant = float(value)
        self.masses = tuple(float(m) for m in masses)
        self.softening = 0.0
        self.gamma = -1.0

    def value(self, n):
        n = np.asarray(n, dtype=float)
        return np.full(n.shape[:-1], self.constant) if n.ndim > 1 else self.constant

    def gradient(self, n):
        return np.zeros(np.shape(n))

    def chart_value(self, coords, chart="std"):
        return self.constant, np.zeros(2)

    def min_separation_squared(self, n):
        return np.inf


@dataclass(frozen=True)
class CurveState:
    q: ShapePoint
    phi: Direction
    kappa: float
    branch: int = 1

    def __post_init__(self):
        if not (self.kappa > 0 and np.isfinite(self.kappa)):
            raise ValueError(f"kappa must be positive, got {self.kappa}")
        if self.branch not in (1, -1):
            raise ValueError("branch must be +1 or -1")
        if self.phi.chart != self.q.chart:
            raise ValueError("direction and point must use the same chart")

    @property
    def point(self):
        return self.q.embedding

    @property
    def tangent(self):
        return tangent_vector(self.q.coords, self.q.chart, self.phi.angle)

    def in_chart(self, chart):
        if chart == self.q.chart:
            return self
        q = self.q.in_chart(chart)
        angle = direction_from_vector(q.coords, chart, self.tangent)
        return CurveState(q, Direction(angle, chart), self.kappa, self.branch)

    @classmethod
    def from_vectors(cls, n, tangent, kappa, branch=1, chart=None):
        n = np.asarray(n, dtype=float)
        n = n / np.linalg.norm(n)
        chart = chart or preferred_chart(n)
        coords = chart_coords(n, chart)
        angle = direction_from_vector(coords, chart, np.asarray(tangent, dtype=float))
        return cls(ShapePoint(chart, coords), Direction(angle, chart), float(kappa), int(branch))


@dataclass(frozen=True)
class CurveIncrement:
    dq: np.ndarray
    dphi: float
    dkappa: float


def direction_rate(coords, angle, kappa, potential_gradient, metric):
    """dphi per unit arc-length for a given chart gradient of the potential."""
    up, ucov = tangent_components(coords, angle, metric)
    d_q, d_u = direction_partials(coords, ucov, metric)
    dginv = metric.inverse_derivative(coords)
    force = 0.5 * np.einsum("abc,b,c->a", dginv, ucov, ucov) + potential_gradient / kappa
    return up, float(d_q @ up - d_u @ force)


def root_argument(kappa, value):
    return -(1.0 + 2.0 * value / kappa)


def classical_rhs(state: CurveState, pot) -> CurveIncrement:
    """Increments (dq^a, dphi, dkappa) per unit arc-length."""
    coords = state.q.coords
    metric = ShapeMetric(pot.masses, state.q.chart)
    value, grad = pot.chart_value(coords, state.q.chart)
    up, dphi = direction_rate(coords, state.phi.angle, state.kappa, grad, metric)
    arg = root_argument(state.kappa, value)
    if arg < -ROOT_TOLERANCE:
        raise BranchDomainError(f"root argument {arg:.3e} is negative")
    dkappa = -2.0 * up @ grad + pot.gamma * state.branch * state.kappa * np.sqrt(max(arg, 0.0))
    return CurveIncrement(up, dphi, float(dkappa))


# --------------------------------------------------------------------------- integration


@dataclass(frozen=True)
class IntegrationOptions:
    rtol: float = 1e-9
    atol: float = 1e-12
    samples: int = 201
    max_step: float = np.inf
    method: str = "DOP853"
    chart_switch: float = CHART_SWITCH_SIN
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if not (self.rtol > 0 and self.atol > 0):
            raise ValueError("tolerances must be positive")
        if self.samples < 1:
            raise ValueError("at least one sample is required")
        if not (0.0 < self.chart_switch < 0.7):
            raise ValueError("chart_switch must lie in (0, 0.7)")


def _w_from_kappa(kappa, value, branch):
    arg = root_argument(kappa, value)
    if arg < -ROOT_TOLERANCE:
        raise BranchDomainError(f"root argument {arg:.3e} is negative")
    return branch * np.sqrt(max(arg, 0.0))


def classical_vector_field(pot, chart):
    """f(s, y) for y = (theta, lon, phi, w) in the given chart."""
    metric = ShapeMetric(pot.masses, chart)

    def rhs(_s, y):
        coords = y[:2]
        value, grad = pot.chart_value(coords, chart)
        w = y[3]
        kappa = -2.0 * value / (1.0 + w * w)
        up, dphi = direction_rate(coords, y[2], kappa, grad, metric)
        dw = -0.5 * (1.0 + w * w) * (pot.gamma + w * (up @ grad) / value)
        return np.array([up[0], up[1], dphi, dw])

    return rhs


def drive_curve(make_rhs, y0, chart, arclen, opts, convert, extra_events=()):
    """Integrate a chart-based curve system through chart switches.

    ``make_rhs(chart)`` returns the vector field, ``convert(y, old, new)``
    moves a state between charts.  Returns (s samples, list of (y, chart)),
    status and message.
    """
    grid = np.linspace(0.0, arclen, opts.samples) if arclen > 0 else np.array([0.0])
    out_s, out_y = [0.0], [(np.array(y0, dtype=float), chart)]
    if arclen <= 0:
        return grid[:1], out_y, "complete", ""
    s0, y = 0.0, np.array(y0, dtype=float)
    status, message = "complete", ""
    switches = 0

    def pole_event(_s, yy):
        return np.sin(yy[0]) - opts.chart_switch

    pole_event.terminal = True
    pole_event.direction = -1

    while s0 < arclen and switches < 10000:
        rhs = make_rhs(chart)
        events = [pole_event] + [ev(chart) for ev in extra_events]
        t_eval = grid[(grid > s0) & (grid <= arclen)]
        try:
            sol = solve_ivp(
                rhs, (s0, arclen), y, method=opts.method, rtol=opts.rtol, atol=opts.atol,
                max_step=opts.max_step, t_eval=t_eval, events=events, dense_output=False,
            )
        except (SingularPotentialError, BranchDomainError, FloatingPointError, ValueError) as exc:
            status, message = "partial", f"{type(exc).__name__}: {exc}"
            break
        for j, sj in enumerate(sol.t):
            out_s.append(float(sj))
            out_y.append((sol.y[:, j].copy(), chart))
        if sol.status == -1:
            status, message = "partial", f"integrator failure: {sol.message}"
            break
        if sol.status == 1:
            fired = [i for i, te in enumerate(sol.t_events) if len(te)]
            i = fired[0]
            s0 = float(sol.t_events[i][0])
            y = sol.y_events[i][0].copy()
            if i == 0:
                new_chart = "rot" if chart == "std" else "std"
                y = convert(y, chart, new_chart)
                chart = new_chart
                switches += 1
                continue
            handler = extra_events[i - 1]
            status, message, y = handler.handle(y, chart, s0)
            if status != "continue":
                break
            status = "complete"
            continue
        break
    return np.array(out_s), out_y, status, message


def convert_chart_state(y, old, new):
    """Move (theta, lon, phi, ...) between charts keeping the point and tangent."""
    coords = y[:2]
    n = chart_embedding(coords, old)
    tangent = tangent_vector(coords, old, y[2])
    new_coords = chart_coords(n, new)
    out = np.array(y, dtype=float)
    out[:2] = new_coords
    out[2] = direction_from_vector(new_coords, new, tangent)
    return out


class _CollisionEvent:
    """Terminal event when the curve nears a collision shape."""

    def __init__(self, pot, threshold=COLLISION_R2):
        self.pot = pot
        self.threshold = threshold

    def __call__(self, chart):
        pot, thr = self.pot, self.threshold

        def event(_s, y):
            return pot.min_separation_squared(chart_embedding(y[:2], chart)) - thr

        event.terminal = True
        event.direction = -1
        return event

    def handle(self, y, chart, s):
        return "partial", f"SingularPotentialError: collision shape reached at s={s:.6g}", y


def safe_complexity(points, masses):
    try:
        return complexity_on_sphere(points, masses)
    except SingularPotentialError:
        out = np.empty(len(points))
        for k, p in enumerate(points):
            try:
                out[k] = complexity_on_sphere(p, masses)[0]
            except SingularPotentialError:
                out[k] = np.inf
        return out


def integrate_classical(initial: CurveState, pot, arclen, opts: IntegrationOptions = None) -> TrajectoryRecord:
    """Integrate the classical equation of state over ``arclen`` of shape arc-length."""
    opts = opts or IntegrationOptions()
    if arclen < 0:
        raise ValueError("arclen must be non-negative")
    state = initial
    value, _ = pot.chart_value(state.q.coords, state.q.chart)
    w0 = _w_from_kappa(state.kappa, value, state.branch)
    y0 = np.array([state.q.coords[0], state.q.coords[1], state.phi.angle, w0])
    events = [] if isinstance(pot, ConstantPotential) or pot.softening > 0 else [_CollisionEvent(pot)]
    s, ys, status, message = drive_curve(
        lambda chart: classical_vector_field(pot, chart), y0, state.q.chart, arclen, opts,
        convert_chart_state, events,
    )
    points = np.array([chart_embedding(y[:2], c) for y, c in ys])
    tangents = np.array([tangent_vector(y[:2], c, y[2]) for y, c in ys])
    values = np.array([float(pot.value(p)) for p in points])
    w = np.array([y[3] for y, _ in ys])
    kappa = -2.0 * values / (1.0 + w * w)
    if isinstance(pot, ConstantPotential) and w0 == 0.0:
        # kappa = -2V is a stationary solution of the kappa equation
        kappa = np.full(len(ys), state.kappa)
        w = np.zeros(len(ys))
    branch = np.where(w < 0, -1.0, 1.0)
    return TrajectoryRecord(
        s=s,
        points=points,
        tangents=tangents,
        kappa=kappa,
        branch=branch,
        potential=values,
        com=safe_complexity(points, pot.masses),
        masses=pot.masses,
        gamma=pot.gamma,
        extra={"root": w},
        status=status,
        message=message,
        meta={"kind": "classical", "softening": pot.softening},
    )


def record_state(record: TrajectoryRecord, index=-1) -> CurveState:
    """Curve state at a sample of a record."""
    return CurveState.from_vectors(
        record.points[index], record.tangents[index], record.kappa[index], int(record.branch[index])
    )
