"""Pilot-wave dynamics of a curve on the shape sphere.

A wave function Psi = R exp(iS) on the shape sphere is coupled to a curve
(Q, phi, kappa).  Per unit arc-length the fields obey

    dR = -(g^ab R_,a S_,b + R Delta S / 2) / sqrt(kappa)
    dS = -(g^ab S_,a S_,b / 2 + V_T) / sqrt(kappa),   V_T = V + V_Q,

which together are the Schroedinger equation i dPsi/dtau = (-Delta/2 + V) Psi
in the field time tau with dtau/ds = 1/sqrt(kappa).  The field is therefore
advanced exactly: the Galerkin Hamiltonian in the spherical-harmonic basis is
diagonalized once and Psi(tau) is obtained from its eigen-decomposition.  The
curve sees V_T = V + eps * V_Q through its direction and kappa equations, with
V_Q = -Delta R / (2R) and its gradient evaluated in closed form from
spherical-harmonic coefficients.

Two closures of the kappa line are provided: ``"default"`` continues the
classical branch term with V replaced by V_T; ``"guidance"`` drops it, which
transports p_a = sqrt(kappa) u_a = S_,a exactly when eps = 1.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.linalg import eigh

from .classical import (
    ROOT_TOLERANCE,
    ConstantPotential,
    CurveIncrement,
    IntegrationOptions,
    convert_chart_state,
    direction_rate,
    drive_curve,
    root_argument,
    safe_complexity,
)
from .errors import (
    BranchDomainError,
    DegenerateRateError,
    MultiValuedPhaseError,
    NotProjectableError,
    ShapeMismatchError,
    SingularPotentialError,
    UndefinedDirectionError,
)
from .shape_space import (
    Direction,
    ShapeMetric,
    ShapePoint,
    chart_embedding,
    chart_jacobian,
    direction_angle,
    hopf_velocity,
    jacobi_vectors,
    positions_from_jacobi,
    representative_positions,
    tangent_components,
    tangent_vector,
)
from .spectral import (
    ShapeField,
    SphereGrid,
    angular_momentum,
    legendre_table,
    metric_dot,
    point_basis,
    unit_laplacian,
)
from .trajectory import TrajectoryRecord

KTILDE_CHOICES = ("default", "guidance")
NODE_FLOOR = 1e-12
KAPPA_FLOOR = 1e-10
# hysteresis for the branch-switch event: a root argument resting at zero
# (stationary scale) must not trigger switches on round-off
BRANCH_EVENT_LEVEL = 1e-12


# --------------------------------------------------------------------------- Hamiltonian


def _valid_index(lmax):
    mask = np.abs(np.arange(-lmax, lmax + 1))[None, :] <= np.arange(lmax + 1)[:, None]
    return np.flatnonzero(mask.ravel())


_HAMILTONIAN_CACHE = {}


def potential_matrix(grid: SphereGrid, potential):
    """Galerkin matrix <Y_lm | V | Y_l'm'> on the unit sphere, valid (l, m) pairs only."""
    lmax = grid.lmax
    quad = SphereGrid(lmax, grid.radius, oversample=2)
    values = np.asarray(potential.value(quad.points), dtype=float)
    nlon = quad.nlon
    # vhat[i, k + 2L] = sum_j dlon V_ij exp(-i k lon_j) for k in [-2L, 2L]
    k = np.arange(-2 * lmax, 2 * lmax + 1)
    vhat = (values @ np.exp(-1j * np.outer(quad.lon, k))) * (2.0 * np.pi / nlon)
    plm = legendre_table(lmax, quad.theta) * quad._gauss[1][None, None, :] ** 0.5
    size = 2 * lmax + 1
    block = np.zeros((lmax + 1, size, lmax + 1, size), dtype=complex)
    for a in range(size):
        diff = a - np.arange(size) + 2 * lmax  # index of m - m'
        block[:, a, :, :] = np.einsum("li,pbi,ib->lpb", plm[:, a, :], plm, vhat[:, diff])
    idx = _valid_index(lmax)
    flat = block.reshape((lmax + 1) * size, (lmax + 1) * size)
    return flat[np.ix_(idx, idx)]


def hamiltonian_spectrum(grid: SphereGrid, potential):
    """Eigenvalues and eigenvectors of -Delta/2 + V in the valid coefficient basis (cached)."""
    key = (grid.lmax, grid.radius, _potential_key(potential))
    if key not in _HAMILTONIAN_CACHE:
        idx = _valid_index(grid.lmax)
        l = (idx // (2 * grid.lmax + 1)).astype(float)
        kinetic = 0.5 * l * (l + 1) / grid.radius**2
        if isinstance(potential, ConstantPotential):
            ham = np.diag(kinetic + potential.constant).astype(complex)
        else:
            ham = potential_matrix(grid, potential)
            ham = 0.5 * (ham + ham.conj().T) + np.diag(kinetic)
        energies, vectors = eigh(ham)
        _HAMILTONIAN_CACHE[key] = (energies, vectors)
    return _HAMILTONIAN_CACHE[key]


def _potential_key(potential):
    if isinstance(potential, ConstantPotential):
        return ("constant", potential.constant)
    return ("newton", potential.masses, potential.softening)


class WavePropagator:
    """Exact evolution of spherical-harmonic coefficients under -Delta/2 + V."""

    def __init__(self, grid: SphereGrid, potential, coeffs):
        coeffs = np.asarray(coeffs, dtype=complex)
        if coeffs.shape != grid.mask.shape:
            raise ShapeMismatchError("coefficients do not match the grid resolution")
        self.grid = grid
        self.potential = potential
        self.index = _valid_index(grid.lmax)
        self.energies, self.vectors = hamiltonian_spectrum(grid, potential)
        self.amplitudes = self.vectors.conj().T @ coeffs.ravel()[self.index]

    def coefficients(self, tau):
        flat = np.zeros(self.grid.mask.size, dtype=complex)
        flat[self.index] = self.vectors @ (np.exp(-1j * self.energies * tau) * self.amplitudes)
        return flat.reshape(self.grid.mask.shape)


# --------------------------------------------------------------------------- local quantities


@dataclass(frozen=True)
class LocalWave:
    """Wave-function derived quantities at a point (unit-sphere gradients)."""

    psi: complex
    density: float
    vq: float
    grad_vq: np.ndarray
    grad_phase: np.ndarray
    grad_amplitude: np.ndarray


def _derived(coeffs):
    b = angular_momentum(coeffs)
    d = np.stack([angular_momentum(b[i]) for i in range(3)])  # d[i, j] = L_j L_i psi
    c = unit_laplacian(coeffs)
    e = angular_momentum(c)
    return b, d, c, e


def _vq_from_values(psi, b, c, radius):
    rho = np.abs(psi) ** 2
    lap = 2.0 * np.real(np.conj(psi) * c) + 2.0 * np.sum(np.abs(b) ** 2, axis=0)
    lam = b * np.conj(psi) - psi * np.conj(b)
    gsq = -np.real(np.sum(lam * lam, axis=0))
    return -lap / (4.0 * radius**2 * rho) + gsq / (8.0 * radius**2 * rho**2), rho, lap, lam, gsq


def local_wave(coeffs, n, radius=0.5, floor=0.0) -> LocalWave:
    """Exact V_Q, grad V_Q and grad S at unit vector n from coefficients."""
    n = np.asarray(n, dtype=float)
    basis = point_basis(coeffs.shape[0] - 1, n)
    b_c, d_c, c_c, e_c = _derived(coeffs)

    def ev(arr):
        return np.sum(arr * basis, axis=(-2, -1))

    psi = np.sum(coeffs * basis)
    b, d, c, e = ev(b_c), ev(d_c), ev(c_c), ev(e_c)
    rho = abs(psi) ** 2
    if rho <= floor or rho == 0.0:
        raise SingularPotentialError("the curve reached an amplitude node")
    vq, rho, lap, lam, gsq = _vq_from_values(psi, b, c, radius)
    psic, bc, dc, ec, cc = np.conj(psi), np.conj(b), np.conj(d), np.conj(e), np.conj(c)
    # L_j acts as a derivation with L_j(conj f) = -conj(L_j f)
    dlap = np.array([
        e[j] * psic - c * bc[j] + b[j] * cc - psi * ec[j]
        + 2.0 * np.sum(d[:, j] * bc - b * dc[:, j])
        for j in range(3)
    ])
    dlam = np.array([[d[i, j] * psic - b[i] * bc[j] - b[j] * bc[i] + psi * dc[i, j] for i in range(3)] for j in range(3)])
    dg = -2.0 * np.einsum("i,ji->j", lam, dlam)
    dvq = (-(dlap / rho - lap * lam / rho**2) / (4.0 * radius**2)
           + (dg / rho**2 - 2.0 * gsq * lam / rho**3) / (8.0 * radius**2))
    grad_vq = np.real(-1j * np.cross(n, dvq))
    grad_psi = -1j * np.cross(n, b)
    grad_phase = np.imag(psic * grad_psi) / rho
    grad_amp = np.real(psic * grad_psi) / np.sqrt(rho)
    return LocalWave(psi, rho, float(vq), grad_vq, grad_phase, grad_amp)


def quantum_potential_grid(coeffs, grid: SphereGrid):
    """V_Q at every grid node from coefficients (exact for the band-limited Psi)."""
    psi = grid.synthesise(coeffs)
    b = np.stack([grid.synthesise(x) for x in angular_momentum(coeffs)])
    c = grid.synthesise(unit_laplacian(coeffs))
    vq = _vq_from_values(psi, b, c, grid.radius)[0]
    return np.real(vq), np.abs(psi) ** 2


# --------------------------------------------------------------------------- fields


def quantum_potential(R: ShapeField, metric: ShapeMetric = None, floor=NODE_FLOOR) -> ShapeField:
    """V_Q = -Delta R / (2R) on the grid.

    Nodes where R < floor * max(R) are masked: V_Q is set to 0 there and a
    warning reports how many nodes were masked.
    """
    field_, mask = quantum_potential_masked(R, metric, floor)
    if mask.any():
        warnings.warn(f"amplitude nodes: {int(mask.sum())} grid nodes masked in V_Q", RuntimeWarning)
    return field_


def quantum_potential_masked(R: ShapeField, metric: ShapeMetric = None, floor=NODE_FLOOR):
    """(V_Q field, boolean node mask)."""
    from .spectral import laplace_beltrami

    values = R.values
    mask = values < floor * np.max(np.abs(values))
    lap = laplace_beltrami(R, metric).values
    safe = np.where(mask, 1.0, values)
    vq = np.where(mask, 0.0, -lap / (2.0 * safe))
    return ShapeField(R.grid, vq), mask


def unwrap_phase(phase, grid: SphereGrid):
    """Unwrap a phase sampled on the grid; winding around any latitude circle is rejected."""
    phase = np.asarray(phase, dtype=float)
    closed = np.unwrap(np.concatenate([phase, phase[:, :1]], axis=1), axis=1)
    winding = np.round((closed[:, -1] - closed[:, 0]) / (2.0 * np.pi))
    if np.any(winding != 0):
        raise MultiValuedPhaseError(f"phase winds {int(np.max(np.abs(winding)))} times around a latitude circle")
    rows = closed[:, :-1]
    first = np.unwrap(rows[:, 0])
    return rows + (first - rows[:, 0])[:, None]


@dataclass(frozen=True, eq=False)
class QuantumCurveState:
    """Actual shape Q with direction and kappa, plus the wave function (R, S).

    ``psi`` holds the spherical-harmonic coefficients of R exp(iS); it is
    computed from R and S when not supplied.
    """

    Q: ShapePoint
    phi: Direction
    kappa: float
    R: ShapeField
    S: ShapeField
    branch: int = 1
    psi: Optional[np.ndarray] = None

    def __post_init__(self):
        if not (self.kappa > 0 and np.isfinite(self.kappa)):
            raise DegenerateRateError(f"kappa must be positive, got {self.kappa}")
        if not self.R.grid.same_as(self.S.grid):
            raise ShapeMismatchError("R and S live on different grids")
        if np.any(self.R.values < 0):
            raise ValueError("R must be non-negative")
        if self.phi.chart != self.Q.chart:
            raise ValueError("direction and point must use the same chart")
        if self.psi is None:
            grid = self.R.grid
            coeffs = grid.analyse(self.R.values * np.exp(1j * self.S.values))
            object.__setattr__(self, "psi", coeffs)

    @property
    def grid(self):
        return self.R.grid

    @classmethod
    def from_coefficients(cls, Q, phi, kappa, coeffs, grid, branch=1):
        psi = grid.synthesise(coeffs)
        R = ShapeField(grid, np.abs(psi))
        S = ShapeField(grid, unwrap_phase(np.angle(psi), grid))
        return cls(Q, phi, kappa, R, S, branch, np.asarray(coeffs, dtype=complex))

    def norm(self):
        return self.grid.integrate(self.R.values**2)

    def with_phase_shift(self, shift):
        return QuantumCurveState(
            self.Q, self.phi, self.kappa, self.R, ShapeField(self.grid, self.S.values + shift),
            self.branch, self.psi * np.exp(1j * shift),
        )


def normalize_coefficients(coeffs, grid: SphereGrid):
    norm = np.sum(np.abs(coeffs) ** 2) * grid.radius**2
    return np.asarray(coeffs, dtype=complex) / np.sqrt(norm)


def restrict_wavefunction(psi_n, grid: SphereGrid, masses=(1.0, 1.0, 1.0), seed=0, checks=16, tol=1e-8):
    """Restrict a configuration-space wave function to the shape sphere.

    ``psi_n`` maps an array of configurations (..., 3, 2) to complex values.
    It is sampled on the gauge-fixed representatives of the grid nodes and
    checked for constancy along similarity orbits at random nodes.
    Returns normalized R and unwrapped S fields.
    """
    reps = representative_positions(grid.points, masses)
    values = np.asarray(psi_n(reps), dtype=complex)
    if values.shape != (grid.nlat, grid.nlon):
        raise ShapeMismatchError(f"psi_n returned shape {values.shape}, expected {(grid.nlat, grid.nlon)}")
    rng = np.random.default_rng(seed)
    flat_reps = reps.reshape(-1, 3, 2)
    flat_vals = values.ravel()
    picks = rng.choice(len(flat_reps), size=min(checks, len(flat_reps)), replace=False)
    for p in picks:
        angle = rng.uniform(0, 2 * np.pi)
        rot = np.array([[np.cos(angle), -np.sin(angle)], [np.sin(angle), np.cos(angle)]])
        moved = rng.uniform(0.2, 5.0) * flat_reps[p] @ rot.T + rng.normal(size=2)
        other = complex(np.asarray(psi_n(moved[None]))[0])
        ref = flat_vals[p]
        if abs(other - ref) > tol * max(1.0, abs(ref)):
            raise NotProjectableError(
                f"psi changes along a similarity orbit by {abs(other - ref):.3e} at node {int(p)}"
            )
    amp = np.abs(values)
    norm = grid.integrate(amp**2)
    if not norm > 0:
        raise ValueError("wave function vanishes on shape space")
    R = ShapeField(grid, amp / np.sqrt(norm))
    S = ShapeField(grid, unwrap_phase(np.angle(values), grid))
    return R, S


# --------------------------------------------------------------------------- right-hand side


@dataclass(frozen=True)
class QuantumIncrement:
    dq: np.ndarray
    dphi: float
    dkappa: float
    dR: ShapeField
    dS: ShapeField


@dataclass(frozen=True)
class GuidanceResidual:
    delta: np.ndarray
    norm: float
    chart: str


def _ktilde(choice, gamma, branch, kappa, total_value):
    if choice == "guidance":
        return 0.0
    arg = root_argument(kappa, total_value)
    if arg < -ROOT_TOLERANCE:
        raise BranchDomainError(f"root argument {arg:.3e} is negative")
    return gamma * branch * kappa * np.sqrt(max(arg, 0.0))


def _curve_rates(coords, chart, angle, kappa, branch, coeffs, pot, epsilon, ktilde, radius):
    metric = ShapeMetric(pot.masses, chart, radius)
    n = chart_embedding(coords, chart)
    local = local_wave(coeffs, n, radius)
    jac = chart_jacobian(coords, chart)
    value, grad = pot.chart_value(coords, chart)
    total_value = value + epsilon * local.vq
    total_grad = grad + epsilon * (jac @ local.grad_vq)
    up, dphi = direction_rate(coords, angle, kappa, total_grad, metric)
    dkappa = -2.0 * up @ total_grad + _ktilde(ktilde, pot.gamma, branch, kappa, total_value)
    return up, dphi, float(dkappa), local, total_value


def field_increments(coeffs, grid: SphereGrid, pot, kappa):
    """(dR, dS) per unit arc-length on the grid from the Madelung form of the field lines."""
    psi = grid.synthesise(coeffs)
    ang = np.stack([grid.synthesise(x) for x in angular_momentum(coeffs)], axis=-1)
    lap_psi = grid.synthesise(unit_laplacian(coeffs)) / grid.radius**2
    grad_psi = -1j * np.cross(grid.points, ang)
    rho = np.abs(psi) ** 2
    amp = np.sqrt(rho)
    grad_s = np.imag(np.conj(psi)[..., None] * grad_psi) / rho[..., None]
    grad_r = np.real(np.conj(psi)[..., None] * grad_psi) / amp[..., None]
    # Delta R / R and Delta S from Psi
    gss = metric_dot(grad_s, grad_s, grid.radius)
    lap_r_over_r = np.real(np.conj(psi) * lap_psi) / rho + gss
    lap_s = np.imag(np.conj(psi) * lap_psi) / rho - 2.0 * metric_dot(grad_r, grad_s, grid.radius) / amp
    vq = -0.5 * lap_r_over_r
    total = np.asarray(pot.value(grid.points), dtype=float) + vq
    rate = 1.0 / np.sqrt(kappa)
    dR = -rate * (metric_dot(grad_r, grad_s, grid.radius) + 0.5 * amp * lap_s)
    dS = -rate * (0.5 * gss + total)
    return ShapeField(grid, dR), ShapeField(grid, dS)


def quantum_rhs(state: QuantumCurveState, pot, epsilon=1.0, ktilde="default") -> QuantumIncrement:
    """All five increments per unit arc-length."""
    if ktilde not in KTILDE_CHOICES:
        raise ValueError(f"ktilde must be one of {KTILDE_CHOICES}")
    if state.kappa <= KAPPA_FLOOR:
        raise DegenerateRateError("kappa vanished")
    up, dphi, dkappa, _, _ = _curve_rates(
        state.Q.coords, state.Q.chart, state.phi.angle, state.kappa, state.branch, state.psi, pot,
        epsilon, ktilde, state.grid.radius,
    )
    dR, dS = field_increments(state.psi, state.grid, pot, state.kappa)
    return QuantumIncrement(up, dphi, dkappa, dR, dS)


def curve_increment(state: QuantumCurveState, pot, epsilon=1.0, ktilde="default") -> CurveIncrement:
    """Only the curve part of :func:`quantum_rhs`."""
    up, dphi, dkappa, _, _ = _curve_rates(
        state.Q.coords, state.Q.chart, state.phi.angle, state.kappa, state.branch, state.psi, pot,
        epsilon, ktilde, state.grid.radius,
    )
    return CurveIncrement(up, dphi, dkappa)


def _residual(coords, chart, angle, kappa, local, radius):
    metric = ShapeMetric(chart=chart, radius=radius)
    _, ucov = tangent_components(coords, angle, metric)
    s_cov = chart_jacobian(coords, chart) @ local.grad_phase
    delta = np.sqrt(kappa) * ucov - s_cov
    return delta, float(np.sqrt(max(delta @ metric.inverse(coords) @ delta, 0.0)))


def guidance_residual(state: QuantumCurveState) -> GuidanceResidual:
    """delta_a = sqrt(kappa) u_a - S_,a(Q) and its metric norm."""
    local = local_wave(state.psi, state.Q.embedding, state.grid.radius)
    delta, norm = _residual(state.Q.coords, state.Q.chart, state.phi.angle, state.kappa, local, state.grid.radius)
    return GuidanceResidual(delta, norm, state.Q.chart)


def guided_state(Q: ShapePoint, coeffs, grid: SphereGrid, branch=1) -> QuantumCurveState:
    """State whose momentum equals the phase gradient at Q (phi along grad S, kappa = |grad S|^2)."""
    local = local_wave(coeffs, Q.embedding, grid.radius)
    s_cov = chart_jacobian(Q.coords, Q.chart) @ local.grad_phase
    metric = ShapeMetric(chart=Q.chart, radius=grid.radius)
    kappa = float(s_cov @ metric.inverse(Q.coords) @ s_cov)
    if not kappa > KAPPA_FLOOR:
        raise UndefinedDirectionError("the phase gradient vanishes at Q, so no guided direction exists")
    angle = direction_angle(Q.coords, s_cov, metric)
    return QuantumCurveState.from_coefficients(Q, Direction(angle, Q.chart), kappa, coeffs, grid, branch)


# --------------------------------------------------------------------------- integration


class _BranchSwitch:
    """Switch the branch sign where the root argument of the default closure vanishes."""

    def __init__(self, holder, propagator, pot, epsilon, radius):
        self.holder = holder
        self.propagator = propagator
        self.pot = pot
        self.epsilon = epsilon
        self.radius = radius

    def __call__(self, chart):
        prop, pot, eps, radius = self.propagator, self.pot, self.epsilon, self.radius

        def event(_s, y):
            n = chart_embedding(y[:2], chart)
            vq = local_wave(prop.coefficients(y[4]), n, radius).vq
            return root_argument(y[3], float(pot.value(n)) + eps * vq) + BRANCH_EVENT_LEVEL

        event.terminal = True
        event.direction = -1
        return event

    def handle(self, y, chart, s):
        self.holder["branch"] = -self.holder["branch"]
        self.holder["switches"].append(float(s))
        return "continue", "", y


class _KappaFloor:
    def __call__(self, chart):
        def event(_s, y):
            return y[3] - KAPPA_FLOOR

        event.terminal = True
        event.direction = -1
        return event

    def handle(self, y, chart, s):
        return "partial", f"DegenerateRateError: kappa vanished at s={s:.6g}", y


def integrate_quantum(initial: QuantumCurveState, pot, arclen, opts: IntegrationOptions = None,
                      epsilon=1.0, ktilde="default", record_sup=True) -> TrajectoryRecord:
    """Co-advance the curve and the wave function over ``arclen`` of shape arc-length."""
    opts = opts or IntegrationOptions()
    if ktilde not in KTILDE_CHOICES:
        raise ValueError(f"ktilde must be one of {KTILDE_CHOICES}")
    if arclen < 0:
        raise ValueError("arclen must be non-negative")
    grid = initial.grid
    radius = grid.radius
    prop = WavePropagator(grid, pot, initial.psi)
    holder = {"branch": initial.branch, "switches": [], "branches": {}}

    def make_rhs(chart):
        def rhs(s, y):
            if y[3] <= KAPPA_FLOOR:
                raise DegenerateRateError("kappa vanished")
            up, dphi, dkappa, _, _ = _curve_rates(
                y[:2], chart, y[2], y[3], holder["branch"], prop.coefficients(y[4]), pot, epsilon, ktilde, radius
            )
            return np.array([up[0], up[1], dphi, dkappa, 1.0 / np.sqrt(y[3])])

        return rhs

    events = [_KappaFloor()]
    if ktilde == "default":
        events.append(_BranchSwitch(holder, prop, pot, epsilon, radius))
    y0 = np.array([initial.Q.coords[0], initial.Q.coords[1], initial.phi.angle, initial.kappa, 0.0])
    s, ys, status, message = drive_curve(make_rhs, y0, initial.Q.chart, arclen, opts, convert_chart_state, events)

    switches = holder["switches"]
    points, tangents, kappa, branch, total, vq, vq_sup, delta, norm, tau = ([] for _ in range(10))
    for sk, (y, chart) in zip(s, ys):
        n = chart_embedding(y[:2], chart)
        coeffs = prop.coefficients(y[4])
        local = local_wave(coeffs, n, radius)
        b = initial.branch * (-1) ** int(np.sum(np.asarray(switches) <= sk))
        points.append(n)
        tangents.append(tangent_vector(y[:2], chart, y[2]))
        kappa.append(y[3])
        branch.append(float(b))
        total.append(float(pot.value(n)) + epsilon * local.vq)
        vq.append(local.vq)
        if record_sup:
            vq_grid, _ = quantum_potential_grid(coeffs, grid)
            vq_sup.append(float(np.max(np.abs(vq_grid))))
        else:
            vq_sup.append(np.nan)
        delta.append(_residual(y[:2], chart, y[2], y[3], local, radius)[1])
        norm.append(grid.integrate(np.abs(grid.synthesise(coeffs)) ** 2))
        tau.append(y[4])
    points = np.array(points)
    return TrajectoryRecord(
        s=s,
        points=points,
        tangents=np.array(tangents),
        kappa=np.array(kappa),
        branch=np.array(branch),
        potential=np.array(total),
        com=safe_complexity(points, pot.masses),
        masses=pot.masses,
        gamma=pot.gamma,
        extra={"vq": vq, "vq_sup": vq_sup, "delta": delta, "norm": norm, "tau": tau},
        status=status,
        message=message,
        meta={"kind": "quantum", "epsilon": epsilon, "ktilde": ktilde, "lmax": grid.lmax,
              "softening": pot.softening},
    )


# --------------------------------------------------------------------------- subsystems


@dataclass(frozen=True)
class SubsystemReport:
    partition: tuple
    factorization_residual: float
    scale: float
    scale_rate: float
    dilatation: float
    momentum: float
    k_term: float
    regime: bool


def _hopf_differential(rho1, rho2):
    """3x4 matrix mapping (drho1, drho2) to dn."""
    cols = []
    for k in range(4):
        d = np.zeros(4)
        d[k] = 1.0
        cols.append(hopf_velocity(rho1, rho2, d[:2], d[2:]))
    return np.array(cols).T


def horizontal_lift(n, tangent, masses):
    """Representative positions and mass-weighted Jacobi velocity of a unit shape tangent.

    The lift is orthogonal to rotations and dilatations and has unit norm, so
    its norm equals the shape arc-length rate.
    """
    pos = representative_positions(n, masses)
    rho = jacobi_vectors(pos, masses)
    x = rho.ravel()
    rot = np.array([-rho[0, 1], rho[0, 0], -rho[1, 1], rho[1, 0]])
    dn = 2.0 * np.asarray(tangent, dtype=float)
    system = np.vstack([_hopf_differential(rho[0], rho[1]), x[None, :], rot[None, :]])
    rhs = np.concatenate([dn, [0.0, 0.0]])
    vel, *_ = np.linalg.lstsq(system, rhs, rcond=None)
    return pos, vel.reshape(2, 2)


def _partition_order(partition):
    groups = [tuple(int(i) for i in g) for g in partition]
    flat = sorted(i for g in groups for i in g)
    if flat != [0, 1, 2]:
        raise ValueError("the partition must cover the three bodies exactly once")
    pair = [g for g in groups if len(g) == 2]
    if len(groups) != 2 or not pair:
        raise ValueError("three-body partitions are a pair plus a single body")
    i, j = pair[0]
    k = [b for b in (0, 1, 2) if b not in (i, j)][0]
    return (i, j, k)


def factorization_residual(coeffs, masses, partition, nodes=24):
    """Relative rank-one residual of Psi in partition-adapted coordinates.

    The coordinates are the colatitude about the hierarchy axis (relative size
    of the pair versus the third body) and the relative orientation angle of
    the two Jacobi vectors.  The residual is sqrt(sum_{k>1} s_k^2 / sum s_k^2)
    of the quadrature-weighted sample matrix.
    """
    order = _partition_order(partition)
    masses = np.asarray(masses, dtype=float)
    x, w = np.polynomial.legendre.leggauss(nodes)
    theta = np.arccos(x)
    lon = (np.arange(2 * nodes) + 0.5) * np.pi / nodes
    th, ph = np.meshgrid(theta, lon, indexing="ij")
    # hierarchy axis is n'_x in the permuted labelling
    n_perm = np.stack([np.cos(th), np.sin(th) * np.cos(ph), np.sin(th) * np.sin(ph)], axis=-1)
    pos_perm = representative_positions(n_perm, masses[list(order)])
    pos = np.empty_like(pos_perm)
    for new, old in enumerate(order):
        pos[..., old, :] = pos_perm[..., new, :]
    rho = jacobi_vectors(pos, masses)
    from .shape_space import hopf_point

    n = hopf_point(rho[..., 0, :], rho[..., 1, :])
    vals = _evaluate_many(coeffs, n.reshape(-1, 3)).reshape(th.shape)
    weighted = vals * np.sqrt(w)[:, None] * np.sqrt(np.pi / nodes)
    sv = np.linalg.svd(weighted, compute_uv=False)
    total = np.sum(sv**2)
    return float(np.sqrt(max(total - sv[0] ** 2, 0.0) / total)) if total > 0 else 0.0


def _evaluate_many(coeffs, points):
    lmax = coeffs.shape[0] - 1
    theta = np.arctan2(np.hypot(points[:, 0], points[:, 1]), points[:, 2])
    lon = np.arctan2(points[:, 1], points[:, 0])
    plm = legendre_table(lmax, theta)
    m = np.arange(-lmax, lmax + 1)
    return np.einsum("lmi,lm,mi->i", plm, coeffs, np.exp(1j * np.outer(m, lon)))


def subsystem_diagnostics(state: QuantumCurveState, partition, masses=(1.0, 1.0, 1.0), gamma=-1.0,
                          factorization_tol=1e-6, k_tol=1e-6, drift_tol=1e-6) -> SubsystemReport:
    """Isolation and boundedness indicators for a pair subsystem.

    The curve momentum p = sqrt(kappa) u is lifted horizontally to the
    representative configuration; the pair's Jacobi vector rho_I and its
    momentum pi_I give D_I = rho_I . pi_I, p_I = |pi_I|, the scale transport
    dR_I = R_I D_I / p_I and K_I = -gamma kappa D_I / p_I.
    """
    order = _partition_order(partition)
    masses = np.asarray(masses, dtype=float)
    n = state.Q.embedding
    tangent = tangent_vector(state.Q.coords, state.Q.chart, state.phi.angle)
    pos, jac_vel = horizontal_lift(n, tangent, masses)
    vel = positions_from_jacobi(jac_vel[0], jac_vel[1], masses) * np.sqrt(state.kappa)
    i, j, _ = order
    mu = masses[i] * masses[j] / (masses[i] + masses[j])
    rho_i = np.sqrt(mu) * (pos[j] - pos[i])
    pi_i = np.sqrt(mu) * (vel[j] - vel[i])
    scale = float(np.linalg.norm(rho_i))
    dil = float(rho_i @ pi_i)
    mom = float(np.linalg.norm(pi_i))
    if dil == 0.0:
        k_term, rate = 0.0, 0.0
    else:
        k_term = float(-gamma * state.kappa * dil / mom)
        rate = float(scale * dil / mom)
    fact = factorization_residual(state.psi, masses, partition)
    regime = fact < factorization_tol and abs(k_term) < k_tol and abs(rate) < drift_tol
    return SubsystemReport(tuple(tuple(g) for g in partition), fact, scale, rate, dil, mom, k_term, bool(regime))
