import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from psdlab import presets
from psdlab.classical import (
    ConstantPotential,
    CurveState,
    IntegrationOptions,
    ShapePotential,
    classical_rhs,
    integrate_classical,
)
from psdlab.errors import DegenerateRateError, MultiValuedPhaseError, NotProjectableError, ShapeMismatchError, UndefinedDirectionError
from psdlab.quantum import (
    QuantumCurveState,
    WavePropagator,
    curve_increment,
    factorization_residual,
    field_increments,
    guidance_residual,
    guided_state,
    horizontal_lift,
    integrate_quantum,
    local_wave,
    normalize_coefficients,
    quantum_potential,
    quantum_potential_grid,
    quantum_rhs,
    restrict_wavefunction,
    subsystem_diagnostics,
    unwrap_phase,
)
from psdlab.complexity import complexity
from psdlab.shape_space import (
    Configuration,
    Direction,
    ShapePoint,
    chart_coords,
    chart_embedding,
    direction_from_vector,
    geodesic_distance,
    hopf_velocity,
    jacobi_vectors,
    positions_from_jacobi,
)
from psdlab.spectral import ShapeField, SphereGrid, evaluate, spherical_harmonic_field


@pytest.fixture(scope="module")
def grid():
    return SphereGrid(16)


def y20_band(grid, phase_x=0.0):
    amp = 1.0 + 0.2 * spherical_harmonic_field(grid, 2, 0).values
    return normalize_coefficients(grid.analyse(amp * np.exp(1j * phase_x * grid.points[..., 0])), grid)


def point(x, y, z):
    n = np.array([x, y, z], dtype=float)
    return n / np.linalg.norm(n)


# --------------------------------------------------------------------------- field evolution


def test_free_evolution_of_a_harmonic_is_a_phase(grid):
    pot = ConstantPotential(-0.5)
    coeffs = np.zeros(grid.mask.shape, dtype=complex)
    coeffs[3, grid.lmax + 1] = 1.0
    prop = WavePropagator(grid, pot, coeffs)
    energy = 0.5 * 12 / grid.radius**2 - 0.5
    assert np.allclose(prop.coefficients(0.37), coeffs * np.exp(-1j * energy * 0.37), atol=1e-12)


def test_propagation_is_unitary(grid):
    pot = ShapePotential(softening=0.7)
    coeffs = y20_band(grid, 1.0)
    prop = WavePropagator(grid, pot, coeffs)
    for tau in (0.1, 1.0, 10.0):
        c = prop.coefficients(tau)
        assert grid.integrate(np.abs(grid.synthesise(c)) ** 2) == pytest.approx(1.0, abs=1e-12)


def test_madelung_increments_match_the_propagator(grid):
    """dR/ds and dS/ds on the grid agree with finite differences of the exact evolution."""
    pot = ShapePotential(softening=0.7)
    coeffs = y20_band(grid, 0.7)
    prop = WavePropagator(grid, pot, coeffs)
    kappa = 3.0
    dR, dS = field_increments(coeffs, grid, pot, kappa)
    h = 1e-5
    plus, minus = grid.synthesise(prop.coefficients(h)), grid.synthesise(prop.coefficients(-h))
    rate = 1.0 / np.sqrt(kappa)
    fd_R = (np.abs(plus) - np.abs(minus)) / (2 * h) * rate
    fd_S = np.angle(plus * np.conj(minus)) / (2 * h) * rate
    assert np.max(np.abs(dR.values - fd_R)) < 1e-6
    assert np.max(np.abs(dS.values - fd_S)) < 1e-6


# --------------------------------------------------------------------------- quantum potential


def test_quantum_potential_routes_agree(grid):
    """Closed-form coefficient evaluation vs. Laplace-Beltrami of the sampled amplitude."""
    fine = SphereGrid(48)
    coeffs = y20_band(fine)
    R = ShapeField(fine, np.abs(fine.synthesise(coeffs)))
    grid_route = quantum_potential(R).values
    coeff_route, _ = quantum_potential_grid(coeffs, fine)
    assert np.max(np.abs(grid_route - coeff_route)) < 1e-6 * np.max(np.abs(coeff_route))


def test_quantum_potential_gradient_matches_finite_difference(grid):
    coeffs = y20_band(grid, 1.0)
    coords = np.array([1.0, 0.6])
    n = chart_embedding(coords)
    lw = local_wave(coeffs, n, grid.radius)
    assert abs(lw.grad_vq @ n) < 1e-10
    h = 1e-6
    for e in np.eye(2):
        a = local_wave(coeffs, chart_embedding(coords + h * e), grid.radius).vq
        b = local_wave(coeffs, chart_embedding(coords - h * e), grid.radius).vq
        tangent = (chart_embedding(coords + h * e) - chart_embedding(coords - h * e)) / (2 * h)
        assert lw.grad_vq @ tangent == pytest.approx((a - b) / (2 * h), rel=1e-5, abs=1e-7)


def test_constant_amplitude_has_no_quantum_potential(grid):
    coeffs = presets.wavefunction_coefficients(presets.load("constant"), grid)
    vq, _ = quantum_potential_grid(coeffs, grid)
    assert np.max(np.abs(vq)) == 0.0


def test_nodes_are_masked_with_a_warning(grid):
    R = ShapeField(grid, np.where(grid.points[..., 2] > 0, 1.0, 0.0))
    with pytest.warns(RuntimeWarning, match="nodes"):
        quantum_potential(R)


# --------------------------------------------------------------------------- restriction and phase


def test_restriction_of_a_shape_function(grid):
    def psi(pos):
        out = np.empty(pos.shape[:-2], dtype=complex)
        for idx in np.ndindex(out.shape):
            com = complexity(Configuration(pos[idx], np.ones(3))).com
            out[idx] = (1 + com) * np.exp(0.5j * com)
        return out

    small = SphereGrid(6)
    R, S = restrict_wavefunction(psi, small)
    assert small.integrate(R.values**2) == pytest.approx(1.0)
    assert np.ptp(S.values) > 0


def test_restriction_rejects_scale_dependence():
    def psi(pos):
        return np.sum(pos**2, axis=(-1, -2)).astype(complex)

    with pytest.raises(NotProjectableError):
        restrict_wavefunction(psi, SphereGrid(6))


def test_restriction_rejects_wrong_shape():
    with pytest.raises(ShapeMismatchError):
        restrict_wavefunction(lambda pos: np.ones(3, dtype=complex), SphereGrid(6))


def test_winding_phase_is_rejected(grid):
    with pytest.raises(MultiValuedPhaseError):
        unwrap_phase(np.angle(np.exp(1j * grid.coords[..., 1])), grid)
    smooth = 3.0 * grid.points[..., 0]
    assert np.allclose(np.cos(unwrap_phase(np.angle(np.exp(1j * smooth)), grid) - smooth), 1.0)


# --------------------------------------------------------------------------- curve coupling


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2**31), st.sampled_from([1.0, 0.1, 1e-3]))
def test_constant_amplitude_reduces_to_classical_exactly(seed, epsilon):
    grid = SphereGrid(8)
    rng = np.random.default_rng(seed)
    coeffs = presets.wavefunction_coefficients(presets.load("constant"), grid)
    pot = ShapePotential()
    n = point(*rng.normal(size=3))
    state = CurveState.from_vectors(n, np.cross(n, rng.normal(size=3)), -2 * pot.value(n) * rng.uniform(0.3, 1),
                                    int(rng.choice([-1, 1])))
    qs = QuantumCurveState.from_coefficients(state.q, state.phi, state.kappa, coeffs, grid, state.branch)
    a, b = classical_rhs(state, pot), curve_increment(qs, pot, epsilon)
    assert np.allclose(a.dq, b.dq, rtol=1e-12, atol=0)
    assert b.dphi == pytest.approx(a.dphi, rel=1e-12, abs=1e-14)
    assert b.dkappa == pytest.approx(a.dkappa, rel=1e-12, abs=1e-14)


def test_constant_amplitude_trajectory_matches_classical_geodesic():
    grid = SphereGrid(8)
    pot = ConstantPotential(-1.0)
    coeffs = presets.wavefunction_coefficients(presets.load("constant"), grid)
    n = point(0.3, -0.2, 0.5)
    t = np.cross(n, [0.1, 1.0, 0.2])
    cs = CurveState.from_vectors(n, t, 2.0)
    opts = IntegrationOptions(rtol=1e-12, atol=1e-14, samples=21)
    classical = integrate_classical(cs, pot, 1.0, opts)
    qs = QuantumCurveState.from_coefficients(cs.q, cs.phi, cs.kappa, coeffs, grid, cs.branch)
    quantum = integrate_quantum(qs, pot, 1.0, opts, epsilon=1.0)
    assert np.max(geodesic_distance(quantum.points, classical.points)) < 1e-10
    assert np.allclose(quantum.kappa, classical.kappa, rtol=1e-10)


def test_full_rhs_exposes_field_increments(grid):
    pot = ShapePotential(softening=0.7)
    coeffs = y20_band(grid, 1.0)
    q = ShapePoint("std", chart_coords(point(0.4, 0.5, 0.6)))
    state = guided_state(q, coeffs, grid)
    inc = quantum_rhs(state, pot, 1.0, "guidance")
    assert inc.dR.grid is grid and inc.dS.values.shape == (grid.nlat, grid.nlon)
    with pytest.raises(ValueError):
        quantum_rhs(state, pot, 1.0, "bogus")


def test_guided_state_satisfies_guidance(grid):
    coeffs = y20_band(grid, 1.0)
    for chart in ("std", "rot"):
        q = ShapePoint(chart, chart_coords(point(0.4, 0.5, 0.6), chart))
        state = guided_state(q, coeffs, grid)
        assert guidance_residual(state).norm < 1e-12
        assert guidance_residual(state.with_phase_shift(0.3)).norm < 1e-12
    with pytest.raises(UndefinedDirectionError):
        guided_state(ShapePoint("std", chart_coords(point(0.4, 0.5, 0.6))), y20_band(grid), grid)


def test_guidance_closure_keeps_residual_small():
    grid = SphereGrid(24)
    coeffs = y20_band(grid, 1.0)
    q = ShapePoint("std", chart_coords(point(0.4, 0.5, 0.6)))
    state = guided_state(q, coeffs, grid)
    opts = IntegrationOptions(rtol=1e-12, atol=1e-14, samples=11)
    rec = integrate_quantum(state, ShapePotential(softening=0.7), 0.05, opts, epsilon=1.0, ktilde="guidance")
    assert rec.status == "complete" and np.max(rec.extra["delta"]) < 1e-7
    assert np.allclose(rec.extra["norm"], 1.0, atol=1e-12)


# --------------------------------------------------------------------------- subsystems


def partition_samples(coeffs, nodes=24):
    """Psi on (cos theta', lon') Gauss x uniform nodes about the hierarchy axis n_x (pair 0-1)."""
    x, w = np.polynomial.legendre.leggauss(nodes)
    lon = (np.arange(2 * nodes) + 0.5) * np.pi / nodes
    vals = np.empty((nodes, 2 * nodes), dtype=complex)
    for i, c in enumerate(x):
        s = np.sqrt(1 - c * c)
        for j, p in enumerate(lon):
            vals[i, j] = evaluate(coeffs, np.array([c, s * np.cos(p), s * np.sin(p)]))
    return vals * np.sqrt(w)[:, None] * np.sqrt(np.pi / nodes)


def als_rank_one_residual(matrix, sweeps=500):
    """Alternating least squares for the best rank-one approximation."""
    v = np.ones(matrix.shape[1], dtype=complex)
    for _ in range(sweeps):
        u = matrix @ v.conj() / (v.conj() @ v)
        v = (u.conj() @ matrix) / (u.conj() @ u)
    fit = np.outer(u, v)
    return np.linalg.norm(matrix - fit) / np.linalg.norm(matrix)


def test_factorization_residual_against_als(grid):
    coeffs = y20_band(grid)
    svd = factorization_residual(coeffs, (1, 1, 1), ((0, 1), (2,)))
    als = als_rank_one_residual(partition_samples(coeffs))
    assert svd > 1e-3
    assert svd == pytest.approx(als, rel=1e-6)


def test_product_state_factorizes(grid):
    values = (grid.points[..., 1] + 1j * grid.points[..., 2]) * (1 + 0.3 * grid.points[..., 0])
    coeffs = normalize_coefficients(grid.analyse(values), grid)
    assert factorization_residual(coeffs, (1, 1, 1), ((0, 1), (2,))) < 1e-10
    assert factorization_residual(coeffs, (1, 1, 1), ((1, 2), (0,))) > 1e-3


def test_partition_validation(grid):
    with pytest.raises(ValueError):
        factorization_residual(y20_band(grid), (1, 1, 1), ((0, 1), (1, 2)))


def test_horizontal_lift_is_horizontal_and_unit():
    masses = np.array([1.0, 2.0, 3.0])
    n = point(0.3, 0.5, -0.2)
    tangent = np.cross(n, [0.2, -0.1, 1.0])
    tangent /= np.linalg.norm(tangent)
    pos, jac_vel = horizontal_lift(n, tangent, masses)
    rho = jacobi_vectors(pos, masses)
    assert abs(np.sum(rho * jac_vel)) < 1e-12
    assert abs(np.sum(rho[:, 0] * jac_vel[:, 1] - rho[:, 1] * jac_vel[:, 0])) < 1e-12
    assert np.allclose(hopf_velocity(rho[0], rho[1], jac_vel[0], jac_vel[1]), 2 * tangent, atol=1e-10)
    assert np.sum(jac_vel**2) == pytest.approx(1.0, rel=1e-10)


def test_subsystem_report_for_generic_state(grid):
    coeffs = y20_band(grid, 1.0)
    q = ShapePoint("std", chart_coords(point(0.4, 0.5, 0.6)))
    rep = subsystem_diagnostics(guided_state(q, coeffs, grid), ((0, 1), (2,)))
    assert rep.factorization_residual > 1e-3 and not rep.regime
    assert np.isfinite([rep.scale, rep.scale_rate, rep.k_term]).all() and rep.momentum > 0


def test_invalid_kappa_rejected(grid):
    coeffs = y20_band(grid)
    q = ShapePoint("std", [1.0, 1.0])
    with pytest.raises(DegenerateRateError):
        QuantumCurveState.from_coefficients(q, Direction(0.0), 0.0, coeffs, grid)


def test_record_reports_diagnostic_series():
    grid = SphereGrid(12)
    coeffs = y20_band(grid)
    q = ShapePoint("std", chart_coords(point(0.3, 0.4, 0.8)))
    pot = ShapePotential(softening=0.7)
    state = QuantumCurveState.from_coefficients(q, Direction(0.5), -1.5 * pot.value(q.embedding),
                                                coeffs, grid)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        rec = integrate_quantum(state, pot, 0.2, IntegrationOptions(samples=11), epsilon=0.5)
    for key in ("vq", "vq_sup", "delta", "norm", "tau"):
        assert key in rec.extra and len(rec.extra[key]) == len(rec)
    assert np.all(np.diff(rec.extra["tau"]) > 0)


def test_zero_arclength_returns_initial_state(grid):
    coeffs = y20_band(grid, 1.0)
    q = ShapePoint("std", chart_coords(point(0.4, 0.5, 0.6)))
    state = guided_state(q, coeffs, grid)
    rec = integrate_quantum(state, ShapePotential(softening=0.7), 0.0)
    assert len(rec) == 1 and rec.s[0] == 0.0
    assert np.allclose(rec.points[0], q.embedding) and rec.kappa[0] == state.kappa


def test_vanishing_pair_dilatation_flags_the_regime(grid):
    """Product-form field and a tangent along which the pair scale is stationary."""
    masses = (1.0, 1.0, 1.0)
    values = (grid.points[..., 1] + 1j * grid.points[..., 2]) * (1 + 0.3 * grid.points[..., 0])
    coeffs = normalize_coefficients(grid.analyse(values), grid)
    n = point(0.5, 0.6, 0.3)
    basis = np.linalg.svd(n[None, :])[2][1:]

    def dilatation(tangent):
        pos, jac_vel = horizontal_lift(n, tangent, masses)
        vel = positions_from_jacobi(jac_vel[0], jac_vel[1], masses)
        return (pos[1] - pos[0]) @ (vel[1] - vel[0])

    d1, d2 = dilatation(basis[0]), dilatation(basis[1])
    tangent = d2 * basis[0] - d1 * basis[1]
    tangent /= np.linalg.norm(tangent)
    q = ShapePoint("std", chart_coords(n))
    angle = direction_from_vector(q.coords, q.chart, tangent)
    state = QuantumCurveState.from_coefficients(q, Direction(angle), 2.0, coeffs, grid)
    rep = subsystem_diagnostics(state, ((0, 1), (2,)), masses)
    assert abs(rep.dilatation) < 1e-12 and abs(rep.k_term) < 1e-12
    assert rep.factorization_residual < 1e-10 and rep.regime
