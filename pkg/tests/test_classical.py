import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from psdlab.classical import (
    ConstantPotential,
    CurveState,
    IntegrationOptions,
    ShapePotential,
    classical_rhs,
    classical_vector_field,
    integrate_classical,
    record_state,
)
from psdlab.errors import BranchDomainError
from psdlab.oracle import curve_state_from_newton, newtonian_oracle, random_initial_data
from psdlab.shape_space import (
    Configuration,
    chart_embedding,
    geodesic_distance,
    pair_separation_coefficients,
    representative_positions,
)

seeds = st.integers(0, 2**32 - 1)


def random_state(rng, pot, branch=None):
    n = rng.normal(size=3)
    n /= np.linalg.norm(n)
    t = np.cross(n, rng.normal(size=3))
    value = pot.value(n)
    kappa = -2.0 * value * rng.uniform(0.3, 0.99)
    return CurveState.from_vectors(n, t, kappa, branch or int(rng.choice([-1, 1])))


def test_potential_matches_configuration_sum():
    rng = np.random.default_rng(0)
    masses = np.array([1.0, 2.0, 3.0])
    pot = ShapePotential(masses)
    for _ in range(5):
        n = rng.normal(size=3)
        n /= np.linalg.norm(n)
        pos = representative_positions(n, masses)
        direct = -sum(masses[i] * masses[j] / np.linalg.norm(pos[i] - pos[j])
                      for i in range(3) for j in range(i + 1, 3))
        assert pot.value(n) == pytest.approx(direct, rel=1e-12)


def test_chart_gradient_matches_finite_difference():
    pot = ShapePotential((1.0, 2.0, 0.7), softening=0.1)
    coords = np.array([1.2, 0.7])
    for chart in ("std", "rot"):
        _, grad = pot.chart_value(coords, chart)
        h = 1e-6
        for a in range(2):
            e = np.eye(2)[a] * h
            fd = (pot.value(chart_embedding(coords + e, chart)) - pot.value(chart_embedding(coords - e, chart))) / (2 * h)
            assert grad[a] == pytest.approx(fd, rel=1e-6)


def test_only_gravity_exponent_supported():
    with pytest.raises(ValueError):
        ShapePotential(gamma=-2.0)


@settings(max_examples=30)
@given(seeds)
def test_kappa_form_agrees_with_root_form(seed):
    """dkappa from the public equation equals the chain rule through kappa = -2V/(1+w^2)."""
    rng = np.random.default_rng(seed)
    pot = ShapePotential()
    state = random_state(rng, pot)
    inc = classical_rhs(state, pot)
    value, grad = pot.chart_value(state.q.coords, state.q.chart)
    w = state.branch * np.sqrt(-(1 + 2 * value / state.kappa))
    f = classical_vector_field(pot, state.q.chart)(0.0, np.array([*state.q.coords, state.phi.angle, w]))
    assert np.allclose(f[:2], inc.dq, atol=1e-12)
    assert f[2] == pytest.approx(inc.dphi, abs=1e-10)
    dvalue = inc.dq @ grad
    chain = -2 * dvalue / (1 + w * w) + 4 * value * w * f[3] / (1 + w * w) ** 2
    assert chain == pytest.approx(inc.dkappa, rel=1e-9, abs=1e-10)


def test_branch_domain_error():
    pot = ShapePotential()
    n = np.array([0.1, 0.2, 0.97])
    n /= np.linalg.norm(n)
    state = CurveState.from_vectors(n, np.cross(n, [1, 0, 0]), -4.0 * pot.value(n))
    with pytest.raises(BranchDomainError):
        classical_rhs(state, pot)
    with pytest.raises(BranchDomainError):
        integrate_classical(state, pot, 0.1)


def test_constant_potential_gives_great_circles():
    pot = ConstantPotential(-1.0)
    rng = np.random.default_rng(1)
    n = rng.normal(size=3)
    n /= np.linalg.norm(n)
    t = np.cross(n, rng.normal(size=3))
    t /= np.linalg.norm(t)
    state = CurveState.from_vectors(n, t, 2.0)  # kappa = -2V: stationary scale
    rec = integrate_classical(state, pot, 2.5, IntegrationOptions(rtol=1e-12, atol=1e-14, samples=51))
    normal = np.cross(n, t)
    assert np.max(np.abs(rec.points @ normal)) < 1e-9
    expected = np.cos(2 * rec.s)[:, None] * n + np.sin(2 * rec.s)[:, None] * t
    assert np.max(geodesic_distance(rec.points, expected)) < 1e-9
    assert np.allclose(rec.kappa, 2.0)


def test_integration_is_chart_independent_and_crosses_poles():
    pot = ShapePotential()
    n = np.array([0.2, 0.1, 0.9])
    n /= np.linalg.norm(n)
    t = np.array([0.0, 0.0, 1.0]) - n[2] * n  # heads over the n_z pole
    kappa = -1.5 * pot.value(n)
    opts = IntegrationOptions(rtol=1e-11, atol=1e-13, samples=41)
    a = integrate_classical(CurveState.from_vectors(n, t, kappa, 1, chart="std"), pot, 1.5, opts)
    b = integrate_classical(CurveState.from_vectors(n, t, kappa, 1, chart="rot"), pot, 1.5, opts)
    assert a.status == b.status == "complete"
    assert np.max(geodesic_distance(a.points, b.points)) < 1e-8
    assert np.max(a.points[:, 2]) > 0.999


def test_arc_length_parametrization():
    rng = np.random.default_rng(2)
    pos, vel = random_initial_data(rng)
    rec = integrate_classical(curve_state_from_newton(pos, vel, np.ones(3)), ShapePotential(), 1.0,
                              IntegrationOptions(rtol=1e-11, atol=1e-13, samples=2001))
    steps = geodesic_distance(rec.points[:-1], rec.points[1:])
    assert np.allclose(steps, np.diff(rec.s), rtol=1e-5)
    assert np.allclose(np.linalg.norm(rec.tangents, axis=1), 1.0)


def test_matches_newtonian_oracle_through_a_turning_point():
    """Data with negative dilatational momentum pass a scale minimum within s = 1."""
    rng = np.random.default_rng(7)
    for _ in range(30):
        pos, vel = random_initial_data(rng)
        vel = -vel
        res = newtonian_oracle(Configuration(pos, np.ones(3)), vel, arclen=1.0, samples=51)
        if res.status == "complete" and np.any(res.record.branch > 0):
            break
    else:
        pytest.skip("no turning point found")
    rec = integrate_classical(curve_state_from_newton(pos, vel, np.ones(3)), ShapePotential(), 1.0,
                              IntegrationOptions(rtol=1e-11, atol=1e-13, samples=51))
    assert np.max(geodesic_distance(rec.points, res.record.points)) < 1e-6
    assert np.allclose(rec.kappa, res.record.kappa, rtol=1e-6)
    assert np.array_equal(rec.branch, res.record.branch)


def test_collision_stops_with_partial_status():
    pot = ShapePotential()
    # aim straight at the collision point of bodies 0 and 1 on the equator
    _, _, c, a = pair_separation_coefficients((1, 1, 1))[0]
    target = -a / np.linalg.norm(a)
    start = np.array([target[0], target[1], 0.0]) * np.cos(0.3) + np.array([0, 0, 1.0]) * np.sin(0.3)
    tangent = target - start @ target * start
    state = CurveState.from_vectors(start, tangent, -1.2 * pot.value(start), -1)
    rec = integrate_classical(state, pot, 2.0, IntegrationOptions(samples=101))
    assert rec.status == "partial" and "ollision" in rec.message
    assert rec.s[-1] < 2.0


def test_record_state_round_trip():
    rng = np.random.default_rng(3)
    pot = ShapePotential()
    state = random_state(rng, pot, branch=1)
    rec = integrate_classical(state, pot, 0.0)
    back = record_state(rec, 0)
    assert np.allclose(back.point, state.point) and back.kappa == pytest.approx(state.kappa)
    assert np.allclose(back.tangent, state.tangent, atol=1e-12)


def test_options_validated():
    with pytest.raises(ValueError):
        IntegrationOptions(rtol=0)
    with pytest.raises(ValueError):
        IntegrationOptions(chart_switch=0.9)
