import numpy as np
import pytest

from psdlab.classical import ShapePotential
from psdlab.errors import UndefinedDirectionError
from psdlab.oracle import (
    angular_momentum,
    curve_state_from_newton,
    dilatational_momentum,
    energy,
    newtonian_oracle,
    random_initial_data,
    shape_observables,
    zero_energy_data,
)
from psdlab.shape_space import Configuration, geodesic_distance


def test_random_data_has_zero_momenta_and_energy():
    rng = np.random.default_rng(0)
    m = np.ones(3)
    for _ in range(5):
        pos, vel = random_initial_data(rng)
        assert np.allclose(m @ pos, 0) and np.allclose(m @ vel, 0)
        assert abs(angular_momentum(pos, vel, m)) < 1e-12
        assert abs(energy(pos, vel, m)) < 1e-12
        assert dilatational_momentum(pos, vel, m) > 0


def test_root_equals_normalized_dilatational_momentum():
    """At zero energy, -(1 + 2V/kappa) = (D / (scale |v_h|))^2."""
    rng = np.random.default_rng(1)
    m = np.array([1.0, 1.0, 1.0])
    pos, vel = zero_energy_data(rng.normal(size=(3, 2)), rng.normal(size=(3, 2)), m)
    n, _, speed, kappa, branch, scale = shape_observables(pos, vel, m)
    value = ShapePotential(m).value(n)
    d = dilatational_momentum(pos, vel, m)
    assert -(1 + 2 * value / kappa) == pytest.approx((d / (scale * scale * speed)) ** 2, rel=1e-10)
    assert branch == np.sign(d)


def test_energy_conserved_and_sampling_uniform_in_arc_length():
    rng = np.random.default_rng(2)
    pos, vel = random_initial_data(rng)
    res = newtonian_oracle(Configuration(pos, np.ones(3)), vel, arclen=1.0, samples=101)
    assert res.status == "complete" and res.energy_drift < 1e-9
    assert np.allclose(res.record.s, np.linspace(0, 1, 101))
    steps = geodesic_distance(res.record.points[:-1], res.record.points[1:])
    assert np.allclose(steps, 0.01, rtol=1e-3)
    assert np.all(np.diff(res.times) > 0)


def test_time_horizon_mode():
    rng = np.random.default_rng(3)
    pos, vel = random_initial_data(rng)
    res = newtonian_oracle(Configuration(pos, np.ones(3)), vel, t_span=0.5, samples=11)
    assert np.allclose(res.times, np.linspace(0, 0.5, 11))
    assert np.all(np.diff(res.record.s) >= 0)


def test_requires_exactly_one_horizon():
    cfg = Configuration(np.eye(3)[:, :2], np.ones(3))
    with pytest.raises(ValueError):
        newtonian_oracle(cfg, np.zeros((3, 2)))
    with pytest.raises(ValueError):
        newtonian_oracle(cfg, np.zeros((3, 2)), t_span=1.0, arclen=1.0)


def test_rigid_rotation_has_no_shape_momentum():
    pos = np.array([[0.0, 0.0], [1.0, 0.0], [0.5, np.sqrt(3) / 2]])
    pos -= pos.mean(axis=0)
    vel = np.sqrt(3) * np.stack([-pos[:, 1], pos[:, 0]], axis=1)
    with pytest.raises(UndefinedDirectionError):
        curve_state_from_newton(pos, vel, np.ones(3))


def test_zero_energy_data_optional_rotation():
    rng = np.random.default_rng(4)
    m = np.array([1.0, 2.0, 3.0])
    pos, vel = zero_energy_data(rng.normal(size=(3, 2)), rng.normal(size=(3, 2)), m, remove_rotation=False)
    assert abs(energy(pos, vel, m)) < 1e-12
