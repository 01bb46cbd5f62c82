import math

import numpy as np
import pytest

from riskcbf import (
    ControlAffinePlant,
    Pendulum,
    PendulumParams,
    ValidationError,
    make_plant,
    nominal_pendulum_control,
    pendulum_drift,
    pendulum_input_map,
)


def test_drift_equilibrium():
    assert np.array_equal(pendulum_drift(PendulumParams(), [0, 0]), [0, 0])


def test_drift_reference_state():
    out = pendulum_drift(PendulumParams(0.01), [0.3, 0.2])
    assert out == pytest.approx([0.302, 0.2 + math.sin(0.3) * 0.01], abs=1e-15)
    assert out[1] == pytest.approx(0.2029552, abs=1e-7)


def test_drift_at_pi():
    out = pendulum_drift(PendulumParams(), [math.pi, 0])
    assert out[0] == math.pi
    assert abs(out[1]) < 1e-17


def test_input_map():
    assert np.array_equal(pendulum_input_map(PendulumParams(0.01), [5, -3]), [[0], [0.01]])
    assert np.array_equal(pendulum_input_map(PendulumParams(1.0), [0, 0]), [[0], [1]])
    p = PendulumParams(0.01)
    assert np.array_equal(pendulum_input_map(p, [0.1, 0.2]), pendulum_input_map(p, [-2.0, 7.0]))


def test_nominal_control():
    assert nominal_pendulum_control([0, 0]) == 0
    assert nominal_pendulum_control([0.3, 0.2]) == pytest.approx(-0.7955202066613396, abs=1e-15)
    assert nominal_pendulum_control([-0.3, -0.2]) == -nominal_pendulum_control([0.3, 0.2])


def test_dt_must_be_positive():
    for dt in (0.0, -0.01):
        with pytest.raises(ValidationError):
            PendulumParams(dt)
        with pytest.raises(ValidationError):
            Pendulum(dt)


def test_state_must_be_two_dimensional():
    with pytest.raises(ValidationError):
        pendulum_drift(PendulumParams(), [0.1, 0.2, 0.3])


def test_drift_is_near_identity():
    rng = np.random.default_rng(0)
    p = PendulumParams(0.01)
    for s in rng.uniform(-3, 3, (200, 2)):
        assert np.linalg.norm(pendulum_drift(p, s) - s) <= p.dt * (abs(s[1]) + 1)


def test_nominal_closed_loop_converges():
    plant = Pendulum(0.01)
    x = np.array([0.3, 0.2])
    for _ in range(800):
        x = plant.step(x, plant.nominal_control(x))
    assert np.linalg.norm(x) < 0.01


def test_generic_plant_shapes():
    plant = ControlAffinePlant(3, 2, lambda x: 2 * x, lambda x: np.ones((3, 2)))
    x = np.array([1.0, 2.0, 3.0])
    assert plant.drift(x).shape == (3,)
    assert plant.input_map(x).shape == (3, 2)
    assert np.array_equal(plant.step(x, [1.0, 1.0], w=np.ones(3)), 2 * x + 3)


def test_registry():
    assert isinstance(make_plant("pendulum", dt=0.02), Pendulum)
    assert make_plant("pendulum", dt=0.02).dt == 0.02
    with pytest.raises(ValidationError):
        make_plant("cartpole")
