import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from legged_inekf.kinematics import (
    ContactKinematicSample,
    JointLimitError,
    ToyLeg,
    biped_legs,
    contact_velocity_batch,
    contact_velocity_obs,
)
from legged_inekf.lie import exp_so3, hat3

angles = arrays(np.float64, 3, elements=st.floats(-1.2, 1.2))


def test_forward_at_zero():
    leg = ToyLeg()
    np.testing.assert_allclose(leg.forward(np.zeros(3)), [0.2, 0.0, -0.8])


@given(angles)
def test_jacobian_matches_finite_differences(alpha):
    leg = ToyLeg(mount=(0.0, 0.1, 0.0))
    h = 1e-6
    J_fd = np.column_stack(
        [(leg.forward_batch(alpha + h * e) - leg.forward_batch(alpha - h * e)) / (2 * h) for e in np.eye(3)]
    )
    np.testing.assert_allclose(leg.jacobian(alpha), J_fd, atol=1e-8)


def test_inverse_roundtrip(rng):
    leg = ToyLeg(mount=(0.0, -0.1, 0.0))
    n = 0
    while n < 50:
        a = rng.uniform([-0.8, -0.8, 0.1], [0.8, 0.5, 1.5])
        if leg.hip - 0.4 * np.sin(a[1]) - 0.4 * np.sin(a[1] + a[2]) <= 0.01:
            continue  # foot behind the yaw axis flips the yaw branch
        n += 1
        np.testing.assert_allclose(leg.inverse(leg.forward(a)), a, atol=1e-9)


def test_limits():
    leg = ToyLeg()
    with pytest.raises(JointLimitError):
        leg.forward(np.array([0.0, 2.0, 0.0]))
    with pytest.raises(ValueError):
        leg.forward(np.array([np.nan, 0.0, 0.0]))
    with pytest.raises(JointLimitError):
        leg.inverse(np.array([5.0, 0.0, 0.0]))


def test_static_leg_gives_zero_velocity():
    s = ContactKinematicSample(0.0, 0, np.zeros(3), np.zeros(3), np.zeros(3))
    np.testing.assert_array_equal(contact_velocity_obs(s, ToyLeg()).y_vel, np.zeros(3))


def test_pure_rotation_gives_minus_omega_cross_r():
    leg = ToyLeg()
    alpha = np.array([0.1, 0.2, 0.3])
    w = np.array([0.0, 0.0, 1.0])
    y = contact_velocity_obs(ContactKinematicSample(0.0, 0, alpha, np.zeros(3), w), leg).y_vel
    np.testing.assert_allclose(y, -np.cross(w, leg.forward(alpha)), atol=1e-15)


def test_homogeneous_form():
    obs = contact_velocity_obs(ContactKinematicSample(0.0, 0, np.zeros(3), np.ones(3), np.zeros(3)), ToyLeg())
    np.testing.assert_array_equal(obs.y[3:], [-1.0, 0.0])
    np.testing.assert_array_equal(obs.b, [0, 0, 0, -1, 0])


def test_inactive_and_nonfinite_rejected():
    with pytest.raises(ValueError):
        contact_velocity_obs(ContactKinematicSample(0.0, 0, np.zeros(3), np.zeros(3), np.zeros(3), False), ToyLeg())
    with pytest.raises(ValueError):
        contact_velocity_obs(ContactKinematicSample(0.0, 0, np.zeros(3), [np.inf, 0, 0], np.zeros(3)), ToyLeg())


def test_measurement_equals_body_velocity_for_fixed_contact(rng):
    """With the foot fixed in the world, y_vel = R^T v exactly (first order in time)."""
    leg = biped_legs()[0]
    R, v, p = exp_so3(rng.normal(size=3) * 0.3), rng.normal(size=3) * 0.2, rng.normal(size=3)
    w = rng.normal(size=3) * 0.3
    alpha = np.array([0.1, 0.3, 0.6])
    d = p + R @ leg.forward(alpha)
    # the encoder rate that keeps the foot at d
    rdot = -R.T @ v - hat3(w) @ leg.forward(alpha)
    alpha_dot = np.linalg.solve(leg.jacobian(alpha), rdot)
    y = contact_velocity_obs(ContactKinematicSample(0.0, 0, alpha, alpha_dot, w), leg).y_vel
    np.testing.assert_allclose(y, R.T @ v, atol=1e-12)
    # a small time step keeps the world contact point in place
    h = 1e-6
    R2, p2 = R @ exp_so3(w * h), p + v * h
    np.testing.assert_allclose(p2 + R2 @ leg.forward(alpha + alpha_dot * h), d, atol=1e-10)


def test_batch_matches_single(rng):
    leg = ToyLeg()
    a = rng.uniform(-0.5, 0.5, (20, 3))
    ad = rng.normal(size=(20, 3))
    w = rng.normal(size=(20, 3))
    yb = contact_velocity_batch(leg, a, ad, w)
    for i in range(20):
        s = ContactKinematicSample(0.0, 0, a[i], ad[i], w[i])
        np.testing.assert_allclose(contact_velocity_obs(s, leg).y_vel, yb[i], atol=1e-15)


def test_yawed_zero_pose():
    np.testing.assert_allclose(ToyLeg().forward(np.array([np.pi / 2, 0.0, 0.0])), [0.0, 0.2, -0.8], atol=1e-15)


def test_rotation_only_example():
    leg = ToyLeg(hip=0.0, thigh=0.5, shin=0.5)
    np.testing.assert_allclose(leg.forward(np.zeros(3)), [0, 0, -1])
    s = ContactKinematicSample(0.0, 0, np.zeros(3), np.zeros(3), np.array([0.0, 1.0, 0.0]))
    np.testing.assert_allclose(contact_velocity_obs(s, leg).y_vel, [1.0, 0.0, 0.0], atol=1e-15)


def test_stationary_noisy_residual_is_zero_mean():
    from legged_inekf.filter import EV_KIN
    from legged_inekf.simulator import ScenarioConfig, build_events, generate_truth, synthesize_sensors

    cfg = ScenarioConfig(duration=10.0, forward_speed=0.0, yaw_rate=0.0, yaw_amplitude=0.0, sway=0.0, bob=0.0,
                         roll_amplitude=0.0, pitch_amplitude=0.0, bias_omega=(0.0, 0.0, 0.0))
    legs = biped_legs()
    tr = generate_truth(cfg, legs)
    _, kinds, data, active, _ = build_events(synthesize_sensors(tr, cfg, legs), legs)
    y = data[(kinds == EV_KIN) & (active == 1), :3]
    sem = cfg.noise.foot / np.sqrt(len(y))
    assert np.all(np.abs(y.mean(axis=0)) < 4 * sem + 1e-3 * cfg.noise.gyro)
