import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from conftest import random_state
from legged_inekf.lie import SE23, exp_se23, exp_so3
from legged_inekf.state import (
    ERROR_DIM,
    FilterConfig,
    NoiseConfig,
    RobotState,
    default_initial_covariance,
    error_between,
    retract,
    symmetrize,
)

small21 = arrays(np.float64, ERROR_DIM, elements=st.floats(-1e-2, 1e-2))


def test_retract_identity_and_pc_shift(rng):
    s = random_state(rng)
    r = retract(s, np.zeros(ERROR_DIM))
    np.testing.assert_allclose(r.to_flat(), s.to_flat(), atol=1e-15)
    d = np.zeros(ERROR_DIM)
    d[18] = 0.01
    r = retract(s, d)
    np.testing.assert_allclose(r.p_c - s.p_c, [0.01, 0, 0], atol=1e-15)
    np.testing.assert_array_equal(r.R, s.R)
    np.testing.assert_array_equal(r.v, s.v)


@pytest.mark.parametrize("scale", [1e-2, 1e-3])
def test_half_steps_differ_by_second_order(scale, rng):
    d = rng.normal(size=ERROR_DIM)
    d *= scale / np.linalg.norm(d)
    s = random_state(rng)
    twice = retract(retract(s, d / 2), d / 2)
    once = retract(s, d)
    diff = np.linalg.norm(error_between(twice, once))
    assert diff < 10 * scale**2


def test_error_between_cases(rng):
    s = random_state(rng)
    np.testing.assert_allclose(error_between(s, s), np.zeros(ERROR_DIM), atol=1e-12)
    a = RobotState(p=[0.1, -0.2, 0.3])
    b = RobotState()
    np.testing.assert_allclose(error_between(a, b)[6:9], [0.1, -0.2, 0.3], atol=1e-15)


@given(small21)
def test_retract_error_roundtrip(xi):
    s = random_state(np.random.default_rng(3))
    np.testing.assert_allclose(error_between(retract(s, xi), s), xi, atol=1e-8)


def test_error_recovers_negative_retraction(rng):
    s = random_state(rng)
    xi = 1e-4 * rng.normal(size=ERROR_DIM)
    truth = retract(s, -xi)
    assert np.linalg.norm(error_between(s, truth) - xi) < 1e-6


def test_right_invariance_of_pose_error(rng):
    a, b = random_state(rng), random_state(rng)
    G = exp_se23(rng.normal(size=9))
    a2 = a.with_pose(a.pose @ G)
    b2 = b.with_pose(b.pose @ G)
    np.testing.assert_allclose(error_between(a2, b2)[:9], error_between(a, b)[:9], atol=1e-9)


def test_symmetrize_idempotent(rng):
    P = rng.normal(size=(21, 21))
    S = symmetrize(P)
    np.testing.assert_array_equal(symmetrize(S), S)
    np.testing.assert_array_equal(S, S.T)


def test_state_validation():
    with pytest.raises(ValueError):
        RobotState(v=[np.nan, 0, 0])
    R = exp_so3([0.1, 0.2, 0.3]) * (1 + 1e-6)
    assert np.linalg.norm(RobotState(R=R).R.T @ RobotState(R=R).R - np.eye(3)) < 1e-12
    assert isinstance(RobotState().pose, SE23)


def test_flat_roundtrip(rng):
    s = random_state(rng)
    np.testing.assert_array_equal(RobotState.from_flat(s.to_flat()).to_flat(), s.to_flat())


def test_noise_config_validation():
    with pytest.raises(ValueError):
        NoiseConfig(cov_n_f=-np.eye(3))
    n = NoiseConfig(cov_n_f=0.1)
    np.testing.assert_allclose(n.cov_n_f, 0.1 * np.eye(3))
    assert n.process_blocks().shape == (6, 3, 3)


def test_filter_config_defaults_and_validation():
    c = FilterConfig()
    assert c.gate_threshold == 30.1
    assert c.tuner_window == 5
    P = default_initial_covariance()
    np.testing.assert_allclose(np.diag(P)[:3], 0.03**2)
    np.testing.assert_allclose(np.diag(P)[15:18], 0.1**2)
    for bad in (dict(gate_threshold=0), dict(tuner_window=1), dict(dt_max=0), dict(initial_covariance=-np.eye(21))):
        with pytest.raises(ValueError):
            FilterConfig(**bad)
