"""Independent reference computations shared by the unit and acceptance tests."""

import numpy as np

from legged_inekf.filter import build_A, imu_dynamics
from legged_inekf.lie import SE23, exp_so3
from legged_inekf.state import ERROR_DIM, GRAVITY, RobotState, error_between, retract


def euler_flow(s: RobotState, omega_m, acc_m, h):
    """One Euler step of the biased IMU model; negative h steps backwards."""
    w = omega_m - s.b_omega
    a = acc_m - s.b_a
    aw = s.R @ a + GRAVITY
    return RobotState(s.R @ exp_so3(w * h), s.v + aw * h, s.p + s.v * h + 0.5 * aw * h * h,
                      s.b_omega, s.b_a, s.R_c, s.p_c)


def numeric_error_rate(truth: RobotState, xi, omega_m, acc_m, h=1e-5):
    """d/dt of the filter error at t=0, by central differences in time."""
    est = retract(truth, xi)
    ep = error_between(euler_flow(est, omega_m, acc_m, h), euler_flow(truth, omega_m, acc_m, h))
    em = error_between(euler_flow(est, omega_m, acc_m, -h), euler_flow(truth, omega_m, acc_m, -h))
    return (ep - em) / (2 * h)


def linearization_residual(truth, direction, eps, omega_m, acc_m):
    """|| xi_dot(eps d) - A(x_hat) eps d || for a unit direction d."""
    xi = eps * direction
    est = retract(truth, xi)
    return np.linalg.norm(numeric_error_rate(truth, xi, omega_m, acc_m) - build_A(est) @ xi)


def group_affine_residual(X1: SE23, X2: SE23, omega, acc) -> float:
    """|| f(X1 X2) - f(X1) X2 - X1 f(X2) + X1 f(I) X2 ||."""

    def f(X):
        return imu_dynamics(X.R, X.v, X.p, omega, acc)

    M1, M2 = X1.matrix(), X2.matrix()
    I = SE23.identity()
    res = f(X1 @ X2) - f(X1) @ M2 - M1 @ f(X2) + M1 @ f(I) @ M2
    return float(np.abs(res).max())


def fd_jacobian(fun, x: RobotState, h=1e-6):
    """Central-difference Jacobian of fun(retract(x, xi)) at xi = 0."""
    cols = []
    for j in range(ERROR_DIM):
        d = np.zeros(ERROR_DIM)
        d[j] = h
        cols.append((fun(retract(x, d)) - fun(retract(x, -d))) / (2 * h))
    return np.column_stack(cols)


def dense_gate(P, H, N, r, rho):
    """Mahalanobis distance with a plain matrix inverse."""
    S = H @ P @ H.T + N
    chi2 = float(r @ np.linalg.inv(S) @ r)
    return chi2, chi2 <= rho


def population_cov(W):
    W = np.asarray(W, dtype=float)
    E = W - W.mean(axis=0)
    return E.T @ E / W.shape[0]
