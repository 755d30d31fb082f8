"""Filter state, 21-dim error layout, noise and filter configuration."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .lie import (
    SE23,
    exp_se23,
    exp_so3,
    log_se23,
    log_so3,
    orthonormality_residual,
    project_to_so3,
)

# Error-state column layout shared by every Jacobian in the package.
ERR_R = slice(0, 3)
ERR_V = slice(3, 6)
ERR_P = slice(6, 9)
ERR_BW = slice(9, 12)
ERR_BA = slice(12, 15)
ERR_RC = slice(15, 18)
ERR_PC = slice(18, 21)
ERROR_DIM = 21

# Flat float64 layout used by the compiled kernels (rotations row-major).
X_R = slice(0, 9)
X_V = slice(9, 12)
X_P = slice(12, 15)
X_BW = slice(15, 18)
X_BA = slice(18, 21)
X_RC = slice(21, 30)
X_PC = slice(30, 33)
FLAT_DIM = 33

GRAVITY = np.array([0.0, 0.0, -9.81])


def _vec3(x) -> np.ndarray:
    a = np.array(x, dtype=float).reshape(3)
    return a


def _rot(x) -> np.ndarray:
    R = np.array(x, dtype=float).reshape(3, 3)
    if orthonormality_residual(R) > 1e-9:
        R = project_to_so3(R)
    return R


@dataclass(frozen=True)
class RobotState:
    """(R, v, p, b_omega, b_a, R_c, p_c); world frame except the extrinsics."""

    R: np.ndarray = field(default_factory=lambda: np.eye(3))
    v: np.ndarray = field(default_factory=lambda: np.zeros(3))
    p: np.ndarray = field(default_factory=lambda: np.zeros(3))
    b_omega: np.ndarray = field(default_factory=lambda: np.zeros(3))
    b_a: np.ndarray = field(default_factory=lambda: np.zeros(3))
    R_c: np.ndarray = field(default_factory=lambda: np.eye(3))
    p_c: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        for name in ("R", "R_c"):
            object.__setattr__(self, name, _rot(getattr(self, name)))
        for name in ("v", "p", "b_omega", "b_a", "p_c"):
            object.__setattr__(self, name, _vec3(getattr(self, name)))
        flat = self.to_flat()
        if not np.all(np.isfinite(flat)):
            raise ValueError("RobotState contains non-finite values")

    @property
    def pose(self) -> SE23:
        return SE23(self.R, self.v, self.p)

    def to_flat(self) -> np.ndarray:
        x = np.empty(FLAT_DIM)
        x[X_R] = self.R.ravel()
        x[X_V] = self.v
        x[X_P] = self.p
        x[X_BW] = self.b_omega
        x[X_BA] = self.b_a
        x[X_RC] = self.R_c.ravel()
        x[X_PC] = self.p_c
        return x

    @classmethod
    def from_flat(cls, x: np.ndarray) -> "RobotState":
        x = np.asarray(x, dtype=float)
        return cls(
            R=x[X_R].reshape(3, 3),
            v=x[X_V],
            p=x[X_P],
            b_omega=x[X_BW],
            b_a=x[X_BA],
            R_c=x[X_RC].reshape(3, 3),
            p_c=x[X_PC],
        )

    def with_pose(self, pose: SE23) -> "RobotState":
        return replace(self, R=pose.R, v=pose.v, p=pose.p)


def retract(state: RobotState, delta: np.ndarray) -> RobotState:
    """Apply a correction: left-multiplicative on the pose and R_c, additive elsewhere."""
    delta = np.asarray(delta, dtype=float)
    if delta.shape != (ERROR_DIM,):
        raise ValueError(f"delta must have shape ({ERROR_DIM},)")
    pose = exp_se23(delta[0:9]) @ state.pose
    R_c = exp_so3(delta[ERR_RC]) @ state.R_c
    return RobotState(
        R=pose.R,
        v=pose.v,
        p=pose.p,
        b_omega=state.b_omega + delta[ERR_BW],
        b_a=state.b_a + delta[ERR_BA],
        R_c=R_c,
        p_c=state.p_c + delta[ERR_PC],
    )


def error_between(estimate: RobotState, truth: RobotState) -> np.ndarray:
    """Right-invariant pose error log(X_hat X^-1) plus extrinsic/bias errors."""
    xi = np.empty(ERROR_DIM)
    xi[0:9] = log_se23(estimate.pose @ truth.pose.inverse())
    xi[ERR_BW] = estimate.b_omega - truth.b_omega
    xi[ERR_BA] = estimate.b_a - truth.b_a
    xi[ERR_RC] = log_so3(estimate.R_c @ truth.R_c.T)
    xi[ERR_PC] = estimate.p_c - truth.p_c
    return xi


def symmetrize(P: np.ndarray) -> np.ndarray:
    return 0.5 * (P + P.T)


def _psd3(x, name: str) -> np.ndarray:
    a = np.asarray(x, dtype=float)
    if a.ndim == 0:
        a = float(a) * np.eye(3)
    elif a.shape == (3,):
        a = np.diag(a)
    if a.shape != (3, 3):
        raise ValueError(f"{name} must be a scalar, 3-vector diagonal or 3x3 matrix")
    if not np.allclose(a, a.T, atol=1e-12) or np.linalg.eigvalsh(0.5 * (a + a.T)).min() < -1e-12:
        raise ValueError(f"{name} must be symmetric positive semidefinite")
    return 0.5 * (a + a.T)


@dataclass(frozen=True)
class NoiseConfig:
    """Noise covariances.

    Process terms (``cov_w_*``) are continuous-time densities; measurement terms
    (``cov_n_*``) are per-sample covariances.
    """

    cov_w_omega: np.ndarray = field(default_factory=lambda: 3.1e-8 * np.eye(3))
    cov_w_a: np.ndarray = field(default_factory=lambda: 3.1e-6 * np.eye(3))
    cov_w_bomega: np.ndarray = field(default_factory=lambda: 1e-10 * np.eye(3))
    cov_w_ba: np.ndarray = field(default_factory=lambda: 1e-8 * np.eye(3))
    cov_w_Rc: np.ndarray = field(default_factory=lambda: 1e-12 * np.eye(3))
    cov_w_pc: np.ndarray = field(default_factory=lambda: 1e-12 * np.eye(3))
    cov_n_f: np.ndarray = field(default_factory=lambda: 0.05**2 * np.eye(3))
    cov_n_vc: np.ndarray = field(default_factory=lambda: 0.03**2 * np.eye(3))
    cov_n_omega_c: np.ndarray = field(default_factory=lambda: 0.02**2 * np.eye(3))
    gravity: np.ndarray = field(default_factory=lambda: GRAVITY.copy())

    def __post_init__(self):
        for name in (
            "cov_w_omega",
            "cov_w_a",
            "cov_w_bomega",
            "cov_w_ba",
            "cov_w_Rc",
            "cov_w_pc",
            "cov_n_f",
            "cov_n_vc",
            "cov_n_omega_c",
        ):
            object.__setattr__(self, name, _psd3(getattr(self, name), name))
        object.__setattr__(self, "gravity", _vec3(self.gravity))

    def process_blocks(self) -> np.ndarray:
        """(6, 3, 3) stack ordered like the error state after the pose block.

        Index 0/1 are gyro/accel white noise; 2..5 drive b_omega, b_a, R_c, p_c.
        """
        return np.stack(
            [
                self.cov_w_omega,
                self.cov_w_a,
                self.cov_w_bomega,
                self.cov_w_ba,
                self.cov_w_Rc,
                self.cov_w_pc,
            ]
        )


def default_initial_covariance() -> np.ndarray:
    """Known start pose, uncertain extrinsics."""
    d = np.empty(ERROR_DIM)
    d[ERR_R] = 0.03**2
    d[ERR_V] = 0.01**2
    d[ERR_P] = 1e-6
    d[ERR_BW] = 1e-4
    d[ERR_BA] = 1e-4
    d[ERR_RC] = 0.1**2
    d[ERR_PC] = 0.05**2
    return np.diag(d)


@dataclass(frozen=True)
class FilterConfig:
    gate_threshold: float = 30.1
    tuner_window: int = 5
    initial_covariance: np.ndarray = field(default_factory=default_initial_covariance)
    initial_state: RobotState = field(default_factory=RobotState)
    dt_max: float = 0.05
    use_camera: bool = True
    tune_camera_noise: bool = True
    # Express camera noise in the world frame (R R_c Cov R_c^T R^T) instead of
    # the camera frame the residual lives in.
    camera_noise_world_frame: bool = False
    tuner_floor: float = 1e-8
    divergence_trace: float = 1e6

    def __post_init__(self):
        if not self.gate_threshold > 0:
            raise ValueError("gate_threshold must be positive")
        if int(self.tuner_window) != self.tuner_window or self.tuner_window < 2:
            raise ValueError("tuner_window must be an integer >= 2")
        if not self.dt_max > 0:
            raise ValueError("dt_max must be positive")
        P = np.asarray(self.initial_covariance, dtype=float)
        if P.shape == (ERROR_DIM,):
            P = np.diag(P)
        if P.shape != (ERROR_DIM, ERROR_DIM):
            raise ValueError("initial_covariance must be 21x21 or a 21-vector diagonal")
        P = symmetrize(P)
        if np.linalg.eigvalsh(P).min() < -1e-10:
            raise ValueError("initial_covariance must be positive semidefinite")
        object.__setattr__(self, "initial_covariance", P)
        object.__setattr__(self, "tuner_window", int(self.tuner_window))
