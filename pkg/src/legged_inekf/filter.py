"""Invariant EKF over (R, v, p) with IMU biases and camera extrinsics.

The pose error is right-invariant, eta = X_hat X^-1. Numerical kernels live
in :mod:`legged_inekf._kernels`; this module wraps them with typed samples,
validation and an event-ordered driver.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ._kernels import _pykernels
from ._kernels import backend as _kb
from .kinematics import ContactKinematicSample, KinematicObservation, LegModel, contact_velocity_obs
from .lie import hat3
from .state import (
    ERR_BA,
    ERR_BW,
    ERR_P,
    ERR_R,
    ERR_V,
    ERROR_DIM,
    FilterConfig,
    NoiseConfig,
    RobotState,
)

STATUS_NAMES = {
    _kb.ACCEPTED: "accepted",
    _kb.REJECTED: "rejected",
    _kb.SINGULAR: "singular",
    _kb.SKIPPED: "skipped",
    _kb.NO_INPUT: "no_input",
}


class FilterDivergedError(RuntimeError):
    def __init__(self, t, trace):
        super().__init__(f"filter diverged at t={t:.9f} (trace(P)={trace:.3g})")
        self.t = t
        self.trace = trace


class TimestampError(ValueError):
    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


@dataclass(frozen=True)
class ImuSample:
    t: float
    omega_tilde: np.ndarray
    a_tilde: np.ndarray


@dataclass(frozen=True)
class CameraVelocitySample:
    t: float
    v_c_tilde: np.ndarray
    omega_c_tilde: np.ndarray


@dataclass
class UpdateOutcome:
    accepted: bool
    chi2: float
    innovation: np.ndarray
    state_posterior: RobotState
    P_posterior: np.ndarray
    status: str = "accepted"


def build_A(state: RobotState, gravity=(0.0, 0.0, -9.81)) -> np.ndarray:
    """Continuous error-dynamics matrix, xi_dot = A xi (noise omitted).

    Only the bias columns depend on the state; bias and extrinsic rows are zero.
    """
    R, v, p = state.R, state.v, state.p
    A = np.zeros((ERROR_DIM, ERROR_DIM))
    A[ERR_V, ERR_R] = hat3(np.asarray(gravity, dtype=float))
    A[ERR_P, ERR_V] = np.eye(3)
    A[ERR_R, ERR_BW] = -R
    A[ERR_V, ERR_BW] = -hat3(v) @ R
    A[ERR_V, ERR_BA] = -R
    A[ERR_P, ERR_BW] = -hat3(p) @ R
    return A


def build_Q(state: RobotState, noise: NoiseConfig) -> np.ndarray:
    """B Cov(w) B^T with B = blockdiag(Ad_X, I_12)."""
    # only used for inspection; the compiled propagate forms Q inline
    return _pykernels.process_covariance(state.to_flat(), np.ascontiguousarray(noise.process_blocks()))


def transition_matrix(state: RobotState, dt: float, gravity=(0.0, 0.0, -9.81)) -> np.ndarray:
    """exp(A dt), exact because the pose block of A is nilpotent."""
    return _kb.transition_matrix(state.to_flat(), np.asarray(gravity, dtype=float), float(dt))


def imu_dynamics(R, v, p, omega, acc, gravity=(0.0, 0.0, -9.81)):
    """Continuous bias-free IMU dynamics in 5x5 matrix form f(X) = X_dot."""
    g = np.asarray(gravity, dtype=float)
    F = np.zeros((5, 5))
    F[:3, :3] = R @ hat3(omega)
    F[:3, 3] = R @ acc + g
    F[:3, 4] = v
    return F


@dataclass
class RunResult:
    """Per-event outputs of :meth:`FilterInstance.run_events`."""

    status: np.ndarray
    chi2: np.ndarray
    innovation: np.ndarray
    record_index: np.ndarray
    states: np.ndarray
    pdiag: np.ndarray
    diverged: bool = False
    diverged_at: int | None = None


EV_IMU = _kb.EV_IMU
EV_KIN = _kb.EV_KIN
EV_CAM = _kb.EV_CAM


@dataclass
class FilterInstance:
    """Mutable filter: flat state vector, covariance and camera-noise window."""

    noise: NoiseConfig = field(default_factory=NoiseConfig)
    config: FilterConfig = field(default_factory=FilterConfig)
    legs: dict = field(default_factory=dict)
    t: float | None = None

    def __post_init__(self):
        self.x = self.config.initial_state.to_flat()
        self.P = np.array(self.config.initial_covariance, dtype=float, order="C")
        self._q = np.ascontiguousarray(self.noise.process_blocks())
        self._g = np.array(self.noise.gravity, dtype=float)
        self._imu = np.zeros(6)
        self._clock = np.array([np.nan if self.t is None else float(self.t), 0.0])
        self._tuner_buf = np.zeros((self.config.tuner_window, 6))
        self._tuner_meta = np.zeros(2, dtype=np.int64)
        self._tuned = None

    @property
    def state(self) -> RobotState:
        return RobotState.from_flat(self.x)

    @property
    def backend(self) -> str:
        return _kb.NAME

    def copy(self) -> "FilterInstance":
        other = FilterInstance.__new__(FilterInstance)
        other.__dict__.update({k: (v.copy() if isinstance(v, np.ndarray) else v) for k, v in self.__dict__.items()})
        other._tuned = None if self._tuned is None else self._tuned.copy()
        return other

    def _check_P(self):
        if not np.all(np.isfinite(self.P)) or np.trace(self.P) > self.config.divergence_trace:
            raise FilterDivergedError(self.t if self.t is not None else float("nan"), float(np.trace(self.P)))

    # -- propagation ---------------------------------------------------------

    def propagate(self, imu: ImuSample, dt: float) -> "FilterInstance":
        """Euler step of the mean with ``imu`` held over ``dt``; P <- Phi (P + Q dt) Phi^T."""
        dt = float(dt)
        if not 0.0 < dt <= self.config.dt_max:
            raise ValueError(f"dt={dt} outside (0, {self.config.dt_max}]")
        w = np.asarray(imu.omega_tilde, dtype=float)
        a = np.asarray(imu.a_tilde, dtype=float)
        if not (np.all(np.isfinite(w)) and np.all(np.isfinite(a))):
            raise ValueError("IMU sample must be finite")
        _kb.propagate(self.x, self.P, w, a, dt, self._g, self._q)
        self.t = (self.t if self.t is not None else imu.t) + dt
        self._clock[0] = self.t
        self._check_P()
        return self

    # -- updates -------------------------------------------------------------

    def _outcome(self, status, chi2, r):
        return UpdateOutcome(
            accepted=status == _kb.ACCEPTED,
            chi2=float(chi2),
            innovation=np.asarray(r, dtype=float).copy(),
            state_posterior=self.state,
            P_posterior=self.P.copy(),
            status=STATUS_NAMES[status],
        )

    def kinematic_update(self, obs: KinematicObservation, gate: bool = True) -> UpdateOutcome:
        """Right-invariant contact-velocity update with the Mahalanobis gate."""
        y = np.asarray(obs.y_vel, dtype=float)
        if not np.all(np.isfinite(y)):
            raise ValueError("observation must be finite")
        status, chi2, r = _kb.kinematic_update(
            self.x, self.P, y, self.noise.cov_n_f, self.config.gate_threshold, gate
        )
        return self._outcome(status, chi2, r)

    def tune_noise(self, cam: CameraVelocitySample) -> np.ndarray:
        """Push [omega_c; v_c] into the window and return its covariance plus a floor."""
        sample = np.concatenate([cam.omega_c_tilde, cam.v_c_tilde]).astype(float)
        C = _kb.tuner_push(self._tuner_buf, self._tuner_meta, sample, self.config.tuner_floor)
        self._tuned = C
        return C.copy()

    @property
    def window_full(self) -> bool:
        return int(self._tuner_meta[0]) >= self.config.tuner_window

    def camera_noise_blocks(self):
        """(Cov(n_vc), Cov(n_omega_c)) used by the next camera update.

        Tuned blocks replace the configured ones once the window is full.
        """
        if self.config.tune_camera_noise and self._tuned is not None and self.window_full:
            return (
                np.ascontiguousarray(self._tuned[3:6, 3:6]),
                np.ascontiguousarray(self._tuned[0:3, 0:3]),
            )
        return self.noise.cov_n_vc, self.noise.cov_n_omega_c

    def camera_update(self, cam: CameraVelocitySample, tune: bool | None = None) -> UpdateOutcome:
        """Linearized update with the camera-frame velocity; ungated.

        When tuning is enabled the sample first enters the noise window.
        """
        v_c = np.asarray(cam.v_c_tilde, dtype=float)
        w_c = np.asarray(cam.omega_c_tilde, dtype=float)
        if not (np.all(np.isfinite(v_c)) and np.all(np.isfinite(w_c))):
            raise ValueError("camera sample must be finite")
        if tune is None:
            tune = self.config.tune_camera_noise
        if tune:
            self.tune_noise(cam)
        cov_vc, cov_wc = self.camera_noise_blocks()
        if not self.config.use_camera:
            return self._outcome(_kb.SKIPPED, np.nan, np.full(3, np.nan))
        status, chi2, r = _kb.camera_update(
            self.x,
            self.P,
            v_c,
            w_c,
            np.ascontiguousarray(cov_vc),
            np.ascontiguousarray(cov_wc),
            self.config.camera_noise_world_frame,
            self.config.gate_threshold,
            False,
        )
        return self._outcome(status, chi2, r)

    # -- event driver --------------------------------------------------------

    def run_events(self, times, kinds, data, active=None) -> RunResult:
        """Process pre-ordered events in one kernel call.

        ``data`` rows are [omega, acc] for IMU, [y_vel, 0, 0, 0] for kinematic
        and [v_c, omega_c] for camera events. A state snapshot is recorded after
        each applied kinematic or camera event.
        """
        times = np.ascontiguousarray(times, dtype=float)
        n = times.shape[0]
        kinds = np.ascontiguousarray(kinds, dtype=np.int8)
        data = np.ascontiguousarray(data, dtype=float).reshape(n, 6)
        active = np.ones(n, dtype=np.int8) if active is None else np.ascontiguousarray(active, dtype=np.int8)
        if n and (np.any(np.diff(times) < 0) or not np.all(np.isfinite(times))):
            bad = int(np.argmax(np.diff(times) < 0)) + 1 if np.any(np.diff(times) < 0) else 0
            raise TimestampError(f"timestamps not non-decreasing at event {bad}", bad)
        if n and np.isnan(self._clock[0]):
            self._clock[0] = times[0]
        if n and times[0] < self._clock[0]:
            raise TimestampError("event precedes the filter clock", 0)
        n_rec = int(np.count_nonzero((kinds == EV_CAM) | ((kinds == EV_KIN) & (active != 0))))
        status = np.empty(n, dtype=np.int8)
        chi2 = np.full(n, np.nan)
        innov = np.full((n, 3), np.nan)
        states = np.empty((n_rec, 33))
        pdiag = np.empty((n_rec, ERROR_DIM))
        cov_vc, cov_wc = self.noise.cov_n_vc, self.noise.cov_n_omega_c
        code, where, rows = _kb.run_events(
            self.x,
            self.P,
            self._clock,
            self._imu,
            times,
            kinds,
            data,
            active,
            self._q,
            self._g,
            np.ascontiguousarray(self.noise.cov_n_f),
            np.ascontiguousarray(cov_vc),
            np.ascontiguousarray(cov_wc),
            float(self.config.gate_threshold),
            bool(self.config.use_camera),
            bool(self.config.tune_camera_noise),
            bool(self.config.camera_noise_world_frame),
            self._tuner_buf,
            self._tuner_meta,
            float(self.config.tuner_floor),
            float(self.config.dt_max),
            float(self.config.divergence_trace),
            status,
            chi2,
            innov,
            states,
            pdiag,
        )
        if self._tuner_meta[0] > 0:
            self._tuned = self._window_covariance()
        self.t = float(self._clock[0])
        if code == _kb.RUN_DT_TOO_LARGE:
            raise TimestampError(
                f"gap of {times[where] - self._clock[0]:.6f} s before event {where} exceeds dt_max", where
            )
        end = n if code == _kb.RUN_OK else where + 1
        k, a, st = kinds[:end], active[:end], status[:end]
        recorded = ((k == EV_CAM) | ((k == EV_KIN) & (a != 0))) & (st != _kb.NO_INPUT)
        rec_index = np.flatnonzero(recorded)
        result = RunResult(status[:end], chi2[:end], innov[:end], rec_index, states[:rows], pdiag[:rows])
        if code == _kb.RUN_DIVERGED:
            result.diverged = True
            result.diverged_at = int(where)
        return result

    def _window_covariance(self):
        m = int(self._tuner_meta[0])
        n = self._tuner_buf.shape[0]
        idx = [(int(self._tuner_meta[1]) - m + k) % n for k in range(m)]
        W = self._tuner_buf[idx]
        E = W - W.sum(axis=0) / m
        C = (E.T @ E) / m
        C = 0.5 * (C + C.T)
        C[np.diag_indices(6)] += self.config.tuner_floor
        return C

    def step(self, samples) -> "FilterInstance":
        """Apply a time-sorted batch of IMU, contact and camera samples.

        Each measurement is applied at its own timestamp after propagating with
        the latest IMU sample. Equal timestamps run IMU, then contacts by
        ascending id, then camera.
        """
        samples = list(samples)
        if not samples:
            return self
        ts = np.array([s.t for s in samples], dtype=float)
        if np.any(np.diff(ts) < 0):
            bad = int(np.argmax(np.diff(ts) < 0)) + 1
            raise TimestampError(f"sample {bad} is earlier than its predecessor", bad)
        rows = []
        for s in samples:
            if isinstance(s, ImuSample):
                rows.append((s.t, EV_IMU, 0, np.concatenate([s.omega_tilde, s.a_tilde]), 1))
            elif isinstance(s, ContactKinematicSample):
                if s.contact_active:
                    y = contact_velocity_obs(s, self._leg(s.contact_id)).y_vel
                else:
                    y = np.zeros(3)
                rows.append((s.t, EV_KIN, s.contact_id, np.concatenate([y, np.zeros(3)]), int(s.contact_active)))
            elif isinstance(s, KinematicObservation):
                rows.append((s.t, EV_KIN, s.contact_id, np.concatenate([s.y_vel, np.zeros(3)]), 1))
            elif isinstance(s, CameraVelocitySample):
                rows.append((s.t, EV_CAM, 0, np.concatenate([s.v_c_tilde, s.omega_c_tilde]), 1))
            else:
                raise TypeError(f"unsupported sample type {type(s).__name__}")
        rows.sort(key=lambda r: (r[0], r[1], r[2]))
        res = self.run_events(
            [r[0] for r in rows],
            [r[1] for r in rows],
            np.array([r[3] for r in rows]),
            [r[4] for r in rows],
        )
        if res.diverged:
            raise FilterDivergedError(self.t, float(np.trace(self.P)))
        return self

    def _leg(self, contact_id) -> LegModel:
        try:
            return self.legs[contact_id]
        except KeyError:
            raise KeyError(f"no leg model registered for contact {contact_id}") from None
