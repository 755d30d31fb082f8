"""Synthetic biped walks, sensor streams and scoring.

Truth is integrated on the same time grid the filter propagates over, with the
filter's own Euler equations and the true zero-order-held IMU input, so a
noiseless filter reproduces it to rounding error.

Noise uses numpy's PCG64 generator (``np.random.default_rng(seed)``) with a
fixed draw order: gyro, accel, foot velocity, camera rate, camera velocity.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .filter import EV_CAM, EV_IMU, EV_KIN, FilterInstance, RunResult
from .kinematics import ToyLeg, biped_legs, contact_velocity_batch
from .lie import exp_so3, exp_so3_batch, left_jacobian_inv_so3_batch, log_so3_batch
from .state import (
    ERR_BW,
    ERR_P,
    ERR_PC,
    ERR_R,
    ERR_RC,
    ERROR_DIM,
    GRAVITY,
    X_BA,
    X_BW,
    X_P,
    X_PC,
    X_R,
    X_RC,
    X_V,
    FilterConfig,
    NoiseConfig,
    RobotState,
    default_initial_covariance,
)

NS = 1_000_000_000


@dataclass(frozen=True)
class SlipWindow:
    t_start: float
    t_end: float
    velocity: tuple = (0.3, 0.0, 0.0)


@dataclass(frozen=True)
class NoiseLevels:
    """Per-sample standard deviations."""

    gyro: float = 0.005
    accel: float = 0.05
    foot: float = 0.04
    camera_v: float = 0.03
    camera_w: float = 0.02

    def scaled(self, k: float) -> "NoiseLevels":
        return NoiseLevels(*(k * x for x in asdict(self).values()))


@dataclass(frozen=True)
class Rates:
    imu: float = 800.0
    contact: float = 2000.0
    camera: float = 200.0

    def period_ns(self, name: str) -> int:
        rate = getattr(self, name)
        if not rate > 0:
            raise ValueError(f"{name} rate must be positive")
        return int(round(NS / rate))


@dataclass(frozen=True)
class ScenarioConfig:
    duration: float = 35.0
    gait_period: float = 0.8
    forward_speed: float = 0.1
    yaw_rate: float = 0.02
    yaw_amplitude: float = 0.3
    yaw_period: float = 12.0
    sway: float = 0.01
    bob: float = 0.015
    roll_amplitude: float = 0.03
    pitch_amplitude: float = 0.03
    stance_height: float = 0.72
    slip_windows: tuple = ()
    bias_omega: tuple = (0.001, -0.0005, 0.0005)
    bias_a: tuple = (0.01, -0.01, 0.02)
    camera_rotvec: tuple = (0.1, -0.2, 0.3)
    camera_position: tuple = (0.15, 0.02, 0.1)
    noise: NoiseLevels = field(default_factory=NoiseLevels)
    rates: Rates = field(default_factory=Rates)
    seed: int = 0

    def __post_init__(self):
        if not self.duration > 0:
            raise ValueError("duration must be positive")
        if not self.gait_period > 0:
            raise ValueError("gait_period must be positive")
        windows = tuple(w if isinstance(w, SlipWindow) else SlipWindow(*w) for w in self.slip_windows)
        for w in windows:
            if not 0.0 <= w.t_start < w.t_end <= self.duration:
                raise ValueError(f"slip window {w} outside [0, duration]")
        object.__setattr__(self, "slip_windows", windows)

    @property
    def R_c(self) -> np.ndarray:
        return exp_so3(np.asarray(self.camera_rotvec, dtype=float))

    def filter_noise(self) -> NoiseConfig:
        """Filter noise model matched to the simulated sensors."""
        n, r = self.noise, self.rates
        return NoiseConfig(
            cov_w_omega=max(n.gyro**2 / r.imu, 1e-14),
            cov_w_a=max(n.accel**2 / r.imu, 1e-14),
            cov_w_bomega=1e-10,
            cov_w_ba=1e-8,
            cov_w_Rc=1e-12,
            cov_w_pc=1e-12,
            cov_n_f=max(n.foot**2, 1e-10),
            cov_n_vc=max(n.camera_v**2, 1e-10),
            cov_n_omega_c=max(n.camera_w**2, 1e-10),
        )


@dataclass(frozen=True)
class FilterSettings:
    """Filter options for an experiment; extrinsic errors are applied to the truth."""

    gate_threshold: float = 30.1
    tuner_window: int = 5
    tune_camera_noise: bool = True
    camera_noise_world_frame: bool = False
    extrinsic_rot_error_deg: float = 0.0
    extrinsic_pos_error_m: float = 0.0
    initial_covariance: tuple | None = None
    # Prior std of the gyro bias when initial_covariance is not given; a
    # calibrated IMU is assumed, since the z bias is only weakly observable.
    gyro_bias_std: float = 1e-3
    dt_max: float = 0.05
    tuner_floor: float = 1e-8


# ---------------------------------------------------------------- truth


def _reference(cfg: ScenarioConfig, t: np.ndarray):
    """Reference attitude R(t) and world velocity v(t)."""
    T = cfg.gait_period
    w_gait = 2.0 * np.pi / T
    psi = cfg.yaw_rate * t + cfg.yaw_amplitude * np.sin(2.0 * np.pi * t / cfg.yaw_period)
    roll = cfg.roll_amplitude * np.sin(w_gait * t)
    pitch = cfg.pitch_amplitude * np.sin(2.0 * w_gait * t + 0.3)
    z = np.zeros_like(t)
    R = (
        exp_so3_batch(np.stack([z, z, psi], -1))
        @ exp_so3_batch(np.stack([z, pitch, z], -1))
        @ exp_so3_batch(np.stack([roll, z, z], -1))
    )
    heading = np.stack([np.cos(psi), np.sin(psi), z], -1)
    lateral = np.stack([-np.sin(psi), np.cos(psi), z], -1)
    sway_rate = cfg.sway * w_gait * np.cos(w_gait * t)
    bob_rate = cfg.bob * 2.0 * w_gait * np.cos(2.0 * w_gait * t)
    v = cfg.forward_speed * heading + sway_rate[:, None] * lateral
    v[:, 2] += bob_rate
    return R, v


def _grid(cfg: ScenarioConfig):
    """Integer-ns event times; the run ends on the last IMU sample."""
    r = cfg.rates
    end = int(round(cfg.duration * NS))
    p_imu, p_con, p_cam = r.period_ns("imu"), r.period_ns("contact"), r.period_ns("camera")
    imu = np.arange(0, end + 1, p_imu, dtype=np.int64)
    end = int(imu[-1])
    con = np.arange(0, end + 1, p_con, dtype=np.int64)
    cam = np.arange(p_cam, end + 1, p_cam, dtype=np.int64)
    return imu, con, cam


def _contact_schedule(cfg: ScenarioConfig, con_ns: np.ndarray):
    """Alternating single support: leg 0 in the first half of each gait cycle."""
    half = int(round(cfg.gait_period * NS / 2))
    stance = con_ns // half
    active = np.zeros((con_ns.size, 2), dtype=bool)
    active[:, 0] = stance % 2 == 0
    active[:, 1] = stance % 2 == 1
    return stance, active


@dataclass
class TruthTimeline:
    t_ns: np.ndarray
    R: np.ndarray
    v: np.ndarray
    p: np.ndarray
    omega: np.ndarray  # held true angular rate on each grid interval
    acc: np.ndarray  # held true specific force
    imu_t_ns: np.ndarray
    imu_omega: np.ndarray
    imu_acc: np.ndarray
    contact_t_ns: np.ndarray
    contact_active: np.ndarray  # (m, 2)
    d: np.ndarray  # (m, 2, 3) world contact points (stance legs)
    d_dot: np.ndarray
    alpha: np.ndarray  # (m, 2, 3)
    alpha_dot: np.ndarray
    contact_grid: np.ndarray  # grid index of each contact time
    cam_t_ns: np.ndarray
    cam_grid: np.ndarray
    cam_omega: np.ndarray
    cam_v: np.ndarray
    R_c: np.ndarray
    p_c: np.ndarray
    bias_omega: np.ndarray
    bias_a: np.ndarray
    gravity: np.ndarray

    @property
    def t(self) -> np.ndarray:
        return self.t_ns / NS

    def state_at(self, i: int) -> RobotState:
        return RobotState(self.R[i], self.v[i], self.p[i], self.bias_omega, self.bias_a, self.R_c, self.p_c)

    def grid_index(self, t_ns) -> np.ndarray:
        idx = np.searchsorted(self.t_ns, t_ns)
        if np.any(idx >= self.t_ns.size) or np.any(self.t_ns[np.minimum(idx, self.t_ns.size - 1)] != t_ns):
            raise KeyError("time not on the truth grid")
        return idx

    def path_length(self, stride: float = 0.0) -> float:
        """Horizontal distance travelled, sampled every ``stride`` seconds.

        A stride of one gait period removes the in-step sway from the length.
        """
        p = self.p[:, :2]
        if stride > 0:
            marks = np.arange(0, int(self.t_ns[-1]) + 1, int(round(stride * NS)))
            p = p[np.searchsorted(self.t_ns, marks)]
        return float(np.sum(np.linalg.norm(np.diff(p, axis=0), axis=1)))


def generate_truth(cfg: ScenarioConfig, legs: dict | None = None) -> TruthTimeline:
    legs = biped_legs() if legs is None else legs
    g = GRAVITY.copy()
    imu_ns, con_ns, cam_ns = _grid(cfg)
    stance, active = _contact_schedule(cfg, con_ns)
    grid = np.unique(np.concatenate([imu_ns, con_ns[active.any(axis=1)], cam_ns]))
    n = grid.size
    t_imu = imu_ns / NS

    # IMU-rate input that steers the Euler integration through the reference
    R_ref, v_ref = _reference(cfg, t_imu)
    dT = np.diff(t_imu)
    omega_imu = np.zeros((imu_ns.size, 3))
    omega_imu[:-1] = log_so3_batch(np.swapaxes(R_ref[:-1], 1, 2) @ R_ref[1:]) / dT[:, None]

    k = np.searchsorted(imu_ns, grid, side="right") - 1  # governing IMU sample
    s = (grid - imu_ns[k]) / NS
    R = R_ref[k] @ exp_so3_batch(omega_imu[k] * s[:, None])
    dt = np.diff(grid) / NS
    kk = k[:-1]
    M = np.add.reduceat(R[:-1] * dt[:, None, None], np.searchsorted(grid, imu_ns[:-1]), axis=0)
    rhs = v_ref[1:] - v_ref[:-1] - g * dT[:, None]
    acc_imu = np.zeros((imu_ns.size, 3))
    acc_imu[:-1] = np.linalg.solve(M, rhs[..., None])[..., 0]

    acc_w = np.einsum("nij,nj->ni", R[:-1], acc_imu[kk]) + g
    v = np.empty((n, 3))
    v[0] = v_ref[0]
    v[1:] = v_ref[0] + np.cumsum(acc_w * dt[:, None], axis=0)
    p = np.zeros((n, 3))
    p[1:] = np.cumsum(v[:-1] * dt[:, None] + 0.5 * acc_w * (dt * dt)[:, None], axis=0)

    # contacts: foot placed under the hip at touchdown, moving only while slipping
    ci = np.searchsorted(grid, con_ns)
    ci_valid = ci < n
    ci = np.minimum(ci, n - 1)
    on_grid = ci_valid & (grid[ci] == con_ns)
    m = con_ns.size
    t_con = con_ns / NS
    d = np.zeros((m, 2, 3))
    d_dot = np.zeros((m, 2, 3))
    alpha = np.zeros((m, 2, 3))
    alpha_dot = np.zeros((m, 2, 3))
    first = np.r_[True, stance[1:] != stance[:-1]]
    touch = np.maximum.accumulate(np.where(first, np.arange(m), 0))  # touchdown sample of each stance
    omega_grid = omega_imu[k]
    for leg_id in (0, 1):
        leg: ToyLeg = legs[leg_id]
        mount = np.asarray(leg.mount, dtype=float)
        r_nom = mount + np.array([leg.hip, 0.0, -cfg.stance_height])
        alpha_nom = leg.inverse(r_nom)
        act = active[:, leg_id] & on_grid
        alpha[:, leg_id] = alpha_nom
        if not act.any():
            continue
        gi = ci[act]
        td = ci[touch[act]]
        d_leg = p[td] + np.einsum("nij,j->ni", R[td], r_nom)
        dd_leg = np.zeros_like(d_leg)
        for w in cfg.slip_windows:
            vel = np.asarray(w.velocity, dtype=float)
            t_now = t_con[act]
            t_td = t_con[touch[act]]
            overlap = np.clip(np.minimum(t_now, w.t_end) - np.maximum(t_td, w.t_start), 0.0, None)
            d_leg = d_leg + overlap[:, None] * vel
            inside = (t_now >= w.t_start) & (t_now < w.t_end)
            dd_leg[inside] += vel
        Rt = np.swapaxes(R[gi], 1, 2)
        r = np.einsum("nij,nj->ni", Rt, d_leg - p[gi])
        try:
            a = leg.inverse(r)
        except ValueError as exc:
            raise ValueError(f"infeasible scenario for the toy leg: {exc}") from None
        J = leg.jacobian_batch(a)
        rdot = np.einsum("nij,nj->ni", Rt, dd_leg - v[gi]) - np.cross(omega_grid[gi], r)
        d[act, leg_id] = d_leg
        d_dot[act, leg_id] = dd_leg
        alpha[act, leg_id] = a
        alpha_dot[act, leg_id] = np.linalg.solve(J, rdot[..., None])[..., 0]

    cg = np.searchsorted(grid, cam_ns)
    R_c = cfg.R_c
    p_c = np.asarray(cfg.camera_position, dtype=float)
    cam_omega = omega_grid[cg] @ R_c
    v_body = np.einsum("nji,nj->ni", R[cg], v[cg])
    cam_v = v_body @ R_c + np.cross(cam_omega, R_c.T @ p_c)

    return TruthTimeline(
        t_ns=grid,
        R=R,
        v=v,
        p=p,
        omega=omega_grid,
        acc=acc_imu[k],
        imu_t_ns=imu_ns,
        imu_omega=omega_imu,
        imu_acc=acc_imu,
        contact_t_ns=con_ns,
        contact_active=active & on_grid[:, None],
        d=d,
        d_dot=d_dot,
        alpha=alpha,
        alpha_dot=alpha_dot,
        contact_grid=ci,
        cam_t_ns=cam_ns,
        cam_grid=cg,
        cam_omega=cam_omega,
        cam_v=cam_v,
        R_c=R_c,
        p_c=p_c,
        bias_omega=np.asarray(cfg.bias_omega, dtype=float),
        bias_a=np.asarray(cfg.bias_a, dtype=float),
        gravity=g,
    )


# ---------------------------------------------------------------- sensors


@dataclass
class SensorStreams:
    """Measurement logs in file order; contact rows are (time, contact_id)-major."""

    imu_t: np.ndarray
    imu: np.ndarray  # (n, 6) [omega, acc]
    contact_t: np.ndarray
    contact_id: np.ndarray
    contact_active: np.ndarray
    alpha: np.ndarray
    alpha_dot: np.ndarray
    camera_t: np.ndarray
    camera: np.ndarray  # (c, 6) [v_c, omega_c]


def synthesize_sensors(truth: TruthTimeline, cfg: ScenarioConfig, legs: dict | None = None) -> SensorStreams:
    legs = biped_legs() if legs is None else legs
    rng = np.random.default_rng(cfg.seed)
    nz = cfg.noise
    n_imu = truth.imu_t_ns.size
    m = truth.contact_t_ns.size
    n_cam = truth.cam_t_ns.size
    n_w = rng.standard_normal((n_imu, 3)) * nz.gyro
    n_a = rng.standard_normal((n_imu, 3)) * nz.accel
    n_f = rng.standard_normal((m, 2, 3)) * nz.foot
    n_wc = rng.standard_normal((n_cam, 3)) * nz.camera_w
    n_vc = rng.standard_normal((n_cam, 3)) * nz.camera_v

    imu = np.hstack(
        [truth.imu_omega + truth.bias_omega + n_w, truth.imu_acc + truth.bias_a + n_a]
    )
    # encoder rates carry the foot noise so that y_vel = R^T v - R^T d_dot + n_f
    dnoise = np.empty_like(n_f)
    for leg_id in (0, 1):
        J = legs[leg_id].jacobian_batch(truth.alpha[:, leg_id])
        dnoise[:, leg_id] = np.linalg.solve(J, n_f[:, leg_id, :, None])[..., 0]
    active = truth.contact_active
    alpha_dot = np.where(active[..., None], truth.alpha_dot - dnoise, 0.0)

    cam = np.hstack([truth.cam_v + n_vc, truth.cam_omega + n_wc])
    return SensorStreams(
        imu_t=truth.imu_t_ns / NS,
        imu=imu,
        contact_t=np.repeat(truth.contact_t_ns, 2) / NS,
        contact_id=np.tile(np.array([0, 1]), m),
        contact_active=active.reshape(-1),
        alpha=truth.alpha.reshape(-1, 3),
        alpha_dot=alpha_dot.reshape(-1, 3),
        camera_t=truth.cam_t_ns / NS,
        camera=cam,
    )


def build_events(streams: SensorStreams, legs: dict):
    """Merge the three logs into one ordered event list.

    Equal timestamps run IMU, then contacts by ascending id, then camera. Each
    contact row is turned into y_vel with the latest gyro sample.
    Returns (times, kinds, data, active, contact_id).
    """
    n_con = streams.contact_t.size
    y = np.zeros((n_con, 3))
    if n_con:
        k = np.searchsorted(streams.imu_t, streams.contact_t, side="right") - 1
        gyro = np.where((k >= 0)[:, None], streams.imu[np.maximum(k, 0), 0:3], 0.0)
        for cid in np.unique(streams.contact_id):
            sel = streams.contact_id == cid
            y[sel] = contact_velocity_batch(legs[int(cid)], streams.alpha[sel], streams.alpha_dot[sel], gyro[sel])
    times = np.concatenate([streams.imu_t, streams.contact_t, streams.camera_t])
    kinds = np.concatenate(
        [
            np.full(streams.imu_t.size, EV_IMU, np.int8),
            np.full(n_con, EV_KIN, np.int8),
            np.full(streams.camera_t.size, EV_CAM, np.int8),
        ]
    )
    cid = np.concatenate(
        [np.zeros(streams.imu_t.size, np.int64), streams.contact_id.astype(np.int64), np.zeros(streams.camera_t.size, np.int64)]
    )
    data = np.concatenate([streams.imu, np.hstack([y, np.zeros((n_con, 3))]), streams.camera])
    active = np.concatenate(
        [np.ones(streams.imu_t.size, np.int8), streams.contact_active.astype(np.int8), np.ones(streams.camera_t.size, np.int8)]
    )
    order = np.lexsort((cid, kinds, times))
    return times[order], kinds[order], data[order], active[order], cid[order]


# ---------------------------------------------------------------- filtering


def initial_state(truth: TruthTimeline, settings: FilterSettings) -> RobotState:
    """Truth at t=0 with zero bias estimates and a perturbed camera extrinsic guess."""
    axis = np.array([1.0, 1.0, 1.0]) / np.sqrt(3.0)
    dirp = np.array([1.0, -1.0, 1.0]) / np.sqrt(3.0)
    R_c0 = exp_so3(np.deg2rad(settings.extrinsic_rot_error_deg) * axis) @ truth.R_c
    p_c0 = truth.p_c + settings.extrinsic_pos_error_m * dirp
    return RobotState(truth.R[0], truth.v[0], truth.p[0], np.zeros(3), np.zeros(3), R_c0, p_c0)


def build_filter(cfg: ScenarioConfig, settings: FilterSettings, x0: RobotState, use_camera: bool,
                 legs=None, t0: float | None = 0.0) -> FilterInstance:
    """Filter with noise matched to ``cfg`` and options from ``settings``.

    ``t0=None`` starts the clock at the first processed event.
    """
    if settings.initial_covariance is None:
        P0 = default_initial_covariance()
        P0[ERR_BW, ERR_BW] = settings.gyro_bias_std**2 * np.eye(3)
    else:
        P0 = np.asarray(settings.initial_covariance)
    fc = FilterConfig(
        gate_threshold=settings.gate_threshold,
        tuner_window=settings.tuner_window,
        initial_covariance=P0,
        initial_state=x0,
        dt_max=settings.dt_max,
        use_camera=use_camera,
        tune_camera_noise=settings.tune_camera_noise,
        camera_noise_world_frame=settings.camera_noise_world_frame,
        tuner_floor=settings.tuner_floor,
    )
    return FilterInstance(noise=cfg.filter_noise(), config=fc, legs=legs or biped_legs(), t=t0)


def make_filter(cfg: ScenarioConfig, truth: TruthTimeline, settings: FilterSettings, use_camera: bool,
                exact: bool = False, legs=None) -> FilterInstance:
    x0 = truth.state_at(0) if exact else initial_state(truth, settings)
    return build_filter(cfg, settings, x0, use_camera, legs)


@dataclass
class FilterRun:
    variant: str
    times: np.ndarray
    kinds: np.ndarray
    contact_id: np.ndarray
    result: RunResult

    @property
    def record_times(self) -> np.ndarray:
        return self.times[self.result.record_index]


def run_filter(filt: FilterInstance, streams: SensorStreams, variant: str, events=None) -> FilterRun:
    times, kinds, data, active, cid = build_events(streams, filt.legs) if events is None else events
    res = filt.run_events(times, kinds, data, active)
    return FilterRun(variant, times, kinds, cid, res)


# ---------------------------------------------------------------- metrics


OBS_DIM = ERROR_DIM - 4


def observable_basis(gravity=GRAVITY) -> np.ndarray:
    """Orthonormal basis of the complement of yaw and absolute position."""
    N = np.zeros((ERROR_DIM, 4))
    N[ERR_R, 0] = np.asarray(gravity) / np.linalg.norm(gravity)
    N[ERR_P, 1:4] = np.eye(3)
    U, _, _ = np.linalg.svd(N, full_matrices=True)
    return U[:, 4:]


@dataclass
class MetricsReport:
    variant: str
    velocity_rmse: list
    orientation_rmse: list
    horizontal_drift_fraction: float
    vertical_drift: float
    path_length: float
    extrinsic_rotation_error_deg: float
    extrinsic_position_error_m: float
    extrinsic_within_3sigma: float
    nees_observable: float
    max_kinematic_innovation: float
    max_camera_innovation: float
    kinematic_accepted: int
    kinematic_rejected: int
    diverged: bool = False
    extrinsic_history: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)


def _error_arrays(states, truth: TruthTimeline, gi):
    R_hat = states[:, X_R].reshape(-1, 3, 3)
    R = truth.R[gi]
    dR = R_hat @ np.swapaxes(R, 1, 2)
    phi = log_so3_batch(dR)
    # pose part of log(X_hat X^-1): X_hat X^-1 = (dR, v_hat - dR v, p_hat - dR p)
    Jinv = left_jacobian_inv_so3_batch(phi)
    dv = states[:, X_V] - np.einsum("nij,nj->ni", dR, truth.v[gi])
    dp = states[:, X_P] - np.einsum("nij,nj->ni", dR, truth.p[gi])
    xi = np.empty((states.shape[0], ERROR_DIM))
    xi[:, 0:3] = phi
    xi[:, 3:6] = np.einsum("nij,nj->ni", Jinv, dv)
    xi[:, 6:9] = np.einsum("nij,nj->ni", Jinv, dp)
    xi[:, 9:12] = states[:, X_BW] - truth.bias_omega
    xi[:, 12:15] = states[:, X_BA] - truth.bias_a
    Rc_hat = states[:, X_RC].reshape(-1, 3, 3)
    xi[:, ERR_RC] = log_so3_batch(Rc_hat @ truth.R_c.T)
    xi[:, ERR_PC] = states[:, X_PC] - truth.p_c
    return xi


def compute_metrics(run: FilterRun, truth: TruthTimeline, transient: float = 20.0,
                    history_stride: int = 200, full_P=None, gait_period: float = 0.0) -> MetricsReport:
    res = run.result
    rec_t = run.record_times
    gi = np.searchsorted(truth.t_ns, np.round(rec_t * NS).astype(np.int64))
    X = res.states
    R_hat = X[:, X_R].reshape(-1, 3, 3)
    vb_hat = np.einsum("nji,nj->ni", R_hat, X[:, X_V])
    vb = np.einsum("nji,nj->ni", truth.R[gi], truth.v[gi])
    vel_rmse = np.sqrt(np.mean((vb_hat - vb) ** 2, axis=0)) if len(gi) else np.full(3, np.nan)
    xi = _error_arrays(X, truth, gi)
    ori_rmse = np.sqrt(np.mean(xi[:, 0:3] ** 2, axis=0)) if len(gi) else np.full(3, np.nan)

    path = truth.path_length(gait_period)
    if len(gi):
        dp = X[-1, X_P] - truth.p[gi[-1]]
        hdrift = float(np.linalg.norm(dp[:2]) / path) if path > 0 else float(np.linalg.norm(dp[:2]))
        vdrift = float(abs(dp[2]))
    else:
        hdrift = vdrift = float("nan")

    rot_err = np.rad2deg(np.linalg.norm(xi[:, ERR_RC], axis=1))
    pos_err = np.linalg.norm(xi[:, ERR_PC], axis=1)
    sig = np.sqrt(np.maximum(res.pdiag[:, 15:21], 0.0))
    inside = np.all(np.abs(xi[:, 15:21]) <= 3.0 * sig, axis=1)
    post = rec_t >= transient
    coverage = float(np.mean(inside[post])) if post.any() else float("nan")

    # NEES on the observable subspace with the diagonal covariance record
    # unless full covariances are supplied
    U = observable_basis(truth.gravity)
    e = xi @ U
    if full_P is None:
        var = res.pdiag @ (U * U)
        nees = float(np.mean(np.sum(e * e / np.maximum(var, 1e-300), axis=1)) / OBS_DIM) if len(gi) else float("nan")
    else:
        vals = [ei @ np.linalg.solve(U.T @ P @ U, ei) for ei, P in zip(e, full_P)]
        nees = float(np.mean(vals) / OBS_DIM)

    kin = run.kinds[: res.status.size] == EV_KIN
    cam = run.kinds[: res.status.size] == EV_CAM
    acc = res.status == 0
    kin_innov = np.abs(res.innovation[kin & acc])
    cam_innov = np.abs(res.innovation[cam & acc])
    hist_idx = np.arange(0, len(gi), max(1, history_stride))
    return MetricsReport(
        variant=run.variant,
        velocity_rmse=[float(x) for x in vel_rmse],
        orientation_rmse=[float(x) for x in ori_rmse],
        horizontal_drift_fraction=hdrift,
        vertical_drift=vdrift,
        path_length=path,
        extrinsic_rotation_error_deg=float(rot_err[-1]) if len(gi) else float("nan"),
        extrinsic_position_error_m=float(pos_err[-1]) if len(gi) else float("nan"),
        extrinsic_within_3sigma=coverage,
        nees_observable=nees,
        max_kinematic_innovation=float(kin_innov.max()) if kin_innov.size else 0.0,
        max_camera_innovation=float(cam_innov.max()) if cam_innov.size else 0.0,
        kinematic_accepted=int(np.count_nonzero(kin & acc)),
        kinematic_rejected=int(np.count_nonzero(kin & (res.status == 1))),
        diverged=bool(res.diverged),
        extrinsic_history={
            "t": [float(x) for x in rec_t[hist_idx]],
            "rotation_error_deg": [float(x) for x in rot_err[hist_idx]],
            "position_error_m": [float(x) for x in pos_err[hist_idx]],
        },
    )


VARIANTS = ("camera_on", "camera_off")


def run_experiment(cfg: ScenarioConfig, filter_variant: str = "camera_on", settings: FilterSettings | None = None,
                   truth: TruthTimeline | None = None, streams: SensorStreams | None = None,
                   exact_init: bool = False, return_run: bool = False):
    """Simulate, filter and score one variant. Deterministic for a fixed seed."""
    if filter_variant not in VARIANTS:
        raise ValueError(f"variant must be one of {VARIANTS}")
    settings = settings or FilterSettings()
    legs = biped_legs()
    truth = generate_truth(cfg, legs) if truth is None else truth
    streams = synthesize_sensors(truth, cfg, legs) if streams is None else streams
    filt = make_filter(cfg, truth, settings, filter_variant == "camera_on", exact=exact_init, legs=legs)
    run = run_filter(filt, streams, filter_variant)
    report = compute_metrics(run, truth, gait_period=cfg.gait_period)
    if return_run:
        return report, run, truth, streams
    return report


def with_seed(cfg: ScenarioConfig, seed: int) -> ScenarioConfig:
    return replace(cfg, seed=int(seed))


def noiseless(cfg: ScenarioConfig) -> ScenarioConfig:
    return replace(cfg, noise=NoiseLevels(0, 0, 0, 0, 0), bias_omega=(0.0, 0.0, 0.0), bias_a=(0.0, 0.0, 0.0),
                   slip_windows=())

