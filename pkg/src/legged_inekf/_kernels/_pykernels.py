"""Pure-numpy kernels; reference implementation and fallback backend.

State vectors use the flat 33-element layout from :mod:`legged_inekf.state`,
covariances are C-contiguous 21x21 arrays. Every function mutates its
``x``/``P`` arguments in place, mirroring the compiled backend.
"""

import numpy as np

from ..lie import exp_so3, hat3, left_jacobian_so3, project_to_so3

ACCEPTED = 0
REJECTED = 1
SINGULAR = 2
SKIPPED = 3
NO_INPUT = 4

EV_IMU = 0
EV_KIN = 1
EV_CAM = 2

RUN_OK = 0
RUN_DT_TOO_LARGE = 1
RUN_DIVERGED = 2

COND_MAX = 1e12
ORTHO_TOL = 1e-9

NAME = "python"


def _reortho(R):
    E = R.T @ R - np.eye(3)
    if np.sqrt(np.sum(E * E)) > ORTHO_TOL:
        return project_to_so3(R)
    return R


def transition_matrix(x, g, dt):
    """exp(A dt) in closed form; the pose block of A is nilpotent of order 3."""
    R = x[0:9].reshape(3, 3)
    v = x[9:12]
    p = x[12:15]
    G = hat3(g)
    dt2 = dt * dt
    Phi = np.eye(21)
    Phi[3:6, 0:3] = G * dt
    Phi[6:9, 0:3] = G * (0.5 * dt2)
    Phi[6:9, 3:6] = np.eye(3) * dt
    vR = hat3(v) @ R
    pR = hat3(p) @ R
    GR = G @ R
    Phi[0:3, 9:12] = -R * dt
    Phi[3:6, 9:12] = -vR * dt - GR * (0.5 * dt2)
    Phi[6:9, 9:12] = -pR * dt - vR * (0.5 * dt2) - GR * (dt2 * dt / 6.0)
    Phi[3:6, 12:15] = -R * dt
    Phi[6:9, 12:15] = -R * (0.5 * dt2)
    return Phi


def process_covariance(x, qblocks):
    """B Cov(w) B^T with B = blockdiag(Ad_X, I_12)."""
    R = x[0:9].reshape(3, 3)
    Ad = np.zeros((9, 9))
    Ad[0:3, 0:3] = R
    Ad[3:6, 3:6] = R
    Ad[6:9, 6:9] = R
    Ad[3:6, 0:3] = hat3(x[9:12]) @ R
    Ad[6:9, 0:3] = hat3(x[12:15]) @ R
    C = np.zeros((9, 9))
    C[0:3, 0:3] = qblocks[0]
    C[3:6, 3:6] = qblocks[1]
    Q = np.zeros((21, 21))
    Q[0:9, 0:9] = Ad @ C @ Ad.T
    for k in range(4):
        s = 9 + 3 * k
        Q[s : s + 3, s : s + 3] = qblocks[2 + k]
    return Q


def propagate(x, P, omega, acc, dt, g, qblocks):
    R = x[0:9].reshape(3, 3)
    v = x[9:12].copy()
    p = x[12:15].copy()
    w = omega - x[15:18]
    a = acc - x[18:21]
    Phi = transition_matrix(x, g, dt)
    Q = process_covariance(x, qblocks)
    M = P + Q * dt
    Pn = Phi @ M @ Phi.T
    P[:, :] = 0.5 * (Pn + Pn.T)
    acc_w = R @ a
    Rn = _reortho(R @ exp_so3(w * dt))
    x[9:12] = v + acc_w * dt + g * dt
    x[12:15] = p + v * dt + 0.5 * acc_w * dt * dt + 0.5 * g * dt * dt
    x[0:9] = Rn.ravel()


def retract(x, delta):
    dR = exp_so3(delta[0:3])
    J = left_jacobian_so3(delta[0:3])
    R = x[0:9].reshape(3, 3)
    Rn = _reortho(dR @ R)
    x[9:12] = dR @ x[9:12] + J @ delta[3:6]
    x[12:15] = dR @ x[12:15] + J @ delta[6:9]
    x[0:9] = Rn.ravel()
    x[15:18] += delta[9:12]
    x[18:21] += delta[12:15]
    Rc = _reortho(exp_so3(delta[15:18]) @ x[21:30].reshape(3, 3))
    x[21:30] = Rc.ravel()
    x[30:33] += delta[18:21]


def _spd_inverse(S):
    """Cholesky-based inverse; None when S is not safely positive definite."""
    try:
        L = np.linalg.cholesky(S)
    except np.linalg.LinAlgError:
        return None
    Linv = np.linalg.inv(L)
    Sinv = Linv.T @ Linv
    if np.sqrt(np.sum(S * S)) * np.sqrt(np.sum(Sinv * Sinv)) > COND_MAX:
        return None
    return 0.5 * (Sinv + Sinv.T)


def ekf_update(x, P, H, r, N, rho, gate):
    """Joseph-form update driven by the residual r ~ H xi.

    The residual is linear in the error with a positive sign, so the
    correction that removes the estimated error is -K r.
    """
    S = H @ P @ H.T + N
    S = 0.5 * (S + S.T)
    Sinv = _spd_inverse(S)
    if Sinv is None:
        return SINGULAR, np.nan
    chi2 = float(r @ Sinv @ r)
    if gate and chi2 > rho:
        return REJECTED, chi2
    K = P @ H.T @ Sinv
    delta = -(K @ r)
    I_KH = np.eye(21) - K @ H
    Pn = I_KH @ P @ I_KH.T + K @ N @ K.T
    P[:, :] = 0.5 * (Pn + Pn.T)
    retract(x, delta)
    return ACCEPTED, chi2


_H_KIN = np.zeros((3, 21))
_H_KIN[:, 3:6] = -np.eye(3)


def kinematic_residual(x, y_vel):
    """Pi(X_hat y - b) = R_hat y_vel - v_hat."""
    return x[0:9].reshape(3, 3) @ y_vel - x[9:12]


def kinematic_update(x, P, y_vel, cov_nf, rho, gate):
    R = x[0:9].reshape(3, 3)
    r = kinematic_residual(x, y_vel)
    N = R @ cov_nf @ R.T
    status, chi2 = ekf_update(x, P, _H_KIN, r, N, rho, gate)
    return status, chi2, r


def camera_model(x, omega_c):
    """Predicted camera velocity h(x) and its error Jacobian H_c."""
    R = x[0:9].reshape(3, 3)
    v = x[9:12]
    Rc = x[21:30].reshape(3, 3)
    pc = x[30:33]
    W = hat3(omega_c)
    RcT = Rc.T
    vb = R.T @ v
    h = RcT @ vb + W @ (RcT @ pc)
    H = np.zeros((3, 21))
    H[:, 3:6] = RcT @ R.T
    H[:, 15:18] = W @ RcT @ hat3(pc) + RcT @ hat3(vb)
    H[:, 18:21] = W @ RcT
    return h, H


def camera_noise(x, cov_vc, cov_wc, world_frame):
    Rc = x[21:30].reshape(3, 3)
    U = hat3(Rc.T @ x[30:33])
    C = cov_vc + U @ cov_wc @ U.T
    if world_frame:
        M = x[0:9].reshape(3, 3) @ Rc
        C = M @ C @ M.T
    return 0.5 * (C + C.T)


def camera_update(x, P, v_c, omega_c, cov_vc, cov_wc, world_frame, rho, gate):
    h, H = camera_model(x, omega_c)
    r = h - v_c
    N = camera_noise(x, cov_vc, cov_wc, world_frame)
    status, chi2 = ekf_update(x, P, H, r, N, rho, gate)
    return status, chi2, r


def tuner_push(buf, meta, sample, floor):
    """Insert into the ring buffer and return the population covariance.

    ``meta`` holds [count, head]; ``buf`` has one row per window slot.
    """
    n = buf.shape[0]
    head = int(meta[1])
    buf[head, :] = sample
    meta[1] = (head + 1) % n
    if meta[0] < n:
        meta[0] += 1
    m = int(meta[0])
    # oldest-first so both backends sum in the same order
    idx = [(int(meta[1]) - m + k) % n for k in range(m)]
    W = buf[idx]
    mean = W.sum(axis=0) / m
    E = W - mean
    C = (E.T @ E) / m
    C = 0.5 * (C + C.T)
    C[np.diag_indices(6)] += floor
    return C


def run_events(
    x,
    P,
    clock,
    imu_hold,
    times,
    kinds,
    data,
    active,
    qblocks,
    g,
    cov_nf,
    cov_vc,
    cov_wc,
    rho,
    use_camera,
    tune,
    world_frame,
    tuner_buf,
    tuner_meta,
    tuner_floor,
    dt_max,
    divergence_trace,
    out_status,
    out_chi2,
    out_innov,
    out_x,
    out_pdiag,
):
    """Event-ordered filter driver.

    ``clock`` is [t_state, has_imu]; ``imu_hold`` the zero-order-held
    [omega, acc]. A snapshot row is written after every kinematic event with
    an active contact and every camera event. Returns (code, index, rows).
    """
    n = times.shape[0]
    rows = 0
    n_window = tuner_buf.shape[0]
    for i in range(n):
        t = times[i]
        kind = kinds[i]
        if kind == EV_KIN and not active[i]:
            out_status[i] = SKIPPED
            out_chi2[i] = np.nan
            continue
        dt = t - clock[0]
        if dt > 0.0:
            if clock[1] == 0.0:
                if kind == EV_IMU:
                    clock[0] = t
                    dt = 0.0
                else:
                    out_status[i] = NO_INPUT
                    out_chi2[i] = np.nan
                    continue
        if dt > 0.0:
            if dt > dt_max:
                return RUN_DT_TOO_LARGE, i, rows
            propagate(x, P, imu_hold[0:3], imu_hold[3:6], dt, g, qblocks)
            clock[0] = t
        if kind == EV_IMU:
            imu_hold[:] = data[i]
            clock[1] = 1.0
            out_status[i] = ACCEPTED
            out_chi2[i] = np.nan
            continue
        if kind == EV_KIN:
            status, chi2, r = kinematic_update(x, P, data[i, 0:3], cov_nf, rho, True)
        else:
            cov_v = cov_vc
            cov_w = cov_wc
            if tune:
                sample = np.concatenate([data[i, 3:6], data[i, 0:3]])
                C = tuner_push(tuner_buf, tuner_meta, sample, tuner_floor)
                if tuner_meta[0] >= n_window:
                    cov_w = C[0:3, 0:3]
                    cov_v = C[3:6, 3:6]
            if use_camera:
                status, chi2, r = camera_update(
                    x, P, data[i, 0:3], data[i, 3:6], cov_v, cov_w, world_frame, rho, False
                )
            else:
                status, chi2, r = SKIPPED, np.nan, np.full(3, np.nan)
        out_status[i] = status
        out_chi2[i] = chi2
        out_innov[i] = r
        out_x[rows] = x
        out_pdiag[rows] = np.diag(P)
        rows += 1
        if np.trace(P) > divergence_trace or not np.all(np.isfinite(P)):
            return RUN_DIVERGED, i, rows
    return RUN_OK, n, rows
