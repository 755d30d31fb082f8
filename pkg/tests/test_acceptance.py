"""Acceptance checks; each prints one PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py`` (summary lines appear at the end
of the session) or ``python tests/test_acceptance.py``.
"""

import json
import os
import sys
import tempfile
import time

import numpy as np
import pytest
import scipy.linalg

sys.path.insert(0, os.path.dirname(__file__))

from oracles import dense_gate, fd_jacobian, group_affine_residual, linearization_residual, population_cov  # noqa: E402
from legged_inekf import observability as obs  # noqa: E402
from legged_inekf._kernels import backend as kb  # noqa: E402
from legged_inekf.cli import main as cli_main  # noqa: E402
from legged_inekf.filter import EV_CAM, EV_KIN, transition_matrix  # noqa: E402
from legged_inekf.kinematics import biped_legs  # noqa: E402
from legged_inekf.lie import (  # noqa: E402
    SE23,
    adjoint_se23,
    exp_se23,
    exp_so3,
    hat_se23,
    log_se23,
    log_so3,
)
from legged_inekf.logs import EstimateRecords  # noqa: E402
from legged_inekf.simulator import (  # noqa: E402
    FilterSettings,
    ScenarioConfig,
    build_events,
    compute_metrics,
    generate_truth,
    make_filter,
    noiseless,
    run_experiment,
    run_filter,
    synthesize_sensors,
    with_seed,
)
from legged_inekf.state import ERROR_DIM, GRAVITY, RobotState, error_between, retract  # noqa: E402

RESULTS = []


def report(number, name, ok, detail):
    line = f"{'PASS' if ok else 'FAIL'} [{number:2d}] {name}: {detail}"
    RESULTS.append(line)
    print(line)
    return ok


def random_state(rng, bias=True):
    s = 0.01 if bias else 0.0
    return RobotState(
        R=exp_so3(rng.normal(size=3)),
        v=rng.normal(size=3),
        p=rng.normal(size=3),
        b_omega=s * rng.normal(size=3),
        b_a=s * rng.normal(size=3),
        R_c=exp_so3(rng.normal(size=3) * 0.5),
        p_c=0.2 * rng.normal(size=3),
    )


# ---------------------------------------------------------------- 1


def check_lie():
    t0 = time.perf_counter()
    rng = np.random.default_rng(1)
    so3 = se23 = adj = expm = 0.0
    for _ in range(1000):
        phi = rng.normal(size=3)
        phi *= rng.uniform(0.0, np.pi - 1e-3) / np.linalg.norm(phi)
        so3 = max(so3, np.linalg.norm(log_so3(exp_so3(phi)) - phi))
        xi = rng.normal(size=9)
        xi[:3] = phi
        X = exp_se23(xi)
        se23 = max(se23, np.linalg.norm(log_se23(X) - xi))
        expm = max(expm, np.abs(X.matrix() - scipy.linalg.expm(hat_se23(xi))).max())
        Y = exp_se23(rng.normal(size=9))
        zeta = rng.normal(size=9)
        M = Y.matrix()
        lhs = M @ hat_se23(zeta) @ np.linalg.inv(M)
        adj = max(adj, np.abs(lhs - hat_se23(adjoint_se23(Y) @ zeta)).max())
    dt = time.perf_counter() - t0
    ok = max(so3, se23) < 1e-9 and adj < 1e-10 and expm < 1e-10 and dt < 5.0
    return ok, f"roundtrip {max(so3, se23):.1e} (<1e-9), adjoint {adj:.1e} (<1e-10), expm {expm:.1e} (<1e-10), {dt:.2f} s (<5 s)"


# ---------------------------------------------------------------- 2


def check_group_affine():
    rng = np.random.default_rng(2)
    worst = 0.0
    for _ in range(100):
        X1, X2 = exp_se23(rng.normal(size=9)), exp_se23(rng.normal(size=9))
        worst = max(worst, group_affine_residual(X1, X2, rng.normal(size=3), rng.normal(size=3)))
    return worst < 1e-10, f"max residual {worst:.1e} over 100 pairs (<1e-10)"


# ---------------------------------------------------------------- 3


def check_log_linear():
    t0 = time.perf_counter()
    rng = np.random.default_rng(3)
    truth = random_state(rng, bias=False)
    xi0 = np.zeros(ERROR_DIM)
    d = rng.normal(size=9)
    xi0[:9] = 0.5 * d / np.linalg.norm(d)
    est = retract(truth, xi0)
    x, xh = truth.to_flat(), est.to_flat()
    P, q = np.eye(ERROR_DIM), np.zeros((6, 3, 3))
    dt, n = 1e-3, 1000
    Phi = transition_matrix(truth, dt)
    xi = xi0.copy()
    for k in range(n):
        w = np.array([0.5 * np.sin(3e-3 * k), 0.3, -0.2 * np.cos(5e-3 * k)])
        a = -GRAVITY + np.array([0.2, -0.4 * np.sin(2e-3 * k), 0.1])
        kb.propagate(x, P.copy(), w, a, dt, GRAVITY, q)
        kb.propagate(xh, P.copy(), w, a, dt, GRAVITY, q)
        xi = Phi @ xi  # bias-free: the pose block of Phi is state independent
    T, Th = RobotState.from_flat(x), RobotState.from_flat(xh)
    eta = Th.pose @ T.pose.inverse()
    gap = np.abs(eta.matrix() - exp_se23(xi[:9]).matrix()).max()
    el = time.perf_counter() - t0
    ok = gap < 1e-6 and el < 10.0
    return ok, f"max |eta - exp(xi)| {gap:.1e} after 1 s at dt=1e-3, |xi0|=0.5 (<1e-6), {el:.2f} s (<10 s)"


# ---------------------------------------------------------------- 4


def check_jacobians():
    rng = np.random.default_rng(4)
    ratios, hc = [], 0.0
    for _ in range(10):
        s = random_state(rng)
        w, a = rng.normal(size=3), rng.normal(size=3)
        d = rng.normal(size=ERROR_DIM)
        d /= np.linalg.norm(d)
        r3 = linearization_residual(s, d, 1e-3, w, a)
        r4 = linearization_residual(s, d, 1e-4, w, a)
        ratios.append(r3 / r4)
        wc = rng.normal(size=3)
        _, H = kb.camera_model(s.to_flat(), wc)
        H_fd = fd_jacobian(lambda st: kb.camera_model(st.to_flat(), wc)[0], s)
        hc = max(hc, np.abs(H - H_fd).max())
    ratios = np.array(ratios)
    # second-order remainder: shrinking eps tenfold shrinks the residual ~100x
    ok = bool(np.all((ratios > 50) & (ratios < 200))) and hc < 1e-5
    return ok, f"A residual ratio eps 1e-3/1e-4 in [{ratios.min():.0f}, {ratios.max():.0f}] (~100), H_c vs FD {hc:.1e} (<1e-5)"


# ---------------------------------------------------------------- 5


def check_noiseless():
    cfg = noiseless(ScenarioConfig())
    rep, run, _, _ = run_experiment(cfg, "camera_on", exact_init=True, return_run=True)
    res = run.result
    upd = (run.kinds[: res.status.size] == EV_KIN) | (run.kinds[: res.status.size] == EV_CAM)
    innov = res.innovation[upd]
    innov = innov[np.isfinite(innov).all(axis=1)]
    worst = float(np.abs(innov).max())
    vel = max(rep.velocity_rmse)
    n_kin = int(np.count_nonzero((run.kinds[: res.status.size] == EV_KIN) & (res.status == kb.ACCEPTED)))
    n_cam = int(np.count_nonzero((run.kinds[: res.status.size] == EV_CAM) & (res.status == kb.ACCEPTED)))
    ok = worst < 1e-8 and vel < 1e-6 and n_kin > 0 and n_cam > 0
    return ok, f"max innovation {worst:.1e} over {n_kin} kinematic + {n_cam} camera updates (<1e-8), velocity RMSE {vel:.1e} m/s (<1e-6)"


# ---------------------------------------------------------------- 6


SLIP = ScenarioConfig(slip_windows=((15.0, 17.0, (0.3, 0.0, 0.0)),))


def check_slip():
    t0 = time.perf_counter()
    truth = generate_truth(SLIP)
    on_max, drift_max, lower = 0.0, 0.0, 0
    for seed in range(20):
        cfg = with_seed(SLIP, seed)
        a = run_experiment(cfg, "camera_on", truth=truth)
        b = run_experiment(cfg, "camera_off", truth=truth)
        on_max = max(on_max, max(a.velocity_rmse))
        drift_max = max(drift_max, a.horizontal_drift_fraction)
        lower += int(np.all(np.array(a.velocity_rmse) < np.array(b.velocity_rmse)))
    el = time.perf_counter() - t0
    path = truth.path_length(SLIP.gait_period)
    ok = on_max < 0.08 and lower == 20 and drift_max < 0.05 and el < 60.0
    return ok, (
        f"camera_on RMSE max {on_max:.4f} m/s (<0.08), lower than camera_off on every axis {lower}/20, "
        f"drift max {100 * drift_max:.2f}% of {path:.2f} m (<5%), {el:.1f} s (<60 s)"
    )


# ---------------------------------------------------------------- 7


CALIB = ScenarioConfig(duration=60.0)
CALIB_SETTINGS = FilterSettings(extrinsic_rot_error_deg=5.0, extrinsic_pos_error_m=0.05, tuner_window=200)
CALIB_SEEDS = range(10)


def check_calibration():
    truth = generate_truth(CALIB)
    rot, pos, cov = [], [], []
    for seed in CALIB_SEEDS:
        m = run_experiment(with_seed(CALIB, seed), "camera_on", settings=CALIB_SETTINGS, truth=truth)
        rot.append(m.extrinsic_rotation_error_deg)
        pos.append(m.extrinsic_position_error_m)
        cov.append(m.extrinsic_within_3sigma)
    ok = max(rot) < 1.0 and max(pos) < 0.01 and min(cov) >= 0.95
    return ok, (
        f"5 deg / 5 cm -> worst final {max(rot):.3f} deg (<1), {100 * max(pos):.2f} cm (<1), "
        f"3-sigma coverage after 20 s min {100 * min(cov):.1f}% (>=95%) over {len(rot)} seeds, tuner window 200"
    )


# ---------------------------------------------------------------- 8


def check_observability():
    t0 = time.perf_counter()
    want = {"dynamic": 5, "static": 10, "zero-omega-moving": 8}
    got = {}
    for case in want:
        x, u = obs.canonical_case(case)
        got[case] = obs.classify_case(x, u).nullity
    cfg = ScenarioConfig(duration=2.0)
    tr = generate_truth(cfg)
    idx = np.arange(40, 47)
    states = [tr.state_at(g) for g in tr.cam_grid[idx]]
    dts = np.diff(tr.cam_t_ns[idx]) / 1e9
    M = obs.walk_obs_matrix(states, tr.cam_omega[idx], dts)
    resid = float(np.abs(M @ obs.filter_unobservable_directions()).max() / np.abs(M).max())
    pc_rank = int(np.linalg.matrix_rank(M[:, 18:21]))
    el = time.perf_counter() - t0
    ok = got == want and resid < 1e-8 and pc_rank == 3 and el < 10.0
    nul = ", ".join(f"{k} {got[k]} (want {want[k]})" for k in want)
    return ok, f"nullity {nul}; walk residual {resid:.1e} (<1e-8), p_c rank {pc_rank} (3), {el:.2f} s (<10 s)"


# ---------------------------------------------------------------- 9


def check_gate():
    rng = np.random.default_rng(9)
    H = np.zeros((3, ERROR_DIM))
    H[:, 3:6] = -np.eye(3)
    mismatch, n_rej = 0, 0
    for _ in range(10_000):
        s = random_state(rng)
        L = rng.normal(size=(ERROR_DIM, ERROR_DIM)) * rng.uniform(0.005, 0.05)
        P = L @ L.T + 1e-6 * np.eye(ERROR_DIM)
        Nf = np.diag(rng.uniform(1e-4, 1e-2, 3))
        y = s.R.T @ s.v + rng.normal(size=3) * rng.uniform(0.01, 0.5)
        r = s.R @ y - s.v
        _, keep = dense_gate(P, H, s.R @ Nf @ s.R.T, r, 30.1)
        x, Pc = s.to_flat(), P.copy()
        status, chi2, _ = kb.kinematic_update(x, Pc, y, Nf, 30.1, True)
        accepted = status == kb.ACCEPTED
        if accepted != keep:
            mismatch += 1
        if not accepted:
            n_rej += 1
            if not (np.array_equal(x, s.to_flat()) and np.array_equal(Pc, P)):
                mismatch += 1

    # outliers injected into a simulated run
    cfg = ScenarioConfig(duration=4.0)
    tr = generate_truth(cfg)
    legs = biped_legs()
    times, kinds, data, active, cid = build_events(synthesize_sensors(tr, cfg, legs), legs)
    kin = np.flatnonzero((kinds == EV_KIN) & (active == 1) & (times > 1.0))
    hit = np.sort(rng.choice(kin, 25, replace=False))
    data = data.copy()
    data[hit, 0] += 2.0
    filt = make_filter(cfg, tr, FilterSettings(), True, legs=legs)
    run = run_filter(filt, None, "camera_on", events=(times, kinds, data, active, cid))
    st, c2 = run.result.status, run.result.chi2
    outliers_rejected = bool(np.all(st[hit] == kb.REJECTED) and np.all(c2[hit] > 30.1))
    exact = bool(np.all(c2[st == kb.REJECTED] > 30.1) and np.all(c2[(st == kb.ACCEPTED) & (kinds == EV_KIN)] <= 30.1))
    ok = mismatch == 0 and outliers_rejected and exact
    return ok, (
        f"{mismatch} mismatches vs dense inverse on 10^4 cases ({n_rej} rejected), "
        f"25/25 injected outliers rejected: {outliers_rejected}, gate exact at 30.1: {exact}"
    )


# ---------------------------------------------------------------- 10


def tuner_run(samples, window):
    buf = np.zeros((window, 6))
    meta = np.zeros(2, dtype=np.int64)
    out = []
    for smp in samples:
        out.append(kb.tuner_push(buf, meta, np.ascontiguousarray(smp), 1e-8))
    return out


def check_tuner():
    rng = np.random.default_rng(10)
    A = np.eye(6) + 0.3 * rng.normal(size=(6, 6))
    Sigma = A @ np.diag([0.02**2] * 3 + [0.03**2] * 3) @ A.T
    errs = []
    for t in range(200):
        X = np.random.default_rng(1000 + t).multivariate_normal(np.zeros(6), Sigma, 200)
        C = tuner_run(X, 200)[-1]
        errs.append(np.linalg.norm(C - Sigma) / np.linalg.norm(Sigma))
    first, mean = errs[0], float(np.mean(errs))

    # window 5: after 5 post-step samples the estimate only sees the new regime
    Sigma2 = 25.0 * Sigma
    exact, ratios = True, []
    for t in range(200):
        g = np.random.default_rng(5000 + t)
        X = np.vstack([g.multivariate_normal(np.zeros(6), Sigma, 20), g.multivariate_normal(np.zeros(6), Sigma2, 5)])
        C = tuner_run(X, 5)
        exact &= np.allclose(C[-1], population_cov(X[-5:]) + 1e-8 * np.eye(6), rtol=1e-12, atol=1e-18)
        ratios.append(np.trace(C[-1]) / np.trace(Sigma2))
    # a full window of m samples has expected trace (m - 1) / m of the truth
    step_ok = bool(exact) and abs(np.mean(ratios) / 0.8 - 1.0) < 0.1
    ok = first < 0.2 and mean < 0.2 and step_ok
    return ok, (
        f"window 200 Frobenius error {100 * first:.1f}% (mean {100 * mean:.1f}% over 200 draws, <20%); "
        f"window 5 after a 25x step: only post-step samples after 5 = {bool(exact)}, "
        f"trace ratio {np.mean(ratios):.3f} (0.8 expected)"
    )


# ---------------------------------------------------------------- 11


def check_determinism():
    with tempfile.TemporaryDirectory() as tmp:
        a, b, r = (os.path.join(tmp, n) for n in ("a", "b", "r"))
        codes = [cli_main(["sim", "--seed", "7", "--out", a]), cli_main(["sim", "--seed", "7", "--out", b])]
        names = sorted(os.listdir(a))
        same = names == sorted(os.listdir(b)) and all(
            open(os.path.join(a, n), "rb").read() == open(os.path.join(b, n), "rb").read() for n in names
        )
        codes.append(cli_main(["replay", a, "--config", os.path.join(a, "resolved_config.json"), "--out", r]))
        est_a = EstimateRecords.read(os.path.join(a, "estimates.csv"))
        est_r = EstimateRecords.read(os.path.join(r, "estimates.csv"))
        bytes_eq = open(os.path.join(a, "estimates.csv"), "rb").read() == open(os.path.join(r, "estimates.csv"), "rb").read()
        replay_eq = est_a == est_r and bytes_eq
        with open(os.path.join(a, "metrics.json")) as fh:
            diverged = json.load(fh)["camera_on"]["diverged"]
    ok = codes == [0, 0, 0] and same and replay_eq and not diverged
    return ok, f"sim twice byte-identical over {len(names)} files: {same}; replay estimates bit-identical ({len(est_a.t_ns)} rows): {replay_eq}"


CHECKS = [
    (1, "Lie-group suite", check_lie),
    (2, "group-affine IMU dynamics", check_group_affine),
    (3, "log-linear error propagation", check_log_linear),
    (4, "Jacobian oracles", check_jacobians),
    (5, "noiseless closed loop", check_noiseless),
    (6, "slip robustness", check_slip),
    (7, "extrinsic auto-calibration", check_calibration),
    (8, "observability ranks", check_observability),
    (9, "outlier gate", check_gate),
    (10, "noise tuner", check_tuner),
    (11, "determinism", check_determinism),
]


@pytest.mark.parametrize("number,name,check", CHECKS, ids=[f"{n:02d}-{name.replace(' ', '_')}" for n, name, _ in CHECKS])
def test_acceptance(number, name, check):
    ok, detail = check()
    assert report(number, name, ok, detail), detail


if __name__ == "__main__":
    failed = 0
    for number, name, check in CHECKS:
        failed += not report(number, name, *check())
    sys.exit(1 if failed else 0)
