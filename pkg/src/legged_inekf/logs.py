"""CSV log bundles and estimate records.

Timestamps are written in seconds with nine decimals and parsed back to
integer nanoseconds, so times survive a round trip exactly. Other floats use
``%.17g``. Rotations are stored as unit quaternions (w, x, y, z).
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np
from scipy.spatial.transform import Rotation

from .lie import log_so3_batch
from .simulator import NS, SensorStreams, TruthTimeline
from .state import ERROR_DIM, X_BA, X_BW, X_P, X_PC, X_R, X_RC, X_V

IMU_COLUMNS = ("t", "wx", "wy", "wz", "ax", "ay", "az")
CONTACT_COLUMNS = ("t", "contact_id", "active", "alpha0", "alpha1", "alpha2", "alpha_dot0", "alpha_dot1", "alpha_dot2")
CAMERA_COLUMNS = ("t", "vx", "vy", "vz", "wx", "wy", "wz")
TRUTH_COLUMNS = ("t", "qw", "qx", "qy", "qz", "vx", "vy", "vz", "px", "py", "pz")
ESTIMATE_COLUMNS = (
    ("t", "qw", "qx", "qy", "qz", "vx", "vy", "vz", "px", "py", "pz")
    + ("bwx", "bwy", "bwz", "bax", "bay", "baz", "qcw", "qcx", "qcy", "qcz", "pcx", "pcy", "pcz")
    + tuple(f"P{i}" for i in range(ERROR_DIM))
    + ("chi2", "status", "kind", "contact_id")
)


class LogFormatError(ValueError):
    """Malformed CSV content; ``line`` is 1-based and counts the header."""

    def __init__(self, path, line, message):
        super().__init__(f"{path}:{line}: {message}" if line else f"{path}: {message}")
        self.path = path
        self.line = line


class LogOrderError(LogFormatError):
    """Timestamps going backwards."""


# ---------------------------------------------------------------- formatting


def _format_t(t_ns) -> np.ndarray:
    t_ns = np.asarray(t_ns, dtype=np.int64)
    sign = np.where(t_ns < 0, "-", "")
    a = np.abs(t_ns)
    return np.char.add(sign, np.char.add(np.char.add((a // NS).astype(str), "."), np.char.zfill((a % NS).astype(str), 9)))


def write_csv(path, columns, t_ns, values: np.ndarray, int_cols: int = 0) -> None:
    """Write ``t`` plus value columns; the first ``int_cols`` values are integers."""
    values = np.asarray(values)
    n = len(t_ns)
    fmt = ",".join(["%s"] + ["%d"] * int_cols + ["%.17g"] * (values.shape[1] - int_cols))
    ts = _format_t(t_ns)
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write(",".join(columns) + "\n")
        for i in range(n):
            row = values[i]
            fh.write(fmt % ((ts[i],) + tuple(int(x) for x in row[:int_cols]) + tuple(float(x) for x in row[int_cols:])))
            fh.write("\n")


def _parse_t_ns(text: str) -> int:
    """Decimal seconds to integer nanoseconds without float rounding."""
    s = text.strip()
    neg = s.startswith("-")
    if neg or s.startswith("+"):
        s = s[1:]
    whole, _, frac = s.partition(".")
    if not (whole.isdigit() or (whole == "" and frac)) or (frac and not frac.isdigit()) or len(frac) > 9:
        raise ValueError(f"bad timestamp {text!r}")
    ns = int(whole or "0") * NS + int((frac + "000000000")[:9])
    return -ns if neg else ns


def read_csv(path, columns, int_cols: int = 0, check_order: bool = True, nan_ok=()):
    """Parse a log file; returns (t_ns int64, values float64).

    Columns named in ``nan_ok`` may hold ``nan``; every other value must be finite.

    Raises LogFormatError with the offending line for header, column count or
    number errors, and LogOrderError for decreasing timestamps.
    """
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise LogFormatError(path, 1, "empty file, expected header " + ",".join(columns))
    header = [c.strip() for c in lines[0].split(",")]
    if tuple(header) != tuple(columns):
        raise LogFormatError(path, 1, f"header {','.join(header)} does not match {','.join(columns)}")
    ncol = len(columns)
    finite_req = np.array([c not in nan_ok for c in columns[1:]])
    t_ns = np.empty(len(lines) - 1, dtype=np.int64)
    vals = np.empty((len(lines) - 1, ncol - 1))
    k = 0
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            if lineno == len(lines):
                break
            raise LogFormatError(path, lineno, "blank line")
        parts = line.split(",")
        if len(parts) != ncol:
            raise LogFormatError(path, lineno, f"expected {ncol} columns, found {len(parts)}")
        try:
            t_ns[k] = _parse_t_ns(parts[0])
            row = [float(p) for p in parts[1:]]
        except ValueError as exc:
            raise LogFormatError(path, lineno, str(exc)) from None
        bad = ~np.isfinite(row) & (finite_req | np.isinf(row))
        if bad.any():
            raise LogFormatError(path, lineno, f"non-finite value in column {columns[int(np.argmax(bad)) + 1]}")
        for j in range(int_cols):
            if row[j] != int(row[j]):
                raise LogFormatError(path, lineno, f"column {columns[j + 1]} must be an integer")
        vals[k] = row
        if check_order and k and t_ns[k] < t_ns[k - 1]:
            raise LogOrderError(path, lineno, "timestamp earlier than the previous row")
        k += 1
    return t_ns[:k], vals[:k]


# ---------------------------------------------------------------- rotations


def rot_to_quat(R: np.ndarray) -> np.ndarray:
    """(..., 3, 3) -> (..., 4) as (w, x, y, z) with w >= 0."""
    R = np.asarray(R, dtype=float)
    q = Rotation.from_matrix(R.reshape(-1, 3, 3)).as_quat(canonical=True, scalar_first=True)
    return q.reshape(R.shape[:-2] + (4,))


def quat_to_rot(q: np.ndarray) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    R = Rotation.from_quat(q.reshape(-1, 4), scalar_first=True).as_matrix()
    return R.reshape(q.shape[:-1] + (3, 3))


# ---------------------------------------------------------------- bundles


@dataclass
class LogBundle:
    """Parsed log directory; ``camera`` fields are empty in degraded mode."""

    imu_t_ns: np.ndarray
    imu: np.ndarray
    contact_t_ns: np.ndarray
    contact_id: np.ndarray
    contact_active: np.ndarray
    alpha: np.ndarray
    alpha_dot: np.ndarray
    camera_t_ns: np.ndarray
    camera: np.ndarray
    truth_t_ns: np.ndarray | None = None
    truth: np.ndarray | None = None  # (n, 10) [q, v, p]
    degraded: bool = False

    def streams(self) -> SensorStreams:
        return SensorStreams(
            imu_t=self.imu_t_ns / NS,
            imu=self.imu,
            contact_t=self.contact_t_ns / NS,
            contact_id=self.contact_id,
            contact_active=self.contact_active,
            alpha=self.alpha,
            alpha_dot=self.alpha_dot,
            camera_t=self.camera_t_ns / NS,
            camera=self.camera,
        )


def write_bundle(out_dir, streams_t_ns: dict, streams: SensorStreams, truth: TruthTimeline | None = None) -> None:
    """Write imu/contacts/camera (and truth at IMU times) CSVs.

    ``streams_t_ns`` holds the exact integer-ns times keyed by imu, contact
    and camera.
    """
    os.makedirs(out_dir, exist_ok=True)
    write_csv(os.path.join(out_dir, "imu.csv"), IMU_COLUMNS, streams_t_ns["imu"], streams.imu)
    con = np.column_stack([streams.contact_id, streams.contact_active.astype(int), streams.alpha, streams.alpha_dot])
    write_csv(os.path.join(out_dir, "contacts.csv"), CONTACT_COLUMNS, streams_t_ns["contact"], con, int_cols=2)
    write_csv(os.path.join(out_dir, "camera.csv"), CAMERA_COLUMNS, streams_t_ns["camera"], streams.camera)
    if truth is not None:
        gi = truth.grid_index(truth.imu_t_ns)
        vals = np.column_stack([rot_to_quat(truth.R[gi]), truth.v[gi], truth.p[gi]])
        write_csv(os.path.join(out_dir, "truth.csv"), TRUTH_COLUMNS, truth.imu_t_ns, vals)


def _camera_missing(path) -> bool:
    if not os.path.exists(path):
        return True
    with open(path, encoding="utf-8") as fh:
        lines = [ln for ln in fh.read().splitlines() if ln.strip()]
    return len(lines) <= 1


def read_bundle(log_dir, legs_ids=(0, 1)) -> LogBundle:
    imu_t, imu = read_csv(os.path.join(log_dir, "imu.csv"), IMU_COLUMNS)
    cpath = os.path.join(log_dir, "contacts.csv")
    con_t, con = read_csv(cpath, CONTACT_COLUMNS, int_cols=2)
    cid = con[:, 0].astype(np.int64)
    unknown = ~np.isin(cid, np.asarray(legs_ids))
    if unknown.any():
        raise LogFormatError(cpath, int(np.argmax(unknown)) + 2, f"unknown contact_id {cid[unknown][0]}")
    if np.any((con[:, 1] != 0) & (con[:, 1] != 1)):
        bad = int(np.argmax((con[:, 1] != 0) & (con[:, 1] != 1)))
        raise LogFormatError(cpath, bad + 2, "active must be 0 or 1")
    campath = os.path.join(log_dir, "camera.csv")
    degraded = _camera_missing(campath)
    if degraded:
        cam_t, cam = np.empty(0, dtype=np.int64), np.empty((0, 6))
    else:
        cam_t, cam = read_csv(campath, CAMERA_COLUMNS)
    truth_t = truth = None
    tpath = os.path.join(log_dir, "truth.csv")
    if os.path.exists(tpath):
        truth_t, truth = read_csv(tpath, TRUTH_COLUMNS)
    return LogBundle(
        imu_t, imu, con_t, cid, con[:, 1] != 0, con[:, 2:5].copy(), con[:, 5:8].copy(), cam_t, cam,
        truth_t, truth, degraded,
    )


# ---------------------------------------------------------------- estimates


@dataclass
class EstimateRecords:
    """Columnar per-update estimates; rotations as quaternions."""

    t_ns: np.ndarray
    values: np.ndarray  # all columns after t, in ESTIMATE_COLUMNS order

    @classmethod
    def from_run(cls, t_ns, states, pdiag, chi2, status, kind, contact_id) -> "EstimateRecords":
        states = np.asarray(states)
        vals = np.column_stack(
            [
                rot_to_quat(states[:, X_R].reshape(-1, 3, 3)),
                states[:, X_V],
                states[:, X_P],
                states[:, X_BW],
                states[:, X_BA],
                rot_to_quat(states[:, X_RC].reshape(-1, 3, 3)),
                states[:, X_PC],
                pdiag,
                chi2,
                status,
                kind,
                contact_id,
            ]
        )
        return cls(np.asarray(t_ns, dtype=np.int64), vals)

    def column(self, name: str) -> np.ndarray:
        return self.values[:, ESTIMATE_COLUMNS.index(name) - 1]

    def write(self, path) -> None:
        # trailing integer columns are written after the floats
        n_int = 3
        vals = self.values
        ts = _format_t(self.t_ns)
        fl = "%.17g," * (vals.shape[1] - n_int)
        with open(path, "w", encoding="ascii", newline="\n") as fh:
            fh.write(",".join(ESTIMATE_COLUMNS) + "\n")
            for i in range(vals.shape[0]):
                row = vals[i]
                fh.write(ts[i] + "," + fl % tuple(float(x) for x in row[:-n_int]))
                fh.write("%d,%d,%d\n" % tuple(int(x) for x in row[-n_int:]))

    @classmethod
    def read(cls, path) -> "EstimateRecords":
        t_ns, vals = read_csv(path, ESTIMATE_COLUMNS, check_order=True, nan_ok=("chi2",))
        return cls(t_ns, vals)

    def __eq__(self, other) -> bool:
        if not isinstance(other, EstimateRecords):
            return NotImplemented
        return np.array_equal(self.t_ns, other.t_ns) and np.array_equal(self.values, other.values, equal_nan=True)


# ---------------------------------------------------------------- metrics from logs


def pose_metrics(est: EstimateRecords, truth_t_ns: np.ndarray, truth: np.ndarray, gait_period: float = 0.0) -> dict:
    """Velocity / orientation RMSE and drift at estimate times present in the truth log."""
    common, _, it = np.intersect1d(est.t_ns, truth_t_ns, return_indices=True)
    # several records can share a timestamp; keep the last one
    ie = np.searchsorted(est.t_ns, common, side="right") - 1
    if common.size == 0:
        return {"samples": 0}
    qe = est.values[ie, 0:4]
    ve, pe = est.values[ie, 4:7], est.values[ie, 7:10]
    Re = quat_to_rot(qe)
    Rt = quat_to_rot(truth[it, 0:4])
    vt, pt = truth[it, 4:7], truth[it, 7:10]
    vb_e = np.einsum("nji,nj->ni", Re, ve)
    vb_t = np.einsum("nji,nj->ni", Rt, vt)
    dphi = log_so3_batch(Re @ np.transpose(Rt, (0, 2, 1)))
    path_xy = truth[:, 7:9]
    if gait_period > 0:
        marks = np.arange(truth_t_ns[0], truth_t_ns[-1] + 1, int(round(gait_period * NS)))
        path_xy = path_xy[np.searchsorted(truth_t_ns, marks).clip(0, len(truth_t_ns) - 1)]
    path = float(np.sum(np.linalg.norm(np.diff(path_xy, axis=0), axis=1)))
    dp = pe[-1] - pt[-1]
    return {
        "samples": int(common.size),
        "velocity_rmse": [float(x) for x in np.sqrt(np.mean((vb_e - vb_t) ** 2, axis=0))],
        "orientation_rmse": [float(x) for x in np.sqrt(np.mean(dphi**2, axis=0))],
        "horizontal_drift_fraction": float(np.linalg.norm(dp[:2]) / path) if path > 0 else float(np.linalg.norm(dp[:2])),
        "vertical_drift": float(abs(dp[2])),
        "path_length": path,
    }
