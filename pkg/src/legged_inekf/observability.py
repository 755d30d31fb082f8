"""Observability matrices for the camera-velocity measurement.

The continuous analysis uses a robot-centric chart: attitude R (body to
world), body-frame velocity and position, biases and camera extrinsics. With
measured IMU signals w_m(t), a_m(t) the body-frame quantities obey

    v' = -w x v + a + q,      q' = -w x q,      q = R^T g,

where w = w_m - b_w and a = a_m - b_a. The camera velocity
h = R_c^T v + w_c^x R_c^T p_c takes the camera rate w_c as a measured input
held at its current value.

Time derivatives of h are generated exactly by propagating truncated Taylor
series ("jets") of v and q for given input jets; the observability matrix is
the chart gradient of the stacked derivatives, taken by central differences.
Rows are stacked over several input jets, so the matrix spans the Lie
derivatives along the drift and the input vector fields rather than along a
single frozen input.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import factorial

import numpy as np

from .lie import exp_so3
from .state import ERROR_DIM, GRAVITY

# Chart layout; matches the filter's error ordering.
CH_R = slice(0, 3)
CH_V = slice(3, 6)
CH_P = slice(6, 9)
CH_BW = slice(9, 12)
CH_BA = slice(12, 15)
CH_RC = slice(15, 18)
CH_PC = slice(18, 21)

DEFAULT_TOL = 1e-7
FD_STEP = 1e-5
MAX_ORDER = 6


@dataclass(frozen=True)
class RobotCentricState:
    R: np.ndarray = field(default_factory=lambda: np.eye(3))
    v: np.ndarray = field(default_factory=lambda: np.zeros(3))  # body frame
    p: np.ndarray = field(default_factory=lambda: np.zeros(3))  # body frame
    b_omega: np.ndarray = field(default_factory=lambda: np.zeros(3))
    b_a: np.ndarray = field(default_factory=lambda: np.zeros(3))
    R_c: np.ndarray = field(default_factory=lambda: np.eye(3))
    p_c: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def perturbed(self, d: np.ndarray) -> "RobotCentricState":
        return RobotCentricState(
            R=exp_so3(d[CH_R]) @ self.R,
            v=self.v + d[CH_V],
            p=self.p + d[CH_P],
            b_omega=self.b_omega + d[CH_BW],
            b_a=self.b_a + d[CH_BA],
            R_c=exp_so3(d[CH_RC]) @ self.R_c,
            p_c=self.p_c + d[CH_PC],
        )


@dataclass(frozen=True)
class ImuInput:
    """Bias-free angular rate and specific force (body frame) at the current instant."""

    omega: np.ndarray
    acc: np.ndarray


def _cross_coeff(a, b, n):
    """Coefficient n of the product of two Taylor series of 3-vectors."""
    out = np.zeros(3)
    for i in range(n + 1):
        out += np.cross(a[i], b[n - i])
    return out


def output_derivatives(x: RobotCentricState, w_m: np.ndarray, a_m: np.ndarray, omega_c: np.ndarray,
                       order: int, gravity=GRAVITY) -> np.ndarray:
    """Stacked h, h', ..., h^(order) for measured-input Taylor coefficients ``w_m``, ``a_m``.

    ``w_m`` and ``a_m`` have shape (order + 1, 3); row k is the k-th Taylor
    coefficient (the k-th derivative divided by k!).
    """
    w = np.array(w_m, dtype=float)
    a = np.array(a_m, dtype=float)
    w[0] -= x.b_omega
    a[0] -= x.b_a
    v = np.zeros((order + 1, 3))
    q = np.zeros((order + 1, 3))
    v[0] = x.v
    q[0] = x.R.T @ np.asarray(gravity, dtype=float)
    for n in range(order):
        v[n + 1] = (a[n] + q[n] - _cross_coeff(w, v, n)) / (n + 1)
        q[n + 1] = -_cross_coeff(w, q, n) / (n + 1)
    h = v @ x.R_c  # rows R_c^T v_k
    h[0] += np.cross(omega_c, x.R_c.T @ x.p_c)
    return np.concatenate([h[k] * factorial(k) for k in range(order + 1)])


def input_jets(n_jets: int, order: int, scale: float = 0.3, seed: int = 0, rotate: bool = True,
               accelerate: bool = True):
    """Deterministic random higher-order input coefficients (row 0 left at zero)."""
    rng = np.random.default_rng(seed)
    jets = []
    for _ in range(n_jets):
        w = np.zeros((order + 1, 3))
        a = np.zeros((order + 1, 3))
        if rotate:
            w[1:] = scale * rng.standard_normal((order, 3))
        if accelerate:
            a[1:] = scale * rng.standard_normal((order, 3))
        jets.append((w, a))
    return jets


def continuous_obs_matrix(state: RobotCentricState, imu: ImuInput, order: int = MAX_ORDER,
                          omega_c=None, gravity=GRAVITY, step: float = FD_STEP,
                          excitation: int = 3, jets=None) -> np.ndarray:
    """Gradients of h^(0..order) on the 21-dim chart, shape (3 (order+1) n_jets, 21).

    ``imu`` holds the true rates at the linearization point; perturbing the
    bias entries of the chart shifts them. ``omega_c`` defaults to R_c^T w.
    ``excitation`` random input jets are stacked (0 means constant input);
    pass ``jets`` to supply them explicitly.
    """
    if not 0 <= order <= MAX_ORDER:
        raise ValueError(f"order must be in 0..{MAX_ORDER}")
    omega = np.asarray(imu.omega, dtype=float)
    acc = np.asarray(imu.acc, dtype=float)
    wc = state.R_c.T @ omega if omega_c is None else np.asarray(omega_c, dtype=float)
    if jets is None:
        jets = input_jets(excitation, order) if excitation > 0 else [(np.zeros((order + 1, 3)),) * 2]
    blocks = []
    for wj, aj in jets:
        w_m = np.array(wj[: order + 1], dtype=float)
        a_m = np.array(aj[: order + 1], dtype=float)
        w_m[0] = omega + state.b_omega
        a_m[0] = acc + state.b_a
        O = np.empty((3 * (order + 1), ERROR_DIM))
        for j in range(ERROR_DIM):
            d = np.zeros(ERROR_DIM)
            d[j] = step
            fp = output_derivatives(state.perturbed(d), w_m, a_m, wc, order, gravity)
            fm = output_derivatives(state.perturbed(-d), w_m, a_m, wc, order, gravity)
            O[:, j] = (fp - fm) / (2.0 * step)
        blocks.append(O)
    return np.vstack(blocks)


def discrete_obs_matrix(rows) -> np.ndarray:
    """Stack H_k, H_{k+1} Phi_k, H_{k+2} Phi_{k+1} Phi_k, ...

    ``rows`` is a sequence of (H, Phi) pairs where Phi maps the error at that
    measurement to the next one; the last Phi is unused.
    """
    rows = list(rows)
    if not rows:
        raise ValueError("need at least one (H, Phi) row")
    n = np.asarray(rows[0][0]).shape[1]
    M = np.eye(n)
    out = []
    for H, Phi in rows:
        H = np.asarray(H, dtype=float)
        Phi = np.asarray(Phi, dtype=float)
        if H.ndim != 2 or H.shape[1] != n or Phi.shape != (n, n):
            raise ValueError(f"expected H with {n} columns and {n}x{n} Phi")
        out.append(H @ M)
        M = Phi @ M
    return np.vstack(out)


def numeric_rank(M: np.ndarray, tol: float = DEFAULT_TOL) -> int:
    """Count of singular values above tol * sigma_max."""
    s = np.linalg.svd(np.asarray(M, dtype=float), compute_uv=False)
    if s.size == 0 or s[0] == 0.0:
        return 0
    return int(np.count_nonzero(s > tol * s[0]))


def nullspace_basis(M: np.ndarray, tol: float = DEFAULT_TOL) -> np.ndarray:
    """Orthonormal columns spanning the numerical nullspace."""
    M = np.asarray(M, dtype=float)
    _, s, Vt = np.linalg.svd(M, full_matrices=True)
    r = 0 if s.size == 0 or s[0] == 0.0 else int(np.count_nonzero(s > tol * s[0]))
    return Vt[r:].T.copy()


@dataclass
class ObservabilityReport:
    shape: tuple
    numeric_rank: int
    nullity: int
    nullspace: np.ndarray
    case: str
    tolerance: float
    singular_values: np.ndarray

    def to_dict(self) -> dict:
        return {
            "shape": list(self.shape),
            "rank": self.numeric_rank,
            "nullity": self.nullity,
            "case": self.case,
            "tolerance": self.tolerance,
            "singular_values": [float(x) for x in self.singular_values],
            "nullspace": [[float(x) for x in col] for col in self.nullspace.T],
        }


CASES = ("dynamic", "omega_zero_v_zero", "omega_zero_v_nonzero")


def case_of(state: RobotCentricState, imu: ImuInput, eps: float = 1e-9) -> str:
    if np.linalg.norm(imu.omega) > eps:
        return "dynamic"
    return "omega_zero_v_zero" if np.linalg.norm(state.v) <= eps else "omega_zero_v_nonzero"


def classify_case(state: RobotCentricState, imu: ImuInput, order: int = 6, tol: float = DEFAULT_TOL,
                  gravity=GRAVITY) -> ObservabilityReport:
    O = continuous_obs_matrix(state, imu, order, gravity=gravity)
    s = np.linalg.svd(O, compute_uv=False)
    rank = numeric_rank(O, tol)
    N = nullspace_basis(O, tol)
    return ObservabilityReport(O.shape, rank, ERROR_DIM - rank, N, case_of(state, imu), tol, s)


def hover_acc(R: np.ndarray, gravity=GRAVITY) -> np.ndarray:
    """Specific force that cancels gravity (no acceleration)."""
    return -R.T @ np.asarray(gravity, dtype=float)


def canonical_case(name: str):
    """Representative (state, input) for the three analysed regimes."""
    R = exp_so3(np.array([0.1, -0.05, 0.4]))
    base = dict(R=R, R_c=exp_so3(np.array([0.1, -0.2, 0.3])), p_c=np.array([0.15, 0.02, 0.1]),
                p=np.array([0.3, -0.2, 0.1]))
    if name == "dynamic":
        x = RobotCentricState(v=np.array([0.5, 0.1, 0.05]), **base)
        u = ImuInput(np.array([0.3, -0.2, 0.4]), hover_acc(R) + np.array([0.2, -0.1, 0.3]))
    elif name == "static":
        x = RobotCentricState(**base)
        u = ImuInput(np.zeros(3), hover_acc(R))
    elif name == "zero-omega-moving":
        x = RobotCentricState(v=np.array([1.0, 0.0, 0.0]), **base)
        u = ImuInput(np.zeros(3), hover_acc(R))
    else:
        raise ValueError(f"unknown case {name!r}; expected dynamic, static or zero-omega-moving")
    return x, u


def unobservable_directions(state: RobotCentricState, gravity=GRAVITY) -> np.ndarray:
    """Yaw about gravity and body-frame position shifts, as chart columns (21, 4)."""
    U = np.zeros((ERROR_DIM, 4))
    U[CH_R, 0] = np.asarray(gravity) / np.linalg.norm(gravity)
    U[CH_P, 1:4] = np.eye(3)
    return U


def walk_obs_matrix(states, omega_c, dts, gravity=GRAVITY) -> np.ndarray:
    """Discrete observability matrix of camera updates along a sequence of filter states.

    ``states`` are RobotState linearization points at the camera times,
    ``omega_c`` the camera rates there and ``dts`` the gaps between them.
    """
    from ._kernels import backend

    g = np.asarray(gravity, dtype=float)
    states = list(states)
    omega_c = np.asarray(omega_c, dtype=float).reshape(len(states), 3)
    dts = list(dts) + [0.0] * (len(states) - len(dts))
    rows = []
    for s, wc, dt in zip(states, omega_c, dts):
        x = s.to_flat()
        _, H = backend.camera_model(x, wc)
        rows.append((H, backend.transition_matrix(x, g, float(dt))))
    return discrete_obs_matrix(rows)


def filter_unobservable_directions(gravity=GRAVITY) -> np.ndarray:
    """Yaw and world position in the filter's error chart, (21, 4)."""
    U = np.zeros((ERROR_DIM, 4))
    U[0:3, 0] = np.asarray(gravity) / np.linalg.norm(gravity)
    U[6:9, 1:4] = np.eye(3)
    return U
