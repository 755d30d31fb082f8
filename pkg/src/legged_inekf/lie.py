"""SO(3) and SE_2(3) group operations.

Tangent vectors of SE_2(3) are ordered ``[rotation; velocity; position]``.
All functions are pure and operate on float64 numpy arrays.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

SMALL_ANGLE = 1e-8
ORTHO_TOL = 1e-9


def hat3(v: np.ndarray) -> np.ndarray:
    """Skew-symmetric matrix with ``hat3(v) @ y == np.cross(v, y)``."""
    x, y, z = v
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def vee3(M: np.ndarray) -> np.ndarray:
    return np.array([M[2, 1], M[0, 2], M[1, 0]])


def _so3_coeffs(theta: float) -> tuple[float, float, float]:
    """Return (sin t / t, (1 - cos t) / t^2, (t - sin t) / t^3)."""
    if theta < SMALL_ANGLE:
        t2 = theta * theta
        return 1.0 - t2 / 6.0, 0.5 - t2 / 24.0, 1.0 / 6.0 - t2 / 120.0
    s = np.sin(theta)
    half = np.sin(0.5 * theta)
    return s / theta, 2.0 * half * half / theta**2, (theta - s) / theta**3


def exp_so3(phi: np.ndarray) -> np.ndarray:
    """Rodrigues formula; second-order Taylor series below ``SMALL_ANGLE``."""
    phi = np.asarray(phi, dtype=float)
    theta = float(np.linalg.norm(phi))
    a, b, _ = _so3_coeffs(theta)
    K = hat3(phi)
    return np.eye(3) + a * K + b * (K @ K)


def left_jacobian_so3(phi: np.ndarray) -> np.ndarray:
    phi = np.asarray(phi, dtype=float)
    theta = float(np.linalg.norm(phi))
    _, b, c = _so3_coeffs(theta)
    K = hat3(phi)
    return np.eye(3) + b * K + c * (K @ K)


def orthonormality_residual(R: np.ndarray) -> float:
    return float(np.linalg.norm(R.T @ R - np.eye(3)))


def project_to_so3(R: np.ndarray) -> np.ndarray:
    """Nearest rotation in the Frobenius sense (polar factor)."""
    U, _, Vt = np.linalg.svd(R)
    D = np.diag([1.0, 1.0, np.sign(np.linalg.det(U @ Vt))])
    return U @ D @ Vt


def log_so3(R: np.ndarray) -> np.ndarray:
    """Inverse of :func:`exp_so3` with ``|result| <= pi``.

    Rotations close to pi take the axis from the symmetric part of ``R``,
    where the antisymmetric part carries almost no information.
    """
    R = np.asarray(R, dtype=float)
    if R.shape != (3, 3) or not np.all(np.isfinite(R)):
        raise ValueError("log_so3 expects a finite 3x3 matrix")
    if orthonormality_residual(R) > 1e-7 or np.linalg.det(R) < 0.0:
        raise ValueError("log_so3 input is not a rotation matrix")
    w = 0.5 * vee3(R - R.T)
    s = float(np.linalg.norm(w))
    c = 0.5 * (np.trace(R) - 1.0)
    theta = float(np.arctan2(s, c))
    if theta < SMALL_ANGLE:
        # R - R^T = 2 sin(t)/t hat(phi); sin(t)/t = 1 to second order
        return w * (1.0 + theta * theta / 6.0)
    if c > -0.999:
        return w * (theta / s)
    B = (0.5 * (R + R.T) - c * np.eye(3)) / (1.0 - c)
    k = int(np.argmax(np.diag(B)))
    axis = B[:, k] / np.sqrt(B[k, k])
    axis /= np.linalg.norm(axis)
    if axis @ w < 0.0:
        axis = -axis
    return theta * axis


@dataclass(frozen=True)
class SE23:
    """Element of SE_2(3) held as an explicit (R, v, p) triple."""

    R: np.ndarray
    v: np.ndarray
    p: np.ndarray

    @classmethod
    def identity(cls) -> "SE23":
        return cls(np.eye(3), np.zeros(3), np.zeros(3))

    @classmethod
    def from_matrix(cls, X: np.ndarray) -> "SE23":
        X = np.asarray(X, dtype=float)
        if X.shape != (5, 5):
            raise ValueError("expected a 5x5 matrix")
        return cls(X[:3, :3].copy(), X[:3, 3].copy(), X[:3, 4].copy())

    def matrix(self) -> np.ndarray:
        X = np.eye(5)
        X[:3, :3] = self.R
        X[:3, 3] = self.v
        X[:3, 4] = self.p
        return X

    def inverse(self) -> "SE23":
        Rt = self.R.T
        return SE23(Rt, -Rt @ self.v, -Rt @ self.p)

    def __matmul__(self, other: "SE23") -> "SE23":
        R = self.R @ other.R
        if orthonormality_residual(R) > ORTHO_TOL:
            R = project_to_so3(R)
        return SE23(R, self.R @ other.v + self.v, self.R @ other.p + self.p)


def hat_se23(xi: np.ndarray) -> np.ndarray:
    M = np.zeros((5, 5))
    M[:3, :3] = hat3(xi[0:3])
    M[:3, 3] = xi[3:6]
    M[:3, 4] = xi[6:9]
    return M


def vee_se23(M: np.ndarray) -> np.ndarray:
    return np.concatenate([vee3(M[:3, :3]), M[:3, 3], M[:3, 4]])


def exp_se23(xi: np.ndarray) -> SE23:
    xi = np.asarray(xi, dtype=float)
    J = left_jacobian_so3(xi[0:3])
    return SE23(exp_so3(xi[0:3]), J @ xi[3:6], J @ xi[6:9])


def log_se23(X: SE23) -> np.ndarray:
    phi = log_so3(X.R)
    Jinv = np.linalg.inv(left_jacobian_so3(phi))
    return np.concatenate([phi, Jinv @ X.v, Jinv @ X.p])


def adjoint_se23(X: SE23) -> np.ndarray:
    """9x9 adjoint: ``X hat(xi) X^-1 == hat(adjoint_se23(X) @ xi)``."""
    R = X.R
    Ad = np.zeros((9, 9))
    Ad[0:3, 0:3] = R
    Ad[3:6, 3:6] = R
    Ad[6:9, 6:9] = R
    Ad[3:6, 0:3] = hat3(X.v) @ R
    Ad[6:9, 0:3] = hat3(X.p) @ R
    return Ad


# ---------------------------------------------------------------- batched

def hat3_batch(v: np.ndarray) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    M = np.zeros(v.shape[:-1] + (3, 3))
    M[..., 0, 1] = -v[..., 2]
    M[..., 0, 2] = v[..., 1]
    M[..., 1, 0] = v[..., 2]
    M[..., 1, 2] = -v[..., 0]
    M[..., 2, 0] = -v[..., 1]
    M[..., 2, 1] = v[..., 0]
    return M


def exp_so3_batch(phi: np.ndarray) -> np.ndarray:
    """Row-wise :func:`exp_so3` for an (n, 3) array."""
    phi = np.asarray(phi, dtype=float)
    theta = np.linalg.norm(phi, axis=-1)
    small = theta < SMALL_ANGLE
    ts = np.where(small, 1.0, theta)
    a = np.where(small, 1.0 - theta**2 / 6.0, np.sin(ts) / ts)
    b = np.where(small, 0.5 - theta**2 / 24.0, 2.0 * np.sin(0.5 * ts) ** 2 / ts**2)
    K = hat3_batch(phi)
    return np.eye(3) + a[..., None, None] * K + b[..., None, None] * (K @ K)


def log_so3_batch(R: np.ndarray) -> np.ndarray:
    """Row-wise :func:`log_so3` without input validation."""
    R = np.asarray(R, dtype=float)
    w = 0.5 * np.stack(
        [R[..., 2, 1] - R[..., 1, 2], R[..., 0, 2] - R[..., 2, 0], R[..., 1, 0] - R[..., 0, 1]], axis=-1
    )
    s = np.linalg.norm(w, axis=-1)
    c = 0.5 * (np.trace(R, axis1=-2, axis2=-1) - 1.0)
    theta = np.arctan2(s, c)
    small = theta < SMALL_ANGLE
    scale = np.where(small, 1.0 + theta**2 / 6.0, theta / np.where(small, 1.0, s))
    out = w * scale[..., None]
    near_pi = np.flatnonzero(np.reshape(c <= -0.999, -1))
    if near_pi.size:
        flat_R = R.reshape(-1, 3, 3)
        flat = out.reshape(-1, 3)
        for i in near_pi:
            flat[i] = log_so3(flat_R[i])
    return out


def left_jacobian_inv_so3_batch(phi: np.ndarray) -> np.ndarray:
    phi = np.asarray(phi, dtype=float)
    theta = np.linalg.norm(phi, axis=-1)
    small = theta < 1e-4
    ts = np.where(small, 1.0, theta)
    # coefficient of K^2: 1/t^2 - (1 + cos t) / (2 t sin t); series 1/12 + t^2/720
    big = 1.0 / ts**2 - (1.0 + np.cos(ts)) / (2.0 * ts * np.sin(ts))
    c2 = np.where(small, 1.0 / 12.0 + theta**2 / 720.0, big)
    K = hat3_batch(phi)
    return np.eye(3) - 0.5 * K + c2[..., None, None] * (K @ K)
