"""Contact-point velocity observations from leg encoders.

A leg model maps joint angles to the contact point in the robot frame. With
the contact point fixed in the world, differentiating d = p + R r gives a
body-frame velocity measurement y_vel = -(J alpha_dot + omega^x r).
"""

from __future__ import annotations

from abc import ABC, abstractmethod
from dataclasses import dataclass, field

import numpy as np

# Homogeneous-coordinate constant of the right-invariant observation; the
# 5-vector y has this same tail.
B_CONST = np.array([0.0, 0.0, 0.0, -1.0, 0.0])


class JointLimitError(ValueError):
    pass


class LegModel(ABC):
    """Stateless forward kinematics r(alpha) and its Jacobian."""

    n_joints: int

    @abstractmethod
    def forward(self, alpha: np.ndarray) -> np.ndarray: ...

    @abstractmethod
    def jacobian(self, alpha: np.ndarray) -> np.ndarray: ...

    def check_limits(self, alpha: np.ndarray) -> None:
        pass

    # Batched versions; subclasses may override with vectorized code.
    def forward_batch(self, alpha: np.ndarray) -> np.ndarray:
        return np.stack([self.forward(a) for a in alpha])

    def jacobian_batch(self, alpha: np.ndarray) -> np.ndarray:
        return np.stack([self.jacobian(a) for a in alpha])


@dataclass(frozen=True)
class ToyLeg(LegModel):
    """Hip yaw, hip pitch, knee pitch serial chain.

    The yaw joint swings a horizontal ``hip`` link; two pitch links of length
    ``thigh`` and ``shin`` hang below it. ``mount`` is the yaw joint location in
    the robot frame. All joints are limited to ``|alpha_i| <= limit``.
    """

    hip: float = 0.2
    thigh: float = 0.4
    shin: float = 0.4
    mount: tuple = (0.0, 0.0, 0.0)
    limit: float = np.pi / 2
    n_joints: int = field(default=3, init=False)

    def check_limits(self, alpha):
        alpha = np.asarray(alpha, dtype=float)
        if not np.all(np.isfinite(alpha)):
            raise ValueError("joint angles must be finite")
        if np.any(np.abs(alpha) > self.limit + 1e-12):
            raise JointLimitError(f"joint angles {alpha} exceed +/-{self.limit:.4f} rad")

    def _planar(self, alpha):
        a0, a1, a2 = alpha[..., 0], alpha[..., 1], alpha[..., 2]
        a12 = a1 + a2
        x = self.hip - self.thigh * np.sin(a1) - self.shin * np.sin(a12)
        z = -self.thigh * np.cos(a1) - self.shin * np.cos(a12)
        return a0, a1, a12, x, z

    def forward_batch(self, alpha):
        alpha = np.asarray(alpha, dtype=float)
        a0, _, _, x, z = self._planar(alpha)
        out = np.empty(alpha.shape[:-1] + (3,))
        out[..., 0] = np.cos(a0) * x
        out[..., 1] = np.sin(a0) * x
        out[..., 2] = z
        return out + np.asarray(self.mount, dtype=float)

    def jacobian_batch(self, alpha):
        alpha = np.asarray(alpha, dtype=float)
        a0, a1, a12, x, _ = self._planar(alpha)
        c0, s0 = np.cos(a0), np.sin(a0)
        dx1 = -self.thigh * np.cos(a1) - self.shin * np.cos(a12)
        dx2 = -self.shin * np.cos(a12)
        dz1 = self.thigh * np.sin(a1) + self.shin * np.sin(a12)
        dz2 = self.shin * np.sin(a12)
        J = np.zeros(alpha.shape[:-1] + (3, 3))
        J[..., 0, 0] = -s0 * x
        J[..., 1, 0] = c0 * x
        J[..., 0, 1] = c0 * dx1
        J[..., 1, 1] = s0 * dx1
        J[..., 2, 1] = dz1
        J[..., 0, 2] = c0 * dx2
        J[..., 1, 2] = s0 * dx2
        J[..., 2, 2] = dz2
        return J

    def forward(self, alpha):
        self.check_limits(alpha)
        return self.forward_batch(np.asarray(alpha, dtype=float))

    def jacobian(self, alpha):
        self.check_limits(alpha)
        return self.jacobian_batch(np.asarray(alpha, dtype=float))

    def inverse(self, r: np.ndarray) -> np.ndarray:
        """Joint angles placing the foot at ``r`` (robot frame), knee bent forward."""
        r = np.asarray(r, dtype=float) - np.asarray(self.mount, dtype=float)
        a0 = np.arctan2(r[..., 1], r[..., 0])
        X = np.hypot(r[..., 0], r[..., 1]) - self.hip
        Z = r[..., 2]
        L1, L2 = self.thigh, self.shin
        c2 = (X * X + Z * Z - L1 * L1 - L2 * L2) / (2.0 * L1 * L2)
        if np.any(c2 > 1.0) or np.any(c2 < -1.0):
            raise JointLimitError("foot target out of reach")
        a2 = np.arccos(c2)
        k1 = L1 + L2 * np.cos(a2)
        k2 = L2 * np.sin(a2)
        a1 = np.arctan2(-X, -Z) - np.arctan2(k2, k1)
        alpha = np.stack([a0, a1, a2], axis=-1)
        if np.any(np.abs(alpha) > self.limit):
            raise JointLimitError("foot target needs joint angles beyond the limits")
        return alpha


def biped_legs() -> dict[int, ToyLeg]:
    """Left (id 0) and right (id 1) toy legs mounted 10 cm either side."""
    return {0: ToyLeg(mount=(0.0, 0.1, 0.0)), 1: ToyLeg(mount=(0.0, -0.1, 0.0))}


@dataclass(frozen=True)
class ContactKinematicSample:
    t: float
    contact_id: int
    alpha: np.ndarray
    alpha_dot: np.ndarray
    omega_tilde: np.ndarray
    contact_active: bool = True


@dataclass(frozen=True)
class KinematicObservation:
    t: float
    contact_id: int
    y_vel: np.ndarray

    @property
    def y(self) -> np.ndarray:
        """Full 5-vector in homogeneous form; the last two entries are fixed."""
        return np.concatenate([self.y_vel, B_CONST[3:]])

    @property
    def b(self) -> np.ndarray:
        return B_CONST.copy()


def contact_velocity_obs(sample: ContactKinematicSample, model: LegModel) -> KinematicObservation:
    """y_vel = -(J alpha_dot + omega^x r).

    The raw gyro reading is used; its bias is part of the measurement noise.
    """
    if not sample.contact_active:
        raise ValueError("contact is not active")
    alpha = np.asarray(sample.alpha, dtype=float)
    alpha_dot = np.asarray(sample.alpha_dot, dtype=float)
    omega = np.asarray(sample.omega_tilde, dtype=float)
    for name, arr in (("alpha", alpha), ("alpha_dot", alpha_dot), ("omega_tilde", omega)):
        if not np.all(np.isfinite(arr)):
            raise ValueError(f"{name} must be finite")
    model.check_limits(alpha)
    y = contact_velocity_batch(model, alpha[None], alpha_dot[None], omega[None])[0]
    return KinematicObservation(sample.t, sample.contact_id, y)


def contact_velocity_batch(model: LegModel, alpha, alpha_dot, omega) -> np.ndarray:
    """Row-wise y_vel for (n, n_joints) encoder arrays and (n, 3) gyro readings.

    Written with explicit elementwise products so results do not depend on the
    BLAS summation order.
    """
    r = model.forward_batch(alpha)
    J = model.jacobian_batch(alpha)
    Jad = np.zeros_like(r)
    for j in range(alpha.shape[-1]):
        Jad = Jad + J[..., :, j] * alpha_dot[..., j : j + 1]
    wxr = np.stack(
        [
            omega[..., 1] * r[..., 2] - omega[..., 2] * r[..., 1],
            omega[..., 2] * r[..., 0] - omega[..., 0] * r[..., 2],
            omega[..., 0] * r[..., 1] - omega[..., 1] * r[..., 0],
        ],
        axis=-1,
    )
    return -(Jad + wxr)
