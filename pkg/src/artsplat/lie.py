"""SE(3)/se(3) primitives: exponential and logarithm maps plus the left
Jacobians needed to differentiate points with respect to twist coordinates.

Twist layout is (omega[3], rho[3]): rotation first (radians), translation
second (millimeters). All matrices are float64.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

_SMALL_ANGLE = 1e-8
_ORTHO_TOL = 1e-9


class AngleAtPiError(ValueError):
    """log map requested for a rotation too close to pi (non-invertible branch)."""


def hat(v: np.ndarray) -> np.ndarray:
    """3-vector -> 3x3 skew-symmetric matrix."""
    x, y, z = v
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def vee(W: np.ndarray) -> np.ndarray:
    return 0.5 * np.array([W[2, 1] - W[1, 2], W[0, 2] - W[2, 0], W[1, 0] - W[0, 1]])


def so3_exp(w: np.ndarray) -> np.ndarray:
    """Rodrigues formula with a series branch below the small-angle cutoff."""
    th = float(np.linalg.norm(w))
    W = hat(w)
    if th < _SMALL_ANGLE:
        return np.eye(3) + W + 0.5 * (W @ W)
    a = np.sin(th) / th
    b = (1.0 - np.cos(th)) / (th * th)
    return np.eye(3) + a * W + b * (W @ W)


def so3_log(R: np.ndarray) -> np.ndarray:
    """Rotation vector of R. Raises AngleAtPiError within 1e-6 of pi."""
    c = np.clip((np.trace(R) - 1.0) * 0.5, -1.0, 1.0)
    th = float(np.arccos(c))
    if th > np.pi - 1e-6:
        raise AngleAtPiError(f"rotation angle {th:.9f} within 1e-6 of pi")
    # vee(R - R^T) equals 2 sin(theta) * axis
    if th < _SMALL_ANGLE:
        return 0.5 * vee(R - R.T)
    return vee(R - R.T) * (0.5 * th / np.sin(th))


def so3_left_jacobian(w: np.ndarray) -> np.ndarray:
    th = float(np.linalg.norm(w))
    W = hat(w)
    if th < _SMALL_ANGLE:
        return np.eye(3) + 0.5 * W + (W @ W) / 6.0
    a = (1.0 - np.cos(th)) / (th * th)
    b = (th - np.sin(th)) / (th**3)
    return np.eye(3) + a * W + b * (W @ W)


def so3_left_jacobian_inv(w: np.ndarray) -> np.ndarray:
    th = float(np.linalg.norm(w))
    W = hat(w)
    if th < _SMALL_ANGLE:
        return np.eye(3) - 0.5 * W + (W @ W) / 12.0
    cot_term = 1.0 / (th * th) - (1.0 + np.cos(th)) / (2.0 * th * np.sin(th))
    return np.eye(3) - 0.5 * W + cot_term * (W @ W)


def _se3_Q(w: np.ndarray, rho: np.ndarray) -> np.ndarray:
    """Coupling block of the SE(3) left Jacobian (Barfoot's closed form)."""
    th = float(np.linalg.norm(w))
    W = hat(w)
    P = hat(rho)
    WP = W @ P
    PW = P @ W
    WPW = WP @ W
    if th < 1e-3:
        th2 = th * th
        ca = 1.0 / 6.0 - th2 / 120.0
        cb = 1.0 / 24.0 - th2 / 720.0
        cc = 1.0 / 120.0 - th2 / 2520.0
    else:
        s, c = np.sin(th), np.cos(th)
        ca = (th - s) / th**3
        cb = (th * th / 2.0 + c - 1.0) / th**4
        cc = (2.0 * th - 3.0 * s + th * c) / (2.0 * th**5)
    return (
        0.5 * P
        + ca * (WP + PW + WPW)
        + cb * (W @ WP + PW @ W - 3.0 * WPW)
        + cc * (WPW @ W + W @ WPW)
    )


def se3_left_jacobian(xi: np.ndarray) -> np.ndarray:
    """6x6 left Jacobian in (omega, rho) block order."""
    w, rho = xi[:3], xi[3:]
    J = so3_left_jacobian(w)
    out = np.zeros((6, 6))
    out[:3, :3] = J
    out[3:, 3:] = J
    out[3:, :3] = _se3_Q(w, rho)
    return out


@dataclass(frozen=True)
class Twist:
    """Element of se(3): (omega, rho) with rotation in radians, translation in mm."""

    xi: np.ndarray = field(default_factory=lambda: np.zeros(6))

    def __post_init__(self):
        arr = np.asarray(self.xi, dtype=np.float64).reshape(6).copy()
        object.__setattr__(self, "xi", arr)

    @property
    def omega(self) -> np.ndarray:
        return self.xi[:3]

    @property
    def rho(self) -> np.ndarray:
        return self.xi[3:]

    @classmethod
    def zero(cls) -> "Twist":
        return cls(np.zeros(6))

    @classmethod
    def from_parts(cls, omega, rho) -> "Twist":
        return cls(np.concatenate([np.asarray(omega, float), np.asarray(rho, float)]))


@dataclass(frozen=True)
class RigidTransform:
    """SE(3) element; rotation orthonormal with det +1 (checked at 1e-9)."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        R = np.asarray(self.rotation, dtype=np.float64).reshape(3, 3).copy()
        t = np.asarray(self.translation, dtype=np.float64).reshape(3).copy()
        err = np.abs(R.T @ R - np.eye(3)).max()
        if err > _ORTHO_TOL or abs(np.linalg.det(R) - 1.0) > 1e-6:
            raise ValueError(f"rotation not orthonormal/right-handed (err {err:.3e})")
        object.__setattr__(self, "rotation", R)
        object.__setattr__(self, "translation", t)

    @classmethod
    def identity(cls) -> "RigidTransform":
        return cls(np.eye(3), np.zeros(3))

    def compose(self, other: "RigidTransform") -> "RigidTransform":
        return RigidTransform(
            self.rotation @ other.rotation,
            self.rotation @ other.translation + self.translation,
        )

    def __matmul__(self, other: "RigidTransform") -> "RigidTransform":
        return self.compose(other)

    def inverse(self) -> "RigidTransform":
        Rt = self.rotation.T
        return RigidTransform(Rt, -Rt @ self.translation)

    def apply(self, points: np.ndarray) -> np.ndarray:
        """Transform points of shape (3,) or (N, 3)."""
        p = np.asarray(points, dtype=np.float64)
        return p @ self.rotation.T + self.translation

    def matrix(self) -> np.ndarray:
        M = np.eye(4)
        M[:3, :3] = self.rotation
        M[:3, 3] = self.translation
        return M


def exp_se3(twist: Twist) -> RigidTransform:
    """Closed-form SE(3) exponential: angle-axis rotation, left-Jacobian translation."""
    return RigidTransform(
        so3_exp(twist.omega), so3_left_jacobian(twist.omega) @ twist.rho
    )


def log_se3(T: RigidTransform) -> Twist:
    """Inverse of exp_se3; raises AngleAtPiError near the pi branch."""
    w = so3_log(T.rotation)
    rho = so3_left_jacobian_inv(w) @ T.translation
    return Twist.from_parts(w, rho)


def point_jacobian_wrt_twist(y: np.ndarray, xi: np.ndarray) -> np.ndarray:
    """d(exp(xi) x)/d(xi) evaluated at the transformed point y = exp(xi) x.

    Uses the first-order BCH identity exp((xi+d)^) ~ exp((Jl(xi) d)^) exp(xi^),
    so the 3x6 result is [-hat(y) | I3] @ Jl_se3(xi).
    """
    lead = np.zeros((3, 6))
    lead[:, :3] = -hat(y)
    lead[:, 3:] = np.eye(3)
    return lead @ se3_left_jacobian(np.asarray(xi, float))
