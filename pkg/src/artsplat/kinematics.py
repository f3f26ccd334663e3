"""Forward kinematics of the 3-joint wrist chain and its derivatives.

Frame convention (declared, self-consistent): the shaft frame is the base,
its z axis pointing from shaft base toward the tip. The wrist sits d0 along
+z and rolls by theta1 about z; the gripper sits a further d1 along +z and
pitches by theta2 about y; the jaws rotate about the gripper x axis, the
left jaw by +theta_l and the right jaw by -theta_r. Jaws cross when
theta_l + theta_r < 0.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import IntEnum

import numpy as np

from .lie import RigidTransform, Twist, exp_se3, point_jacobian_wrt_twist


class FrameId(IntEnum):
    SHAFT = 0
    WRIST = 1
    GRIPPER = 2
    LEFT_TIP = 3
    RIGHT_TIP = 4


# Semantic part classes rendered/evaluated by the pipeline.
SEM_SHAFT = 1
SEM_WRIST = 2
SEM_GRIPPER = 3

# Frames a Gaussian may be rigidly bound to (GRIPPER is an intermediate frame
# with no geometry of its own; both jaws carry the gripper semantics).
BIND_FRAMES = (FrameId.SHAFT, FrameId.WRIST, FrameId.LEFT_TIP, FrameId.RIGHT_TIP)

_JOINT_NAMES = ("theta1", "theta2", "theta_l", "theta_r")


def semantic_class(frame: FrameId) -> int:
    if frame == FrameId.SHAFT:
        return SEM_SHAFT
    if frame == FrameId.WRIST:
        return SEM_WRIST
    return SEM_GRIPPER


class JointLimitError(ValueError):
    def __init__(self, name: str, value: float, lo: float, hi: float):
        self.joint = name
        super().__init__(f"{name}={value:.6f} outside limits [{lo:.6f}, {hi:.6f}]")


@dataclass(frozen=True)
class JointState:
    """Joint state q. theta3 (gripper open angle) = theta_l + theta_r."""

    theta1: float = 0.0
    theta2: float = 0.0
    theta_l: float = 0.0
    theta_r: float = 0.0

    @property
    def theta3(self) -> float:
        return self.theta_l + self.theta_r

    def as_array(self) -> np.ndarray:
        return np.array([self.theta1, self.theta2, self.theta_l, self.theta_r])

    @classmethod
    def from_array(cls, q) -> "JointState":
        q = np.asarray(q, dtype=float).reshape(4)
        return cls(float(q[0]), float(q[1]), float(q[2]), float(q[3]))

    @classmethod
    def zero(cls) -> "JointState":
        return cls()


@dataclass(frozen=True)
class KinematicConfig:
    """Chain constants (mm) and per-angle limits (radians)."""

    d0: float = 215.9
    d1: float = 9.0
    theta1_limits: tuple = (-np.pi, np.pi)
    theta2_limits: tuple = (-np.pi / 2, np.pi / 2)
    theta_l_limits: tuple = (-0.2, np.pi / 3)
    theta_r_limits: tuple = (-0.2, np.pi / 3)

    def __post_init__(self):
        if self.d0 <= 0 or self.d1 <= 0:
            raise ValueError("d0 and d1 must be positive")
        for name in _JOINT_NAMES:
            lo, hi = self.limits_of(name)
            if not lo < hi:
                raise ValueError(f"empty limit interval for {name}")

    def limits_of(self, name: str) -> tuple:
        return getattr(self, f"{name}_limits")

    def check(self, q: JointState) -> None:
        for name, v in zip(_JOINT_NAMES, q.as_array()):
            lo, hi = self.limits_of(name)
            if v < lo or v > hi:
                raise JointLimitError(name, v, lo, hi)

    def clamp(self, q: JointState) -> JointState:
        vals = [
            float(np.clip(v, *self.limits_of(name)))
            for name, v in zip(_JOINT_NAMES, q.as_array())
        ]
        return JointState(*vals)


def _rot_x(th: float) -> np.ndarray:
    c, s = np.cos(th), np.sin(th)
    return np.array([[1, 0, 0], [0, c, -s], [0, s, c]], dtype=float)


def _rot_y(th: float) -> np.ndarray:
    c, s = np.cos(th), np.sin(th)
    return np.array([[c, 0, s], [0, 1, 0], [-s, 0, c]], dtype=float)


def _rot_z(th: float) -> np.ndarray:
    c, s = np.cos(th), np.sin(th)
    return np.array([[c, -s, 0], [s, c, 0], [0, 0, 1]], dtype=float)


def _drot_x(th: float) -> np.ndarray:
    c, s = np.cos(th), np.sin(th)
    return np.array([[0, 0, 0], [0, -s, -c], [0, c, -s]], dtype=float)


def _drot_y(th: float) -> np.ndarray:
    c, s = np.cos(th), np.sin(th)
    return np.array([[-s, 0, c], [0, 0, 0], [-c, 0, -s]], dtype=float)


def _drot_z(th: float) -> np.ndarray:
    c, s = np.cos(th), np.sin(th)
    return np.array([[-s, -c, 0], [c, -s, 0], [0, 0, 0]], dtype=float)


@dataclass(frozen=True)
class ChainDerivatives:
    """Shaft-frame pose of one joint frame plus its joint-angle derivatives.

    dR[k] is dR/d(joint k) for k in (theta1, theta2, theta_l, theta_r);
    chain translations are constant in q, so dt/dq = 0 throughout.
    """

    R: np.ndarray
    t: np.ndarray
    dR: tuple


def chain_with_derivs(q: JointState, cfg: KinematicConfig, frame: FrameId) -> ChainDerivatives:
    z3 = np.zeros((3, 3))
    if frame == FrameId.SHAFT:
        return ChainDerivatives(np.eye(3), np.zeros(3), (z3, z3, z3, z3))

    Rz, dRz = _rot_z(q.theta1), _drot_z(q.theta1)
    t_w = np.array([0.0, 0.0, cfg.d0])
    if frame == FrameId.WRIST:
        return ChainDerivatives(Rz, t_w, (dRz, z3, z3, z3))

    Ry, dRy = _rot_y(q.theta2), _drot_y(q.theta2)
    t_g = np.array([0.0, 0.0, cfg.d0 + cfg.d1])
    R_g = Rz @ Ry
    if frame == FrameId.GRIPPER:
        return ChainDerivatives(R_g, t_g, (dRz @ Ry, Rz @ dRy, z3, z3))

    if frame == FrameId.LEFT_TIP:
        Rx, dRx = _rot_x(q.theta_l), _drot_x(q.theta_l)
        return ChainDerivatives(
            R_g @ Rx, t_g, (dRz @ Ry @ Rx, Rz @ dRy @ Rx, R_g @ dRx, z3)
        )
    if frame == FrameId.RIGHT_TIP:
        Rx = _rot_x(-q.theta_r)
        dRx = -_drot_x(-q.theta_r)  # d/d(theta_r) of rot_x(-theta_r)
        return ChainDerivatives(
            R_g @ Rx, t_g, (dRz @ Ry @ Rx, Rz @ dRy @ Rx, z3, R_g @ dRx)
        )
    raise ValueError(f"unknown frame {frame!r}")


def forward_chain(q: JointState, cfg: KinematicConfig, frame: FrameId) -> RigidTransform:
    """sT_j(q) for the requested frame; raises JointLimitError out of limits."""
    cfg.check(q)
    ch = chain_with_derivs(q, cfg, frame)
    return RigidTransform(ch.R, ch.t)


def transform_points(
    x: np.ndarray, frame: FrameId, q: JointState, xi: Twist, cfg: KinematicConfig
) -> np.ndarray:
    """camT_s(xi) . sT_j(q) . x for points of shape (3,) or (N, 3)."""
    T = exp_se3(xi) @ forward_chain(q, cfg, frame)
    return T.apply(x)


def pose_jacobian(
    x: np.ndarray, frame: FrameId, q: JointState, xi: Twist, cfg: KinematicConfig
) -> np.ndarray:
    """3x10 Jacobian of the camera-frame point w.r.t. (xi[6], theta1, theta2, theta_l, theta_r).

    Joint columns not on the chain to `frame` are zero.
    """
    cfg.check(q)
    x = np.asarray(x, dtype=float).reshape(3)
    ch = chain_with_derivs(q, cfg, frame)
    T_cam = exp_se3(xi)
    y = T_cam.apply(ch.R @ x + ch.t)
    J = np.zeros((3, 10))
    J[:, :6] = point_jacobian_wrt_twist(y, xi.xi)
    for k in range(4):
        J[:, 6 + k] = T_cam.rotation @ (ch.dR[k] @ x)
    return J
