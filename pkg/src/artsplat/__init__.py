"""Controllable articulated Gaussian-splat instrument assets."""

from .camera import Camera
from .kinematics import FrameId, JointState, KinematicConfig
from .lie import RigidTransform, Twist, exp_se3, log_se3

__all__ = [
    "Camera",
    "FrameId",
    "JointState",
    "KinematicConfig",
    "RigidTransform",
    "Twist",
    "exp_se3",
    "log_se3",
]

__version__ = "0.1.0"
