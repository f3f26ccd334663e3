"""Semantic-embedded, kinematically bound Gaussian instrument asset.

Splat attributes are stored struct-of-arrays for speed; `Gaussian` is the
per-splat record used at API boundaries. Positions live in each splat's
kinematic frame's rest coordinates and are mapped to the camera frame by
the forward-kinematics chain (positions by the rigid transform, rotations
by quaternion composition with its rotational part).
"""

from __future__ import annotations

import io
import struct
from dataclasses import dataclass, field

import numpy as np

from .kinematics import (
    BIND_FRAMES,
    FrameId,
    JointState,
    KinematicConfig,
    chain_with_derivs,
    semantic_class,
)
from .lie import Twist, exp_se3
from .quats import quat_from_matrix, quat_mul, quat_normalize
from .sh import evaluate_sh_batch

_MAGIC = b"AGSA"
_VERSION = 1


class AssetFormatError(ValueError):
    """Raised when an asset file is corrupt, truncated, or inconsistent."""


@dataclass
class Gaussian:
    """One splat: position (mm, rest frame), unit quaternion, log scales,
    opacity logit, 27 SH coefficients, kinematic binding and part class."""

    mu: np.ndarray
    rot: np.ndarray
    log_scale: np.ndarray
    opacity_logit: float
    sh: np.ndarray
    kin_frame: FrameId
    semantic: int = 0

    def __post_init__(self):
        self.mu = np.asarray(self.mu, dtype=np.float64).reshape(3)
        self.rot = quat_normalize(np.asarray(self.rot, dtype=np.float64).reshape(4))
        self.log_scale = np.asarray(self.log_scale, dtype=np.float64).reshape(3)
        self.sh = np.asarray(self.sh, dtype=np.float64).reshape(27)
        self.kin_frame = FrameId(self.kin_frame)
        if self.semantic == 0:
            self.semantic = semantic_class(self.kin_frame)

    @property
    def opacity(self) -> float:
        return float(1.0 / (1.0 + np.exp(-self.opacity_logit)))

    @property
    def scale(self) -> np.ndarray:
        return np.exp(self.log_scale)


@dataclass
class InstrumentAsset:
    """The controllable asset: splat arrays plus chain constants and the
    rest-frame tool-tip landmark of each jaw."""

    mu: np.ndarray
    rot: np.ndarray
    log_scale: np.ndarray
    opacity_logit: np.ndarray
    sh: np.ndarray
    kin_frame: np.ndarray
    semantic: np.ndarray
    config: KinematicConfig = field(default_factory=KinematicConfig)
    tip_left: np.ndarray = field(default_factory=lambda: np.zeros(3))
    tip_right: np.ndarray = field(default_factory=lambda: np.zeros(3))
    sh_degree: int = 2

    def __post_init__(self):
        n = len(self.mu)
        self.mu = np.asarray(self.mu, dtype=np.float64).reshape(n, 3)
        self.rot = np.asarray(self.rot, dtype=np.float64).reshape(n, 4)
        self.log_scale = np.asarray(self.log_scale, dtype=np.float64).reshape(n, 3)
        self.opacity_logit = np.asarray(self.opacity_logit, dtype=np.float64).reshape(n)
        self.sh = np.asarray(self.sh, dtype=np.float64).reshape(n, 27)
        self.kin_frame = np.asarray(self.kin_frame, dtype=np.uint8).reshape(n)
        self.semantic = np.asarray(self.semantic, dtype=np.uint8).reshape(n)
        self.tip_left = np.asarray(self.tip_left, dtype=np.float64).reshape(3)
        self.tip_right = np.asarray(self.tip_right, dtype=np.float64).reshape(3)

    @property
    def n(self) -> int:
        return self.mu.shape[0]

    def validate(self) -> None:
        if not np.all(np.isin(self.kin_frame, [int(f) for f in BIND_FRAMES])):
            raise AssetFormatError("invalid kinematic frame id")
        for f in BIND_FRAMES:
            if not np.any(self.kin_frame == int(f)):
                raise AssetFormatError(f"no Gaussians bound to {f.name}")
        expect = np.array([semantic_class(FrameId(int(k))) for k in self.kin_frame], np.uint8)
        if not np.array_equal(expect, self.semantic):
            raise AssetFormatError("semantic labels inconsistent with frame binding")
        if not (np.all(np.isfinite(self.tip_left)) and np.all(np.isfinite(self.tip_right))):
            raise AssetFormatError("non-finite tip landmarks")
        norms = np.linalg.norm(self.rot, axis=1)
        if not np.allclose(norms, 1.0, atol=1e-6):
            raise AssetFormatError("non-unit splat quaternions")

    @property
    def gaussians(self) -> list:
        return [
            Gaussian(
                self.mu[i],
                self.rot[i],
                self.log_scale[i],
                float(self.opacity_logit[i]),
                self.sh[i],
                FrameId(int(self.kin_frame[i])),
                int(self.semantic[i]),
            )
            for i in range(self.n)
        ]

    @classmethod
    def from_gaussians(
        cls, gaussians, config: KinematicConfig, tip_left=None, tip_right=None
    ) -> "InstrumentAsset":
        gs = list(gaussians)
        asset = cls(
            mu=np.stack([g.mu for g in gs]),
            rot=np.stack([g.rot for g in gs]),
            log_scale=np.stack([g.log_scale for g in gs]),
            opacity_logit=np.array([g.opacity_logit for g in gs]),
            sh=np.stack([g.sh for g in gs]),
            kin_frame=np.array([int(g.kin_frame) for g in gs], np.uint8),
            semantic=np.array([g.semantic for g in gs], np.uint8),
            config=config,
            tip_left=np.zeros(3) if tip_left is None else tip_left,
            tip_right=np.zeros(3) if tip_right is None else tip_right,
        )
        return asset

    def copy(self) -> "InstrumentAsset":
        return InstrumentAsset(
            self.mu.copy(),
            self.rot.copy(),
            self.log_scale.copy(),
            self.opacity_logit.copy(),
            self.sh.copy(),
            self.kin_frame.copy(),
            self.semantic.copy(),
            self.config,
            self.tip_left.copy(),
            self.tip_right.copy(),
            self.sh_degree,
        )

    @property
    def opacity(self) -> np.ndarray:
        return 1.0 / (1.0 + np.exp(-self.opacity_logit))

    def tip_landmark(self, frame: FrameId) -> np.ndarray:
        if frame == FrameId.LEFT_TIP:
            return self.tip_left
        if frame == FrameId.RIGHT_TIP:
            return self.tip_right
        raise ValueError("tip landmarks exist only for jaw frames")


def part_transforms(cfg: KinematicConfig, q: JointState, xi: Twist) -> dict:
    """camT_j = exp(xi) . sT_j(q) for each bind frame, as (R, t) pairs."""
    cfg.check(q)
    T_cam = exp_se3(xi)
    out = {}
    for f in BIND_FRAMES:
        ch = chain_with_derivs(q, cfg, f)
        out[f] = (T_cam.rotation @ ch.R, T_cam.rotation @ ch.t + T_cam.translation)
    return out


@dataclass
class PosedGaussians:
    """Camera-frame splat batch: positions/rotations updated, the rest shared."""

    mu: np.ndarray
    rot: np.ndarray
    log_scale: np.ndarray
    opacity_logit: np.ndarray
    sh: np.ndarray
    semantic: np.ndarray

    def __len__(self) -> int:
        return self.mu.shape[0]


def pose_gaussians(asset: InstrumentAsset, q: JointState, xi: Twist) -> PosedGaussians:
    """Apply the per-part rigid transforms: mu' = T_j(mu), r' = quat(R_j) * r."""
    parts = part_transforms(asset.config, q, xi)
    mu_cam = np.empty_like(asset.mu)
    rot_cam = np.empty_like(asset.rot)
    rest = quat_normalize(asset.rot)
    for f, (R, t) in parts.items():
        idx = asset.kin_frame == int(f)
        if not np.any(idx):
            continue
        mu_cam[idx] = asset.mu[idx] @ R.T + t
        rot_cam[idx] = quat_mul(quat_from_matrix(R)[None, :], rest[idx])
    return PosedGaussians(
        mu_cam, rot_cam, asset.log_scale, asset.opacity_logit, asset.sh, asset.semantic
    )


def prune_low_opacity(asset: InstrumentAsset, eps: float, min_keep: int = 8) -> InstrumentAsset:
    """Drop splats with opacity < eps; keeps the top-k per part as a floor."""
    if not 0.0 <= eps < 1.0:
        raise ValueError("eps must be in [0, 1)")
    alpha = asset.opacity
    keep = alpha >= eps
    for f in BIND_FRAMES:
        part = asset.kin_frame == int(f)
        if keep[part].sum() < min_keep:
            order = np.argsort(-alpha[part], kind="stable")
            part_idx = np.flatnonzero(part)[order[: min(min_keep, part.sum())]]
            keep[part_idx] = True
    idx = np.flatnonzero(keep)
    return InstrumentAsset(
        asset.mu[idx],
        asset.rot[idx],
        asset.log_scale[idx],
        asset.opacity_logit[idx],
        asset.sh[idx],
        asset.kin_frame[idx],
        asset.semantic[idx],
        asset.config,
        asset.tip_left,
        asset.tip_right,
        asset.sh_degree,
    )


def _limits_flat(cfg: KinematicConfig) -> np.ndarray:
    return np.array(
        [
            *cfg.theta1_limits,
            *cfg.theta2_limits,
            *cfg.theta_l_limits,
            *cfg.theta_r_limits,
        ],
        dtype=np.float64,
    )


def save_asset(asset: InstrumentAsset, path) -> None:
    """Little-endian binary: header, chain constants, then packed arrays."""
    asset.validate()
    buf = io.BytesIO()
    buf.write(_MAGIC)
    buf.write(struct.pack("<II", _VERSION, asset.n))
    buf.write(struct.pack("<I", asset.sh_degree))
    buf.write(struct.pack("<dd", asset.config.d0, asset.config.d1))
    buf.write(_limits_flat(asset.config).tobytes())
    buf.write(asset.tip_left.tobytes())
    buf.write(asset.tip_right.tobytes())
    for arr in (asset.mu, asset.rot, asset.log_scale, asset.opacity_logit, asset.sh):
        buf.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    buf.write(asset.kin_frame.tobytes())
    buf.write(asset.semantic.tobytes())
    with open(path, "wb") as fh:
        fh.write(buf.getvalue())


def load_asset(path) -> InstrumentAsset:
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != _MAGIC:
        raise AssetFormatError("bad magic header")
    off = 4

    def take(n):
        nonlocal off
        if off + n > len(data):
            raise AssetFormatError("truncated asset file")
        chunk = data[off : off + n]
        off += n
        return chunk

    version, n = struct.unpack("<II", take(8))
    if version != _VERSION:
        raise AssetFormatError(f"unsupported version {version}")
    (sh_degree,) = struct.unpack("<I", take(4))
    d0, d1 = struct.unpack("<dd", take(16))
    lim = np.frombuffer(take(8 * 8), dtype="<f8")
    tip_left = np.frombuffer(take(24), dtype="<f8").copy()
    tip_right = np.frombuffer(take(24), dtype="<f8").copy()
    cfg = KinematicConfig(
        d0=d0,
        d1=d1,
        theta1_limits=(lim[0], lim[1]),
        theta2_limits=(lim[2], lim[3]),
        theta_l_limits=(lim[4], lim[5]),
        theta_r_limits=(lim[6], lim[7]),
    )

    def arr(cols):
        a = np.frombuffer(take(8 * n * cols), dtype="<f8").copy()
        return a.reshape(n, cols) if cols > 1 else a

    mu = arr(3)
    rot = arr(4)
    log_scale = arr(3)
    opacity_logit = arr(1)
    sh = arr(27)
    kin_frame = np.frombuffer(take(n), dtype=np.uint8).copy()
    semantic = np.frombuffer(take(n), dtype=np.uint8).copy()
    if off != len(data):
        raise AssetFormatError("trailing bytes after asset payload")
    asset = InstrumentAsset(
        mu, rot, log_scale, opacity_logit, sh, kin_frame, semantic, cfg,
        tip_left, tip_right, sh_degree,
    )
    asset.validate()
    return asset


def dump_pointcloud(asset: InstrumentAsset, path, q: JointState = None, xi: Twist = None) -> None:
    """Debug dump: one 'x y z r g b' line per splat (posed if q/xi given)."""
    q = q or JointState.zero()
    xi = xi or Twist.zero()
    posed = pose_gaussians(asset, q, xi)
    norms = np.linalg.norm(posed.mu, axis=1)
    dirs = posed.mu / np.maximum(norms, 1e-12)[:, None]
    rgb = evaluate_sh_batch(asset.sh, dirs)
    with open(path, "w") as fh:
        for p, c in zip(posed.mu, rgb):
            fh.write(f"{p[0]:.6f} {p[1]:.6f} {p[2]:.6f} {c[0]:.4f} {c[1]:.4f} {c[2]:.4f}\n")
