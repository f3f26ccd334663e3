"""Differentiable rendering of the posed instrument asset.

Forward: pose splats by the kinematic chain, project, then alpha-blend into
color / alpha / per-part semantics / depth. Backward: exact adjoints of that
computation for every learnable splat attribute plus the pose twist xi (6)
and joint vector q (4); splat positions are chained through internally but
exposed only as pose/joint gradients (positions stay frozen on the asset).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .asset import InstrumentAsset
from .camera import Camera
from .kinematics import BIND_FRAMES, JointState, chain_with_derivs
from .lie import Twist, exp_se3, se3_left_jacobian
from .projection import (
    ProjectedSplats,
    Splat2D,
    pixel_bounds,
    project_arrays,
    project_backward,
)
from .quats import quat_to_matrix
from . import rasterizer as rast

ALPHA_EPS = 1e-12


@dataclass
class RenderContext:
    ps: ProjectedSplats   # sorted front-to-back
    tiles: tuple
    parts: dict           # FrameId -> (R_rigid, t_rigid, ChainDerivatives)
    T_cam_rot: np.ndarray


@dataclass
class RenderOutput:
    """Rendered buffers plus the per-pixel blending bookkeeping the backward
    pass replays (final transmittance and per-pixel contributor bound)."""

    color: np.ndarray      # (H, W, 3) in [0, 1]
    alpha: np.ndarray      # (H, W) in [0, 1]
    semantics: np.ndarray  # (H, W, 3) blended per-part occupancy
    depth: np.ndarray      # (H, W) mm; alpha-weighted expected depth, 0 at alpha=0
    final_t: np.ndarray
    n_contrib: np.ndarray
    ctx: Optional[RenderContext] = None

    def class_map(self, alpha_threshold: float = 0.5) -> np.ndarray:
        """Per-pixel part class in {0 (background), 1, 2, 3}."""
        cls = np.argmax(self.semantics, axis=2) + 1
        return np.where(self.alpha > alpha_threshold, cls, 0)


@dataclass
class RenderAdjoints:
    """Upstream gradients w.r.t. the rendered buffers (None = zeros)."""

    color: Optional[np.ndarray] = None
    alpha: Optional[np.ndarray] = None
    semantics: Optional[np.ndarray] = None
    depth: Optional[np.ndarray] = None


@dataclass
class RenderGrads:
    rot: np.ndarray
    log_scale: np.ndarray
    opacity_logit: np.ndarray
    sh: np.ndarray
    xi: np.ndarray
    q: np.ndarray


def _sorted_splats(ps: ProjectedSplats) -> ProjectedSplats:
    order = np.lexsort((ps.index, ps.depth))
    kw = {f: getattr(ps, f)[order] for f in ps.__dataclass_fields__}
    return ProjectedSplats(**kw)


def _pose_arrays(asset: InstrumentAsset, q: JointState, xi: Twist):
    """Per-part rigid transforms with joint derivatives, plus per-splat
    camera-frame means and rigid rotations."""
    asset.config.check(q)
    T_cam = exp_se3(xi)
    parts = {}
    n = asset.n
    mu_cam = np.empty((n, 3))
    R_rigid = np.empty((n, 3, 3))
    for f in BIND_FRAMES:
        ch = chain_with_derivs(q, asset.config, f)
        Rp = T_cam.rotation @ ch.R
        tp = T_cam.rotation @ ch.t + T_cam.translation
        parts[f] = (Rp, tp, ch)
        idx = asset.kin_frame == int(f)
        if np.any(idx):
            mu_cam[idx] = asset.mu[idx] @ Rp.T + tp
            R_rigid[idx] = Rp
    return parts, T_cam, mu_cam, R_rigid


def _rasterize_projected(ps, cam, tile_size, ctx: Optional[RenderContext]):
    h, w = cam.height, cam.width
    m = ps.mean2d.shape[0]
    tiles = rast.tile_layout(w, h, ps.bbox, m, tile_size)
    color = np.zeros((h, w, 3))
    semimg = np.zeros((h, w, 3))
    dacc = np.zeros((h, w))
    final_t = np.ones((h, w))
    n_contrib = np.zeros((h, w), np.int64)
    rast.blend_forward(
        ps.mean2d, ps.conic, ps.bbox, ps.depth, ps.alpha, ps.rgb, ps.sem,
        *tiles, color, semimg, dacc, final_t, n_contrib,
    )
    alpha = 1.0 - final_t
    depth = np.where(alpha > ALPHA_EPS, dacc / np.maximum(alpha, ALPHA_EPS), 0.0)
    if ctx is not None:
        ctx.tiles = tiles
    return RenderOutput(color, alpha, semimg, depth, final_t, n_contrib, ctx)


def render(
    asset: InstrumentAsset,
    q: JointState,
    xi: Twist,
    cam: Camera,
    tile_size: int = rast.TILE_SIZE,
    keep_ctx: bool = False,
) -> RenderOutput:
    parts, T_cam, mu_cam, R_rigid = _pose_arrays(asset, q, xi)
    ps = _sorted_splats(
        project_arrays(
            mu_cam, asset.rot, R_rigid, asset.log_scale,
            asset.opacity_logit, asset.sh, asset.semantic, cam,
        )
    )
    ctx = RenderContext(ps, (), parts, T_cam.rotation) if keep_ctx else None
    return _rasterize_projected(ps, cam, tile_size, ctx)


def _columns_cross(R: np.ndarray, G: np.ndarray) -> np.ndarray:
    """sum_j R[:, j] x G[:, j]: dL/d(rotation increment) for dR = [eps]x R."""
    return np.cross(R.T, G.T).sum(axis=0)


def render_backward(
    asset: InstrumentAsset,
    q: JointState,
    xi: Twist,
    cam: Camera,
    adjoints: RenderAdjoints,
    forward: Optional[RenderOutput] = None,
    tile_size: int = rast.TILE_SIZE,
) -> RenderGrads:
    """Gradients of sum(adjoint * output) over all buffers.

    `forward` must be a RenderOutput produced with keep_ctx=True for the same
    (asset, q, xi, cam); when omitted the forward pass is recomputed.
    """
    if forward is None or forward.ctx is None:
        forward = render(asset, q, xi, cam, tile_size=tile_size, keep_ctx=True)
    ctx = forward.ctx
    ps = ctx.ps
    h, w = cam.height, cam.width
    m = ps.mean2d.shape[0]

    a_color = np.zeros((h, w, 3)) if adjoints.color is None else np.asarray(adjoints.color, np.float64)
    a_sem = np.zeros((h, w, 3)) if adjoints.semantics is None else np.asarray(adjoints.semantics, np.float64)
    a_alpha = np.zeros((h, w)) if adjoints.alpha is None else np.asarray(adjoints.alpha, np.float64).copy()
    a_dacc = np.zeros((h, w))
    if adjoints.depth is not None:
        # depth = dacc / alpha for alpha > eps (else hard 0): quotient rule
        live = forward.alpha > ALPHA_EPS
        ad = np.asarray(adjoints.depth, np.float64)
        a_dacc[live] = ad[live] / forward.alpha[live]
        a_alpha[live] -= ad[live] * forward.depth[live] / forward.alpha[live]

    g_mean2d = np.zeros((m, 2))
    g_conic = np.zeros((m, 3))
    g_alpha = np.zeros(m)
    g_rgb = np.zeros((m, 3))
    g_depth = np.zeros(m)
    rast.blend_backward(
        ps.mean2d, ps.conic, ps.bbox, ps.depth, ps.alpha, ps.rgb, ps.sem,
        *ctx.tiles, forward.final_t, forward.n_contrib,
        np.ascontiguousarray(a_color), np.ascontiguousarray(a_sem), a_dacc, a_alpha,
        g_mean2d, g_conic, g_alpha, g_rgb, g_depth,
    )

    pg = project_backward(ps, cam, g_mean2d, g_conic, g_alpha, g_rgb, g_depth)

    n = asset.n
    grads = RenderGrads(
        rot=np.zeros((n, 4)),
        log_scale=np.zeros((n, 3)),
        opacity_logit=np.zeros(n),
        sh=np.zeros((n, 27)),
        xi=np.zeros(6),
        q=np.zeros(4),
    )
    grads.rot[ps.index] = pg.d_rot_raw
    grads.log_scale[ps.index] = pg.d_log_scale
    grads.opacity_logit[ps.index] = pg.d_opacity_logit
    grads.sh[ps.index] = pg.d_sh

    if m == 0:
        return grads

    # pose/joint gradients: point path through mu_cam plus the rigid-rotation
    # path through Sigma; mapped to xi coordinates via the SE(3) left Jacobian
    R_local = quat_to_matrix(ps.q_unit)
    d_R_rigid = pg.d_R_pose @ np.transpose(R_local, (0, 2, 1))
    kin_of_row = asset.kin_frame[ps.index]

    e_omega = np.sum(np.cross(ps.mu_cam, pg.d_mu_cam), axis=0)
    e_rho = pg.d_mu_cam.sum(axis=0)
    R_exp = ctx.T_cam_rot
    for f, (Rp, tp, ch) in ctx.parts.items():
        rows = kin_of_row == int(f)
        if not np.any(rows):
            continue
        G_part = d_R_rigid[rows].sum(axis=0)
        P_part = np.einsum("ni,nj->ij", pg.d_mu_cam[rows], asset.mu[ps.index[rows]])
        e_omega += _columns_cross(Rp, G_part)
        PG = P_part + G_part
        for k in range(4):
            grads.q[k] += float(np.sum(PG * (R_exp @ ch.dR[k])))
    grads.xi += se3_left_jacobian(xi.xi).T @ np.concatenate([e_omega, e_rho])
    return grads


def project_gaussian(g, cam: Camera) -> Optional[Splat2D]:
    """Project one already-posed Gaussian; None when culled."""
    ps = project_arrays(
        g.mu[None, :], g.rot[None, :], np.eye(3)[None, :, :],
        g.log_scale[None, :], np.array([g.opacity_logit]),
        g.sh[None, :], np.array([g.semantic], np.uint8), cam,
    )
    if ps.index.size == 0:
        return None
    return Splat2D(
        mean2d=ps.mean2d[0],
        cov2d=ps.cov2d[0],
        depth=float(ps.depth[0]),
        rgb=ps.rgb[0],
        semantic_onehot=ps.sem[0],
        opacity=float(ps.alpha[0]),
    )


def rasterize(splats, cam: Camera, tile_size: int = rast.TILE_SIZE) -> RenderOutput:
    """Blend a list of Splat2D (sorts by depth internally, ties by index)."""
    m = len(splats)
    if m == 0:
        h, w = cam.height, cam.width
        return RenderOutput(
            np.zeros((h, w, 3)), np.zeros((h, w)), np.zeros((h, w, 3)),
            np.zeros((h, w)), np.ones((h, w)), np.zeros((h, w), np.int64),
        )
    mean2d = np.stack([s.mean2d for s in splats]).astype(np.float64)
    cov2d = np.stack([s.cov2d for s in splats]).astype(np.float64)
    depth = np.array([s.depth for s in splats], np.float64)
    rgb = np.stack([s.rgb for s in splats]).astype(np.float64)
    sem = np.stack([s.semantic_onehot for s in splats]).astype(np.float64)
    alpha = np.array([s.opacity for s in splats], np.float64)
    bbox, onscreen = pixel_bounds(mean2d, cov2d, cam)
    det = cov2d[:, 0, 0] * cov2d[:, 1, 1] - cov2d[:, 0, 1] ** 2
    conic = np.stack(
        [cov2d[:, 1, 1] / det, -cov2d[:, 0, 1] / det, cov2d[:, 0, 0] / det], axis=1
    )
    keep = onscreen & (depth >= cam.near)
    idx = np.flatnonzero(keep)
    order = idx[np.lexsort((idx, depth[idx]))]
    k = order.size
    ps = ProjectedSplats(
        index=order, mean2d=mean2d[order], cov2d=cov2d[order], conic=conic[order],
        depth=depth[order], alpha=alpha[order], rgb=rgb[order], sem=sem[order],
        bbox=bbox[order], mu_cam=np.zeros((k, 3)), R_pose=np.zeros((k, 3, 3)),
        scales=np.zeros((k, 3)), J=np.zeros((k, 2, 3)), Sigma=np.zeros((k, 3, 3)),
        view_dir=np.zeros((k, 3)), view_dist=np.zeros(k), rgb_pre=np.zeros((k, 3)),
        sh=np.zeros((k, 27)), q_raw=np.zeros((k, 4)), q_unit=np.zeros((k, 4)),
    )
    return _rasterize_projected(ps, cam, tile_size, ctx=None)
