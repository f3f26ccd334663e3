"""Perspective projection of 3D Gaussians to screen-space splats, with the
exact adjoints of every step (covariance build, projection Jacobian, SH
color, activations) used by the renderer's backward pass.

The 2D covariance is J Sigma J^T + BLUR_FLOOR * I with Sigma = M M^T,
M = R_pose diag(exp(log_scale)), and J the perspective Jacobian at the
camera-frame mean. A splat is culled when its mean is closer than the near
clip or its 3-sigma axis-aligned footprint misses the image.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .camera import Camera
from .quats import quat_rotation_grads, quat_to_matrix
from .sh import sh_basis, sh_basis_grad

BLUR_FLOOR = 0.3  # px^2 added to the projected covariance diagonal
SIGMA_CUTOFF = 3.0


@dataclass
class Splat2D:
    """Projection intermediate for one splat."""

    mean2d: np.ndarray
    cov2d: np.ndarray
    depth: float
    rgb: np.ndarray
    semantic_onehot: np.ndarray
    opacity: float


def pixel_bounds(mean2d: np.ndarray, cov2d: np.ndarray, cam: Camera):
    """Inclusive pixel index ranges covered by the 3-sigma AABB of each splat,
    plus the mask of splats whose footprint touches the image at all."""
    rx = SIGMA_CUTOFF * np.sqrt(cov2d[:, 0, 0])
    ry = SIGMA_CUTOFF * np.sqrt(cov2d[:, 1, 1])
    x0 = np.ceil(mean2d[:, 0] - rx - 0.5)
    x1 = np.floor(mean2d[:, 0] + rx - 0.5)
    y0 = np.ceil(mean2d[:, 1] - ry - 0.5)
    y1 = np.floor(mean2d[:, 1] + ry - 0.5)
    onscreen = (x1 >= 0) & (x0 <= cam.width - 1) & (y1 >= 0) & (y0 <= cam.height - 1)
    bbox = np.stack(
        [
            np.clip(x0, 0, cam.width - 1),
            np.clip(x1, 0, cam.width - 1),
            np.clip(y0, 0, cam.height - 1),
            np.clip(y1, 0, cam.height - 1),
        ],
        axis=1,
    ).astype(np.int32)
    return bbox, onscreen


@dataclass
class ProjectedSplats:
    """Vectorized projection output for the splats that survived culling.

    `index` maps rows back to the input splat order; the trailing arrays are
    the forward intermediates the backward pass reuses.
    """

    index: np.ndarray        # (M,)
    mean2d: np.ndarray       # (M, 2)
    cov2d: np.ndarray        # (M, 2, 2)
    conic: np.ndarray        # (M, 3) packed inverse covariance (a, b, c)
    depth: np.ndarray        # (M,)
    alpha: np.ndarray        # (M,) activated opacity
    rgb: np.ndarray          # (M, 3) clamped SH color
    sem: np.ndarray          # (M, 3) one-hot class payload
    bbox: np.ndarray         # (M, 4) int32 inclusive pixel bounds (x0, x1, y0, y1)
    mu_cam: np.ndarray
    R_pose: np.ndarray
    scales: np.ndarray
    J: np.ndarray
    Sigma: np.ndarray
    view_dir: np.ndarray
    view_dist: np.ndarray
    rgb_pre: np.ndarray
    sh: np.ndarray           # (M, 27)
    q_raw: np.ndarray        # (M, 4) unnormalized input quaternions
    q_unit: np.ndarray


def project_arrays(
    mu_cam: np.ndarray,
    rot_raw: np.ndarray,
    R_rigid_per_splat: np.ndarray,
    log_scale: np.ndarray,
    opacity_logit: np.ndarray,
    sh: np.ndarray,
    semantic: np.ndarray,
    cam: Camera,
) -> ProjectedSplats:
    """Project posed splats. `R_rigid_per_splat` holds the (N, 3, 3) rigid
    part rotations; the pose rotation of a splat is R_rigid @ R(rot)."""
    n = mu_cam.shape[0]
    norms = np.linalg.norm(rot_raw, axis=1)
    q_unit = rot_raw / norms[:, None]
    R_pose = R_rigid_per_splat @ quat_to_matrix(q_unit)
    scales = np.exp(log_scale)
    M = R_pose * scales[:, None, :]
    Sigma = M @ np.transpose(M, (0, 2, 1))

    x, y, z = mu_cam[:, 0], mu_cam[:, 1], mu_cam[:, 2]
    in_front = z >= cam.near
    zs = np.where(in_front, z, 1.0)  # keep math finite for culled rows

    J = np.zeros((n, 2, 3))
    J[:, 0, 0] = cam.fx / zs
    J[:, 0, 2] = -cam.fx * x / zs**2
    J[:, 1, 1] = cam.fy / zs
    J[:, 1, 2] = -cam.fy * y / zs**2
    cov2d = J @ Sigma @ np.transpose(J, (0, 2, 1))
    cov2d[:, 0, 0] += BLUR_FLOOR
    cov2d[:, 1, 1] += BLUR_FLOOR

    mean2d = np.stack([cam.fx * x / zs + cam.cx, cam.fy * y / zs + cam.cy], axis=1)
    bbox, onscreen = pixel_bounds(mean2d, cov2d, cam)
    keep = in_front & onscreen

    dist = np.maximum(np.linalg.norm(mu_cam, axis=1), 1e-12)
    view_dir = mu_cam / dist[:, None]
    basis = sh_basis(view_dir)
    rgb_pre = np.einsum("nk,nkc->nc", basis, sh.reshape(n, 9, 3)) + 0.5
    rgb = np.clip(rgb_pre, 0.0, 1.0)

    alpha = 1.0 / (1.0 + np.exp(-opacity_logit))
    sem = np.zeros((n, 3))
    sem[np.arange(n), semantic.astype(int) - 1] = 1.0

    det = cov2d[:, 0, 0] * cov2d[:, 1, 1] - cov2d[:, 0, 1] ** 2
    conic = np.stack(
        [cov2d[:, 1, 1] / det, -cov2d[:, 0, 1] / det, cov2d[:, 0, 0] / det], axis=1
    )

    idx = np.flatnonzero(keep)
    return ProjectedSplats(
        index=idx,
        mean2d=mean2d[idx],
        cov2d=cov2d[idx],
        conic=conic[idx],
        depth=z[idx],
        alpha=alpha[idx],
        rgb=rgb[idx],
        sem=sem[idx],
        bbox=bbox[idx],
        mu_cam=mu_cam[idx],
        R_pose=R_pose[idx],
        scales=scales[idx],
        J=J[idx],
        Sigma=Sigma[idx],
        view_dir=view_dir[idx],
        view_dist=dist[idx],
        rgb_pre=rgb_pre[idx],
        sh=np.asarray(sh, dtype=np.float64).reshape(n, 27)[idx],
        q_raw=rot_raw[idx],
        q_unit=q_unit[idx],
    )


@dataclass
class ProjectionGrads:
    """Adjoints w.r.t. pre-projection splat parameters; rows align with the
    kept-splat rows of ProjectedSplats."""

    d_mu_cam: np.ndarray         # (M, 3)
    d_R_pose: np.ndarray         # (M, 3, 3)
    d_rot_raw: np.ndarray        # (M, 4)
    d_log_scale: np.ndarray      # (M, 3)
    d_opacity_logit: np.ndarray  # (M,)
    d_sh: np.ndarray             # (M, 27)


def project_backward(
    ps: ProjectedSplats,
    cam: Camera,
    g_mean2d: np.ndarray,
    g_conic: np.ndarray,
    g_alpha: np.ndarray,
    g_rgb: np.ndarray,
    g_depth: np.ndarray,
) -> ProjectionGrads:
    """Chain rasterizer-level adjoints back to splat parameters.

    g_conic is packed (a, b, c) against the quadratic form
    power = -0.5 (a dx^2 + 2 b dx dy + c dy^2).
    """
    m = ps.mean2d.shape[0]
    x, y, z = ps.mu_cam[:, 0], ps.mu_cam[:, 1], ps.mu_cam[:, 2]

    # conic = inv(cov2d): dL/dC = -Lam G_Lam Lam
    lam = np.empty((m, 2, 2))
    lam[:, 0, 0] = ps.conic[:, 0]
    lam[:, 0, 1] = lam[:, 1, 0] = ps.conic[:, 1]
    lam[:, 1, 1] = ps.conic[:, 2]
    G_lam = np.empty((m, 2, 2))
    G_lam[:, 0, 0] = g_conic[:, 0]
    G_lam[:, 0, 1] = G_lam[:, 1, 0] = 0.5 * g_conic[:, 1]
    G_lam[:, 1, 1] = g_conic[:, 2]
    G_cov = -lam @ G_lam @ lam

    # cov2d = J Sigma J^T + floor
    Jt = np.transpose(ps.J, (0, 2, 1))
    G_sigma = Jt @ G_cov @ ps.J
    G_J = 2.0 * G_cov @ ps.J @ ps.Sigma

    fx, fy = cam.fx, cam.fy
    z2, z3 = z**2, z**3
    d_mu = np.zeros((m, 3))
    d_mu[:, 0] += G_J[:, 0, 2] * (-fx / z2)
    d_mu[:, 1] += G_J[:, 1, 2] * (-fy / z2)
    d_mu[:, 2] += (
        G_J[:, 0, 0] * (-fx / z2)
        + G_J[:, 1, 1] * (-fy / z2)
        + G_J[:, 0, 2] * (2.0 * fx * x / z3)
        + G_J[:, 1, 2] * (2.0 * fy * y / z3)
    )

    # mean2d shares the projection Jacobian
    d_mu += np.einsum("nij,ni->nj", ps.J, g_mean2d)
    # depth payload is the camera-frame z
    d_mu[:, 2] += g_depth

    # SH color: clamp gate, then coefficient and view-direction terms
    inside = (ps.rgb_pre > 0.0) & (ps.rgb_pre < 1.0)
    g_pre = g_rgb * inside
    basis = sh_basis(ps.view_dir)
    d_sh = (basis[:, :, None] * g_pre[:, None, :]).reshape(m, 27)
    coeffs = ps.sh.reshape(m, 9, 3)
    g_basis = np.einsum("nkc,nc->nk", coeffs, g_pre)
    g_dir = np.einsum("nk,nkd->nd", g_basis, sh_basis_grad(ps.view_dir))
    # dir = mu / |mu|: d(dir)/d(mu) = (I - dir dir^T) / |mu|
    proj = g_dir - ps.view_dir * np.sum(ps.view_dir * g_dir, axis=1, keepdims=True)
    d_mu += proj / ps.view_dist[:, None]

    # Sigma = M M^T with M = R_pose diag(s)
    G_sigma_sym = G_sigma + np.transpose(G_sigma, (0, 2, 1))
    dM = G_sigma_sym @ (ps.R_pose * ps.scales[:, None, :])
    d_R_pose = dM * ps.scales[:, None, :]
    d_scales = np.einsum("nij,nij->nj", dM, ps.R_pose)
    d_log_scale = d_scales * ps.scales

    # opacity activation
    d_opacity_logit = g_alpha * ps.alpha * (1.0 - ps.alpha)

    # R_pose = R_rigid @ R(q_unit): pull back through the rigid rotation, the
    # quaternion-to-matrix formula, and the normalization
    R_local = quat_to_matrix(ps.q_unit)
    R_rigid = ps.R_pose @ np.transpose(R_local, (0, 2, 1))
    d_R_local = np.transpose(R_rigid, (0, 2, 1)) @ d_R_pose
    dRdq = quat_rotation_grads(ps.q_unit)
    d_q_unit = np.einsum("nkij,nij->nk", dRdq, d_R_local)
    qn = ps.q_unit
    raw_norm = np.linalg.norm(ps.q_raw, axis=1)
    d_rot_raw = (d_q_unit - qn * np.sum(qn * d_q_unit, axis=1, keepdims=True)) / raw_norm[:, None]

    return ProjectionGrads(
        d_mu_cam=d_mu,
        d_R_pose=d_R_pose,
        d_rot_raw=d_rot_raw,
        d_log_scale=d_log_scale,
        d_opacity_logit=d_opacity_logit,
        d_sh=d_sh,
    )
