"""Real spherical harmonics up to degree 2 for view-dependent splat color.

Coefficient layout is coefficient-major: a 27-vector reshapes to (9, 3) with
rows ordered (DC, -y, z, -x, xy, yz, 3z^2-1 style, xz, x^2-y^2) and columns
(r, g, b). Colors follow the splatting convention value = basis . sh + 0.5,
clamped to [0, 1].
"""

from __future__ import annotations

import numpy as np

SH_C0 = 0.28209479177387814
SH_C1 = 0.4886025119029199
SH_C2 = (
    1.0925484305920792,
    -1.0925484305920792,
    0.31539156525252005,
    -1.0925484305920792,
    0.5462742152960396,
)

N_COEFFS = 9  # degree 2


def sh_basis(dirs: np.ndarray) -> np.ndarray:
    """Basis values for unit directions of shape (..., 3) -> (..., 9)."""
    d = np.asarray(dirs, dtype=np.float64)
    x, y, z = d[..., 0], d[..., 1], d[..., 2]
    out = np.empty(d.shape[:-1] + (N_COEFFS,))
    out[..., 0] = SH_C0
    out[..., 1] = -SH_C1 * y
    out[..., 2] = SH_C1 * z
    out[..., 3] = -SH_C1 * x
    out[..., 4] = SH_C2[0] * x * y
    out[..., 5] = SH_C2[1] * y * z
    out[..., 6] = SH_C2[2] * (2.0 * z * z - x * x - y * y)
    out[..., 7] = SH_C2[3] * x * z
    out[..., 8] = SH_C2[4] * (x * x - y * y)
    return out


def sh_basis_grad(dirs: np.ndarray) -> np.ndarray:
    """d(basis)/d(direction) for unit directions: (..., 3) -> (..., 9, 3)."""
    d = np.asarray(dirs, dtype=np.float64)
    x, y, z = d[..., 0], d[..., 1], d[..., 2]
    zero = np.zeros_like(x)
    g = np.empty(d.shape[:-1] + (N_COEFFS, 3))
    g[..., 0, :] = 0.0
    g[..., 1, 0], g[..., 1, 1], g[..., 1, 2] = zero, -SH_C1 * np.ones_like(x), zero
    g[..., 2, 0], g[..., 2, 1], g[..., 2, 2] = zero, zero, SH_C1 * np.ones_like(x)
    g[..., 3, 0], g[..., 3, 1], g[..., 3, 2] = -SH_C1 * np.ones_like(x), zero, zero
    g[..., 4, 0], g[..., 4, 1], g[..., 4, 2] = SH_C2[0] * y, SH_C2[0] * x, zero
    g[..., 5, 0], g[..., 5, 1], g[..., 5, 2] = zero, SH_C2[1] * z, SH_C2[1] * y
    g[..., 6, 0] = SH_C2[2] * (-2.0 * x)
    g[..., 6, 1] = SH_C2[2] * (-2.0 * y)
    g[..., 6, 2] = SH_C2[2] * (4.0 * z)
    g[..., 7, 0], g[..., 7, 1], g[..., 7, 2] = SH_C2[3] * z, zero, SH_C2[3] * x
    g[..., 8, 0], g[..., 8, 1], g[..., 8, 2] = SH_C2[4] * (2.0 * x), SH_C2[4] * (-2.0 * y), zero
    return g


def evaluate_sh(sh: np.ndarray, view_dir: np.ndarray) -> np.ndarray:
    """RGB in [0, 1] for one 27-vector and one unit view direction."""
    coeffs = np.asarray(sh, dtype=np.float64).reshape(N_COEFFS, 3)
    rgb = sh_basis(np.asarray(view_dir, dtype=np.float64)) @ coeffs + 0.5
    return np.clip(rgb, 0.0, 1.0)


def evaluate_sh_batch(sh: np.ndarray, view_dirs: np.ndarray) -> np.ndarray:
    """(N, 27) coefficients x (N, 3) unit directions -> (N, 3) clamped RGB."""
    coeffs = sh.reshape(-1, N_COEFFS, 3)
    basis = sh_basis(view_dirs)
    rgb = np.einsum("nk,nkc->nc", basis, coeffs) + 0.5
    return np.clip(rgb, 0.0, 1.0)


def sh_for_rgb(rgb) -> np.ndarray:
    """27-vector whose DC term reproduces a constant color (view-independent)."""
    sh = np.zeros((N_COEFFS, 3))
    sh[0] = (np.asarray(rgb, dtype=np.float64) - 0.5) / SH_C0
    return sh.reshape(27)
