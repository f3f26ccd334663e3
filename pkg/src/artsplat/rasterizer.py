"""Depth-sorted alpha-blending of projected splats, forward and backward.

One kernel serves both the naive per-pixel traversal (a single tile covering
the image with every splat as candidate) and the 16x16 tiled traversal: the
per-(pixel, splat) arithmetic and visit order are identical, which is what
makes the two bit-identical.

Blending at a pixel, front to back over splats sorted by (depth, input
index): w_i = min(0.99, alpha_i * exp(-0.5 d^T conic d)); contributions
payload_i * w_i * T_i with T_i the running transmittance; early termination
when T < 1e-4. Weights below 1e-12 are skipped as non-contributing.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

TILE_SIZE = 16
T_STOP = 1e-4
W_FLOOR = 1e-12
W_CLAMP = 0.99


@njit(cache=True)
def blend_forward(
    mean2d, conic, bbox, depth, alpha, rgb, sem,
    tile_x0, tile_y0, tile_x1, tile_y1, cand_start, cand_end, cand,
    color, semimg, dacc, final_t, n_contrib,
):
    for t in range(tile_x0.shape[0]):
        for v in range(tile_y0[t], tile_y1[t] + 1):
            py = v + 0.5
            for u in range(tile_x0[t], tile_x1[t] + 1):
                px = u + 0.5
                T = 1.0
                nc = 0
                c0 = 0.0; c1 = 0.0; c2 = 0.0
                s0 = 0.0; s1 = 0.0; s2 = 0.0
                da = 0.0
                for k in range(cand_start[t], cand_end[t]):
                    i = cand[k]
                    if u < bbox[i, 0] or u > bbox[i, 1] or v < bbox[i, 2] or v > bbox[i, 3]:
                        continue
                    dx = px - mean2d[i, 0]
                    dy = py - mean2d[i, 1]
                    power = -0.5 * (conic[i, 0] * dx * dx + conic[i, 2] * dy * dy) \
                        - conic[i, 1] * dx * dy
                    w = alpha[i] * math.exp(power)
                    if w > W_CLAMP:
                        w = W_CLAMP
                    if w < W_FLOOR:
                        continue
                    wT = w * T
                    c0 += rgb[i, 0] * wT
                    c1 += rgb[i, 1] * wT
                    c2 += rgb[i, 2] * wT
                    s0 += sem[i, 0] * wT
                    s1 += sem[i, 1] * wT
                    s2 += sem[i, 2] * wT
                    da += depth[i] * wT
                    T *= 1.0 - w
                    nc = i + 1
                    if T < T_STOP:
                        break
                color[v, u, 0] = c0
                color[v, u, 1] = c1
                color[v, u, 2] = c2
                semimg[v, u, 0] = s0
                semimg[v, u, 1] = s1
                semimg[v, u, 2] = s2
                dacc[v, u] = da
                final_t[v, u] = T
                n_contrib[v, u] = nc


@njit(cache=True)
def blend_backward(
    mean2d, conic, bbox, depth, alpha, rgb, sem,
    tile_x0, tile_y0, tile_x1, tile_y1, cand_start, cand_end, cand,
    final_t, n_contrib,
    a_color, a_sem, a_dacc, a_alpha,
    g_mean2d, g_conic, g_alpha, g_rgb, g_depth,
):
    for t in range(tile_x0.shape[0]):
        for v in range(tile_y0[t], tile_y1[t] + 1):
            py = v + 0.5
            for u in range(tile_x0[t], tile_x1[t] + 1):
                px = u + 0.5
                nc = n_contrib[v, u]
                if nc == 0:
                    continue
                t_end = final_t[v, u]
                T = t_end
                ac0 = a_color[v, u, 0]; ac1 = a_color[v, u, 1]; ac2 = a_color[v, u, 2]
                as0 = a_sem[v, u, 0]; as1 = a_sem[v, u, 1]; as2 = a_sem[v, u, 2]
                ad = a_dacc[v, u]
                aa = a_alpha[v, u]
                # suffix accumulators: sum over splats behind the current one
                rc0 = 0.0; rc1 = 0.0; rc2 = 0.0
                rs0 = 0.0; rs1 = 0.0; rs2 = 0.0
                rd = 0.0
                for k in range(cand_end[t] - 1, cand_start[t] - 1, -1):
                    i = cand[k]
                    if i >= nc:
                        continue
                    if u < bbox[i, 0] or u > bbox[i, 1] or v < bbox[i, 2] or v > bbox[i, 3]:
                        continue
                    dx = px - mean2d[i, 0]
                    dy = py - mean2d[i, 1]
                    power = -0.5 * (conic[i, 0] * dx * dx + conic[i, 2] * dy * dy) \
                        - conic[i, 1] * dx * dy
                    w_raw = alpha[i] * math.exp(power)
                    clamped = w_raw > W_CLAMP
                    w = W_CLAMP if clamped else w_raw
                    if w < W_FLOOR:
                        continue
                    one_minus = 1.0 - w
                    T = T / one_minus  # transmittance in front of splat i
                    wT = w * T
                    g_rgb[i, 0] += wT * ac0
                    g_rgb[i, 1] += wT * ac1
                    g_rgb[i, 2] += wT * ac2
                    g_depth[i] += wT * ad
                    dldw = (
                        ac0 * (rgb[i, 0] * T - rc0 / one_minus)
                        + ac1 * (rgb[i, 1] * T - rc1 / one_minus)
                        + ac2 * (rgb[i, 2] * T - rc2 / one_minus)
                        + as0 * (sem[i, 0] * T - rs0 / one_minus)
                        + as1 * (sem[i, 1] * T - rs1 / one_minus)
                        + as2 * (sem[i, 2] * T - rs2 / one_minus)
                        + ad * (depth[i] * T - rd / one_minus)
                        + aa * (t_end / one_minus)
                    )
                    rc0 += rgb[i, 0] * wT
                    rc1 += rgb[i, 1] * wT
                    rc2 += rgb[i, 2] * wT
                    rs0 += sem[i, 0] * wT
                    rs1 += sem[i, 1] * wT
                    rs2 += sem[i, 2] * wT
                    rd += depth[i] * wT
                    if not clamped:
                        g_alpha[i] += (w / alpha[i]) * dldw
                        dldpow = w * dldw
                        g_mean2d[i, 0] += dldpow * (conic[i, 0] * dx + conic[i, 1] * dy)
                        g_mean2d[i, 1] += dldpow * (conic[i, 1] * dx + conic[i, 2] * dy)
                        g_conic[i, 0] += dldpow * (-0.5 * dx * dx)
                        g_conic[i, 1] += dldpow * (-dx * dy)
                        g_conic[i, 2] += dldpow * (-0.5 * dy * dy)


def tile_layout(width: int, height: int, bbox: np.ndarray, n_splats: int, tile_size: int):
    """Per-tile pixel ranges and candidate splat lists (splat order preserved).

    tile_size <= 0 requests the naive layout: one tile spanning the image
    with every splat as candidate.
    """
    if tile_size <= 0:
        return (
            np.array([0], np.int64),
            np.array([0], np.int64),
            np.array([width - 1], np.int64),
            np.array([height - 1], np.int64),
            np.array([0], np.int64),
            np.array([n_splats], np.int64),
            np.arange(n_splats, dtype=np.int64),
        )
    ntx = (width + tile_size - 1) // tile_size
    nty = (height + tile_size - 1) // tile_size
    n_tiles = ntx * nty
    tx = np.arange(n_tiles, dtype=np.int64) % ntx
    ty = np.arange(n_tiles, dtype=np.int64) // ntx
    tile_x0 = tx * tile_size
    tile_y0 = ty * tile_size
    tile_x1 = np.minimum(tile_x0 + tile_size - 1, width - 1)
    tile_y1 = np.minimum(tile_y0 + tile_size - 1, height - 1)

    if n_splats == 0:
        zeros = np.zeros(n_tiles, np.int64)
        return tile_x0, tile_y0, tile_x1, tile_y1, zeros, zeros, np.empty(0, np.int64)

    sx0 = (bbox[:, 0] // tile_size).astype(np.int64)
    sx1 = (bbox[:, 1] // tile_size).astype(np.int64)
    sy0 = (bbox[:, 2] // tile_size).astype(np.int64)
    sy1 = (bbox[:, 3] // tile_size).astype(np.int64)
    cand_start, cand_end, cand = _bin_splats(sx0, sx1, sy0, sy1, ntx, n_tiles)
    return tile_x0, tile_y0, tile_x1, tile_y1, cand_start, cand_end, cand


@njit(cache=True)
def _bin_splats(sx0, sx1, sy0, sy1, ntx, n_tiles):
    """Counting sort of (tile, splat) pairs; splat order preserved per tile."""
    n = sx0.shape[0]
    counts = np.zeros(n_tiles, np.int64)
    for i in range(n):
        for tyi in range(sy0[i], sy1[i] + 1):
            base = tyi * ntx
            for txi in range(sx0[i], sx1[i] + 1):
                counts[base + txi] += 1
    start = np.zeros(n_tiles + 1, np.int64)
    for t in range(n_tiles):
        start[t + 1] = start[t] + counts[t]
    cand = np.empty(start[n_tiles], np.int64)
    cursor = start[:n_tiles].copy()
    for i in range(n):
        for tyi in range(sy0[i], sy1[i] + 1):
            base = tyi * ntx
            for txi in range(sx0[i], sx1[i] + 1):
                tid = base + txi
                cand[cursor[tid]] = i
                cursor[tid] += 1
    return start[:n_tiles], start[1:], cand
