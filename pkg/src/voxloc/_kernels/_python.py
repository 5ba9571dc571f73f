"""Pure-NumPy kernel implementations.

Fallback used when the compiled extension is unavailable (or forced via
VOXLOC_BACKEND=python). Each function mirrors the native kernel's per-ray
arithmetic order, so the two backends agree to floating-point noise.

All kernels are single-threaded; the ``n_threads`` arguments are accepted
for interface parity and ignored.
"""

from __future__ import annotations

import numpy as np

NAME = "python"

_POPCOUNT = np.unpackbits(np.arange(256, dtype=np.uint8)[:, None], axis=1).sum(axis=1).astype(np.int32)


def _corner_gather(grid, i0, f, nx, ny, nz):
    """Accumulate trilinear interpolation over the 8 clamped corners.

    grid is (nx,ny,nz) or (nx,ny,nz,3); i0 integer base index (N,3),
    f fractional part (N,3). Corner order: x fastest (bit 0), then y, z.
    """
    vec = grid.ndim == 4
    out = np.zeros((len(i0), 3) if vec else len(i0))
    for corner in range(8):
        dx, dy, dz = corner & 1, (corner >> 1) & 1, (corner >> 2) & 1
        ix = np.clip(i0[:, 0] + dx, 0, nx - 1)
        iy = np.clip(i0[:, 1] + dy, 0, ny - 1)
        iz = np.clip(i0[:, 2] + dz, 0, nz - 1)
        w = ((f[:, 0] if dx else 1.0 - f[:, 0])
             * (f[:, 1] if dy else 1.0 - f[:, 1])
             * (f[:, 2] if dz else 1.0 - f[:, 2]))
        if vec:
            out += w[:, None] * grid[ix, iy, iz]
        else:
            out += w * grid[ix, iy, iz]
    return out


def _grid_coords(points, bbox_min, bbox_max, dims):
    voxel = (bbox_max - bbox_min) / dims
    g = (points - bbox_min) / voxel - 0.5
    i0 = np.floor(g).astype(np.int64)
    f = g - i0
    inside = np.all((points >= bbox_min) & (points <= bbox_max), axis=1)
    return i0, f, inside


def trilinear_sample(density, color, bbox_min, bbox_max, points):
    """Sample (sigma, rgb) at world points (N,3); outside the box -> (0, black)."""
    nx, ny, nz = density.shape
    dims = np.array([nx, ny, nz], dtype=np.float64)
    i0, f, inside = _grid_coords(points, bbox_min, bbox_max, dims)
    sigma = _corner_gather(density, i0, f, nx, ny, nz)
    rgb = _corner_gather(color, i0, f, nx, ny, nz)
    sigma[~inside] = 0.0
    rgb[~inside] = 0.0
    return sigma, rgb


def render_rays(density, color, bbox_min, bbox_max, origins, dirs,
                t_near, t_far, n_samples, jitter, background, n_threads=1):
    """Emission-absorption quadrature along each ray.

    Samples at t_i = t_near + (i + u_i) * dt with constant spacing
    dt = (t_far - t_near) / n_samples; u_i is 0.5 (midpoint) or jitter[:, i].
    Returns (rgb (N,3), depth (N,), opacity (N,)).
    """
    n = len(origins)
    dt = (t_far - t_near) / n_samples
    trans = np.ones(n)
    rgb = np.zeros((n, 3))
    wsum = np.zeros(n)
    wtsum = np.zeros(n)
    for i in range(n_samples):
        u = jitter[:, i] if jitter is not None else 0.5
        t = t_near + (i + u) * dt
        t = np.broadcast_to(np.asarray(t, dtype=np.float64), (n,))
        pts = origins + t[:, None] * dirs
        sigma, col = trilinear_sample(density, color, bbox_min, bbox_max, pts)
        att = np.exp(-sigma * dt)
        w = trans * (1.0 - att)
        rgb += w[:, None] * col
        wsum += w
        wtsum += w * t
        trans = trans * att
    rgb += trans[:, None] * np.asarray(background, dtype=np.float64)
    depth = np.where(wsum >= 1e-6, wtsum / np.maximum(wsum, 1e-300), 0.0)
    return rgb, depth, trans, wsum


def render_rays_grad(density, color, bbox_min, bbox_max, origins, dirs,
                     t_near, t_far, n_samples, jitter, background, targets,
                     grad_density, grad_color):
    """Forward render plus gradient of sum_r sum_ch (rgb - target)^2.

    Gradients are accumulated (+=) into grad_density / grad_color, which
    share the parameter layout. Returns (loss_sum, rgb (N,3)).

    Two forward sweeps: the first computes each ray's color, the second
    replays the quadrature to form per-sample gradients without storing
    per-sample state (suffix_k = C - prefix_k - w_k c_k).
    """
    n = len(origins)
    nx, ny, nz = density.shape
    dims = np.array([nx, ny, nz], dtype=np.float64)
    dt = (t_far - t_near) / n_samples
    bg = np.asarray(background, dtype=np.float64)

    rgb, _, _, _ = render_rays(density, color, bbox_min, bbox_max, origins, dirs,
                               t_near, t_far, n_samples, jitter, background)
    diff = rgb - targets
    loss_sum = float(np.sum(diff * diff))
    dldc_out = 2.0 * diff  # dL/dC per ray and channel

    gd = grad_density.reshape(-1)
    gc = grad_color.reshape(-1, 3)
    trans = np.ones(n)
    prefix = np.zeros((n, 3))
    for i in range(n_samples):
        u = jitter[:, i] if jitter is not None else 0.5
        t = t_near + (i + u) * dt
        t = np.broadcast_to(np.asarray(t, dtype=np.float64), (n,))
        pts = origins + t[:, None] * dirs
        i0, f, inside = _grid_coords(pts, bbox_min, bbox_max, dims)
        sigma = _corner_gather(density, i0, f, nx, ny, nz)
        col = _corner_gather(color, i0, f, nx, ny, nz)
        sigma = np.where(inside, sigma, 0.0)
        col = np.where(inside[:, None], col, 0.0)
        att = np.exp(-sigma * dt)
        w = trans * (1.0 - att)
        wc = w[:, None] * col
        suffix = rgb - prefix - wc
        # dC/dsigma_i = dt * (T_i a_i c_i - suffix_i); dC/dc_i = w_i
        gsig = dt * np.sum(dldc_out * ((trans * att)[:, None] * col - suffix), axis=1)
        gcol = dldc_out * w[:, None]
        gsig = np.where(inside, gsig, 0.0)
        gcol = np.where(inside[:, None], gcol, 0.0)
        for corner in range(8):
            dx, dy, dz = corner & 1, (corner >> 1) & 1, (corner >> 2) & 1
            ix = np.clip(i0[:, 0] + dx, 0, nx - 1)
            iy = np.clip(i0[:, 1] + dy, 0, ny - 1)
            iz = np.clip(i0[:, 2] + dz, 0, nz - 1)
            cw = ((f[:, 0] if dx else 1.0 - f[:, 0])
                  * (f[:, 1] if dy else 1.0 - f[:, 1])
                  * (f[:, 2] if dz else 1.0 - f[:, 2]))
            flat = (ix * ny + iy) * nz + iz
            np.add.at(gd, flat, cw * gsig)
            np.add.at(gc, flat, cw[:, None] * gcol)
        prefix += wc
        trans = trans * att
    return loss_sum, rgb


_RING = np.array([(0, -3), (1, -3), (2, -2), (3, -1), (3, 0), (3, 1), (2, 2), (1, 3),
                  (0, 3), (-1, 3), (-2, 2), (-3, 1), (-3, 0), (-3, -1), (-2, -2), (-1, -3)],
                 dtype=np.int64)  # (dx, dy), radius-3 Bresenham circle


def fast_score(gray, threshold):
    """Segment-test corner response map (FAST-9).

    score[y, x] > 0 iff >= 9 contiguous circle pixels are all brighter than
    center + t or all darker than center - t; the score is the summed excess
    |I - center| - t over the qualifying class.
    """
    h, w = gray.shape
    score = np.zeros((h, w))
    if h < 7 or w < 7:
        return score
    center = gray[3:h - 3, 3:w - 3]
    ring = np.stack([gray[3 + dy:h - 3 + dy, 3 + dx:w - 3 + dx] for dx, dy in _RING])
    brighter = ring > center + threshold
    darker = ring < center - threshold
    bright2 = np.concatenate([brighter, brighter[:8]], axis=0)
    dark2 = np.concatenate([darker, darker[:8]], axis=0)
    run_bright = np.zeros(center.shape, dtype=bool)
    run_dark = np.zeros(center.shape, dtype=bool)
    for k in range(16):
        run_bright |= np.logical_and.reduce(bright2[k:k + 9])
        run_dark |= np.logical_and.reduce(dark2[k:k + 9])
    bright_excess = np.where(brighter, ring - center - threshold, 0.0).sum(axis=0)
    dark_excess = np.where(darker, center - ring - threshold, 0.0).sum(axis=0)
    sc = np.maximum(np.where(run_bright, bright_excess, 0.0),
                    np.where(run_dark, dark_excess, 0.0))
    score[3:h - 3, 3:w - 3] = sc
    return score


def brief_describe(smoothed, xs, ys, pattern):
    """256-bit binary descriptors as (K, 32) uint8, LSB-first within each byte.

    Bit j is set when I(kp + pattern[j, :2]) < I(kp + pattern[j, 2:]).
    Keypoints are rounded to the nearest integer pixel.
    """
    k = len(xs)
    out = np.zeros((k, 32), dtype=np.uint8)
    if k == 0:
        return out
    xi = np.rint(xs).astype(np.int64)
    yi = np.rint(ys).astype(np.int64)
    a = smoothed[yi[:, None] + pattern[None, :, 1], xi[:, None] + pattern[None, :, 0]]
    b = smoothed[yi[:, None] + pattern[None, :, 3], xi[:, None] + pattern[None, :, 2]]
    bits = (a < b).astype(np.uint8)  # (K, 256)
    out = np.packbits(bits, axis=1, bitorder="little")
    return np.ascontiguousarray(out)


def hamming_matrix(a, b):
    """Pairwise Hamming distances between (Na,32) and (Nb,32) uint8 descriptor rows."""
    x = np.bitwise_xor(a[:, None, :], b[None, :, :])
    return _POPCOUNT[x].sum(axis=2, dtype=np.int32)
