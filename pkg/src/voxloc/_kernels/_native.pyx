# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernels: ray-marching quadrature, its gradient, FAST/BRIEF/Hamming.

Semantics match voxloc._kernels._python exactly (same sample placement,
same accumulation order per ray); see that module for the reference
implementation and documentation.
"""

import numpy as np

from cython.parallel import prange
from libc.math cimport exp, floor, rint

NAME = "native"

cdef int _POP[256]
cdef int _i, _b
for _i in range(256):
    _b = _i
    _POP[_i] = 0
    while _b:
        _POP[_i] += _b & 1
        _b >>= 1

cdef int _RING_DX[16]
cdef int _RING_DY[16]
_ring = [(0, -3), (1, -3), (2, -2), (3, -1), (3, 0), (3, 1), (2, 2), (1, 3),
         (0, 3), (-1, 3), (-2, 2), (-3, 1), (-3, 0), (-3, -1), (-2, -2), (-1, -3)]
for _i in range(16):
    _RING_DX[_i] = _ring[_i][0]
    _RING_DY[_i] = _ring[_i][1]


cdef inline bint _sample_one(const double[:, :, ::1] density,
                             const double[:, :, :, ::1] color,
                             const double* bmin, const double* bmax,
                             const double* voxel,
                             double px, double py, double pz,
                             double* sigma, double* rgb) nogil:
    """Trilinear sample at one point; returns 0 and zeros when outside the box."""
    cdef int nx = density.shape[0], ny = density.shape[1], nz = density.shape[2]
    cdef double gx, gy, gz, fx, fy, fz, w, wx, wy, wz
    cdef long ix0, iy0, iz0, ix, iy, iz
    cdef int corner, dx, dy, dz
    sigma[0] = 0.0
    rgb[0] = 0.0
    rgb[1] = 0.0
    rgb[2] = 0.0
    if (px < bmin[0] or px > bmax[0] or py < bmin[1] or py > bmax[1]
            or pz < bmin[2] or pz > bmax[2]):
        return 0
    gx = (px - bmin[0]) / voxel[0] - 0.5
    gy = (py - bmin[1]) / voxel[1] - 0.5
    gz = (pz - bmin[2]) / voxel[2] - 0.5
    ix0 = <long>floor(gx)
    iy0 = <long>floor(gy)
    iz0 = <long>floor(gz)
    fx = gx - ix0
    fy = gy - iy0
    fz = gz - iz0
    for corner in range(8):
        dx = corner & 1
        dy = (corner >> 1) & 1
        dz = (corner >> 2) & 1
        ix = ix0 + dx
        iy = iy0 + dy
        iz = iz0 + dz
        if ix < 0: ix = 0
        if ix > nx - 1: ix = nx - 1
        if iy < 0: iy = 0
        if iy > ny - 1: iy = ny - 1
        if iz < 0: iz = 0
        if iz > nz - 1: iz = nz - 1
        wx = fx if dx else 1.0 - fx
        wy = fy if dy else 1.0 - fy
        wz = fz if dz else 1.0 - fz
        w = wx * wy * wz
        sigma[0] += w * density[ix, iy, iz]
        rgb[0] += w * color[ix, iy, iz, 0]
        rgb[1] += w * color[ix, iy, iz, 1]
        rgb[2] += w * color[ix, iy, iz, 2]
    return 1


def trilinear_sample(const double[:, :, ::1] density, const double[:, :, :, ::1] color,
                     const double[::1] bbox_min, const double[::1] bbox_max,
                     const double[:, ::1] points):
    cdef Py_ssize_t n = points.shape[0]
    sigma_np = np.zeros(n)
    rgb_np = np.zeros((n, 3))
    cdef double[::1] sigma = sigma_np
    cdef double[:, ::1] rgb = rgb_np
    cdef double voxel[3]
    cdef double bmin[3]
    cdef double bmax[3]
    cdef int a
    for a in range(3):
        bmin[a] = bbox_min[a]
        bmax[a] = bbox_max[a]
        voxel[a] = (bbox_max[a] - bbox_min[a]) / density.shape[a]
    cdef Py_ssize_t r
    cdef double s, c[3]
    with nogil:
        for r in range(n):
            _sample_one(density, color, bmin, bmax, voxel,
                        points[r, 0], points[r, 1], points[r, 2], &s, c)
            sigma[r] = s
            rgb[r, 0] = c[0]
            rgb[r, 1] = c[1]
            rgb[r, 2] = c[2]
    return sigma_np, rgb_np


cdef void _render_one(const double[:, :, ::1] density, const double[:, :, :, ::1] color,
                      const double* bmin, const double* bmax, const double* voxel,
                      const double[:, ::1] origins, const double[:, ::1] dirs,
                      double t_near, double dt, int n_samples,
                      const double[:, ::1] jitter, bint have_jitter,
                      const double* bg, Py_ssize_t r,
                      double[:, ::1] rgb, double[::1] depth,
                      double[::1] trans_out, double[::1] wsum_out) nogil:
    cdef double trans = 1.0, wsum = 0.0, wtsum = 0.0
    cdef double c0 = 0.0, c1 = 0.0, c2 = 0.0
    cdef double u, t, sigma, att, w
    cdef double col[3]
    cdef int i
    for i in range(n_samples):
        u = jitter[r, i] if have_jitter else 0.5
        t = t_near + (i + u) * dt
        _sample_one(density, color, bmin, bmax, voxel,
                    origins[r, 0] + t * dirs[r, 0],
                    origins[r, 1] + t * dirs[r, 1],
                    origins[r, 2] + t * dirs[r, 2], &sigma, col)
        att = exp(-sigma * dt)
        w = trans * (1.0 - att)
        c0 += w * col[0]
        c1 += w * col[1]
        c2 += w * col[2]
        wsum += w
        wtsum += w * t
        trans = trans * att
    rgb[r, 0] = c0 + trans * bg[0]
    rgb[r, 1] = c1 + trans * bg[1]
    rgb[r, 2] = c2 + trans * bg[2]
    depth[r] = wtsum / wsum if wsum >= 1e-6 else 0.0
    trans_out[r] = trans
    wsum_out[r] = wsum


def render_rays(const double[:, :, ::1] density, const double[:, :, :, ::1] color,
                const double[::1] bbox_min, const double[::1] bbox_max,
                const double[:, ::1] origins, const double[:, ::1] dirs,
                double t_near, double t_far, int n_samples,
                jitter, const double[::1] background, int n_threads=1):
    cdef Py_ssize_t n = origins.shape[0]
    rgb_np = np.zeros((n, 3))
    depth_np = np.zeros(n)
    trans_np = np.zeros(n)
    wsum_np = np.zeros(n)
    cdef double[:, ::1] rgb = rgb_np
    cdef double[::1] depth = depth_np
    cdef double[::1] trans = trans_np
    cdef double[::1] wsum = wsum_np
    cdef bint have_jitter = jitter is not None
    cdef const double[:, ::1] jit = jitter if have_jitter else origins
    cdef double dt = (t_far - t_near) / n_samples
    cdef double bmin[3]
    cdef double bmax[3]
    cdef double voxel[3]
    cdef double bg[3]
    cdef int a
    for a in range(3):
        bmin[a] = bbox_min[a]
        bmax[a] = bbox_max[a]
        voxel[a] = (bbox_max[a] - bbox_min[a]) / density.shape[a]
        bg[a] = background[a]
    cdef int nt = n_threads if n_threads > 0 else 1
    cdef Py_ssize_t r
    if nt == 1:
        with nogil:
            for r in range(n):
                _render_one(density, color, bmin, bmax, voxel, origins, dirs,
                            t_near, dt, n_samples, jit, have_jitter, bg, r,
                            rgb, depth, trans, wsum)
    else:
        for r in prange(n, nogil=True, schedule="static", num_threads=nt):
            _render_one(density, color, bmin, bmax, voxel, origins, dirs,
                        t_near, dt, n_samples, jit, have_jitter, bg, r,
                        rgb, depth, trans, wsum)
    return rgb_np, depth_np, trans_np, wsum_np


def render_rays_grad(const double[:, :, ::1] density, const double[:, :, :, ::1] color,
                     const double[::1] bbox_min, const double[::1] bbox_max,
                     const double[:, ::1] origins, const double[:, ::1] dirs,
                     double t_near, double t_far, int n_samples,
                     jitter, const double[::1] background,
                     const double[:, ::1] targets,
                     double[:, :, ::1] grad_density, double[:, :, :, ::1] grad_color):
    cdef Py_ssize_t n = origins.shape[0]
    cdef int nx = density.shape[0], ny = density.shape[1], nz = density.shape[2]
    rgb_np = np.zeros((n, 3))
    cdef double[:, ::1] rgb = rgb_np
    cdef bint have_jitter = jitter is not None
    cdef const double[:, ::1] jit = jitter if have_jitter else origins
    cdef double dt = (t_far - t_near) / n_samples
    cdef double bmin[3]
    cdef double bmax[3]
    cdef double voxel[3]
    cdef double bg[3]
    cdef int a
    for a in range(3):
        bmin[a] = bbox_min[a]
        bmax[a] = bbox_max[a]
        voxel[a] = (bbox_max[a] - bbox_min[a]) / density.shape[a]
        bg[a] = background[a]
    cdef double loss_sum = 0.0
    cdef Py_ssize_t r
    cdef int i, corner, dx, dy, dz
    cdef long ix0, iy0, iz0, ix, iy, iz
    cdef double trans, u, t, px, py, pz, sigma, att, w, gsig, cw, wx, wy, wz
    cdef double gx, gy, gz, fx, fy, fz
    cdef bint inside
    cdef double col[3]
    cdef double cacc[3]
    cdef double diff[3]
    cdef double dldc[3]
    cdef double prefix[3]
    cdef double wc[3]
    cdef double suffix[3]
    cdef double gcol[3]
    with nogil:
        for r in range(n):
            # forward pass: ray color
            trans = 1.0
            cacc[0] = 0.0; cacc[1] = 0.0; cacc[2] = 0.0
            for i in range(n_samples):
                u = jit[r, i] if have_jitter else 0.5
                t = t_near + (i + u) * dt
                _sample_one(density, color, bmin, bmax, voxel,
                            origins[r, 0] + t * dirs[r, 0],
                            origins[r, 1] + t * dirs[r, 1],
                            origins[r, 2] + t * dirs[r, 2], &sigma, col)
                att = exp(-sigma * dt)
                w = trans * (1.0 - att)
                cacc[0] += w * col[0]
                cacc[1] += w * col[1]
                cacc[2] += w * col[2]
                trans = trans * att
            cacc[0] += trans * bg[0]
            cacc[1] += trans * bg[1]
            cacc[2] += trans * bg[2]
            rgb[r, 0] = cacc[0]
            rgb[r, 1] = cacc[1]
            rgb[r, 2] = cacc[2]
            for a in range(3):
                diff[a] = cacc[a] - targets[r, a]
                loss_sum += diff[a] * diff[a]
                dldc[a] = 2.0 * diff[a]
            # replay pass: per-sample gradients scattered to voxel corners
            trans = 1.0
            prefix[0] = 0.0; prefix[1] = 0.0; prefix[2] = 0.0
            for i in range(n_samples):
                u = jit[r, i] if have_jitter else 0.5
                t = t_near + (i + u) * dt
                px = origins[r, 0] + t * dirs[r, 0]
                py = origins[r, 1] + t * dirs[r, 1]
                pz = origins[r, 2] + t * dirs[r, 2]
                inside = _sample_one(density, color, bmin, bmax, voxel,
                                     px, py, pz, &sigma, col)
                att = exp(-sigma * dt)
                w = trans * (1.0 - att)
                for a in range(3):
                    wc[a] = w * col[a]
                    suffix[a] = cacc[a] - prefix[a] - wc[a]
                    gcol[a] = dldc[a] * w
                gsig = dt * (dldc[0] * (trans * att * col[0] - suffix[0])
                             + dldc[1] * (trans * att * col[1] - suffix[1])
                             + dldc[2] * (trans * att * col[2] - suffix[2]))
                if inside:
                    gx = (px - bmin[0]) / voxel[0] - 0.5
                    gy = (py - bmin[1]) / voxel[1] - 0.5
                    gz = (pz - bmin[2]) / voxel[2] - 0.5
                    ix0 = <long>floor(gx)
                    iy0 = <long>floor(gy)
                    iz0 = <long>floor(gz)
                    fx = gx - ix0
                    fy = gy - iy0
                    fz = gz - iz0
                    for corner in range(8):
                        dx = corner & 1
                        dy = (corner >> 1) & 1
                        dz = (corner >> 2) & 1
                        ix = ix0 + dx
                        iy = iy0 + dy
                        iz = iz0 + dz
                        if ix < 0: ix = 0
                        if ix > nx - 1: ix = nx - 1
                        if iy < 0: iy = 0
                        if iy > ny - 1: iy = ny - 1
                        if iz < 0: iz = 0
                        if iz > nz - 1: iz = nz - 1
                        wx = fx if dx else 1.0 - fx
                        wy = fy if dy else 1.0 - fy
                        wz = fz if dz else 1.0 - fz
                        cw = wx * wy * wz
                        grad_density[ix, iy, iz] += cw * gsig
                        grad_color[ix, iy, iz, 0] += cw * gcol[0]
                        grad_color[ix, iy, iz, 1] += cw * gcol[1]
                        grad_color[ix, iy, iz, 2] += cw * gcol[2]
                for a in range(3):
                    prefix[a] += wc[a]
                trans = trans * att
    return loss_sum, rgb_np


def fast_score(const double[:, ::1] gray, double threshold):
    cdef Py_ssize_t h = gray.shape[0], w = gray.shape[1]
    score_np = np.zeros((h, w))
    cdef double[:, ::1] score = score_np
    if h < 7 or w < 7:
        return score_np
    cdef Py_ssize_t y, x
    cdef int k, run_b, run_d, max_b, max_d
    cdef double center, v, bright_excess, dark_excess, sc_b, sc_d
    cdef bint bright[16]
    cdef bint dark[16]
    with nogil:
        for y in range(3, h - 3):
            for x in range(3, w - 3):
                center = gray[y, x]
                bright_excess = 0.0
                dark_excess = 0.0
                for k in range(16):
                    v = gray[y + _RING_DY[k], x + _RING_DX[k]]
                    bright[k] = v > center + threshold
                    dark[k] = v < center - threshold
                    if bright[k]:
                        bright_excess += v - center - threshold
                    if dark[k]:
                        dark_excess += center - v - threshold
                run_b = 0; max_b = 0
                run_d = 0; max_d = 0
                for k in range(32):
                    if bright[k % 16]:
                        run_b += 1
                        if run_b > max_b: max_b = run_b
                    else:
                        run_b = 0
                    if dark[k % 16]:
                        run_d += 1
                        if run_d > max_d: max_d = run_d
                    else:
                        run_d = 0
                sc_b = bright_excess if max_b >= 9 else 0.0
                sc_d = dark_excess if max_d >= 9 else 0.0
                score[y, x] = sc_b if sc_b > sc_d else sc_d
    return score_np


def brief_describe(const double[:, ::1] smoothed, const double[::1] xs, const double[::1] ys,
                   const long[:, ::1] pattern):
    cdef Py_ssize_t k = xs.shape[0]
    out_np = np.zeros((k, 32), dtype=np.uint8)
    cdef unsigned char[:, ::1] out = out_np
    cdef Py_ssize_t i
    cdef int j
    cdef long xi, yi
    cdef double a, b
    with nogil:
        for i in range(k):
            xi = <long>rint(xs[i])
            yi = <long>rint(ys[i])
            for j in range(256):
                a = smoothed[yi + pattern[j, 1], xi + pattern[j, 0]]
                b = smoothed[yi + pattern[j, 3], xi + pattern[j, 2]]
                if a < b:
                    out[i, j >> 3] |= <unsigned char>(1 << (j & 7))
    return out_np


def hamming_matrix(const unsigned char[:, ::1] a, const unsigned char[:, ::1] b):
    cdef Py_ssize_t na = a.shape[0], nb = b.shape[0], nbytes = a.shape[1]
    out_np = np.zeros((na, nb), dtype=np.int32)
    cdef int[:, ::1] out = out_np
    cdef Py_ssize_t i, j, k
    cdef int d
    with nogil:
        for i in range(na):
            for j in range(nb):
                d = 0
                for k in range(nbytes):
                    d += _POP[a[i, k] ^ b[j, k]]
                out[i, j] = d
    return out_np
