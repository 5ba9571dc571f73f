"""Keypoint detection, binary description and descriptor matching.

Classical front end: FAST-9 segment-test corners with square non-max
suppression, 256-bit BRIEF descriptors over a Gaussian-smoothed patch,
and mutual nearest-neighbor Hamming matching with a Lowe ratio test.
Upright only: reference views are rendered near the pose prior, so
viewpoint deltas stay small.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.ndimage import gaussian_filter

from . import _kernels
from ._brief_pattern import BRIEF_PAIRS, PATCH_MARGIN
from .errors import TooSmallError
from .synthdata import LUMA

DESCRIPTOR_BITS = 256


@dataclass(frozen=True)
class Keypoint:
    x: float
    y: float
    score: float


@dataclass(frozen=True)
class Match:
    index_query: int
    index_reference: int
    hamming_distance: int
    ratio: float


def to_grayscale(image) -> np.ndarray:
    img = np.asarray(image, dtype=np.float64)
    return img @ LUMA if img.ndim == 3 else img


def detect_keypoints(image, max_count: int = 500, fast_threshold: float = 0.08,
                     nms_radius: int = 4):
    """FAST-9 corners, strongest first.

    Non-max suppression is greedy over a square window (|dx| <= r and
    |dy| <= r); ties are broken by (y, x) order. Only pixels at least
    PATCH_MARGIN from every edge are considered, so every returned
    keypoint can be described.
    """
    gray = to_grayscale(image)
    h, w = gray.shape
    if h < 32 or w < 32:
        raise TooSmallError(f"detection needs >= 32x32, got {w}x{h}")
    score = _kernels.fast_score(gray, fast_threshold)
    m = PATCH_MARGIN
    score[:m, :] = 0.0
    score[h - m:, :] = 0.0
    score[:, :m] = 0.0
    score[:, w - m:] = 0.0
    ys, xs = np.nonzero(score > 0)
    if len(xs) == 0:
        return []
    vals = score[ys, xs]
    order = np.lexsort((xs, ys, -vals))  # score desc, then y, then x
    xs, ys, vals = xs[order], ys[order], vals[order]
    kept_x, kept_y, kept_v = [], [], []
    for x, y, v in zip(xs, ys, vals):
        if kept_x:
            kx = np.asarray(kept_x)
            ky = np.asarray(kept_y)
            if np.any((np.abs(kx - x) <= nms_radius) & (np.abs(ky - y) <= nms_radius)):
                continue
        kept_x.append(int(x))
        kept_y.append(int(y))
        kept_v.append(float(v))
        if len(kept_x) >= max_count:
            break
    return [Keypoint(*_subpixel_peak(score, x, y), v)
            for x, y, v in zip(kept_x, kept_y, kept_v)]


def _subpixel_peak(score, x, y):
    """Quadratic refinement of a response peak, clamped to +-0.5 px."""
    def refine(sm, s0, sp):
        denom = sm - 2.0 * s0 + sp
        if denom >= -1e-12:
            return 0.0
        return float(np.clip(0.5 * (sm - sp) / denom, -0.5, 0.5))

    dx = refine(score[y, x - 1], score[y, x], score[y, x + 1])
    dy = refine(score[y - 1, x], score[y, x], score[y + 1, x])
    return x + dx, y + dy


def compute_descriptors(image, keypoints):
    """BRIEF-256 descriptors as an (K, 32) uint8 array.

    Keypoints closer than PATCH_MARGIN to an edge are dropped; returns
    (descriptors, kept_indices) so callers can realign their keypoint
    lists.
    """
    gray = to_grayscale(image)
    h, w = gray.shape
    kept = [i for i, kp in enumerate(keypoints)
            if PATCH_MARGIN <= round(kp.x) < w - PATCH_MARGIN
            and PATCH_MARGIN <= round(kp.y) < h - PATCH_MARGIN]
    smoothed = gaussian_filter(gray, sigma=2.0, mode="nearest")
    xs = np.array([keypoints[i].x for i in kept])
    ys = np.array([keypoints[i].y for i in kept])
    desc = _kernels.brief_describe(smoothed, xs, ys, BRIEF_PAIRS)
    return desc, kept


def match_descriptors(query_desc, ref_desc, max_distance: int = 64,
                      ratio_threshold: float = 0.8, cross_check: bool = True):
    """Nearest-neighbor Hamming matching with ratio test and cross-check.

    Ties on distance resolve to the lower reference index. With
    cross_check only mutual best pairs survive, so the result is
    one-to-one. Returns matches sorted by query index.
    """
    q = np.asarray(query_desc, dtype=np.uint8)
    r = np.asarray(ref_desc, dtype=np.uint8)
    if len(q) == 0 or len(r) == 0:
        return []
    dist = _kernels.hamming_matrix(q, r)
    best_j = np.argmin(dist, axis=1)
    best = dist[np.arange(len(q)), best_j]
    if dist.shape[1] >= 2:
        part = np.partition(dist, 1, axis=1)
        second = part[:, 1]
    else:
        second = None
    matches = []
    best_i_for_ref = np.argmin(dist, axis=0) if cross_check else None
    for i in range(len(q)):
        j = int(best_j[i])
        d = int(best[i])
        if d > max_distance:
            continue
        if second is None:
            ratio = 0.0  # single candidate: nothing to be ambiguous with
        else:
            s = int(second[i])
            ratio = d / s if s > 0 else 1.0  # duplicate refs at distance 0: ambiguous
        if ratio > ratio_threshold:
            continue
        if cross_check and int(best_i_for_ref[j]) != i:
            continue
        matches.append(Match(i, j, d, float(ratio)))
    return matches
