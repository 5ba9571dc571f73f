"""Pose estimation against the field map (or an image database).

Per frame: sample reference poses around the prior, render reference
views (rgb + depth) from the field, match binary features between query
and references, lift reference keypoints to 3D through the rendered
depth, and solve the query pose with P3P RANSAC plus Gauss-Newton
refinement on the consensus set. The image-database branch has no depth
and falls back to essential-matrix two-view estimation with the
prior-to-reference baseline fixing scale.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field as dc_field, replace

import numpy as np

from .errors import (BadCountError, DegenerateError, EmptyDatabaseError,
                     InsufficientCorrespondencesError, InsufficientMatchesError,
                     NoConsensusError, NoDepthError)
from .features import compute_descriptors, detect_keypoints, match_descriptors
from .field import RadianceField, RenderOptions, render_image
from .geom import CameraModel, Pose, rotation_error
from .synthdata import Dataset

STATUS_OK = "ok"
STATUS_DEGENERATE = "degenerate"
STATUS_INSUFFICIENT = "insufficient_matches"


@dataclass
class ReferenceView:
    """Reference image for matching; depth/opacity are None for database sources."""

    rgb: np.ndarray
    depth: np.ndarray | None
    pose: Pose
    source: str  # "rendered" | "database"
    opacity: np.ndarray | None = None


@dataclass(frozen=True)
class Correspondence2D3D:
    world_point: np.ndarray
    query_pixel: np.ndarray


@dataclass
class LocalizationResult:
    pose: Pose
    inlier_count: int
    total_matches: int
    mean_reprojection_error: float
    status: str


@dataclass
class LocalizeOptions:
    n_references: int = 2
    lateral_offset: float = 0.2
    ransac_iterations: int = 1000
    inlier_threshold_px: float = 3.0
    min_inliers: int = 12
    seed: int = 0
    refine_iterations: int = 10
    max_keypoints: int = 1200
    fast_threshold: float = 0.04
    nms_radius: int = 4
    max_distance: int = 64
    ratio_threshold: float = 0.75
    max_depth_spread: float = 0.3   # meters; reject depth-discontinuity lifts
    min_opacity: float = 0.95       # reject silhouette/background mixtures

    def __post_init__(self):
        if self.n_references < 1:
            raise ValueError("n_references must be >= 1")
        if self.lateral_offset <= 0 or self.inlier_threshold_px <= 0:
            raise ValueError("offsets and thresholds must be positive")


def sample_reference_poses(prior: Pose, n: int, lateral_offset: float):
    """Reference poses around the prior, orientations equal to the prior's.

    n=1: the prior itself. n<=4: centers offset by +-lateral_offset along
    the prior's camera x, then y. n>4: the remaining centers sit on a
    circle of the same radius in the camera x-y plane.
    """
    if n < 1:
        raise BadCountError("need at least one reference pose")
    if n == 1:
        return [prior]
    o = lateral_offset
    offsets = [(-o, 0.0), (o, 0.0), (0.0, -o), (0.0, o)][:min(n, 4)]
    if n > 4:
        for k in range(n - 4):
            a = math.pi / 4.0 + 2.0 * math.pi * k / (n - 4)
            offsets.append((o * math.cos(a), o * math.sin(a)))
    return [Pose(prior.q, prior.apply(np.array([dx, dy, 0.0]))) for dx, dy in offsets]


@dataclass
class FieldMap:
    """Map source that renders references from the radiance field."""

    field: RadianceField
    render_opts: RenderOptions = dc_field(default_factory=RenderOptions)

    def build_references(self, cam, prior, opts: LocalizeOptions, threads: int = 1):
        poses = sample_reference_poses(prior, opts.n_references, opts.lateral_offset)
        views = []
        for pose in poses:
            rv = render_image(self.field, cam, pose, self.render_opts, threads=threads)
            views.append(ReferenceView(rv.rgb, rv.depth, pose, "rendered", rv.opacity))
        return views


@dataclass
class ImageDatabase:
    """Map source backed by stored posed images (the ablation baseline)."""

    dataset: Dataset

    def build_references(self, cam, prior, opts: LocalizeOptions, threads: int = 1):
        n_db = len(self.dataset)
        if n_db == 0:
            raise EmptyDatabaseError("image database is empty")
        # pose distance: center offset plus rotation weighted at 0.5 m/rad
        scores = np.array([
            float(np.linalg.norm(p.t - prior.t)) + 0.5 * rotation_error(p, prior)
            for p in self.dataset.poses])
        order = np.argsort(scores, kind="stable")
        picks = order[:min(opts.n_references, n_db)]
        return [ReferenceView(self.dataset.images[i], None, self.dataset.poses[i],
                              "database") for i in picks]


def bilinear_depth(depth, x: float, y: float, max_spread: float = np.inf) -> float:
    """Depth at a subpixel location; 0 when undefined or unreliable.

    Undefined means any touched sample is 0; unreliable means the touched
    samples spread more than max_spread meters (a depth discontinuity,
    where interpolated depth belongs to neither surface).
    """
    h, w = depth.shape
    x0 = int(math.floor(x))
    y0 = int(math.floor(y))
    if x0 < 0 or y0 < 0 or x0 + 1 >= w or y0 + 1 >= h:
        if 0 <= round(x) < w and 0 <= round(y) < h:
            return float(depth[int(round(y)), int(round(x))])
        return 0.0
    fx = x - x0
    fy = y - y0
    corners = depth[y0:y0 + 2, x0:x0 + 2]
    weights = np.array([[(1 - fx) * (1 - fy), fx * (1 - fy)],
                        [(1 - fx) * fy, fx * fy]])
    if np.any((corners <= 0.0) & (weights > 1e-12)):
        return 0.0
    if float(corners.max() - corners.min()) > max_spread:
        return 0.0
    return float(np.sum(corners * weights))


def _bilinear_value(img, x, y):
    h, w = img.shape
    x0 = min(max(int(math.floor(x)), 0), w - 2)
    y0 = min(max(int(math.floor(y)), 0), h - 2)
    fx = x - x0
    fy = y - y0
    return float(img[y0, x0] * (1 - fx) * (1 - fy) + img[y0, x0 + 1] * fx * (1 - fy)
                 + img[y0 + 1, x0] * (1 - fx) * fy + img[y0 + 1, x0 + 1] * fx * fy)


def lift_matches(ref: ReferenceView, cam: CameraModel, matches,
                 query_keypoints, ref_keypoints, max_depth_spread: float = np.inf,
                 min_opacity: float = 0.0):
    """2D-3D correspondences from reference depth.

    Matches are dropped when the reference depth is undefined (0), sits on
    a discontinuity wider than max_depth_spread, or the rendered opacity
    falls below min_opacity (silhouette pixels mix surfaces, so their
    expected depth belongs to neither).
    """
    if ref.depth is None:
        raise NoDepthError("reference has no depth (database source)")
    out = []
    rot = ref.pose.rotation_matrix()
    for m in matches:
        rkp = ref_keypoints[m.index_reference]
        d = bilinear_depth(ref.depth, rkp.x, rkp.y, max_spread=max_depth_spread)
        if d <= 0.0:
            continue
        if (ref.opacity is not None and min_opacity > 0.0
                and _bilinear_value(ref.opacity, rkp.x, rkp.y) < min_opacity):
            continue
        pc = np.array([(rkp.x - cam.cx) / cam.fx * d,
                       (rkp.y - cam.cy) / cam.fy * d, d])
        world = rot @ pc + ref.pose.t
        qkp = query_keypoints[m.index_query]
        out.append(Correspondence2D3D(world, np.array([qkp.x, qkp.y])))
    return out


# --- P3P minimal solver ---

def _p3p_candidates(world, bearings):
    """Camera poses (R, t world->camera) fitting 3 point-bearing pairs.

    Solves the three law-of-cosines range equations: with depth ratios
    u = s2/s1, v = s3/s1 they reduce to two monic quadratics in u whose
    resultant is a quartic in v.
    """
    p1, p2, p3 = world
    f1, f2, f3 = bearings
    a2 = float(np.sum((p2 - p3) ** 2))
    b2 = float(np.sum((p1 - p3) ** 2))
    c2 = float(np.sum((p1 - p2) ** 2))
    if min(a2, b2, c2) < 1e-16:
        return []
    ca = float(np.dot(f2, f3))
    cb = float(np.dot(f1, f3))
    cg = float(np.dot(f1, f2))
    m = a2 / b2
    q = c2 / b2
    # ascending coefficient arrays in v
    c1 = np.array([-m, 2.0 * m * cb, 1.0 - m])
    b1 = np.array([0.0, -2.0 * ca])
    c2p = np.array([1.0 - q, 2.0 * q * cb, -q])
    b2p = np.array([-2.0 * cg])
    d = c1 - c2p
    bd = np.polysub(b1[::-1], b2p[::-1])[::-1]  # b1 - b2 as ascending coeffs
    quartic = (np.polymul(d[::-1], d[::-1])
               - np.polymul(b1[::-1], np.polymul(d[::-1], bd[::-1]))
               + np.polymul(c1[::-1], np.polymul(bd[::-1], bd[::-1])))
    if np.max(np.abs(quartic)) < 1e-16:
        return []
    roots = np.roots(quartic)
    cands = []
    for v in roots:
        if abs(v.imag) > 1e-8 * max(1.0, abs(v.real)):
            continue
        v = float(v.real)
        if v <= 0:
            continue
        denom = np.polyval(bd[::-1], v)
        if abs(denom) < 1e-12:
            continue
        u = -np.polyval(d[::-1], v) / denom
        if u <= 0:
            continue
        rad = 1.0 + v * v - 2.0 * v * cb
        if rad <= 1e-16:
            continue
        s1 = math.sqrt(b2 / rad)
        cam_pts = np.stack([s1 * f1, (u * s1) * f2, (v * s1) * f3])
        rt = _rigid_fit(np.stack([p1, p2, p3]), cam_pts)
        if rt is not None:
            cands.append(rt)
    return cands


def _rigid_fit(src, dst):
    """Least-squares (R, t) with dst ~= R @ src + t (Kabsch)."""
    cs = src.mean(axis=0)
    cd = dst.mean(axis=0)
    h = (src - cs).T @ (dst - cd)
    u, _, vt = np.linalg.svd(h)
    d = np.sign(np.linalg.det(vt.T @ u.T))
    if d == 0:
        return None
    r = vt.T @ np.diag([1.0, 1.0, d]) @ u.T
    return r, cd - r @ cs


def _reproject_errors(world, pixels, cam, r, t):
    """Per-point pixel error; inf for points at or behind the camera."""
    pc = world @ r.T + t
    z = pc[:, 2]
    err = np.full(len(world), np.inf)
    ok = z > 1e-9
    if np.any(ok):
        u = cam.fx * pc[ok, 0] / z[ok] + cam.cx
        v = cam.fy * pc[ok, 1] / z[ok] + cam.cy
        err[ok] = np.hypot(u - pixels[ok, 0], v - pixels[ok, 1])
    return err


def _rodrigues(w):
    theta = np.linalg.norm(w)
    if theta < 1e-12:
        k = np.array([[0.0, -w[2], w[1]], [w[2], 0.0, -w[0]], [-w[1], w[0], 0.0]])
        return np.eye(3) + k
    k = w / theta
    kx = np.array([[0.0, -k[2], k[1]], [k[2], 0.0, -k[0]], [-k[1], k[0], 0.0]])
    return np.eye(3) + math.sin(theta) * kx + (1.0 - math.cos(theta)) * (kx @ kx)


def refine_pose(world, pixels, cam, r, t, iterations: int = 10):
    """Gauss-Newton on the 6-DoF pose over all points; monotone via step halving.

    The update is a rotation-vector increment composed onto the estimate
    (left multiplication) plus a translation increment.
    """
    def mean_sq(r_, t_):
        e = _reproject_errors(world, pixels, cam, r_, t_)
        return float(np.mean(e * e)) if np.all(np.isfinite(e)) else np.inf

    cur = mean_sq(r, t)
    for _ in range(iterations):
        pc = world @ r.T + t
        z = pc[:, 2]
        if np.any(z <= 1e-9):
            break
        u = cam.fx * pc[:, 0] / z + cam.cx
        v = cam.fy * pc[:, 1] / z + cam.cy
        res = np.stack([u - pixels[:, 0], v - pixels[:, 1]], axis=1).reshape(-1)
        n = len(world)
        jac = np.zeros((2 * n, 6))
        rp = pc - t  # R @ world
        dproj = np.zeros((n, 2, 3))
        dproj[:, 0, 0] = cam.fx / z
        dproj[:, 0, 2] = -cam.fx * pc[:, 0] / (z * z)
        dproj[:, 1, 1] = cam.fy / z
        dproj[:, 1, 2] = -cam.fy * pc[:, 1] / (z * z)
        # dp/dtheta = -[R p]_x, dp/dt = I
        skew = np.zeros((n, 3, 3))
        skew[:, 0, 1] = -rp[:, 2]
        skew[:, 0, 2] = rp[:, 1]
        skew[:, 1, 0] = rp[:, 2]
        skew[:, 1, 2] = -rp[:, 0]
        skew[:, 2, 0] = -rp[:, 1]
        skew[:, 2, 1] = rp[:, 0]
        jtheta = -np.einsum("nij,njk->nik", dproj, skew)
        jac[:, :3] = jtheta.reshape(-1, 3)
        jac[:, 3:] = dproj.reshape(-1, 3)
        jtj = jac.T @ jac
        jtr = jac.T @ res
        try:
            delta = np.linalg.solve(jtj + 1e-12 * np.eye(6), -jtr)
        except np.linalg.LinAlgError:
            break
        step = 1.0
        improved = False
        for _half in range(11):
            r_new = _rodrigues(step * delta[:3]) @ r
            t_new = t + step * delta[3:]
            new = mean_sq(r_new, t_new)
            if new <= cur:
                r, t, cur = r_new, t_new, new
                improved = True
                break
            step *= 0.5
        if not improved:
            break
    return r, t, cur


def _bearings(cam, pixels):
    b = np.stack([(pixels[:, 0] - cam.cx) / cam.fx,
                  (pixels[:, 1] - cam.cy) / cam.fy,
                  np.ones(len(pixels))], axis=1)
    return b / np.linalg.norm(b, axis=1, keepdims=True)


def solve_pnp_ransac(correspondences, cam: CameraModel, iterations: int = 1000,
                     inlier_threshold_px: float = 3.0, min_inliers: int = 12,
                     seed: int = 0, refine_iterations: int = 10):
    """Robust camera-to-world pose from pooled 2D-3D correspondences.

    P3P hypotheses on random triples, disambiguated by a fourth point;
    consensus by reprojection error; Gauss-Newton refinement on the
    inliers. Returns (Pose, inlier_mask).
    """
    world = np.stack([np.asarray(c.world_point, dtype=np.float64)
                      for c in correspondences]) if correspondences else np.zeros((0, 3))
    pixels = np.stack([np.asarray(c.query_pixel, dtype=np.float64)
                       for c in correspondences]) if correspondences else np.zeros((0, 2))
    n = len(world)
    if n < 4:
        raise InsufficientCorrespondencesError(f"need >= 4 correspondences, got {n}")
    bear = _bearings(cam, pixels)
    rng = np.random.Generator(np.random.PCG64(seed))
    best = None  # (count, mean_err, r, t, mask)
    produced_model = False
    max_iter = iterations
    it = 0
    while it < max_iter:
        it += 1
        idx = rng.choice(n, size=4, replace=False)
        tri = world[idx[:3]]
        area2 = np.linalg.norm(np.cross(tri[1] - tri[0], tri[2] - tri[0]))
        if area2 < 1e-12:
            continue
        cands = _p3p_candidates(tri, bear[idx[:3]])
        if not cands:
            continue
        produced_model = True
        pick = None
        pick_err = np.inf
        for r, t in cands:
            e = _reproject_errors(world[idx[3:4]], pixels[idx[3:4]], cam, r, t)[0]
            if e < pick_err:
                pick_err = e
                pick = (r, t)
        if pick is None:
            continue
        err = _reproject_errors(world, pixels, cam, *pick)
        mask = err <= inlier_threshold_px
        count = int(np.count_nonzero(mask))
        if count == 0:
            continue
        mean_err = float(np.mean(err[mask]))
        if best is None or count > best[0] or (count == best[0] and mean_err < best[1]):
            best = (count, mean_err, pick[0], pick[1], mask)
            if count >= 4:
                # adaptive budget at 0.999 confidence, never above the configured cap
                ratio = count / n
                if ratio >= 1.0:
                    max_iter = it
                else:
                    need = math.log(1e-3) / math.log(1.0 - ratio ** 3 + 1e-300)
                    max_iter = min(iterations, max(it, int(math.ceil(need))))
    if not produced_model:
        raise DegenerateError("all sampled triples were degenerate")
    if best is None or best[0] < min_inliers:
        got = 0 if best is None else best[0]
        raise NoConsensusError(f"best inlier count {got} < min_inliers {min_inliers}")
    _, _, r, t, mask = best
    r, t, _ = refine_pose(world[mask], pixels[mask], cam, r, t,
                          iterations=refine_iterations)
    err = _reproject_errors(world, pixels, cam, r, t)
    mask = err <= inlier_threshold_px
    pose_w2c = Pose.from_rt(r, t)
    return pose_w2c.inverse(), mask


# --- two-view fallback for the image-database ablation ---

@dataclass
class TwoViewResult:
    pose: Pose
    inlier_mask: np.ndarray
    mean_sampson_px: float
    degenerate: bool
    scale_ambiguous: bool = True


def _essential_from_matches(xq, xr):
    a = (xq[:, :, None] * xr[:, None, :]).reshape(len(xq), 9)
    _, _, vt = np.linalg.svd(a)
    e = vt[-1].reshape(3, 3)
    u, s, vt2 = np.linalg.svd(e)
    return u @ np.diag([1.0, 1.0, 0.0]) @ vt2


def _sampson_sq(e, xq, xr):
    exr = xr @ e.T
    etxq = xq @ e
    num = np.sum(xq * exr, axis=1) ** 2
    den = exr[:, 0] ** 2 + exr[:, 1] ** 2 + etxq[:, 0] ** 2 + etxq[:, 1] ** 2
    return num / np.maximum(den, 1e-300)


def _triangulate_depths(r, t, xr, xq):
    """Depths (z_ref, z_query) of DLT-triangulated points; X_q = R X_r + t."""
    p1 = np.hstack([np.eye(3), np.zeros((3, 1))])
    p2 = np.hstack([r, t[:, None]])
    zr = np.empty(len(xr))
    zq = np.empty(len(xr))
    for i in range(len(xr)):
        a = np.stack([
            xr[i, 0] * p1[2] - p1[0],
            xr[i, 1] * p1[2] - p1[1],
            xq[i, 0] * p2[2] - p2[0],
            xq[i, 1] * p2[2] - p2[1],
        ])
        _, _, vt = np.linalg.svd(a)
        xh = vt[-1]
        w = xh[3] if abs(xh[3]) > 1e-300 else 1e-300
        pt = xh[:3] / w
        zr[i] = pt[2]
        zq[i] = (r @ pt + t)[2]
    return zr, zq


def _procrustes_rotation(src, dst):
    h = src.T @ dst
    u, _, vt = np.linalg.svd(h)
    d = np.sign(np.linalg.det(vt.T @ u.T))
    return vt.T @ np.diag([1.0, 1.0, d]) @ u.T


def solve_two_view(query_keypoints, ref_keypoints, matches, cam: CameraModel,
                   ref_pose: Pose, prior: Pose, iterations: int = 1000,
                   inlier_threshold_px: float = 3.0, min_inliers: int = 12,
                   seed: int = 0) -> TwoViewResult:
    """Relative pose from 2D-2D matches (query vs one database reference).

    Normalized eight-point essential estimation inside RANSAC with Sampson
    error, cheirality-checked decomposition. The translation direction is
    unit-norm; its magnitude is fixed by assuming the prior-to-reference
    baseline, so the result stays scale_ambiguous. A pure-rotation pair
    (best-fit rotation explains the inlier bearings to < 1e-6 rad median)
    is flagged degenerate.
    """
    if len(matches) < 8:
        raise InsufficientMatchesError(f"need >= 8 matches, got {len(matches)}")
    qpix = np.array([[query_keypoints[m.index_query].x,
                      query_keypoints[m.index_query].y] for m in matches])
    rpix = np.array([[ref_keypoints[m.index_reference].x,
                      ref_keypoints[m.index_reference].y] for m in matches])
    xq = np.concatenate([(qpix - [cam.cx, cam.cy]) / [cam.fx, cam.fy],
                         np.ones((len(qpix), 1))], axis=1)
    xr = np.concatenate([(rpix - [cam.cx, cam.cy]) / [cam.fx, cam.fy],
                         np.ones((len(rpix), 1))], axis=1)
    thr = (inlier_threshold_px / (0.5 * (cam.fx + cam.fy))) ** 2
    n = len(matches)
    rng = np.random.Generator(np.random.PCG64(seed))
    best_mask = None
    best_count = 0
    best_err = np.inf
    max_iter = iterations
    it = 0
    while it < max_iter:
        it += 1
        idx = rng.choice(n, size=8, replace=False)
        e = _essential_from_matches(xq[idx], xr[idx])
        s2 = _sampson_sq(e, xq, xr)
        mask = s2 <= thr
        count = int(np.count_nonzero(mask))
        if count == 0:
            continue
        mean_err = float(np.mean(s2[mask]))
        if count > best_count or (count == best_count and mean_err < best_err):
            best_count, best_err, best_mask = count, mean_err, mask
            ratio = count / n
            if ratio >= 1.0:
                max_iter = it
            else:
                need = math.log(1e-3) / math.log(1.0 - ratio ** 8 + 1e-300)
                max_iter = min(iterations, max(it, int(math.ceil(need))))
    if best_mask is None or best_count < min_inliers:
        raise NoConsensusError(f"best inlier count {best_count} < min_inliers {min_inliers}")
    e = _essential_from_matches(xq[best_mask], xr[best_mask])
    s2 = _sampson_sq(e, xq, xr)
    best_mask = s2 <= thr
    mean_sampson_px = float(np.mean(np.sqrt(s2[best_mask]))) * 0.5 * (cam.fx + cam.fy)

    # pure-rotation degeneracy: does a rotation alone explain the bearings?
    bq = xq[best_mask] / np.linalg.norm(xq[best_mask], axis=1, keepdims=True)
    br = xr[best_mask] / np.linalg.norm(xr[best_mask], axis=1, keepdims=True)
    r_fit = _procrustes_rotation(br, bq)
    resid = np.arccos(np.clip(np.sum((br @ r_fit.T) * bq, axis=1), -1.0, 1.0))
    if float(np.median(resid)) < 1e-6:
        # translation unobservable: keep the rotation, hold the prior center
        q_c2w_rot = ref_pose.rotation_matrix() @ r_fit.T
        pose = Pose.from_rt(q_c2w_rot, prior.t)
        return TwoViewResult(pose, best_mask, mean_sampson_px, degenerate=True)

    u, _, vt = np.linalg.svd(e)
    if np.linalg.det(u) < 0:
        u = -u
    if np.linalg.det(vt) < 0:
        vt = -vt
    w = np.array([[0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0]])
    t_dir = u[:, 2]
    sub = np.nonzero(best_mask)[0]
    if len(sub) > 40:
        sub = sub[np.linspace(0, len(sub) - 1, 40).astype(int)]
    best_combo = None
    best_front = -1
    for r_cand in (u @ w @ vt, u @ w.T @ vt):
        for t_cand in (t_dir, -t_dir):
            zr, zq_ = _triangulate_depths(r_cand, t_cand, xr[sub], xq[sub])
            front = int(np.count_nonzero((zr > 0) & (zq_ > 0)))
            if front > best_front:
                best_front = front
                best_combo = (r_cand, t_cand)
    r_qr, t_unit = best_combo
    scale = float(np.linalg.norm(ref_pose.t - prior.t))
    if scale < 1e-9:
        scale = 0.0
    t_qr = scale * t_unit
    # query_c2w = ref_c2w o inverse(T_query<-ref)
    rel_inv_r = r_qr.T
    rel_inv_t = -r_qr.T @ t_qr
    q_r = ref_pose.rotation_matrix() @ rel_inv_r
    q_t = ref_pose.rotation_matrix() @ rel_inv_t + ref_pose.t
    return TwoViewResult(Pose.from_rt(q_r, q_t), best_mask, mean_sampson_px,
                         degenerate=False)


# --- per-frame pipeline ---

def _features(image, opts: LocalizeOptions):
    kps = detect_keypoints(image, max_count=opts.max_keypoints,
                           fast_threshold=opts.fast_threshold,
                           nms_radius=opts.nms_radius)
    desc, kept = compute_descriptors(image, kps)
    return [kps[i] for i in kept], desc


def localize_frame(map_source, cam: CameraModel, query_image, prior: Pose,
                   opts: LocalizeOptions, threads: int = 1) -> LocalizationResult:
    """One frame of the render-match-solve loop; failures land in .status."""
    query_kps, query_desc = _features(query_image, opts)
    if len(query_kps) < 4:
        return LocalizationResult(prior, 0, 0, float("nan"), STATUS_INSUFFICIENT)
    refs = map_source.build_references(cam, prior, opts, threads=threads)
    per_ref = []
    total_matches = 0
    for ref in refs:
        ref_kps, ref_desc = _features(ref.rgb, opts)
        if len(ref_kps) == 0:
            per_ref.append((ref, [], []))
            continue
        matches = match_descriptors(query_desc, ref_desc,
                                    max_distance=opts.max_distance,
                                    ratio_threshold=opts.ratio_threshold)
        total_matches += len(matches)
        per_ref.append((ref, ref_kps, matches))

    if all(ref.source == "rendered" for ref, _, _ in per_ref):
        correspondences = []
        for ref, ref_kps, matches in per_ref:
            correspondences.extend(lift_matches(ref, cam, matches, query_kps, ref_kps,
                                                max_depth_spread=opts.max_depth_spread,
                                                min_opacity=opts.min_opacity))
        if len(correspondences) < 4:
            return LocalizationResult(prior, 0, total_matches, float("nan"),
                                      STATUS_INSUFFICIENT)
        try:
            pose, mask = solve_pnp_ransac(
                correspondences, cam, iterations=opts.ransac_iterations,
                inlier_threshold_px=opts.inlier_threshold_px,
                min_inliers=opts.min_inliers, seed=opts.seed,
                refine_iterations=opts.refine_iterations)
        except (NoConsensusError, DegenerateError):
            return LocalizationResult(prior, 0, total_matches, float("nan"),
                                      STATUS_DEGENERATE)
        except InsufficientCorrespondencesError:
            return LocalizationResult(prior, 0, total_matches, float("nan"),
                                      STATUS_INSUFFICIENT)
        world = np.stack([c.world_point for c in correspondences])
        pixels = np.stack([c.query_pixel for c in correspondences])
        w2c = pose.inverse()
        err = _reproject_errors(world, pixels, cam, w2c.rotation_matrix(), w2c.t)
        inliers = int(np.count_nonzero(mask))
        if inliers < opts.min_inliers:
            return LocalizationResult(prior, inliers, total_matches, float("nan"),
                                      STATUS_DEGENERATE)
        mean_err = float(np.mean(err[mask])) if inliers else float("nan")
        return LocalizationResult(pose, inliers, total_matches, mean_err, STATUS_OK)

    # database mode: best single reference by two-view inlier count
    best = None
    saw_degenerate = False
    for ref, ref_kps, matches in per_ref:
        if len(matches) < 8:
            continue
        try:
            tv = solve_two_view(query_kps, ref_kps, matches, cam, ref.pose, prior,
                                iterations=opts.ransac_iterations,
                                inlier_threshold_px=opts.inlier_threshold_px,
                                min_inliers=opts.min_inliers, seed=opts.seed)
        except (NoConsensusError, InsufficientMatchesError):
            continue
        if tv.degenerate:
            saw_degenerate = True
            continue
        count = int(np.count_nonzero(tv.inlier_mask))
        if best is None or count > best[0]:
            best = (count, tv)
    if best is None:
        status = STATUS_DEGENERATE if saw_degenerate else STATUS_INSUFFICIENT
        return LocalizationResult(prior, 0, total_matches, float("nan"), status)
    count, tv = best
    return LocalizationResult(tv.pose, count, total_matches, tv.mean_sampson_px,
                              STATUS_OK)


def run_sequence(map_source, cam: CameraModel, query_dataset: Dataset,
                 initial_prior: Pose, opts: LocalizeOptions, threads: int = 1):
    """Chain localize_frame over a query sequence with previous-estimate priors.

    On failure the last good estimate is reused as both the frame's pose
    and the next prior. Returns (TrajectoryEstimate, per-frame records).
    """
    from .evaluate import TrajectoryEstimate

    prior = initial_prior
    timestamps, poses, statuses, records = [], [], [], []
    for k in range(len(query_dataset)):
        t0 = time.perf_counter()
        res = localize_frame(map_source, cam, query_dataset.images[k], prior,
                             opts, threads=threads)
        elapsed_ms = (time.perf_counter() - t0) * 1000.0
        if res.status == STATUS_OK:
            prior = res.pose
        pose_out = res.pose if res.status == STATUS_OK else prior
        timestamps.append(query_dataset.timestamps[k])
        poses.append(pose_out)
        statuses.append(res.status)
        records.append({
            "frame": k,
            "status": res.status,
            "inliers": res.inlier_count,
            "matches": res.total_matches,
            "reproj_error_px": res.mean_reprojection_error,
            "pose": pose_out,
            "elapsed_ms": elapsed_ms,
        })
    return TrajectoryEstimate(timestamps, poses, statuses), records
