"""Synthetic scenes, trajectories and datasets.

Stands in for a real capture rig: a procedural scene is voxelized into a
ground-truth radiance field, training/query images are rendered from it
along generated trajectories, and optional noise/blur injection plus a
variance-of-Laplacian blur filter reproduce the capture preprocessing.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field as dc_field

import numpy as np
from scipy.ndimage import uniform_filter
from scipy.signal import convolve2d

from .errors import (AllFilteredError, BadParamsError, EmptySceneError,
                     EmptyDatasetError, TooSmallError)
from .field import RadianceField, RenderOptions, render_image
from .geom import CameraModel, Pose, look_at, read_trajectory, write_trajectory
from .imageio import read_ppm, write_ppm

LUMA = np.array([0.299, 0.587, 0.114])


# --- scenes ---

@dataclass(frozen=True)
class Box:
    center: tuple
    extent: tuple  # full side lengths
    color: tuple
    sigma: float

    def contains(self, pts):
        c = np.asarray(self.center)
        e = np.asarray(self.extent) / 2.0
        return np.all(np.abs(pts - c) <= e, axis=-1)

    def volume(self):
        return float(np.prod(self.extent))


@dataclass(frozen=True)
class Sphere:
    center: tuple
    radius: float
    color: tuple
    sigma: float

    def contains(self, pts):
        c = np.asarray(self.center)
        return np.sum((pts - c) ** 2, axis=-1) <= self.radius ** 2

    def volume(self):
        return 4.0 / 3.0 * math.pi * self.radius ** 3


@dataclass
class SceneSpec:
    """Primitives inside an axis-aligned scene box."""

    primitives: list
    bbox_min: tuple
    bbox_max: tuple

    def __post_init__(self):
        bmin = np.asarray(self.bbox_min, dtype=np.float64)
        bmax = np.asarray(self.bbox_max, dtype=np.float64)
        if not np.all(bmax > bmin):
            raise ValueError("scene bbox_max must exceed bbox_min")
        for p in self.primitives:
            if p.sigma < 0:
                raise ValueError("primitive density must be >= 0")


def voxelize_scene(spec: SceneSpec, dims, bbox=None) -> RadianceField:
    """Ground-truth field: each voxel center takes the innermost primitive.

    "Innermost" is the smallest-volume primitive containing the center
    (ties: the one listed later); centers inside no primitive stay vacuum.
    """
    if not spec.primitives:
        raise EmptySceneError("scene has no primitives")
    dims = tuple(int(d) for d in dims)
    if min(dims) < 8:
        raise ValueError("voxelization needs >= 8 voxels per axis")
    bmin = np.asarray(bbox[0] if bbox else spec.bbox_min, dtype=np.float64)
    bmax = np.asarray(bbox[1] if bbox else spec.bbox_max, dtype=np.float64)
    field = RadianceField.zeros(dims, bmin, bmax, color_value=0.0)
    voxel = field.voxel_size
    axes = [bmin[a] + (np.arange(dims[a]) + 0.5) * voxel[a] for a in range(3)]
    gx, gy, gz = np.meshgrid(*axes, indexing="ij")
    centers = np.stack([gx, gy, gz], axis=-1)
    # paint large primitives first so smaller (inner) ones overwrite
    order = sorted(range(len(spec.primitives)),
                   key=lambda i: (-spec.primitives[i].volume(), i))
    for i in order:
        prim = spec.primitives[i]
        mask = prim.contains(centers)
        field.density[mask] = prim.sigma
        field.color[mask] = np.asarray(prim.color, dtype=np.float64)
    return field


def blockworld_scene(extent: float = 4.4, height: float = 2.4, seed: int = 0) -> SceneSpec:
    """Default scene: a checkered platform carrying colored blocks, spheres
    and a ring of pillars.

    Object-centric on purpose: cameras orbit outside the scene box, so a
    large share of rays terminate on the known background, which is what
    lets photometric training carve free space reliably.
    """
    rng = np.random.default_rng(seed)
    half = extent / 2.0
    prims = []
    tile = extent / 8.0
    palette = [(0.85, 0.2, 0.15), (0.15, 0.55, 0.85), (0.95, 0.8, 0.1),
               (0.2, 0.75, 0.3), (0.8, 0.3, 0.8), (0.95, 0.55, 0.1),
               (0.1, 0.8, 0.8), (0.9, 0.9, 0.9)]
    # checkerboard floor with a per-tile color tint: the alternation keeps
    # corner contrast high while the tint breaks the tile-to-tile symmetry
    # that aliases binary descriptors
    for i in range(8):
        for j in range(8):
            shade = 0.85 if (i + j) % 2 == 0 else 0.22
            tint = rng.uniform(0.55, 1.0, size=3)
            c = np.clip(shade * tint + rng.uniform(0.0, 0.12, size=3), 0.0, 1.0)
            prims.append(Box(center=(-half + (i + 0.5) * tile, -half + (j + 0.5) * tile, 0.1),
                             extent=(tile, tile, 0.2),
                             color=tuple(c), sigma=80.0))
    for k in range(14):
        w = rng.uniform(0.2, 0.5)
        dpt = rng.uniform(0.2, 0.5)
        hgt = rng.uniform(0.25, 1.1)
        cx, cy = rng.uniform(-1.2, 1.2, size=2)
        prims.append(Box(center=(cx, cy, 0.2 + hgt / 2.0), extent=(w, dpt, hgt),
                         color=palette[k % len(palette)], sigma=80.0))
    for k in range(4):
        r = rng.uniform(0.15, 0.3)
        cx, cy = rng.uniform(-1.1, 1.1, size=2)
        prims.append(Sphere(center=(cx, cy, 0.2 + r), radius=r,
                            color=palette[(k + 3) % len(palette)], sigma=80.0))
    ang = np.linspace(0, 2 * math.pi, 6, endpoint=False) + 0.35
    for k, a in enumerate(ang):
        prims.append(Box(center=(1.8 * math.cos(a), 1.8 * math.sin(a), 0.2 + 0.7),
                         extent=(0.25, 0.25, 1.4), color=palette[(k + 1) % len(palette)],
                         sigma=80.0))
    return SceneSpec(prims, (-half, -half, -0.1), (half, half, height))


SCENE_PRESETS = {"blockworld": blockworld_scene}


# --- trajectories ---

@dataclass
class TrajectoryParams:
    length: float = 10.0
    center: tuple = (0.0, 0.0, 0.5)   # orbit pivot / look-at target
    radius: float = 3.0               # orbit
    height: float = 1.5               # camera z
    start_angle: float = 0.0          # orbit, radians
    start: tuple = (0.0, 0.0, 1.5)    # line / lawnmower
    direction: tuple = (1.0, 0.0, 0.0)
    lateral: tuple = (0.0, 1.0, 0.0)  # lawnmower row offset direction
    rows: int = 2                     # lawnmower
    width: float = 2.0                # lawnmower total lateral extent
    rate_hz: float = 10.0


def _resample_polyline(points, n):
    """n points at equal arc-length spacing along the polyline (ends included)."""
    pts = np.asarray(points, dtype=np.float64)
    seg = np.linalg.norm(np.diff(pts, axis=0), axis=1)
    cum = np.concatenate([[0.0], np.cumsum(seg)])
    total = cum[-1]
    s_targets = np.linspace(0.0, total, n)
    out = np.empty((n, 3))
    tangents = np.empty((n, 3))
    j = 0
    for i, s in enumerate(s_targets):
        while j < len(seg) - 1 and s > cum[j + 1]:
            j += 1
        t = 0.0 if seg[j] == 0 else (s - cum[j]) / seg[j]
        out[i] = pts[j] + t * (pts[j + 1] - pts[j])
        tangents[i] = (pts[j + 1] - pts[j]) / max(seg[j], 1e-300)
    return out, tangents


def generate_trajectory(kind: str, params: TrajectoryParams, n_poses: int):
    """Timestamped camera-to-world poses along the requested path.

    The generator's arc length equals params.length exactly. Orbit cameras
    look at the pivot; line/lawnmower cameras look along the travel
    direction. Timestamps are uniform at params.rate_hz starting at 0.
    """
    if n_poses < 2:
        raise BadParamsError("need n_poses >= 2")
    if params.length <= 0:
        raise BadParamsError("trajectory length must be positive")
    ts = np.arange(n_poses) / params.rate_hz
    if kind == "orbit":
        if params.radius <= 0:
            raise BadParamsError("orbit radius must be positive")
        pivot = np.asarray(params.center, dtype=np.float64)
        angles = params.start_angle + np.linspace(0.0, params.length / params.radius, n_poses)
        poses = []
        for a in angles:
            eye = np.array([pivot[0] + params.radius * math.cos(a),
                            pivot[1] + params.radius * math.sin(a),
                            params.height])
            poses.append(look_at(eye, pivot))
        return list(zip(ts.tolist(), poses))
    if kind == "line":
        d = np.asarray(params.direction, dtype=np.float64)
        n = np.linalg.norm(d)
        if n < 1e-12:
            raise BadParamsError("line direction must be nonzero")
        d = d / n
        start = np.asarray(params.start, dtype=np.float64)
        s = np.linspace(0.0, params.length, n_poses)
        poses = [look_at(start + si * d, start + (si + 1.0) * d) for si in s]
        return list(zip(ts.tolist(), poses))
    if kind == "lawnmower":
        d1 = np.asarray(params.direction, dtype=np.float64)
        d2 = np.asarray(params.lateral, dtype=np.float64)
        if np.linalg.norm(d1) < 1e-12 or np.linalg.norm(d2) < 1e-12:
            raise BadParamsError("lawnmower directions must be nonzero")
        d1 = d1 / np.linalg.norm(d1)
        d2 = d2 / np.linalg.norm(d2)
        if params.rows < 2:
            raise BadParamsError("lawnmower needs rows >= 2")
        gap = params.width / (params.rows - 1)
        pass_len = (params.length - (params.rows - 1) * gap) / params.rows
        if pass_len <= 0:
            raise BadParamsError("length too short for the requested rows/width")
        start = np.asarray(params.start, dtype=np.float64)
        waypoints = [start]
        p = start.copy()
        for r in range(params.rows):
            sign = 1.0 if r % 2 == 0 else -1.0
            p = p + sign * pass_len * d1
            waypoints.append(p.copy())
            if r < params.rows - 1:
                p = p + gap * d2
                waypoints.append(p.copy())
        centers, tangents = _resample_polyline(waypoints, n_poses)
        poses = [look_at(c, c + t) for c, t in zip(centers, tangents)]
        return list(zip(ts.tolist(), poses))
    raise BadParamsError(f"unknown trajectory kind {kind!r}")


# --- datasets ---

@dataclass
class Dataset:
    """Posed images with split tags. Images are (H,W,3) float arrays in [0,1]."""

    camera: CameraModel
    timestamps: list
    poses: list
    images: list
    splits: dict = dc_field(default_factory=dict)

    def __post_init__(self):
        n = len(self.images)
        if len(self.timestamps) != n or len(self.poses) != n:
            raise ValueError("timestamps, poses and images must align")
        if n and np.any(np.diff(np.asarray(self.timestamps)) <= 0):
            raise ValueError("timestamps must be strictly increasing")
        for img in self.images:
            if img.shape[:2] != (self.camera.height, self.camera.width):
                raise ValueError("image dimensions do not match the camera")

    def __len__(self):
        return len(self.images)


def make_dataset(gt_field: RadianceField, cam: CameraModel, trajectory,
                 render_opts: RenderOptions | None = None, noise_sigma: float = 0.0,
                 blur_fraction: float = 0.0, blur_kernel: int = 5, seed: int = 0,
                 threads: int = 1, splits=None) -> Dataset:
    """Render the trajectory from the ground-truth field, then corrupt.

    Gaussian pixel noise (then clamp to [0,1]) is applied to every image;
    a seeded random blur_fraction of images is box-blurred afterwards.
    Deterministic for a fixed seed.
    """
    opts = render_opts or RenderOptions()
    rng = np.random.Generator(np.random.PCG64(seed))
    n = len(trajectory)
    n_blur = int(round(blur_fraction * n))
    blur_idx = set(rng.choice(n, size=n_blur, replace=False).tolist()) if n_blur else set()
    timestamps, poses, images = [], [], []
    for i, (ts, pose) in enumerate(trajectory):
        img = render_image(gt_field, cam, pose, opts, threads=threads).rgb
        if noise_sigma > 0:
            img = np.clip(img + rng.normal(0.0, noise_sigma, img.shape), 0.0, 1.0)
        if i in blur_idx:
            img = uniform_filter(img, size=(blur_kernel, blur_kernel, 1), mode="nearest")
        timestamps.append(float(ts))
        poses.append(pose)
        images.append(img)
    ds = Dataset(cam, timestamps, poses, images,
                 splits=dict(splits) if splits else {})
    ds.blurred_indices = sorted(blur_idx)  # injection labels, for validation only
    return ds


def blur_score(image) -> float:
    """Variance of the 3x3 Laplacian response over the grayscale image."""
    img = np.asarray(image, dtype=np.float64)
    if img.ndim == 3:
        img = img @ LUMA
    if img.shape[0] < 3 or img.shape[1] < 3:
        raise TooSmallError("blur score needs an image of at least 3x3")
    lap = convolve2d(img, np.array([[0.0, 1.0, 0.0], [1.0, -4.0, 1.0], [0.0, 1.0, 0.0]]),
                     mode="valid")
    return float(np.var(lap))


def filter_blurred(dataset: Dataset, keep_fraction: float | None = None,
                   threshold: float | None = None) -> Dataset:
    """Drop blurry images by Laplacian-variance score, preserving order.

    Either keep the top keep_fraction of images by score, or keep images
    with score > threshold. Split index lists are remapped.
    """
    if len(dataset) == 0:
        raise EmptyDatasetError("cannot filter an empty dataset")
    if (keep_fraction is None) == (threshold is None):
        raise ValueError("pass exactly one of keep_fraction / threshold")
    scores = np.array([blur_score(img) for img in dataset.images])
    if keep_fraction is not None:
        k = int(round(keep_fraction * len(dataset)))
        if k <= 0:
            raise AllFilteredError("keep_fraction retains no images")
        # highest scores win; ties keep the earlier index
        order = sorted(range(len(dataset)), key=lambda i: (-scores[i], i))
        keep = sorted(order[:k])
    else:
        keep = [i for i in range(len(dataset)) if scores[i] > threshold]
        if not keep:
            raise AllFilteredError("threshold removed every image")
    remap = {old: new for new, old in enumerate(keep)}
    splits = {name: [remap[i] for i in idx if i in remap]
              for name, idx in dataset.splits.items()}
    return Dataset(dataset.camera,
                   [dataset.timestamps[i] for i in keep],
                   [dataset.poses[i] for i in keep],
                   [dataset.images[i] for i in keep],
                   splits=splits)


# --- on-disk layout ---
# camera.json | poses.txt (TUM) | images/%06d.ppm | splits.json

def save_dataset(dataset: Dataset, out_dir) -> None:
    os.makedirs(os.path.join(out_dir, "images"), exist_ok=True)
    cam = dataset.camera
    with open(os.path.join(out_dir, "camera.json"), "w", encoding="utf-8") as f:
        json.dump({"fx": cam.fx, "fy": cam.fy, "cx": cam.cx, "cy": cam.cy,
                   "width": cam.width, "height": cam.height}, f, indent=2)
        f.write("\n")
    write_trajectory(os.path.join(out_dir, "poses.txt"),
                     list(zip(dataset.timestamps, dataset.poses)),
                     header="timestamp tx ty tz qx qy qz qw (camera-to-world)")
    for i, img in enumerate(dataset.images):
        write_ppm(os.path.join(out_dir, "images", f"{i:06d}.ppm"), img)
    with open(os.path.join(out_dir, "splits.json"), "w", encoding="utf-8") as f:
        json.dump(dataset.splits, f, indent=2, sort_keys=True)
        f.write("\n")


def load_dataset(in_dir) -> Dataset:
    with open(os.path.join(in_dir, "camera.json"), "r", encoding="utf-8") as f:
        c = json.load(f)
    cam = CameraModel(fx=c["fx"], fy=c["fy"], cx=c["cx"], cy=c["cy"],
                      width=int(c["width"]), height=int(c["height"]))
    stamped = read_trajectory(os.path.join(in_dir, "poses.txt"))
    images = [read_ppm(os.path.join(in_dir, "images", f"{i:06d}.ppm"))
              for i in range(len(stamped))]
    splits_path = os.path.join(in_dir, "splits.json")
    splits = {}
    if os.path.exists(splits_path):
        with open(splits_path, "r", encoding="utf-8") as f:
            splits = json.load(f)
    return Dataset(cam, [ts for ts, _ in stamped], [p for _, p in stamped],
                   images, splits=splits)
