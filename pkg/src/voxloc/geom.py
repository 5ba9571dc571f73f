"""Rigid transforms, pinhole camera model, ray generation and rotation metrics.

Conventions used everywhere in this package:

* ``Pose`` is camera-to-world. ``pose.apply(p)`` maps camera-frame points
  into the world frame; ``pose.t`` is the camera center.
* Camera axes: x right, y down, z forward (the camera looks along +z).
* Pixel coordinates are (x, y) = (column, row); integer values address
  pixel centers, so pixel (0, 0) is the center of the top-left pixel.
* Quaternions are stored (w, x, y, z) and kept unit-norm.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import NonPositiveDepthError, PixelOutOfBoundsError

_MIN_DEPTH = 1e-9


def _quat_mul(a, b):
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    return np.array([
        aw * bw - ax * bx - ay * by - az * bz,
        aw * bx + ax * bw + ay * bz - az * by,
        aw * by - ax * bz + ay * bw + az * bx,
        aw * bz + ax * by - ay * bx + az * bw,
    ])


def _quat_to_matrix(q):
    w, x, y, z = q
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])


def _matrix_to_quat(m):
    # Shepperd's method: pick the largest diagonal combination for stability.
    tr = m[0, 0] + m[1, 1] + m[2, 2]
    if tr > 0.0:
        s = math.sqrt(tr + 1.0) * 2.0
        q = np.array([0.25 * s,
                      (m[2, 1] - m[1, 2]) / s,
                      (m[0, 2] - m[2, 0]) / s,
                      (m[1, 0] - m[0, 1]) / s])
    elif m[0, 0] >= m[1, 1] and m[0, 0] >= m[2, 2]:
        s = math.sqrt(1.0 + m[0, 0] - m[1, 1] - m[2, 2]) * 2.0
        q = np.array([(m[2, 1] - m[1, 2]) / s,
                      0.25 * s,
                      (m[0, 1] + m[1, 0]) / s,
                      (m[0, 2] + m[2, 0]) / s])
    elif m[1, 1] >= m[2, 2]:
        s = math.sqrt(1.0 + m[1, 1] - m[0, 0] - m[2, 2]) * 2.0
        q = np.array([(m[0, 2] - m[2, 0]) / s,
                      (m[0, 1] + m[1, 0]) / s,
                      0.25 * s,
                      (m[1, 2] + m[2, 1]) / s])
    else:
        s = math.sqrt(1.0 + m[2, 2] - m[0, 0] - m[1, 1]) * 2.0
        q = np.array([(m[1, 0] - m[0, 1]) / s,
                      (m[0, 2] + m[2, 0]) / s,
                      (m[1, 2] + m[2, 1]) / s,
                      0.25 * s])
    return q / np.linalg.norm(q)


def _freeze(a):
    a = np.ascontiguousarray(a, dtype=np.float64)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class Pose:
    """Camera-to-world rigid transform: unit quaternion (w,x,y,z) + translation in meters."""

    q: np.ndarray
    t: np.ndarray

    def __post_init__(self):
        q = np.asarray(self.q, dtype=np.float64).reshape(4)
        t = np.asarray(self.t, dtype=np.float64).reshape(3)
        n = np.linalg.norm(q)
        if not np.isfinite(n) or n < 1e-8:
            raise ValueError(f"quaternion norm {n!r} too far from 1 to normalize")
        object.__setattr__(self, "q", _freeze(q / n))
        object.__setattr__(self, "t", _freeze(t))

    @staticmethod
    def identity() -> "Pose":
        return Pose(np.array([1.0, 0.0, 0.0, 0.0]), np.zeros(3))

    @staticmethod
    def from_matrix(m) -> "Pose":
        m = np.asarray(m, dtype=np.float64)
        return Pose(_matrix_to_quat(m[:3, :3]), m[:3, 3])

    @staticmethod
    def from_rt(rotation, translation) -> "Pose":
        return Pose(_matrix_to_quat(np.asarray(rotation, dtype=np.float64)), translation)

    @staticmethod
    def from_axis_angle(axis, angle, translation=(0.0, 0.0, 0.0)) -> "Pose":
        axis = np.asarray(axis, dtype=np.float64)
        axis = axis / np.linalg.norm(axis)
        half = 0.5 * angle
        q = np.concatenate(([math.cos(half)], math.sin(half) * axis))
        return Pose(q, translation)

    def rotation_matrix(self) -> np.ndarray:
        return _quat_to_matrix(self.q)

    def matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = self.rotation_matrix()
        m[:3, 3] = self.t
        return m

    def compose(self, other: "Pose") -> "Pose":
        """Transform applying ``other`` first, then ``self``."""
        q = _quat_mul(self.q, other.q)
        t = self.rotation_matrix() @ other.t + self.t
        return Pose(q, t)

    def inverse(self) -> "Pose":
        qc = self.q * np.array([1.0, -1.0, -1.0, -1.0])
        t = -(_quat_to_matrix(qc) @ self.t)
        return Pose(qc, t)

    def rotate(self, v) -> np.ndarray:
        """Rotate camera-frame vectors (..., 3) into the world frame."""
        v = np.asarray(v, dtype=np.float64)
        return v @ self.rotation_matrix().T

    def apply(self, p) -> np.ndarray:
        """Map camera-frame points (..., 3) to world-frame points."""
        return self.rotate(p) + self.t


def rotation_error(a: Pose, b: Pose) -> float:
    """Geodesic angle in [0, pi] between the two rotations; symmetric."""
    qc = a.q * np.array([1.0, -1.0, -1.0, -1.0])
    r = _quat_mul(qc, b.q)
    return 2.0 * math.atan2(np.linalg.norm(r[1:]), abs(r[0]))


def look_at(eye, target, up=(0.0, 0.0, 1.0)) -> Pose:
    """Camera-to-world pose at ``eye`` with +z toward ``target`` and y pointing down."""
    eye = np.asarray(eye, dtype=np.float64)
    z = np.asarray(target, dtype=np.float64) - eye
    n = np.linalg.norm(z)
    if n < 1e-12:
        raise ValueError("look_at: eye coincides with target")
    z = z / n
    up = np.asarray(up, dtype=np.float64)
    x = np.cross(z, up)
    if np.linalg.norm(x) < 1e-9:  # looking straight along up: pick another hint
        x = np.cross(z, np.array([0.0, 1.0, 0.0]))
    x = x / np.linalg.norm(x)
    y = np.cross(z, x)
    r = np.stack([x, y, z], axis=1)
    return Pose(_matrix_to_quat(r), eye)


@dataclass(frozen=True)
class CameraModel:
    """Pinhole intrinsics. Focal lengths and principal point in pixels."""

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError("focal lengths must be positive")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise ValueError("principal point must lie inside the image")
        if self.width <= 0 or self.height <= 0:
            raise ValueError("image dimensions must be positive")

    @staticmethod
    def from_fov(width: int, height: int, fov_x_deg: float) -> "CameraModel":
        fx = 0.5 * width / math.tan(math.radians(fov_x_deg) / 2.0)
        return CameraModel(fx=fx, fy=fx, cx=(width - 1) / 2.0, cy=(height - 1) / 2.0,
                           width=width, height=height)


@dataclass(frozen=True)
class Ray:
    """World-frame ray with unit direction."""

    origin: np.ndarray
    direction: np.ndarray

    def __post_init__(self):
        o = np.asarray(self.origin, dtype=np.float64).reshape(3)
        d = np.asarray(self.direction, dtype=np.float64).reshape(3)
        n = np.linalg.norm(d)
        if abs(n - 1.0) > 1e-6:
            d = d / n
        object.__setattr__(self, "origin", _freeze(o))
        object.__setattr__(self, "direction", _freeze(d))


def project(cam: CameraModel, points) -> np.ndarray:
    """Project camera-frame points (..., 3) to pixels (..., 2).

    Raises NonPositiveDepthError if any point has z <= 1e-9. Results may lie
    outside the image rectangle; callers clip.
    """
    p = np.asarray(points, dtype=np.float64)
    z = p[..., 2]
    if np.any(z <= _MIN_DEPTH):
        raise NonPositiveDepthError("cannot project points with z <= 0")
    return np.stack([cam.fx * p[..., 0] / z + cam.cx,
                     cam.fy * p[..., 1] / z + cam.cy], axis=-1)


def unproject(cam: CameraModel, pixels, depth) -> np.ndarray:
    """Lift pixels (..., 2) at the given depths to camera-frame points (..., 3)."""
    px = np.asarray(pixels, dtype=np.float64)
    d = np.asarray(depth, dtype=np.float64)
    if np.any(d <= 0):
        raise NonPositiveDepthError("cannot unproject at depth <= 0")
    x = (px[..., 0] - cam.cx) / cam.fx * d
    y = (px[..., 1] - cam.cy) / cam.fy * d
    return np.stack([x, y, np.broadcast_to(d, x.shape)], axis=-1)


def ray_for_pixel(cam: CameraModel, pose: Pose, pixel) -> Ray:
    """World-frame viewing ray through one pixel."""
    x, y = float(pixel[0]), float(pixel[1])
    if not (0 <= x < cam.width and 0 <= y < cam.height):
        raise PixelOutOfBoundsError(f"pixel ({x}, {y}) outside {cam.width}x{cam.height}")
    d = unproject(cam, np.array([x, y]), 1.0)
    d = pose.rotate(d)
    return Ray(pose.t, d / np.linalg.norm(d))


def camera_rays(cam: CameraModel, pose: Pose):
    """Rays for every pixel, row-major (index = y * width + x).

    Returns (origins, directions), each (H*W, 3); directions unit norm.
    """
    xs = np.arange(cam.width, dtype=np.float64)
    ys = np.arange(cam.height, dtype=np.float64)
    gx, gy = np.meshgrid(xs, ys)
    d = np.stack([(gx.ravel() - cam.cx) / cam.fx,
                  (gy.ravel() - cam.cy) / cam.fy,
                  np.ones(cam.width * cam.height)], axis=1)
    d = pose.rotate(d)
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    origins = np.broadcast_to(pose.t, d.shape).copy()
    return origins, d


# --- TUM-format trajectory text ---
#
# One line per pose: ``timestamp tx ty tz qx qy qz qw`` with 9 significant
# digits, space-separated. Quaternions are canonicalized to qw >= 0 on write
# so files are byte-comparable.

def format_tum_line(timestamp: float, pose: Pose) -> str:
    q = pose.q if pose.q[0] >= 0 else -pose.q
    vals = [timestamp, pose.t[0], pose.t[1], pose.t[2], q[1], q[2], q[3], q[0]]
    return " ".join(f"{v:.9g}" for v in vals)


def parse_tum_line(line: str):
    parts = line.split()
    if len(parts) != 8:
        raise ValueError(f"expected 8 fields in TUM line, got {len(parts)}: {line!r}")
    ts, tx, ty, tz, qx, qy, qz, qw = (float(p) for p in parts)
    return ts, Pose(np.array([qw, qx, qy, qz]), np.array([tx, ty, tz]))


def write_trajectory(path, stamped_poses, header: str = "") -> None:
    """Write (timestamp, Pose) pairs as TUM lines; '#' comment header optional."""
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        if header:
            for line in header.splitlines():
                f.write(f"# {line}\n")
        for ts, pose in stamped_poses:
            f.write(format_tum_line(ts, pose) + "\n")


def read_trajectory(path):
    out = []
    with open(path, "r", encoding="utf-8") as f:
        for line in f:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            out.append(parse_tum_line(line))
    return out
