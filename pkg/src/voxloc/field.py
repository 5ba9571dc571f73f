"""Explicit voxel radiance field: the map artifact.

The field stores per-voxel density (1/m) and RGB emission on a regular
grid inside an axis-aligned bounding box. Rendering uses the standard
emission-absorption quadrature with uniform sample spacing

    w_i = T_i * (1 - exp(-sigma_i * dt)),   T_i = exp(-sum_{j<i} sigma_j * dt)

so the composited color is sum(w_i c_i) + T_final * background, opacity is
sum(w_i) and depth is the opacity-weighted expected sample distance
(0 where opacity < 1e-6).
"""

from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass, field as dc_field

import numpy as np

from . import _kernels
from .errors import (BadMagicError, ChecksumMismatchError, DimensionMismatchError,
                     VersionUnsupportedError)
from .geom import CameraModel, Pose, Ray, camera_rays

FIELD_MAGIC = b"RFLD"
FIELD_VERSION = 1


@dataclass
class RadianceField:
    """Voxel grid of (density, rgb). Arrays are (nx,ny,nz) and (nx,ny,nz,3) float64."""

    bbox_min: np.ndarray
    bbox_max: np.ndarray
    density: np.ndarray
    color: np.ndarray
    version: int = FIELD_VERSION

    def __post_init__(self):
        self.bbox_min = np.asarray(self.bbox_min, dtype=np.float64).reshape(3)
        self.bbox_max = np.asarray(self.bbox_max, dtype=np.float64).reshape(3)
        if not np.all(self.bbox_max > self.bbox_min):
            raise ValueError("bbox_max must exceed bbox_min on every axis")
        self.density = np.ascontiguousarray(self.density, dtype=np.float64)
        self.color = np.ascontiguousarray(self.color, dtype=np.float64)
        if self.density.ndim != 3 or self.color.shape != self.density.shape + (3,):
            raise ValueError("density must be (nx,ny,nz) and color (nx,ny,nz,3)")
        # clamp-at-write storage invariants
        np.maximum(self.density, 0.0, out=self.density)
        np.clip(self.color, 0.0, 1.0, out=self.color)

    @staticmethod
    def zeros(dims, bbox_min, bbox_max, color_value=0.5) -> "RadianceField":
        nx, ny, nz = (int(d) for d in dims)
        return RadianceField(bbox_min, bbox_max,
                             np.zeros((nx, ny, nz)),
                             np.full((nx, ny, nz, 3), float(color_value)))

    @property
    def dims(self):
        return self.density.shape

    @property
    def voxel_size(self) -> np.ndarray:
        return (self.bbox_max - self.bbox_min) / np.array(self.dims, dtype=np.float64)

    def parameter_count(self) -> int:
        return self.density.size + self.color.size

    def sample(self, points):
        """(density, rgb) at world points (N,3) by trilinear interpolation.

        Outside the bounding box density is 0 and the color is black.
        """
        return _kernels.trilinear_sample(self.density, self.color,
                                         self.bbox_min, self.bbox_max, points)


@dataclass
class RenderOptions:
    samples_per_ray: int = 96
    t_near: float = 0.05
    t_far: float = 10.0
    background: tuple = (1.0, 1.0, 1.0)
    stratified: bool = False
    seed: int = 0

    def __post_init__(self):
        if not (0 < self.t_near < self.t_far):
            raise ValueError("need 0 < t_near < t_far")
        if self.samples_per_ray < 2:
            raise ValueError("samples_per_ray must be >= 2")


@dataclass
class RenderedView:
    """Rendered rgb/depth/opacity images sharing one (H, W) shape."""

    rgb: np.ndarray
    depth: np.ndarray
    opacity: np.ndarray

    def __post_init__(self):
        if self.rgb.shape[:2] != self.depth.shape or self.depth.shape != self.opacity.shape:
            raise ValueError("rgb, depth and opacity must share dimensions")


def _pixel_jitter(seed, n_rays, n_samples, first_index=0):
    """Stratified offsets in [0,1), reproducible per (seed, pixel index)."""
    gen = np.random.Generator(np.random.Philox(key=seed))
    if first_index:
        gen.random((first_index, n_samples))  # advance to the requested pixel
    return gen.random((n_rays, n_samples))


def render_rays(field: RadianceField, origins, dirs, opts: RenderOptions,
                jitter=None, threads: int = 1, chunk: int = 65536):
    """Quadrature over arbitrary rays; returns (rgb (N,3), depth (N,), opacity (N,)).

    Rays are processed in fixed-size chunks; per-ray results do not depend
    on chunking or thread count.
    """
    origins = np.atleast_2d(np.asarray(origins, dtype=np.float64))
    dirs = np.atleast_2d(np.asarray(dirs, dtype=np.float64))
    n = len(origins)
    if jitter is None and opts.stratified:
        jitter = _pixel_jitter(opts.seed, n, opts.samples_per_ray)
    rgb = np.empty((n, 3))
    depth = np.empty(n)
    opacity = np.empty(n)
    for lo in range(0, n, chunk):
        hi = min(lo + chunk, n)
        jit = None if jitter is None else jitter[lo:hi]
        r, d, trans, wsum = _kernels.render_rays(
            field.density, field.color, field.bbox_min, field.bbox_max,
            origins[lo:hi], dirs[lo:hi], opts.t_near, opts.t_far,
            opts.samples_per_ray, jit, opts.background, threads)
        rgb[lo:hi] = r
        depth[lo:hi] = d
        opacity[lo:hi] = wsum
    return rgb, depth, opacity


def render_ray(field: RadianceField, ray: Ray, opts: RenderOptions):
    """Render a single ray; returns (rgb (3,), depth, opacity)."""
    jitter = _pixel_jitter(opts.seed, 1, opts.samples_per_ray) if opts.stratified else None
    rgb, depth, opacity = render_rays(field, ray.origin[None], ray.direction[None],
                                      opts, jitter=jitter)
    return rgb[0], float(depth[0]), float(opacity[0])


def render_image(field: RadianceField, cam: CameraModel, pose: Pose,
                 opts: RenderOptions, threads: int = 1) -> RenderedView:
    """Render a full view. Deterministic for a fixed seed, any thread count."""
    origins, dirs = camera_rays(cam, pose)
    jitter = None
    if opts.stratified:
        jitter = _pixel_jitter(opts.seed, cam.height * cam.width, opts.samples_per_ray)
    rgb, depth, opacity = render_rays(field, origins, dirs, opts,
                                      jitter=jitter, threads=threads)
    shape = (cam.height, cam.width)
    return RenderedView(rgb.reshape(shape + (3,)), depth.reshape(shape),
                        opacity.reshape(shape))


def psnr(a, b) -> float:
    """Peak signal-to-noise ratio in dB for images in [0,1]; capped at 100."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise DimensionMismatchError(f"image shapes differ: {a.shape} vs {b.shape}")
    mse = float(np.mean((a - b) ** 2))
    if mse < 1e-10:
        return 100.0
    return 10.0 * np.log10(1.0 / mse)


# --- field file format (little-endian) ---
# magic 'RFLD' | u32 version | f32[6] bbox (min,max) | u32[3] dims
# | f32 density (x fastest) | f32 color (x fastest, rgb interleaved)
# | u32 CRC32 of all preceding bytes

def save_field(field: RadianceField, path) -> int:
    """Serialize; returns the byte count written (equals the file size)."""
    nx, ny, nz = field.dims
    head = FIELD_MAGIC + struct.pack("<I", FIELD_VERSION)
    head += struct.pack("<6f", *field.bbox_min, *field.bbox_max)
    head += struct.pack("<III", nx, ny, nz)
    dens = field.density.astype("<f4").tobytes(order="F")
    col = np.ascontiguousarray(np.transpose(field.color, (2, 1, 0, 3))).astype("<f4").tobytes()
    body = head + dens + col
    crc = struct.pack("<I", zlib.crc32(body) & 0xFFFFFFFF)
    blob = body + crc
    with open(path, "wb") as f:
        f.write(blob)
    return len(blob)


def load_field(path) -> RadianceField:
    with open(path, "rb") as f:
        blob = f.read()
    if len(blob) < 48 or blob[:4] != FIELD_MAGIC:
        raise BadMagicError(f"{path}: not a field file")
    (version,) = struct.unpack_from("<I", blob, 4)
    if version != FIELD_VERSION:
        raise VersionUnsupportedError(f"{path}: version {version} unsupported")
    (crc_stored,) = struct.unpack_from("<I", blob, len(blob) - 4)
    if zlib.crc32(blob[:-4]) & 0xFFFFFFFF != crc_stored:
        raise ChecksumMismatchError(f"{path}: CRC32 mismatch")
    bbox = struct.unpack_from("<6f", blob, 8)
    nx, ny, nz = struct.unpack_from("<III", blob, 32)
    n = nx * ny * nz
    expected = 44 + 16 * n + 4
    if len(blob) != expected:
        raise ChecksumMismatchError(f"{path}: size {len(blob)} != expected {expected}")
    dens = np.frombuffer(blob, dtype="<f4", count=n, offset=44)
    dens = np.ascontiguousarray(dens.reshape((nx, ny, nz), order="F"), dtype=np.float64)
    col = np.frombuffer(blob, dtype="<f4", count=3 * n, offset=44 + 4 * n)
    col = col.reshape((nz, ny, nx, 3)).transpose(2, 1, 0, 3)
    col = np.ascontiguousarray(col, dtype=np.float64)
    return RadianceField(np.array(bbox[:3], dtype=np.float64),
                         np.array(bbox[3:], dtype=np.float64), dens, col,
                         version=version)
