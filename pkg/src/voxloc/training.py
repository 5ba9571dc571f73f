"""Photometric training of the voxel field with analytic gradients.

Loss = mean squared color error over the ray batch (mean over rays and
channels) + lambda_tv * mean squared difference of density over adjacent
voxel pairs. Optimized with Adam (separate density/color learning rates,
cosine decay to 10%); density is clamped to >= 0 and color to [0,1] after
every step (clamp-at-write storage).
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import DegenerateBoundsError, EmptyDatasetError
from .field import RadianceField, RenderOptions, psnr, render_image
from .geom import CameraModel, camera_rays


@dataclass
class TrainConfig:
    iterations: int = 2000
    rays_per_batch: int = 8192
    learning_rate: float = 0.3          # density
    color_learning_rate: float = 0.15
    beta1: float = 0.9
    beta2: float = 0.95
    eps: float = 1e-8
    lambda_tv: float = 1e-5
    holdout_fraction: float = 0.1
    lr_decay: bool = True               # cosine ramp down to 10%
    seed: int = 0

    def __post_init__(self):
        if self.iterations < 0:
            raise ValueError("iterations must be >= 0")
        if self.rays_per_batch <= 0 or self.learning_rate <= 0 or self.color_learning_rate <= 0:
            raise ValueError("rays_per_batch and learning rates must be positive")
        if not (0.0 < self.holdout_fraction < 1.0):
            raise ValueError("holdout_fraction must be in (0,1)")


@dataclass
class TrainReport:
    iterations: int
    loss_curve: list
    holdout_psnr: float
    holdout_indices: list
    elapsed_s: float


def tv_loss_and_grad(density):
    """Mean squared difference over axis-adjacent voxel pairs, with gradient."""
    n_pairs = 0
    loss = 0.0
    grad = np.zeros_like(density)
    for axis in range(3):
        if density.shape[axis] < 2:
            continue
        lo = [slice(None)] * 3
        hi = [slice(None)] * 3
        lo[axis] = slice(None, -1)
        hi[axis] = slice(1, None)
        d = density[tuple(hi)] - density[tuple(lo)]
        loss += float(np.sum(d * d))
        grad[tuple(hi)] += 2.0 * d
        grad[tuple(lo)] -= 2.0 * d
        n_pairs += d.size
    if n_pairs == 0:
        return 0.0, grad
    return loss / n_pairs, grad / n_pairs


def loss_and_gradient(field: RadianceField, origins, dirs, targets,
                      opts: RenderOptions, lambda_tv: float = 1e-5, jitter=None):
    """Loss and analytic gradient for one ray batch.

    Returns (loss, grad_density, grad_color) with gradients laid out like
    the field parameters.
    """
    origins = np.atleast_2d(np.asarray(origins, dtype=np.float64))
    targets = np.atleast_2d(np.asarray(targets, dtype=np.float64))
    n = len(origins)
    if n == 0:
        raise EmptyDatasetError("ray batch is empty")
    grad_d = np.zeros_like(field.density)
    grad_c = np.zeros_like(field.color)
    loss_sum, _rgb = _kernels.render_rays_grad(
        field.density, field.color, field.bbox_min, field.bbox_max,
        origins, dirs, opts.t_near, opts.t_far, opts.samples_per_ray,
        jitter, opts.background, targets, grad_d, grad_c)
    norm = 1.0 / (3.0 * n)
    loss = loss_sum * norm
    grad_d *= norm
    grad_c *= norm
    if lambda_tv > 0.0:
        tv, tv_grad = tv_loss_and_grad(field.density)
        loss += lambda_tv * tv
        grad_d += lambda_tv * tv_grad
    return loss, grad_d, grad_c


class Adam:
    """Adam over a list of parameter arrays with per-array learning rates."""

    def __init__(self, params, lrs, beta1=0.9, beta2=0.95, eps=1e-8):
        self.params = params
        self.lrs = list(lrs)
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]

    def step(self, grads, lr_scale: float = 1.0):
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        for p, g, m, v, lr in zip(self.params, grads, self.m, self.v, self.lrs):
            m *= b1
            m += (1 - b1) * g
            v *= b2
            v += (1 - b2) * g * g
            m_hat = m / (1 - b1 ** self.t)
            v_hat = v / (1 - b2 ** self.t)
            p -= (lr * lr_scale) * m_hat / (np.sqrt(v_hat) + self.eps)


def holdout_psnr(field: RadianceField, cam: CameraModel, poses, images,
                 opts: RenderOptions, indices, threads: int = 1) -> float:
    """Mean PSNR over the given image indices, rendered deterministically."""
    eval_opts = RenderOptions(samples_per_ray=opts.samples_per_ray,
                              t_near=opts.t_near, t_far=opts.t_far,
                              background=opts.background, stratified=False)
    vals = [psnr(render_image(field, cam, poses[i], eval_opts, threads=threads).rgb,
                 images[i]) for i in indices]
    return float(np.mean(vals))


def train(field: RadianceField, cam: CameraModel, poses, images,
          cfg: TrainConfig, render_opts: RenderOptions | None = None,
          holdout_indices=None, threads: int = 1) -> TrainReport:
    """Fit the field to posed images; the holdout split is never trained on."""
    n_img = len(images)
    if n_img < 2 or len(poses) != n_img:
        raise EmptyDatasetError(f"need >= 2 posed images, got {n_img}")
    centers = np.stack([p.t for p in poses])
    if float(np.max(np.linalg.norm(centers - centers[0], axis=1))) < 1e-12:
        raise DegenerateBoundsError("all cameras sit at a single point")
    opts = render_opts or RenderOptions()
    rng = np.random.Generator(np.random.PCG64(cfg.seed))

    if holdout_indices is None:
        n_hold = max(1, int(round(cfg.holdout_fraction * n_img)))
        if n_hold >= n_img:
            n_hold = n_img - 1
        holdout_indices = sorted(rng.permutation(n_img)[:n_hold].tolist())
    holdout_set = set(holdout_indices)
    train_indices = np.array([i for i in range(n_img) if i not in holdout_set])
    if len(train_indices) == 0:
        raise EmptyDatasetError("holdout split leaves no training images")

    # stacked per-image ray grids; pixel index is row-major y*W + x
    all_o = []
    all_d = []
    all_t = []
    for i in train_indices:
        o, d = camera_rays(cam, poses[i])
        all_o.append(o)
        all_d.append(d)
        all_t.append(np.asarray(images[i], dtype=np.float64).reshape(-1, 3))
    ray_o = np.stack(all_o)
    ray_d = np.stack(all_d)
    ray_t = np.stack(all_t)
    n_pix = cam.width * cam.height

    optimizer = Adam([field.density, field.color],
                     [cfg.learning_rate, cfg.color_learning_rate],
                     cfg.beta1, cfg.beta2, cfg.eps)
    losses = []
    t0 = time.perf_counter()
    for it in range(1, cfg.iterations + 1):
        img_idx = rng.integers(0, len(train_indices), size=cfg.rays_per_batch)
        pix_idx = rng.integers(0, n_pix, size=cfg.rays_per_batch)
        origins = ray_o[img_idx, pix_idx]
        dirs = ray_d[img_idx, pix_idx]
        tgt = ray_t[img_idx, pix_idx]
        jitter = (rng.random((cfg.rays_per_batch, opts.samples_per_ray))
                  if opts.stratified else None)
        loss, gd, gc = loss_and_gradient(field, origins, dirs, tgt, opts,
                                         lambda_tv=cfg.lambda_tv, jitter=jitter)
        losses.append(float(loss))
        scale = (0.1 + 0.9 * 0.5 * (1.0 + math.cos(math.pi * it / cfg.iterations))
                 if cfg.lr_decay else 1.0)
        optimizer.step([gd, gc], lr_scale=scale)
        np.maximum(field.density, 0.0, out=field.density)
        np.clip(field.color, 0.0, 1.0, out=field.color)
    elapsed = time.perf_counter() - t0

    hpsnr = holdout_psnr(field, cam, poses, images, opts, holdout_indices,
                         threads=threads)
    return TrainReport(iterations=cfg.iterations, loss_curve=losses,
                       holdout_psnr=hpsnr, holdout_indices=list(holdout_indices),
                       elapsed_s=elapsed)
