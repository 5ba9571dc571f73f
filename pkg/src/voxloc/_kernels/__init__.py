"""Numeric kernels with a compiled core and a pure-NumPy fallback.

The Cython extension (``voxloc._kernels._native``) is preferred when it
built successfully; otherwise the NumPy implementation is used. Set
``VOXLOC_BACKEND=python`` or ``VOXLOC_BACKEND=native`` to force one
(forcing ``native`` raises if the extension is missing).

Both backends implement the same functions over float64/uint8 NumPy
arrays and agree to floating-point round-off.
"""

from __future__ import annotations

import os

import numpy as np

from . import _python

_requested = os.environ.get("VOXLOC_BACKEND", "").strip().lower()

if _requested in ("python", "numpy"):
    _impl = _python
elif _requested in ("", "native", "cython"):
    try:
        from . import _native as _impl  # type: ignore[no-redef]
    except ImportError:
        if _requested:
            raise
        _impl = _python
else:
    raise RuntimeError(f"unknown VOXLOC_BACKEND {_requested!r} (use 'native' or 'python')")

BACKEND = _impl.NAME


def available_backends():
    names = ["python"]
    try:
        from . import _native  # noqa: F401
        names.insert(0, "native")
    except ImportError:
        pass
    return names


def get_impl(name=None):
    """Return a backend module by name ('native' or 'python'); default is the active one."""
    if name is None:
        return _impl
    if name == "python":
        return _python
    if name == "native":
        from . import _native
        return _native
    raise ValueError(f"unknown backend {name!r}")


def _c64(a):
    return np.ascontiguousarray(a, dtype=np.float64)


def trilinear_sample(density, color, bbox_min, bbox_max, points, impl=None):
    points = np.atleast_2d(_c64(points))
    return (impl or _impl).trilinear_sample(
        _c64(density), _c64(color), _c64(bbox_min), _c64(bbox_max), points)


def render_rays(density, color, bbox_min, bbox_max, origins, dirs,
                t_near, t_far, n_samples, jitter=None, background=(1.0, 1.0, 1.0),
                n_threads=1, impl=None):
    origins = np.atleast_2d(_c64(origins))
    dirs = np.atleast_2d(_c64(dirs))
    if jitter is not None:
        jitter = _c64(jitter)
    return (impl or _impl).render_rays(
        _c64(density), _c64(color), _c64(bbox_min), _c64(bbox_max),
        origins, dirs, float(t_near), float(t_far), int(n_samples),
        jitter, _c64(background), int(n_threads))


def render_rays_grad(density, color, bbox_min, bbox_max, origins, dirs,
                     t_near, t_far, n_samples, jitter, background, targets,
                     grad_density, grad_color, impl=None):
    return (impl or _impl).render_rays_grad(
        _c64(density), _c64(color), _c64(bbox_min), _c64(bbox_max),
        np.atleast_2d(_c64(origins)), np.atleast_2d(_c64(dirs)),
        float(t_near), float(t_far), int(n_samples),
        None if jitter is None else _c64(jitter),
        _c64(background), np.atleast_2d(_c64(targets)), grad_density, grad_color)


def fast_score(gray, threshold, impl=None):
    return (impl or _impl).fast_score(_c64(gray), float(threshold))


def brief_describe(smoothed, xs, ys, pattern, impl=None):
    return (impl or _impl).brief_describe(
        _c64(smoothed), _c64(xs), _c64(ys),
        np.ascontiguousarray(pattern, dtype=np.int64))


def hamming_matrix(a, b, impl=None):
    return (impl or _impl).hamming_matrix(
        np.ascontiguousarray(a, dtype=np.uint8),
        np.ascontiguousarray(b, dtype=np.uint8))
