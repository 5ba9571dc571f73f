"""Binary PPM/PGM image files.

Color images are 8-bit binary PPM (P6). Depth images are 16-bit binary
PGM (P5) holding millimeters, big-endian sample order per the Netpbm
spec; 0 means undefined depth.
"""

from __future__ import annotations

import numpy as np


def _read_pnm_header(f, magic):
    if f.read(2) != magic:
        raise ValueError(f"not a {magic.decode()} file")
    fields = []
    while len(fields) < 3:
        line = f.readline()
        if not line:
            raise ValueError("truncated PNM header")
        text = line.split(b"#", 1)[0]
        fields.extend(int(tok) for tok in text.split())
    return fields[:3]


def write_ppm(path, rgb) -> None:
    """Write an (H,W,3) float image in [0,1] as 8-bit binary PPM."""
    rgb = np.asarray(rgb)
    h, w = rgb.shape[:2]
    data = np.clip(np.rint(rgb * 255.0), 0, 255).astype(np.uint8)
    with open(path, "wb") as f:
        f.write(b"P6\n%d %d\n255\n" % (w, h))
        f.write(data.tobytes())


def read_ppm(path) -> np.ndarray:
    """Read a binary PPM into an (H,W,3) float64 image in [0,1]."""
    with open(path, "rb") as f:
        w, h, maxval = _read_pnm_header(f, b"P6")
        if maxval != 255:
            raise ValueError(f"unsupported PPM maxval {maxval}")
        data = np.frombuffer(f.read(w * h * 3), dtype=np.uint8)
    return data.reshape(h, w, 3).astype(np.float64) / 255.0


def write_depth_pgm(path, depth_m) -> None:
    """Write a depth map (meters) as 16-bit PGM in millimeters (0 = undefined)."""
    depth_m = np.asarray(depth_m)
    h, w = depth_m.shape
    mm = np.clip(np.rint(depth_m * 1000.0), 0, 65535).astype(">u2")
    with open(path, "wb") as f:
        f.write(b"P5\n%d %d\n65535\n" % (w, h))
        f.write(mm.tobytes())


def read_depth_pgm(path) -> np.ndarray:
    """Read a 16-bit depth PGM back into meters."""
    with open(path, "rb") as f:
        w, h, maxval = _read_pnm_header(f, b"P5")
        if maxval != 65535:
            raise ValueError(f"unsupported depth PGM maxval {maxval}")
        mm = np.frombuffer(f.read(w * h * 2), dtype=">u2")
    return mm.reshape(h, w).astype(np.float64) / 1000.0
