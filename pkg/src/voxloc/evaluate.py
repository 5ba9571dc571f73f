"""Trajectory metrics, storage accounting and report emission.

ATE is the RMS of per-frame translation residual norms (optionally after
closed-form rigid/similarity alignment); rotation error is the mean
geodesic angle. Both trajectories are expected in the shared map frame,
so the default is no alignment.
"""

from __future__ import annotations

import csv
import json
import os
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateError, NoPairsError
from .geom import Pose, rotation_error, write_trajectory

_ALIGNMENTS = ("none", "rigid", "similarity")


@dataclass
class TrajectoryEstimate:
    """Timestamped pose sequence with a per-frame status flag."""

    timestamps: list
    poses: list
    statuses: list

    def __post_init__(self):
        if not (len(self.timestamps) == len(self.poses) == len(self.statuses)):
            raise ValueError("timestamps, poses and statuses must align")
        if len(self.timestamps) > 1 and np.any(np.diff(np.asarray(self.timestamps)) <= 0):
            raise ValueError("timestamps must be strictly increasing")

    @staticmethod
    def from_stamped(stamped, status: str = "ok") -> "TrajectoryEstimate":
        return TrajectoryEstimate([ts for ts, _ in stamped], [p for _, p in stamped],
                                  [status] * len(stamped))

    def stamped(self):
        return list(zip(self.timestamps, self.poses))


@dataclass
class EvalReport:
    ate_rmse_m: float
    mean_rotation_error_rad: float
    translation_errors_m: list
    rotation_errors_rad: list
    frame_count: int
    failure_count: int
    map_bytes: int = 0
    db_bytes: int = 0


def associate(est: TrajectoryEstimate, gt: TrajectoryEstimate, max_dt: float = 0.02):
    """Greedy nearest-timestamp pairing; each side used once.

    Returns [(est_index, gt_index)] sorted by est index; raises NoPairsError
    when nothing pairs within max_dt.
    """
    if len(est.timestamps) == 0 or len(gt.timestamps) == 0:
        raise NoPairsError("empty trajectory")
    cands = []
    for i, te in enumerate(est.timestamps):
        for j, tg in enumerate(gt.timestamps):
            dt = abs(te - tg)
            if dt <= max_dt:
                cands.append((dt, i, j))
    cands.sort()
    used_e, used_g = set(), set()
    pairs = []
    for _, i, j in cands:
        if i in used_e or j in used_g:
            continue
        used_e.add(i)
        used_g.add(j)
        pairs.append((i, j))
    if not pairs:
        raise NoPairsError(f"no timestamp pairs within {max_dt} s")
    pairs.sort()
    return pairs


def align_umeyama(est_points, gt_points, with_scale: bool = False):
    """Closed-form (s, R, t) minimizing sum |s R e_i + t - g_i|^2.

    Rigid when with_scale is False (s = 1). Raises DegenerateError for
    coincident or collinear point sets.
    """
    e = np.asarray(est_points, dtype=np.float64)
    g = np.asarray(gt_points, dtype=np.float64)
    if len(e) < 3:
        raise DegenerateError("alignment needs >= 3 pairs")
    mu_e = e.mean(axis=0)
    mu_g = g.mean(axis=0)
    de = e - mu_e
    dg = g - mu_g
    cov = dg.T @ de / len(e)
    var_e = float(np.mean(np.sum(de * de, axis=1)))
    u, d, vt = np.linalg.svd(cov)
    if var_e < 1e-24 or d[1] < 1e-12 * max(d[0], 1e-300):
        raise DegenerateError("point set is coincident or collinear")
    s_mat = np.eye(3)
    if np.linalg.det(u) * np.linalg.det(vt) < 0:
        s_mat[2, 2] = -1.0
    r = u @ s_mat @ vt
    scale = float(np.trace(np.diag(d) @ s_mat) / var_e) if with_scale else 1.0
    t = mu_g - scale * (r @ mu_e)
    return scale, r, t


def _paired_arrays(est: TrajectoryEstimate, gt: TrajectoryEstimate, pairs):
    ep = np.stack([est.poses[i].t for i, _ in pairs])
    gp = np.stack([gt.poses[j].t for _, j in pairs])
    return ep, gp


def translation_errors(est, gt, pairs, alignment: str = "none"):
    """Per-pair translation residual norms in meters."""
    if alignment not in _ALIGNMENTS:
        raise ValueError(f"alignment must be one of {_ALIGNMENTS}")
    ep, gp = _paired_arrays(est, gt, pairs)
    if alignment != "none":
        s, r, t = align_umeyama(ep, gp, with_scale=(alignment == "similarity"))
        ep = s * (ep @ r.T) + t
    return np.linalg.norm(ep - gp, axis=1)


def ate_rmse(est, gt, pairs, alignment: str = "none") -> float:
    """Root-mean-square translation error over the paired frames."""
    err = translation_errors(est, gt, pairs, alignment)
    return float(np.sqrt(np.mean(err * err)))


def rotation_errors(est, gt, pairs):
    return np.array([rotation_error(est.poses[i], gt.poses[j]) for i, j in pairs])


def mean_rotation_error(est, gt, pairs) -> float:
    return float(np.mean(rotation_errors(est, gt, pairs)))


def storage_report(field_path, database_dir):
    """Byte sizes of the field map versus the image database.

    db_bytes counts every image file plus the poses file. Returns
    (map_bytes, db_bytes, ratio).
    """
    map_bytes = os.path.getsize(field_path)
    db_bytes = 0
    poses = os.path.join(database_dir, "poses.txt")
    if not os.path.exists(poses):
        raise OSError(f"missing poses file: {poses}")
    db_bytes += os.path.getsize(poses)
    images_dir = os.path.join(database_dir, "images")
    if os.path.isdir(images_dir):
        for name in sorted(os.listdir(images_dir)):
            db_bytes += os.path.getsize(os.path.join(images_dir, name))
    ratio = map_bytes / db_bytes if db_bytes else float("inf")
    return map_bytes, db_bytes, ratio


def make_report(est: TrajectoryEstimate, gt: TrajectoryEstimate, pairs,
                alignment: str = "none", map_bytes: int = 0,
                db_bytes: int = 0) -> EvalReport:
    terr = translation_errors(est, gt, pairs, alignment)
    rerr = rotation_errors(est, gt, pairs)
    failures = sum(1 for i, _ in pairs if est.statuses[i] != "ok")
    return EvalReport(
        ate_rmse_m=float(np.sqrt(np.mean(terr * terr))),
        mean_rotation_error_rad=float(np.mean(rerr)),
        translation_errors_m=terr.tolist(),
        rotation_errors_rad=rerr.tolist(),
        frame_count=len(pairs),
        failure_count=failures,
        map_bytes=map_bytes,
        db_bytes=db_bytes,
    )


def emit_report(report: EvalReport, est: TrajectoryEstimate, gt: TrajectoryEstimate,
                pairs, out_dir) -> None:
    """Write report.json, TUM trajectories and a per-frame errors.csv."""
    os.makedirs(out_dir, exist_ok=True)
    payload = {
        "ate_rmse_m": report.ate_rmse_m,
        "mean_rotation_error_rad": report.mean_rotation_error_rad,
        "frame_count": report.frame_count,
        "failure_count": report.failure_count,
        "map_bytes": report.map_bytes,
        "db_bytes": report.db_bytes,
        "storage_ratio": (report.map_bytes / report.db_bytes
                          if report.db_bytes else None),
    }
    with open(os.path.join(out_dir, "report.json"), "w", encoding="utf-8") as f:
        json.dump(payload, f, indent=2, sort_keys=True)
        f.write("\n")
    write_trajectory(os.path.join(out_dir, "trajectory_est.txt"), est.stamped(),
                     header="estimated trajectory: timestamp tx ty tz qx qy qz qw")
    write_trajectory(os.path.join(out_dir, "trajectory_gt.txt"), gt.stamped(),
                     header="ground truth: timestamp tx ty tz qx qy qz qw")
    with open(os.path.join(out_dir, "errors.csv"), "w", encoding="utf-8",
              newline="\n") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(["frame", "translation_err_m", "rotation_err_rad", "status"])
        for k, (i, _) in enumerate(pairs):
            writer.writerow([i, f"{report.translation_errors_m[k]:.9g}",
                             f"{report.rotation_errors_rad[k]:.9g}",
                             est.statuses[i]])
