"""Command-line pipeline: synth | train | render | localize | eval.

Exit codes: 0 ok, 2 configuration error, 3 I/O error, 4 quality floor
violated, 5 localization failed on more than half the frames.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import __version__
from ._kernels import BACKEND
from .config import load_config
from .errors import ConfigError, VoxlocError
from .evaluate import (TrajectoryEstimate, associate, emit_report, make_report,
                       storage_report)
from .field import RadianceField, load_field, render_image, save_field
from .geom import Pose, format_tum_line, read_trajectory, parse_tum_line
from .imageio import write_depth_pgm, write_ppm
from .localize import FieldMap, ImageDatabase, run_sequence
from .synthdata import (filter_blurred, generate_trajectory, load_dataset,
                        make_dataset, save_dataset, voxelize_scene)
from .training import train

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_QUALITY = 4
EXIT_LOCALIZATION = 5


def _overrides(args):
    out = []
    if args.seed is not None:
        out.append(("run", "seed", str(args.seed)))
    if args.threads is not None:
        out.append(("run", "threads", str(args.threads)))
    if args.out is not None:
        out.append(("run", "out", args.out))
    if getattr(args, "mode", None):
        out.append(("run", "mode", args.mode))
    return out


def cmd_synth(args) -> int:
    cfg = load_config(args.config, _overrides(args))
    out_dir = cfg["run"]["out"]
    cam = cfg.camera()
    scene = cfg.scene_spec()
    gt = voxelize_scene(scene, cfg.field_dims())
    traj = generate_trajectory(cfg["trajectory"]["kind"], cfg.trajectory_params(),
                               cfg["trajectory"]["n_poses"])
    d = cfg["dataset"]
    ds = make_dataset(gt, cam, traj, render_opts=cfg.render_options(),
                      noise_sigma=d["noise_sigma"], blur_fraction=d["blur_fraction"],
                      blur_kernel=d["blur_kernel"], seed=cfg.seed,
                      threads=cfg.threads)
    n_total = len(ds)
    if d["keep_fraction"] < 1.0:
        ds = filter_blurred(ds, keep_fraction=d["keep_fraction"])
    n_kept = len(ds)
    if d["role"] == "query":
        ds.splits = {"query": list(range(n_kept))}
    else:
        n_hold = max(1, int(round(d["holdout_fraction"] * n_kept)))
        rng = np.random.Generator(np.random.PCG64(cfg.seed))
        hold = sorted(rng.permutation(n_kept)[:n_hold].tolist())
        hold_set = set(hold)
        ds.splits = {"train": [i for i in range(n_kept) if i not in hold_set],
                     "holdout": hold}
    save_dataset(ds, out_dir)
    print(f"synth: wrote {n_kept} images to {out_dir} "
          f"({n_total - n_kept} removed by blur filter)")
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = load_config(args.config, _overrides(args))
    ds = load_dataset(args.dataset)
    bbox_min, bbox_max = cfg.field_bbox()
    field = RadianceField.zeros(cfg.field_dims(), bbox_min, bbox_max)
    field.density += 0.05
    holdout = ds.splits.get("holdout")
    report = train(field, ds.camera, ds.poses, ds.images, cfg.train_config(),
                   render_opts=cfg.render_options(), holdout_indices=holdout,
                   threads=cfg.threads)
    out_field = args.out_field
    os.makedirs(os.path.dirname(os.path.abspath(out_field)), exist_ok=True)
    n_bytes = save_field(field, out_field)
    report_path = os.path.splitext(out_field)[0] + "_train_report.json"
    with open(report_path, "w", encoding="utf-8") as f:
        json.dump({"iterations": report.iterations,
                   "holdout_psnr_db": report.holdout_psnr,
                   "holdout_indices": report.holdout_indices,
                   "elapsed_s": report.elapsed_s,
                   "field_bytes": n_bytes,
                   "loss_curve": report.loss_curve}, f, indent=2)
        f.write("\n")
    print(f"train: holdout PSNR {report.holdout_psnr:.2f} dB, "
          f"field {n_bytes} bytes -> {out_field}")
    floor = cfg["train"]["psnr_floor"]
    if floor > 0 and report.holdout_psnr < floor:
        print(f"train: holdout PSNR below the configured floor of {floor:.2f} dB",
              file=sys.stderr)
        return EXIT_QUALITY
    return EXIT_OK


def cmd_render(args) -> int:
    cfg = load_config(args.config, _overrides(args))
    field = load_field(args.field)
    cam = cfg.camera()
    if args.pose is not None:
        stamped = [parse_tum_line("0.0 " + args.pose)]
    else:
        stamped = read_trajectory(args.poses)
    out_dir = cfg["run"]["out"]
    os.makedirs(out_dir, exist_ok=True)
    opts = cfg.render_options()
    for i, (_ts, pose) in enumerate(stamped):
        view = render_image(field, cam, pose, opts, threads=cfg.threads)
        write_ppm(os.path.join(out_dir, f"{i:06d}.ppm"), view.rgb)
        write_depth_pgm(os.path.join(out_dir, f"{i:06d}_depth.pgm"), view.depth)
    print(f"render: wrote {len(stamped)} rgb/depth pairs to {out_dir}")
    return EXIT_OK


def cmd_localize(args) -> int:
    cfg = load_config(args.config, _overrides(args))
    queries = load_dataset(args.queries)
    if len(queries) == 0:
        raise ConfigError("query dataset is empty")
    if cfg.mode == "field":
        if not args.map:
            raise ConfigError("--map FIELD_FILE is required in field mode")
        source = FieldMap(load_field(args.map), cfg.render_options())
    else:
        if not args.database:
            raise ConfigError("--database DIR is required in database mode")
        source = ImageDatabase(load_dataset(args.database))
    if args.initial_prior:
        _, prior = parse_tum_line("0.0 " + args.initial_prior)
    else:
        prior = queries.poses[0]  # ground-truth start from the query set
    est, records = run_sequence(source, queries.camera, queries, prior,
                                cfg.localize_options(), threads=cfg.threads)
    out_dir = cfg["run"]["out"]
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "frames.jsonl"), "w", encoding="utf-8") as f:
        for rec in records:
            pose = rec["pose"]
            f.write(json.dumps({
                "frame": rec["frame"],
                "status": rec["status"],
                "inliers": rec["inliers"],
                "matches": rec["matches"],
                "reproj_error_px": (None if not np.isfinite(rec["reproj_error_px"])
                                    else rec["reproj_error_px"]),
                "pose": format_tum_line(est.timestamps[rec["frame"]], pose),
                "elapsed_ms": rec["elapsed_ms"],
            }, sort_keys=True) + "\n")
    from .geom import write_trajectory
    write_trajectory(os.path.join(out_dir, "trajectory_est.txt"), est.stamped(),
                     header="estimated trajectory: timestamp tx ty tz qx qy qz qw")
    n_fail = sum(1 for s in est.statuses if s != "ok")
    print(f"localize: {len(est.statuses) - n_fail}/{len(est.statuses)} frames ok "
          f"-> {out_dir}")
    if n_fail * 2 > len(est.statuses):
        print("localize: more than half the frames failed", file=sys.stderr)
        return EXIT_LOCALIZATION
    return EXIT_OK


def cmd_eval(args) -> int:
    cfg = load_config(args.config, _overrides(args))
    est_stamped = read_trajectory(args.est)
    gt_stamped = read_trajectory(args.gt)
    statuses = ["ok"] * len(est_stamped)
    if args.frames and os.path.exists(args.frames):
        with open(args.frames, "r", encoding="utf-8") as f:
            recs = [json.loads(line) for line in f if line.strip()]
        statuses = [r["status"] for r in recs] if len(recs) == len(est_stamped) else statuses
    est = TrajectoryEstimate([t for t, _ in est_stamped], [p for _, p in est_stamped],
                             statuses)
    gt = TrajectoryEstimate.from_stamped(gt_stamped)
    pairs = associate(est, gt, max_dt=args.max_dt)
    map_bytes = db_bytes = 0
    if args.field and args.database:
        map_bytes, db_bytes, _ratio = storage_report(args.field, args.database)
    report = make_report(est, gt, pairs, alignment=args.alignment,
                         map_bytes=map_bytes, db_bytes=db_bytes)
    out_dir = cfg["run"]["out"]
    emit_report(report, est, gt, pairs, out_dir)
    print(f"eval: ATE {report.ate_rmse_m:.4f} m, mean rotation error "
          f"{report.mean_rotation_error_rad:.4f} rad over {report.frame_count} frames "
          f"-> {out_dir}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="voxloc",
        description="Radiance-field mapping and visual localization pipeline "
                    f"(kernel backend: {BACKEND})")
    parser.add_argument("--version", action="version", version=f"voxloc {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="INI config file")
        p.add_argument("--seed", type=int, help="override run.seed")
        p.add_argument("--threads", type=int, help="override run.threads")
        p.add_argument("--out", help="override run.out output directory")

    p = sub.add_parser("synth", help="generate a synthetic dataset on disk")
    common(p)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train a radiance field on a dataset")
    common(p)
    p.add_argument("--dataset", required=True, help="dataset directory from synth")
    p.add_argument("--out-field", required=True, help="output field file (.rfld)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("render", help="render rgb + depth images from a field")
    common(p)
    p.add_argument("--field", required=True, help="field file")
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--poses", help="TUM trajectory file to render")
    g.add_argument("--pose", help="single pose 'tx ty tz qx qy qz qw'")
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("localize", help="localize a query sequence against a map")
    common(p)
    p.add_argument("--queries", required=True, help="query dataset directory")
    p.add_argument("--map", help="field file (field mode)")
    p.add_argument("--database", help="image database directory (database mode)")
    p.add_argument("--mode", choices=["field", "database"], help="override run.mode")
    p.add_argument("--initial-prior", help="pose 'tx ty tz qx qy qz qw'; "
                                           "default: first query ground-truth pose")
    p.set_defaults(func=cmd_localize)

    p = sub.add_parser("eval", help="compare trajectories and report metrics")
    common(p)
    p.add_argument("--est", required=True, help="estimated TUM trajectory")
    p.add_argument("--gt", required=True, help="ground-truth TUM trajectory")
    p.add_argument("--frames", help="frames.jsonl from localize (status flags)")
    p.add_argument("--field", help="field file for the storage report")
    p.add_argument("--database", help="database directory for the storage report")
    p.add_argument("--alignment", choices=["none", "rigid", "similarity"],
                   default="none")
    p.add_argument("--max-dt", type=float, default=0.02,
                   help="association window in seconds")
    p.set_defaults(func=cmd_eval)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except VoxlocError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
