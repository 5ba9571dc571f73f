"""Run configuration: flat INI-style sections parsed into module configs.

Unknown sections or keys are rejected with diagnostics naming the file,
section and key. CLI flags override config values, which override the
defaults below.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field as dc_field

import numpy as np

from .errors import ConfigError
from .field import RenderOptions
from .geom import CameraModel
from .localize import LocalizeOptions
from .synthdata import SCENE_PRESETS, TrajectoryParams
from .training import TrainConfig


def _vec3(text):
    parts = text.replace(",", " ").split()
    if len(parts) != 3:
        raise ValueError(f"expected 3 numbers, got {text!r}")
    return tuple(float(p) for p in parts)


def _bool(text):
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"expected a boolean, got {text!r}")


# section -> key -> (parser, default)
SCHEMA = {
    "run": {
        "seed": (int, 0),
        "threads": (int, 1),
        "mode": (str, "field"),
        "out": (str, "out"),
    },
    "scene": {
        "preset": (str, "blockworld"),
        "extent": (float, 4.4),
        "height": (float, 2.4),
        "seed": (int, 0),
    },
    "camera": {
        "width": (int, 320),
        "height": (int, 240),
        "fov_deg": (float, 65.0),
    },
    "field": {
        "dims": (_vec3, (64.0, 64.0, 64.0)),
        # "auto" takes the scene preset's box
        "bbox_min": (str, "auto"),
        "bbox_max": (str, "auto"),
    },
    "render": {
        "samples_per_ray": (int, 96),
        "t_near": (float, 0.3),
        "t_far": (float, 6.5),
        "background": (_vec3, (1.0, 1.0, 1.0)),
        "stratified": (_bool, False),
    },
    "trajectory": {
        "kind": (str, "orbit"),
        "length": (float, 10.0),
        "n_poses": (int, 20),
        "radius": (float, 3.0),
        "height": (float, 1.5),
        "center": (_vec3, (0.0, 0.0, 0.6)),
        "start_angle": (float, 0.0),
        "start": (_vec3, (0.0, 0.0, 1.5)),
        "direction": (_vec3, (1.0, 0.0, 0.0)),
        "lateral": (_vec3, (0.0, 1.0, 0.0)),
        "rows": (int, 2),
        "width": (float, 2.0),
        "rate_hz": (float, 10.0),
    },
    "dataset": {
        "role": (str, "map"),
        "noise_sigma": (float, 0.0),
        "blur_fraction": (float, 0.0),
        "blur_kernel": (int, 5),
        "keep_fraction": (float, 1.0),
        "holdout_fraction": (float, 0.1),
    },
    "train": {
        "iterations": (int, 2000),
        "rays_per_batch": (int, 8192),
        "learning_rate": (float, 0.3),
        "color_learning_rate": (float, 0.15),
        "beta1": (float, 0.9),
        "beta2": (float, 0.95),
        "eps": (float, 1e-8),
        "lambda_tv": (float, 1e-5),
        "psnr_floor": (float, 0.0),
    },
    "localize": {
        "n_references": (int, 2),
        "lateral_offset": (float, 0.2),
        "ransac_iterations": (int, 1000),
        "inlier_threshold_px": (float, 3.0),
        "min_inliers": (int, 12),
        "refine_iterations": (int, 10),
        "max_keypoints": (int, 800),
        "fast_threshold": (float, 0.05),
        "nms_radius": (int, 4),
        "max_distance": (int, 64),
        "ratio_threshold": (float, 0.8),
    },
}


@dataclass
class RunConfig:
    values: dict  # section -> key -> parsed value

    def __getitem__(self, section):
        return self.values[section]

    @property
    def seed(self):
        return self.values["run"]["seed"]

    @property
    def threads(self):
        return self.values["run"]["threads"]

    @property
    def mode(self):
        return self.values["run"]["mode"]

    def camera(self) -> CameraModel:
        c = self.values["camera"]
        return CameraModel.from_fov(c["width"], c["height"], c["fov_deg"])

    def scene_spec(self):
        s = self.values["scene"]
        if s["preset"] not in SCENE_PRESETS:
            raise ConfigError(f"[scene] preset: unknown preset {s['preset']!r} "
                              f"(choose from {sorted(SCENE_PRESETS)})")
        return SCENE_PRESETS[s["preset"]](extent=s["extent"], height=s["height"],
                                          seed=s["seed"])

    def field_dims(self):
        return tuple(int(d) for d in self.values["field"]["dims"])

    def field_bbox(self):
        """(bbox_min, bbox_max) for the trained field; 'auto' uses the scene box."""
        f = self.values["field"]
        scene = self.scene_spec()
        bmin = (np.asarray(scene.bbox_min, dtype=np.float64) if f["bbox_min"] == "auto"
                else np.array(_vec3(f["bbox_min"])))
        bmax = (np.asarray(scene.bbox_max, dtype=np.float64) if f["bbox_max"] == "auto"
                else np.array(_vec3(f["bbox_max"])))
        return bmin, bmax

    def render_options(self) -> RenderOptions:
        r = self.values["render"]
        return RenderOptions(samples_per_ray=r["samples_per_ray"], t_near=r["t_near"],
                             t_far=r["t_far"], background=tuple(r["background"]),
                             stratified=r["stratified"], seed=self.seed)

    def trajectory_params(self) -> TrajectoryParams:
        t = self.values["trajectory"]
        return TrajectoryParams(length=t["length"], center=t["center"],
                                radius=t["radius"], height=t["height"],
                                start_angle=t["start_angle"], start=t["start"],
                                direction=t["direction"], lateral=t["lateral"],
                                rows=t["rows"], width=t["width"], rate_hz=t["rate_hz"])

    def train_config(self) -> TrainConfig:
        t = self.values["train"]
        return TrainConfig(iterations=t["iterations"], rays_per_batch=t["rays_per_batch"],
                           learning_rate=t["learning_rate"],
                           color_learning_rate=t["color_learning_rate"],
                           beta1=t["beta1"], beta2=t["beta2"], eps=t["eps"],
                           lambda_tv=t["lambda_tv"],
                           holdout_fraction=self.values["dataset"]["holdout_fraction"],
                           seed=self.seed)

    def localize_options(self) -> LocalizeOptions:
        lo = self.values["localize"]
        return LocalizeOptions(n_references=lo["n_references"],
                               lateral_offset=lo["lateral_offset"],
                               ransac_iterations=lo["ransac_iterations"],
                               inlier_threshold_px=lo["inlier_threshold_px"],
                               min_inliers=lo["min_inliers"], seed=self.seed,
                               refine_iterations=lo["refine_iterations"],
                               max_keypoints=lo["max_keypoints"],
                               fast_threshold=lo["fast_threshold"],
                               nms_radius=lo["nms_radius"],
                               max_distance=lo["max_distance"],
                               ratio_threshold=lo["ratio_threshold"])


def default_config() -> RunConfig:
    return RunConfig({sec: {k: v for k, (_p, v) in keys.items()}
                      for sec, keys in SCHEMA.items()})


def load_config(path=None, overrides=None) -> RunConfig:
    """Parse an INI config file and apply override pairs.

    overrides is an iterable of (section, key, value-string) applied after
    the file, e.g. from CLI flags.
    """
    cfg = default_config()
    if path is not None:
        parser = configparser.ConfigParser(interpolation=None)
        try:
            with open(path, "r", encoding="utf-8") as f:
                parser.read_file(f, source=str(path))
        except OSError:
            raise
        except configparser.Error as exc:
            raise ConfigError(f"{path}: {exc}") from exc
        for section in parser.sections():
            if section not in SCHEMA:
                raise ConfigError(f"{path}: [{section}]: unknown section "
                                  f"(known: {sorted(SCHEMA)})")
            for key, raw in parser.items(section):
                if key not in SCHEMA[section]:
                    raise ConfigError(f"{path}: [{section}] {key}: unknown key "
                                      f"(known: {sorted(SCHEMA[section])})")
                parse, _default = SCHEMA[section][key]
                try:
                    cfg.values[section][key] = parse(raw)
                except ValueError as exc:
                    raise ConfigError(f"{path}: [{section}] {key}: {exc}") from exc
    for section, key, raw in overrides or ():
        if section not in SCHEMA or key not in SCHEMA[section]:
            raise ConfigError(f"override {section}.{key}: unknown option")
        parse, _default = SCHEMA[section][key]
        try:
            cfg.values[section][key] = parse(raw) if isinstance(raw, str) else raw
        except ValueError as exc:
            raise ConfigError(f"override {section}.{key}: {exc}") from exc
    if cfg.values["run"]["mode"] not in ("field", "database"):
        raise ConfigError("run.mode must be 'field' or 'database'")
    return cfg
