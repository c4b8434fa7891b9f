"""Synthetic images and group-differentiated gaze data.

Two (or more) subject groups sample fixations from different densities: a
saliency-follower group draws from the Itti-Koch map of each image, a
center-biased group from the center Gaussian, a noise group from the uniform
distribution. The mixing weight lambda interpolates each group's density with
uniform noise, so class separability is tunable down to indistinguishable.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .gaze_data import SUBJECT_MODE, TASK_MODE, FixationRecord, write_fixation_table
from .imaging import ImageBuffer, save_image
from .models import center_gaussian, itti_koch

BEHAVIOR_KINDS = ("saliency", "center", "uniform")


@dataclass(frozen=True)
class ClassBehavior:
    name: str
    kind: str
    weight: float  # lambda: behavior density share vs uniform noise

    def __post_init__(self):
        if self.kind not in BEHAVIOR_KINDS:
            raise ConfigError(f"behavior kind must be one of {BEHAVIOR_KINDS}, got {self.kind!r}")
        if not 0.0 <= self.weight <= 1.0:
            raise ConfigError(f"behavior weight must be in [0,1], got {self.weight}")


@dataclass(frozen=True)
class SynthConfig:
    behaviors: tuple
    n_images: int = 30
    width: int = 128
    height: int = 128
    subjects_per_class: int = 20
    fixations_per_trial: int = 8
    seed: int = 0

    def __post_init__(self):
        if len(self.behaviors) < 2:
            raise ConfigError("need at least 2 class behaviors")
        names = [b.name for b in self.behaviors]
        if len(set(names)) != len(names):
            raise ConfigError(f"duplicate class names: {names}")
        if self.width < 64 or self.height < 64:
            raise ConfigError(f"images must be at least 64x64, got {self.width}x{self.height}")
        if min(self.n_images, self.subjects_per_class, self.fixations_per_trial) < 1:
            raise ConfigError("n_images, subjects_per_class, fixations_per_trial must be >= 1")


_PALETTE = [
    (0.9, 0.1, 0.1),
    (0.1, 0.8, 0.2),
    (0.15, 0.25, 0.95),
    (0.95, 0.85, 0.1),
    (0.05, 0.05, 0.05),
    (0.98, 0.98, 0.98),
    (0.85, 0.2, 0.8),
]


def _paint_disk(canvas, rng):
    h, w, _ = canvas.shape
    r = int(rng.integers(max(3, min(w, h) // 16), min(w, h) // 6))
    cx = int(rng.integers(r, w - r))
    cy = int(rng.integers(r, h - r))
    ys, xs = np.mgrid[0:h, 0:w]
    mask = (xs - cx) ** 2 + (ys - cy) ** 2 <= r**2
    color = _PALETTE[int(rng.integers(len(_PALETTE)))]
    canvas[mask] = color


def _paint_grating(canvas, rng):
    h, w, _ = canvas.shape
    size = int(rng.integers(max(8, min(w, h) // 10), min(w, h) // 4))
    x0 = int(rng.integers(0, w - size))
    y0 = int(rng.integers(0, h - size))
    theta = rng.uniform(0, np.pi)
    freq = rng.uniform(0.2, 0.6)
    ys, xs = np.mgrid[0:size, 0:size]
    wave = 0.5 + 0.5 * np.sin(freq * (xs * np.cos(theta) + ys * np.sin(theta)))
    canvas[y0 : y0 + size, x0 : x0 + size] = wave[:, :, None]


def _paint_checker(canvas, rng):
    h, w, _ = canvas.shape
    size = int(rng.integers(max(8, min(w, h) // 10), min(w, h) // 4))
    x0 = int(rng.integers(0, w - size))
    y0 = int(rng.integers(0, h - size))
    cell = max(2, size // 6)
    ys, xs = np.mgrid[0:size, 0:size]
    checker = ((xs // cell + ys // cell) % 2).astype(np.float64)
    canvas[y0 : y0 + size, x0 : x0 + size] = checker[:, :, None]


def generate_images(cfg: SynthConfig, rng: np.random.Generator) -> list:
    """Gray canvases with 3-6 high-contrast blobs and textured patches."""
    painters = [_paint_disk, _paint_grating, _paint_checker]
    out = []
    for i in range(cfg.n_images):
        canvas = np.full((cfg.height, cfg.width, 3), 0.5)
        for _ in range(int(rng.integers(3, 7))):
            painters[int(rng.integers(len(painters)))](canvas, rng)
        out.append((f"img{i:03d}", ImageBuffer(np.clip(canvas, 0.0, 1.0))))
    return out


def sample_fixations_from_density(density, n: int, rng: np.random.Generator) -> list:
    """n i.i.d. pixel draws from the categorical distribution over the grid."""
    values = density.values if hasattr(density, "values") else np.asarray(density)
    h, w = values.shape
    flat = values.ravel()
    flat = flat / flat.sum()
    idx = rng.choice(h * w, size=n, p=flat)
    return [(int(i % w), int(i // w)) for i in idx]


def _behavior_density(kind: str, img: ImageBuffer) -> np.ndarray:
    h, w = img.height, img.width
    if kind == "saliency":
        values = itti_koch(img).values
        if values.sum() <= 0:
            values = np.ones((h, w))
    elif kind == "center":
        values = center_gaussian(w, h).values
    else:
        values = np.ones((h, w))
    return values / values.sum()


def _mixed_density(kind: str, weight: float, img: ImageBuffer) -> np.ndarray:
    base = _behavior_density(kind, img)
    uniform = np.full(base.shape, 1.0 / base.size)
    mixed = weight * base + (1.0 - weight) * uniform
    return mixed / mixed.sum()


def generate_dataset(cfg: SynthConfig, out_dir) -> dict:
    """Write images, fixation CSVs and manifests; returns the paths.

    A single RNG stream drives generation, so one seed fixes every byte.
    Emits a subject-mode dataset plus a task-mode variant in which each image
    appears once per class with that class's merged fixations under a
    per-class pseudo-subject.
    """
    rng = np.random.default_rng(cfg.seed)
    os.makedirs(out_dir, exist_ok=True)
    img_dir = os.path.join(out_dir, "images")
    os.makedirs(img_dir, exist_ok=True)

    images = generate_images(cfg, rng)
    for iid, img in images:
        save_image(img, os.path.join(img_dir, f"{iid}.png"))

    densities = {}
    for iid, img in images:
        densities[iid] = {b.name: _mixed_density(b.kind, b.weight, img) for b in cfg.behaviors}

    records = []
    subjects = []
    for behavior in cfg.behaviors:
        for s in range(cfg.subjects_per_class):
            sid = f"{behavior.name}_s{s:02d}"
            subjects.append((sid, behavior.name))
            for iid, img in images:
                coords = sample_fixations_from_density(
                    densities[iid][behavior.name], cfg.fixations_per_trial, rng
                )
                for k, (px, py) in enumerate(coords):
                    records.append(FixationRecord(sid, iid, k, px + 0.5, py + 0.5, None))

    fixations_path = os.path.join(out_dir, "fixations.csv")
    write_fixation_table(records, fixations_path)

    manifest = {
        "mode": SUBJECT_MODE,
        "class_names": [b.name for b in cfg.behaviors],
        "images": [
            {"id": iid, "path": os.path.join("images", f"{iid}.png"),
             "width": cfg.width, "height": cfg.height}
            for iid, _ in images
        ],
        "subjects": [{"id": sid, "label": label} for sid, label in subjects],
    }
    manifest_path = os.path.join(out_dir, "manifest.json")
    with open(manifest_path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")

    # task-mode variant: one pseudo-subject per class, image duplicated per class
    task_records = []
    for behavior in cfg.behaviors:
        group = f"group_{behavior.name}"
        for iid, _ in images:
            merged = [
                r for r in records
                if r.image_id == iid and r.subject_id.startswith(f"{behavior.name}_")
            ]
            for k, r in enumerate(merged):
                task_records.append(
                    FixationRecord(group, f"{iid}__{behavior.name}", k, r.x, r.y, r.duration_ms)
                )
    task_fixations_path = os.path.join(out_dir, "fixations_task.csv")
    write_fixation_table(task_records, task_fixations_path)

    task_manifest = {
        "mode": TASK_MODE,
        "class_names": [b.name for b in cfg.behaviors],
        "images": [
            {"id": f"{iid}__{b.name}", "path": os.path.join("images", f"{iid}.png"),
             "width": cfg.width, "height": cfg.height}
            for iid, _ in images
            for b in cfg.behaviors
        ],
        "subjects": [{"id": f"group_{b.name}", "label": b.name} for b in cfg.behaviors],
        "task_labels": {
            f"{iid}__{b.name}": b.name for iid, _ in images for b in cfg.behaviors
        },
    }
    task_manifest_path = os.path.join(out_dir, "manifest_task.json")
    with open(task_manifest_path, "w", encoding="utf-8") as fh:
        json.dump(task_manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")

    return {
        "manifest": manifest_path,
        "fixations": fixations_path,
        "task_manifest": task_manifest_path,
        "task_fixations": task_fixations_path,
        "image_dir": img_dir,
        "records": records,
    }
