"""Feature assembly: per-image evaluation vectors into design matrices.

A feature vector concatenates the p metric scores of every registered model,
so its dimension is T*p and its layout is the registry order crossed with the
canonical metric order. Subject rows average the per-trial vectors; task rows
score the union fixation map of all subjects on an image.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
import os
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError, LayoutError, ValidationError
from .gaze_data import (
    SUBJECT_MODE,
    TASK_MODE,
    DatasetManifest,
    FixationMap,
    blur_to_density,
    build_fixation_map,
    union_fixation_maps,
)
from .metrics import MetricConfig, ShuffleSet, evaluate_all
from .models import ModelRegistry, SaliencyBank
from .rng import derive_rng, derive_seed

SHUFFLE_POOL_CAP_FACTOR = 10


@dataclass(frozen=True)
class FeatureVector:
    values: tuple
    layout: tuple  # ordered (model_id, metric_id) pairs

    def __post_init__(self):
        if len(self.values) != len(self.layout):
            raise LayoutError(f"{len(self.values)} values for {len(self.layout)} layout slots")
        if any(not np.isfinite(v) for v in self.values):
            raise DataError("non-finite feature value")

    def __len__(self) -> int:
        return len(self.values)

    def slice_models(self, model_ids) -> "FeatureVector":
        keep = set(model_ids)
        pairs = [(v, slot) for v, slot in zip(self.values, self.layout) if slot[0] in keep]
        if not pairs:
            raise LayoutError(f"no layout slots match models {sorted(keep)}")
        return FeatureVector(
            values=tuple(v for v, _ in pairs), layout=tuple(s for _, s in pairs)
        )


@dataclass(frozen=True)
class LabeledSample:
    sample_id: str
    feature: FeatureVector
    label: int


@dataclass(frozen=True)
class DesignMatrix:
    rows: tuple
    mode: str
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.rows:
            raise DataError("design matrix has no rows")
        layout = self.rows[0].feature.layout
        for r in self.rows:
            if r.feature.layout != layout:
                raise LayoutError(f"row {r.sample_id!r} has a different feature layout")

    @property
    def layout(self) -> tuple:
        return self.rows[0].feature.layout

    def to_arrays(self):
        x = np.array([r.feature.values for r in self.rows], dtype=np.float64)
        y = np.array([r.label for r in self.rows], dtype=np.int64)
        return x, y

    def subset_models(self, model_ids) -> "DesignMatrix":
        rows = tuple(
            LabeledSample(r.sample_id, r.feature.slice_models(model_ids), r.label)
            for r in self.rows
        )
        prov = dict(self.provenance)
        prov["model_subset"] = sorted(model_ids)
        return DesignMatrix(rows=rows, mode=self.mode, provenance=prov)

    def subset_rows(self, indices) -> "DesignMatrix":
        return DesignMatrix(
            rows=tuple(self.rows[i] for i in indices), mode=self.mode, provenance=self.provenance
        )


@dataclass(frozen=True)
class EvalContext:
    """Everything one image's evaluation needs besides the maps themselves."""

    registry: ModelRegistry
    metric_config: MetricConfig
    run_seed: int
    image_id: str
    density_sigma: float
    shuffle: object = None  # ShuffleSet or None
    baseline: object = None  # DensityMap or None


def feature_layout(registry: ModelRegistry, metric_config: MetricConfig) -> tuple:
    return tuple((mid, metric) for mid in registry.model_ids for metric in metric_config.enabled)


def image_feature(f_star: FixationMap, bank: SaliencyBank, ctx: EvalContext) -> FeatureVector:
    """Concatenated metric scores of every model against one fixation map."""
    if bank.model_ids != ctx.registry.model_ids:
        raise LayoutError(
            f"bank models {bank.model_ids} do not match registry {ctx.registry.model_ids}"
        )
    density = blur_to_density(f_star, ctx.density_sigma)
    per_image_cfg = MetricConfig(
        enabled=ctx.metric_config.enabled,
        n_splits=ctx.metric_config.n_splits,
        seed=derive_seed(ctx.run_seed, "metrics", ctx.image_id),
    )
    shuffle = _cap_shuffle(ctx.shuffle, f_star, ctx.run_seed, ctx.image_id)
    values = []
    for smap in bank.maps:
        ev = evaluate_all(smap, f_star, density, shuffle, ctx.baseline, per_image_cfg)
        values.extend(ev.values)
    return FeatureVector(
        values=tuple(values), layout=feature_layout(ctx.registry, per_image_cfg)
    )


def _cap_shuffle(shuffle, f_star: FixationMap, run_seed: int, image_id: str):
    """Cap the shuffle pool at 10x the hit count by seeded subsampling."""
    if shuffle is None:
        return None
    cap = SHUFFLE_POOL_CAP_FACTOR * max(1, len(f_star.hits))
    coords = sorted(shuffle.coords)
    if len(coords) <= cap:
        return shuffle
    rng = derive_rng(run_seed, "shuffle_cap", image_id)
    idx = rng.choice(len(coords), size=cap, replace=False)
    return ShuffleSet(frozenset(coords[i] for i in idx))


def subject_feature(per_image_features) -> FeatureVector:
    """Element-wise mean over trials; fsum keeps it permutation-invariant."""
    feats = list(per_image_features)
    if not feats:
        raise DataError("cannot aggregate an empty list of feature vectors")
    layout = feats[0].layout
    for f in feats:
        if f.layout != layout:
            raise LayoutError("feature layouts differ across trials")
    n = len(feats)
    means = tuple(math.fsum(f.values[k] for f in feats) / n for k in range(len(layout)))
    return FeatureVector(values=means, layout=layout)


def task_feature(image_id: str, subject_maps, bank: SaliencyBank, ctx: EvalContext) -> FeatureVector:
    """Feature of the union fixation map of all subjects on one image."""
    merged = union_fixation_maps(subject_maps)
    return image_feature(merged, bank, ctx)


def build_shuffle_pools(manifest: DatasetManifest, maps_by_image: dict):
    """For each image, fixated coordinates of every *other* image, rescaled.

    maps_by_image: image_id -> FixationMap of all fixations on that image.
    Returns (pools, sources); sources records which image ids fed each pool so
    leakage can be audited downstream.
    """
    pools = {}
    sources = {}
    for target in manifest.images:
        coords = set()
        used = []
        for other in manifest.images:
            if other.image_id == target.image_id:
                continue
            fmap = maps_by_image.get(other.image_id)
            if fmap is None or not fmap.hits:
                continue
            used.append(other.image_id)
            sx = target.width / other.width
            sy = target.height / other.height
            for (x, y) in fmap.hits:
                nx = min(target.width - 1, int(math.floor(x * sx)))
                ny = min(target.height - 1, int(math.floor(y * sy)))
                coords.add((nx, ny))
        pools[target.image_id] = frozenset(coords)
        sources[target.image_id] = sorted(used)
    return pools, sources


def _pool_hash(coords) -> str:
    blob = json.dumps(sorted(coords))
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:16]


def build_design_matrix(
    manifest: DatasetManifest,
    records,
    banks: dict,
    registry: ModelRegistry,
    metric_config: MetricConfig,
    run_seed: int,
) -> DesignMatrix:
    """One row per subject (subject mode) or per labeled image (task mode).

    Subjects average over their trials with fixations, skipping empty trials
    with a warning count; a subject (or image) with nothing usable is excluded
    and reported. Any class ending up with zero rows is fatal.
    """
    by_subject_image = {}
    by_image = {}
    for r in records:
        by_subject_image.setdefault((r.subject_id, r.image_id), []).append(r)
        by_image.setdefault(r.image_id, []).append(r)

    union_maps = {}
    for im in manifest.images:
        recs = by_image.get(im.image_id, [])
        union_maps[im.image_id] = build_fixation_map(recs, im.width, im.height)

    sauc_enabled = "sauc" in metric_config.enabled
    pools, pool_sources = build_shuffle_pools(manifest, union_maps) if sauc_enabled else ({}, {})

    def ctx_for(image_id: str) -> EvalContext:
        im = manifest.image(image_id)
        shuffle = None
        if sauc_enabled:
            if not pools.get(image_id):
                raise DataError(f"empty sAUC shuffle pool for image {image_id!r}")
            shuffle = ShuffleSet(pools[image_id])
        return EvalContext(
            registry=registry,
            metric_config=metric_config,
            run_seed=run_seed,
            image_id=image_id,
            density_sigma=manifest.sigma_for(im),
            shuffle=shuffle,
        )

    rows = []
    skipped = {}
    excluded = []
    if manifest.mode == SUBJECT_MODE:
        for sid, label in sorted(manifest.subjects):
            feats = []
            empty = 0
            for im in sorted(manifest.images, key=lambda m: m.image_id):
                recs = by_subject_image.get((sid, im.image_id), [])
                fmap = build_fixation_map(recs, im.width, im.height)
                if not fmap.hits:
                    empty += 1
                    continue
                feats.append(image_feature(fmap, banks[im.image_id], ctx_for(im.image_id)))
            if empty:
                skipped[sid] = empty
            if not feats:
                excluded.append(sid)
                continue
            rows.append(LabeledSample(sid, subject_feature(feats), manifest.class_index(label)))
    elif manifest.mode == TASK_MODE:
        for im in sorted(manifest.images, key=lambda m: m.image_id):
            label = manifest.task_labels.get(im.image_id)
            if label is None:
                continue
            fmap = union_maps[im.image_id]
            if not fmap.hits:
                excluded.append(im.image_id)
                continue
            feat = image_feature(fmap, banks[im.image_id], ctx_for(im.image_id))
            rows.append(LabeledSample(im.image_id, feat, manifest.class_index(label)))
    else:
        raise DataError(f"unknown manifest mode {manifest.mode!r}")

    present = {r.label for r in rows}
    missing = [c for i, c in enumerate(manifest.class_names) if i not in present]
    if missing:
        raise ValidationError([f"class {c!r} has zero design-matrix rows" for c in missing])

    rows.sort(key=lambda r: r.sample_id)
    provenance = {
        "run_seed": run_seed,
        "mode": manifest.mode,
        "class_names": list(manifest.class_names),
        "positive_class": manifest.positive_class,
        "registry": list(registry.model_ids),
        "registry_hash": registry.content_hash(),
        "metrics": list(metric_config.enabled),
        "n_splits": metric_config.n_splits,
        "skipped_empty_trials": skipped,
        "excluded_samples": excluded,
        "shuffle_pools": {
            iid: {"sources": pool_sources[iid], "hash": _pool_hash(pools[iid])}
            for iid in sorted(pools)
        },
    }
    return DesignMatrix(rows=tuple(rows), mode=manifest.mode, provenance=provenance)


# ---------------------------------------------------------------------------
# CSV + provenance sidecar


def write_features_csv(matrix: DesignMatrix, path) -> None:
    header = ["sample_id", "label"] + [f"{m}.{k}" for (m, k) in matrix.layout]
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in matrix.rows:
            writer.writerow([row.sample_id, row.label] + [repr(float(v)) for v in row.feature.values])


def write_provenance(matrix: DesignMatrix, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(matrix.provenance, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_features_csv(path, mode: str, provenance=None) -> DesignMatrix:
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or header[:2] != ["sample_id", "label"]:
            raise DataError(f"{path}: not a feature CSV")
        layout = []
        for col in header[2:]:
            model, _, metric = col.partition(".")
            if not metric:
                raise DataError(f"{path}: bad feature column {col!r}")
            layout.append((model, metric))
        layout = tuple(layout)
        rows = []
        for line in reader:
            if not line:
                continue
            sample_id, label = line[0], int(line[1])
            values = tuple(float(v) for v in line[2:])
            rows.append(LabeledSample(sample_id, FeatureVector(values, layout), label))
    return DesignMatrix(rows=tuple(rows), mode=mode, provenance=provenance or {})
