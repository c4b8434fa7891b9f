"""Fixation data model and ingestion.

Fixation tables are UTF-8 CSV with header
``subject_id,image_id,index,x,y,duration_ms`` (duration may be empty).
Manifests are JSON with keys ``mode``, ``class_names``, ``images``,
``subjects`` and, for task mode, ``task_labels``.
"""

from __future__ import annotations

import csv
import json
import math
import os
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import DataError, DegenerateMapError, ParseError, ShapeError, ValidationError

FIXATION_HEADER = ["subject_id", "image_id", "index", "x", "y", "duration_ms"]

SUBJECT_MODE = "subject-classification"
TASK_MODE = "task-classification"


@dataclass(frozen=True)
class FixationRecord:
    subject_id: str
    image_id: str
    index: int
    x: float
    y: float
    duration_ms: Optional[float] = None

    def __post_init__(self):
        if self.index < 0:
            raise DataError(f"fixation index must be >= 0, got {self.index}")
        if self.duration_ms is not None and self.duration_ms < 0:
            raise DataError(f"duration_ms must be >= 0, got {self.duration_ms}")


@dataclass(frozen=True)
class FixationMap:
    """Binary occupancy map: the set of fixated integer pixels."""

    width: int
    height: int
    hits: frozenset
    dropped_count: int = 0

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0:
            raise DataError(f"invalid fixation map dimensions {self.width}x{self.height}")
        for (x, y) in self.hits:
            if not (0 <= x < self.width and 0 <= y < self.height):
                raise DataError(f"hit ({x},{y}) outside {self.width}x{self.height}")

    def to_array(self) -> np.ndarray:
        out = np.zeros((self.height, self.width), dtype=bool)
        for (x, y) in self.hits:
            out[y, x] = True
        return out


@dataclass(frozen=True)
class DensityMap:
    """Blurred fixation map normalized to a probability distribution."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 2 or v.size == 0:
            raise DataError("density map must be a non-empty 2-D grid")
        if v.min() < 0:
            raise DataError("density map values must be nonnegative")
        if abs(v.sum() - 1.0) > 1e-9:
            raise DataError(f"density map must sum to 1, got {v.sum()!r}")
        v.flags.writeable = False
        object.__setattr__(self, "values", v)

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class ManifestImage:
    image_id: str
    path: str
    width: int
    height: int


@dataclass(frozen=True)
class DatasetManifest:
    mode: str
    class_names: tuple
    images: tuple
    subjects: tuple  # (subject_id, label) pairs
    task_labels: Optional[dict] = None
    density_sigma: Optional[float] = None  # pixels; default width/32 per image
    positive_class: Optional[str] = None
    base_dir: str = "."

    _image_index: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "_image_index", {im.image_id: im for im in self.images})

    def image(self, image_id: str) -> ManifestImage:
        try:
            return self._image_index[image_id]
        except KeyError:
            raise DataError(f"unknown image id {image_id!r}") from None

    def image_path(self, image_id: str) -> str:
        return os.path.join(self.base_dir, self.image(image_id).path)

    def subject_label(self, subject_id: str) -> str:
        for sid, label in self.subjects:
            if sid == subject_id:
                return label
        raise DataError(f"unknown subject id {subject_id!r}")

    def class_index(self, label: str) -> int:
        try:
            return self.class_names.index(label)
        except ValueError:
            raise DataError(f"unknown class label {label!r}") from None

    def sigma_for(self, image: ManifestImage) -> float:
        if self.density_sigma is not None:
            return float(self.density_sigma)
        return image.width / 32.0


def parse_fixation_table(stream) -> list:
    """Parse a fixation CSV stream into records, order preserved."""
    reader = csv.reader(stream)
    try:
        header = next(reader)
    except StopIteration:
        raise ParseError("missing fixation table header") from None
    if [h.strip() for h in header] != FIXATION_HEADER:
        raise ParseError(f"bad fixation table header {header!r}, expected {FIXATION_HEADER!r}")
    records = []
    for lineno, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != 6:
            raise ParseError(f"expected 6 fields, got {len(row)}", line=lineno)
        sid, iid, idx_s, x_s, y_s, dur_s = (f.strip() for f in row)
        if not sid or not iid:
            raise ParseError("empty subject_id or image_id", line=lineno)
        try:
            idx = int(idx_s)
            x = float(x_s)
            y = float(y_s)
            dur = float(dur_s) if dur_s != "" else None
        except ValueError as exc:
            raise ParseError(f"non-numeric field ({exc})", line=lineno) from None
        try:
            records.append(FixationRecord(sid, iid, idx, x, y, dur))
        except DataError as exc:
            raise ParseError(str(exc), line=lineno) from None
    return records


def load_fixation_table(path) -> list:
    with open(path, "r", encoding="utf-8", newline="") as fh:
        return parse_fixation_table(fh)


def write_fixation_table(records, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(FIXATION_HEADER)
        for r in records:
            dur = "" if r.duration_ms is None else repr(float(r.duration_ms))
            writer.writerow([r.subject_id, r.image_id, r.index, repr(float(r.x)), repr(float(r.y)), dur])


def build_fixation_map(records, width: int, height: int) -> FixationMap:
    """Floor coordinates to pixels; out-of-bounds records are dropped, not clamped."""
    if width <= 0 or height <= 0:
        raise DataError(f"invalid dimensions {width}x{height}")
    hits = set()
    dropped = 0
    for r in records:
        if not (math.isfinite(r.x) and math.isfinite(r.y)):
            dropped += 1
            continue
        px, py = math.floor(r.x), math.floor(r.y)
        if 0 <= px < width and 0 <= py < height:
            hits.add((px, py))
        else:
            dropped += 1
    return FixationMap(width=width, height=height, hits=frozenset(hits), dropped_count=dropped)


def union_fixation_maps(maps) -> FixationMap:
    maps = list(maps)
    if not maps:
        raise DataError("cannot union an empty list of fixation maps")
    w, h = maps[0].width, maps[0].height
    hits = set()
    dropped = 0
    for m in maps:
        if (m.width, m.height) != (w, h):
            raise ShapeError(f"fixation map dimensions differ: {w}x{h} vs {m.width}x{m.height}")
        hits |= m.hits
        dropped += m.dropped_count
    return FixationMap(width=w, height=h, hits=frozenset(hits), dropped_count=dropped)


def blur_to_density(fmap: FixationMap, sigma: float) -> DensityMap:
    """Sum of per-hit truncated Gaussians (radius 3*sigma, renormalized at borders)."""
    if not fmap.hits:
        raise DegenerateMapError("cannot build a density map from zero fixations")
    if sigma < 0:
        raise DataError(f"sigma must be >= 0, got {sigma}")
    out = np.zeros((fmap.height, fmap.width), dtype=np.float64)
    n = len(fmap.hits)
    if sigma == 0:
        for (x, y) in fmap.hits:
            out[y, x] += 1.0 / n
        return DensityMap(out)
    radius = int(math.ceil(3.0 * sigma))
    ax = np.arange(-radius, radius + 1, dtype=np.float64)
    kernel = np.exp(-(ax[:, None] ** 2 + ax[None, :] ** 2) / (2.0 * sigma**2))
    for (x, y) in sorted(fmap.hits):
        y0, y1 = max(0, y - radius), min(fmap.height, y + radius + 1)
        x0, x1 = max(0, x - radius), min(fmap.width, x + radius + 1)
        patch = kernel[y0 - y + radius : y1 - y + radius, x0 - x + radius : x1 - x + radius]
        out[y0:y1, x0:x1] += patch / (patch.sum() * n)
    return DensityMap(out / out.sum())


def load_manifest(path) -> DatasetManifest:
    """Load and fully validate a dataset manifest; collects every failure."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError(f"cannot read manifest {path}: {exc}") from None
    problems = []
    mode = raw.get("mode")
    if mode not in (SUBJECT_MODE, TASK_MODE):
        problems.append(f"mode must be {SUBJECT_MODE!r} or {TASK_MODE!r}, got {mode!r}")
    class_names = tuple(raw.get("class_names", ()))
    if len(class_names) < 2:
        problems.append(f"need at least 2 class names, got {len(class_names)}")
    if len(set(class_names)) != len(class_names):
        problems.append("duplicate class names")

    base_dir = os.path.dirname(os.path.abspath(path))
    images = []
    seen_image_ids = set()
    for entry in raw.get("images", ()):
        iid = entry.get("id")
        if iid in seen_image_ids:
            problems.append(f"duplicate image id {iid!r}")
        seen_image_ids.add(iid)
        w, h = entry.get("width", 0), entry.get("height", 0)
        if not (isinstance(w, int) and isinstance(h, int)) or w <= 0 or h <= 0:
            problems.append(f"image {iid!r} has invalid dimensions {w}x{h}")
            continue
        img_path = os.path.join(base_dir, entry.get("path", ""))
        if not os.path.isfile(img_path):
            problems.append(f"image {iid!r} path not readable: {entry.get('path')!r}")
        images.append(ManifestImage(iid, entry.get("path", ""), w, h))
    if not images and not problems:
        problems.append("manifest lists no images")

    subjects = []
    seen_subject_ids = set()
    for entry in raw.get("subjects", ()):
        sid, label = entry.get("id"), entry.get("label")
        if sid in seen_subject_ids:
            problems.append(f"duplicate subject id {sid!r}")
        seen_subject_ids.add(sid)
        if label not in class_names:
            problems.append(f"subject {sid!r} has label {label!r} absent from class_names")
        subjects.append((sid, label))
    if not subjects:
        problems.append("manifest lists no subjects")

    task_labels = raw.get("task_labels")
    if mode == TASK_MODE:
        if not task_labels:
            problems.append("task-classification manifest requires task_labels")
        else:
            for iid, label in task_labels.items():
                if iid not in seen_image_ids:
                    problems.append(f"task_labels references unknown image {iid!r}")
                if label not in class_names:
                    problems.append(f"task_labels[{iid!r}] = {label!r} absent from class_names")

    positive_class = raw.get("positive_class")
    if positive_class is not None and positive_class not in class_names:
        problems.append(f"positive_class {positive_class!r} absent from class_names")

    density_sigma = raw.get("density_sigma")
    if density_sigma is not None and (not isinstance(density_sigma, (int, float)) or density_sigma < 0):
        problems.append(f"density_sigma must be a nonnegative number, got {density_sigma!r}")

    if problems:
        raise ValidationError(problems)
    return DatasetManifest(
        mode=mode,
        class_names=class_names,
        images=tuple(images),
        subjects=tuple(subjects),
        task_labels=dict(task_labels) if task_labels else None,
        density_sigma=density_sigma,
        positive_class=positive_class,
        base_dir=base_dir,
    )


def validate_records(manifest: DatasetManifest, records) -> None:
    """Every record's subject and image must resolve in the manifest."""
    subject_ids = {sid for sid, _ in manifest.subjects}
    image_ids = {im.image_id for im in manifest.images}
    problems = []
    for r in records:
        if r.subject_id not in subject_ids:
            problems.append(f"fixation references unknown subject {r.subject_id!r}")
        if r.image_id not in image_ids:
            problems.append(f"fixation references unknown image {r.image_id!r}")
    if problems:
        raise ValidationError(sorted(set(problems)))
