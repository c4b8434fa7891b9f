"""Saliency evaluation metrics scored against fixation data.

Metric order within an EvalVector is a fixed contract:
auc_judd, auc_borji, sauc, nss, cc, sim, kl_div, info_gain.

Conventions (the benchmark-standard ones): population std for NSS, KL is
KL(fixation density || saliency) in nats, IG in bits. Randomized metrics take
an explicit Generator; evaluate_all derives one per metric from the config
seed so results are independent of evaluation order.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import rankdata

from .errors import (
    ConfigError,
    DataError,
    DegenerateMapError,
    NoFixationError,
    ShapeError,
)
from .gaze_data import DensityMap, FixationMap
from .imaging import _resize_plane
from .models import SaliencyMap, center_gaussian
from .rng import derive_rng

METRIC_ORDER = ("auc_judd", "auc_borji", "sauc", "nss", "cc", "sim", "kl_div", "info_gain")

EPS = 1e-12


@dataclass(frozen=True)
class EvalVector:
    """p metric scores for one (saliency map, fixation data) pair."""

    values: tuple
    metric_ids: tuple
    degenerate: bool = False

    def __post_init__(self):
        if len(self.values) != len(self.metric_ids) or not self.values:
            raise DataError("EvalVector values and metric_ids must align and be non-empty")
        if any(not np.isfinite(v) for v in self.values):
            raise DataError(f"non-finite metric value in {dict(zip(self.metric_ids, self.values))}")


@dataclass(frozen=True)
class ShuffleSet:
    """Negative-sample coordinates drawn from other images' fixations."""

    coords: frozenset

    def __post_init__(self):
        if not self.coords:
            raise DataError("shuffle set must be nonempty")


@dataclass(frozen=True)
class MetricConfig:
    enabled: tuple = METRIC_ORDER
    n_splits: int = 100
    seed: int = 0

    def __post_init__(self):
        unknown = [m for m in self.enabled if m not in METRIC_ORDER]
        if unknown:
            raise ConfigError(f"unknown metric ids {unknown}; known: {list(METRIC_ORDER)}")
        if not self.enabled:
            raise ConfigError("at least one metric must be enabled")
        if self.n_splits < 1:
            raise ConfigError("n_splits must be >= 1")
        # canonical order regardless of how the config listed them
        object.__setattr__(self, "enabled", tuple(m for m in METRIC_ORDER if m in set(self.enabled)))


def _sal_values(s) -> np.ndarray:
    return s.values if isinstance(s, SaliencyMap) else np.asarray(s, dtype=np.float64)


def _check_dims(s: np.ndarray, width: int, height: int) -> None:
    if s.shape != (height, width):
        raise ShapeError(f"saliency map {s.shape} does not match fixation grid {(height, width)}")


def _hit_values(s: np.ndarray, fix: FixationMap) -> np.ndarray:
    if not fix.hits:
        raise NoFixationError("fixation map has no hits")
    hits = sorted(fix.hits)
    return np.array([s[y, x] for (x, y) in hits])


def nss(s, fix: FixationMap) -> float:
    """Mean standardized saliency at fixated pixels (population std)."""
    s = _sal_values(s)
    _check_dims(s, fix.width, fix.height)
    std = s.std()
    if std == 0:
        raise DegenerateMapError("constant saliency map has no NSS")
    return float((_hit_values(s, fix) - s.mean()).mean() / std)


def cc(s, density: DensityMap) -> float:
    """Pearson correlation between saliency and fixation density, all pixels."""
    s = _sal_values(s)
    _check_dims(s, density.width, density.height)
    d = density.values
    if s.std() == 0 or d.std() == 0:
        raise DegenerateMapError("cc undefined for a constant map")
    return float(np.corrcoef(s.ravel(), d.ravel())[0, 1])


def _to_prob(s: np.ndarray) -> np.ndarray:
    total = s.sum()
    if total <= 0:
        raise DegenerateMapError("all-zero saliency map cannot be renormalized")
    return s / total


def sim(s, density: DensityMap) -> float:
    """Histogram intersection of the sum-normalized maps."""
    s = _sal_values(s)
    _check_dims(s, density.width, density.height)
    return float(np.minimum(_to_prob(s), density.values).sum())


def kl_div(s, density: DensityMap) -> float:
    """KL(density || normalized saliency) in nats; zero-density cells contribute 0."""
    s = _sal_values(s)
    _check_dims(s, density.width, density.height)
    total = s.sum()
    sp = s / total if total > 0 else s
    d = density.values
    mask = d > 0
    return float((d[mask] * np.log(d[mask] / (sp[mask] + EPS))).sum())


def auc_judd(s, fix: FixationMap) -> float:
    """ROC area, negatives = all non-fixated pixels; ties count half."""
    s = _sal_values(s)
    _check_dims(s, fix.width, fix.height)
    if not fix.hits:
        raise NoFixationError("fixation map has no hits")
    mask = fix.to_array()
    pos = s[mask]
    neg = s[~mask]
    if neg.size == 0:
        raise DataError("every pixel is fixated; negatives undefined")
    ranks = rankdata(np.concatenate([pos, neg]))
    u = ranks[: pos.size].sum() - pos.size * (pos.size + 1) / 2.0
    return float(u / (pos.size * neg.size))


_THRESHOLDS = np.linspace(1.0, 0.0, 101)


def _threshold_roc_area(pos: np.ndarray, neg: np.ndarray) -> float:
    tp = (pos[None, :] >= _THRESHOLDS[:, None]).mean(axis=1)
    fp = (neg[None, :] >= _THRESHOLDS[:, None]).mean(axis=1)
    tp = np.concatenate([[0.0], tp, [1.0]])
    fp = np.concatenate([[0.0], fp, [1.0]])
    return float(np.trapz(tp, fp))


def auc_borji(s, fix: FixationMap, n_splits: int, rng: np.random.Generator) -> float:
    """Mean ROC area over splits; each samples |hits| random non-fixated pixels."""
    s = _sal_values(s)
    _check_dims(s, fix.width, fix.height)
    pos = _hit_values(s, fix)
    mask = fix.to_array()
    pool = s[~mask]
    if pool.size == 0:
        raise DataError("every pixel is fixated; negatives undefined")
    areas = [
        _threshold_roc_area(pos, pool[rng.integers(0, pool.size, size=pos.size)])
        for _ in range(n_splits)
    ]
    return float(np.mean(areas))


def sauc(s, fix: FixationMap, shuffle: ShuffleSet, n_splits: int, rng: np.random.Generator) -> float:
    """Shuffled AUC: negatives drawn from other images' fixations, minus own hits."""
    s = _sal_values(s)
    _check_dims(s, fix.width, fix.height)
    pos = _hit_values(s, fix)
    negatives = sorted(shuffle.coords - fix.hits)
    if not negatives:
        raise DataError("shuffle set is contained in the fixations; no negatives left")
    for (x, y) in negatives:
        if not (0 <= x < fix.width and 0 <= y < fix.height):
            raise DataError(f"shuffle coordinate ({x},{y}) outside {fix.width}x{fix.height}")
    pool = np.array([s[y, x] for (x, y) in negatives])
    areas = [
        _threshold_roc_area(pos, pool[rng.integers(0, pool.size, size=pos.size)])
        for _ in range(n_splits)
    ]
    return float(np.mean(areas))


def info_gain(s, fix: FixationMap, baseline: DensityMap) -> float:
    """Mean log2 advantage over the baseline density at fixations, in bits."""
    s = _sal_values(s)
    _check_dims(s, fix.width, fix.height)
    if not fix.hits:
        raise NoFixationError("fixation map has no hits")
    _check_dims(baseline.values, fix.width, fix.height)
    sp = _to_prob(s)
    hits = sorted(fix.hits)
    gains = [
        np.log2(EPS + sp[y, x]) - np.log2(EPS + baseline.values[y, x]) for (x, y) in hits
    ]
    return float(np.mean(gains))


def default_baseline(width: int, height: int) -> DensityMap:
    g = center_gaussian(width, height).values
    return DensityMap(g / g.sum())


def evaluate_all(
    s,
    fix: FixationMap,
    density: DensityMap,
    shuffle=None,
    baseline=None,
    config: MetricConfig = MetricConfig(),
) -> EvalVector:
    """Score every enabled metric in canonical order.

    The saliency map is bilinearly resized to the fixation grid first. A
    constant map falls back to chance values (0.5 AUCs, 0 NSS/CC; SIM, KL and
    IG computed against the uniform distribution) with the degenerate flag set
    instead of erroring, so whole-dataset runs survive flat model output.
    """
    if not fix.hits:
        raise NoFixationError("fixation map has no hits")
    sv = _sal_values(s)
    if sv.shape != (fix.height, fix.width):
        sv = _resize_plane(sv, fix.width, fix.height)
    degenerate = sv.max() - sv.min() <= 0
    if baseline is None:
        baseline = default_baseline(fix.width, fix.height)
    if degenerate:
        uniform = np.full((fix.height, fix.width), 1.0 / (fix.height * fix.width))

    values = []
    for mid in config.enabled:
        if mid == "auc_judd":
            v = 0.5 if degenerate else auc_judd(sv, fix)
        elif mid == "auc_borji":
            v = 0.5 if degenerate else auc_borji(
                sv, fix, config.n_splits, derive_rng(config.seed, "auc_borji")
            )
        elif mid == "sauc":
            if shuffle is None:
                raise ConfigError("sauc enabled but no shuffle set supplied")
            v = 0.5 if degenerate else sauc(
                sv, fix, shuffle, config.n_splits, derive_rng(config.seed, "sauc")
            )
        elif mid == "nss":
            v = 0.0 if degenerate else nss(sv, fix)
        elif mid == "cc":
            v = 0.0 if degenerate else cc(sv, density)
        elif mid == "sim":
            v = sim(uniform, density) if degenerate else sim(sv, density)
        elif mid == "kl_div":
            v = kl_div(uniform, density) if degenerate else kl_div(sv, density)
        elif mid == "info_gain":
            v = info_gain(uniform, fix, baseline) if degenerate else info_gain(sv, fix, baseline)
        else:  # pragma: no cover - enabled is validated
            raise ConfigError(f"unknown metric {mid!r}")
        values.append(float(v))
    return EvalVector(values=tuple(values), metric_ids=tuple(config.enabled), degenerate=degenerate)
