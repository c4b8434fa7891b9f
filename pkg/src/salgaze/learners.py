"""Classifier training, cross-validation protocols and report statistics.

Protocols mirror the experimental setups this pipeline is meant for:
leave-one-image-out and 50%-images splits act on task-mode matrices,
leave-one-subject-out and 50%-subjects on subject-mode matrices, k-fold on
either. Folds never split grouped rows because rows *are* the grouping unit
(one per subject or per labeled image).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.stats import rankdata

from .errors import ConfigError, DataError, ProtocolError
from .features import DesignMatrix
from .gbt import GbtConfig, gbt_train
from .rng import derive_rng
from .svm import SvmConfig, svm_train

SUBJECT_PROTOCOLS = {"loo_subject", "half_subjects"}
TASK_PROTOCOLS = {"loo_image", "half_images"}
PROTOCOLS = SUBJECT_PROTOCOLS | TASK_PROTOCOLS | {"kfold"}


@dataclass
class TrainedModel:
    kind: str  # "svm" | "gbt"
    model: object
    layout: tuple
    positive_index: int = 1

    def decision(self, x):
        return self.model.decision(x)


@dataclass
class CvReport:
    protocol: str
    seed: int
    pooled: dict
    folds: list = field(default_factory=list)
    skipped_folds: list = field(default_factory=list)
    config: dict = field(default_factory=dict)

    def to_json(self) -> str:
        payload = {
            "protocol": self.protocol,
            "seed": self.seed,
            "pooled": self.pooled,
            "folds": self.folds,
            "skipped_folds": self.skipped_folds,
            "config": self.config,
        }
        return json.dumps(payload, indent=2, sort_keys=True)


def train(matrix: DesignMatrix, kind: str, cfg, seed: int = 0) -> TrainedModel:
    """Fit an SVM or GBT on the full matrix."""
    x, y = matrix.to_arrays()
    if kind == "svm":
        model = svm_train(x, y, cfg, seed=seed)
    elif kind == "gbt":
        model = gbt_train(x, y, cfg, seed=seed)
    else:
        raise ConfigError(f"unknown learner kind {kind!r}")
    positive = _positive_index(matrix)
    return TrainedModel(kind=kind, model=model, layout=matrix.layout, positive_index=positive)


def _positive_index(matrix: DesignMatrix) -> int:
    names = matrix.provenance.get("class_names")
    designated = matrix.provenance.get("positive_class")
    if names and designated in names:
        return names.index(designated)
    if names:
        return names.index(min(names))  # lexicographically first
    return 1


def predict(model: TrainedModel, feature) -> tuple:
    """(label, real-valued score). SVM thresholds at 0, GBT probability at 0.5."""
    values = np.asarray(
        feature.values if hasattr(feature, "values") else feature, dtype=np.float64
    )
    if hasattr(feature, "layout") and tuple(feature.layout) != tuple(model.layout):
        raise DataError("feature layout does not match the trained model")
    if values.shape[-1] != len(model.layout):
        raise DataError(
            f"feature has {values.shape[-1]} dims, model expects {len(model.layout)}"
        )
    score = float(model.decision(values))
    if model.kind == "svm":
        label = 1 if score > 0 else 0
    else:
        label = 1 if score > 0.5 else 0
    return label, score


def mann_whitney_auc(scores: np.ndarray, positives: np.ndarray) -> float:
    """AUC with ties counted as half; positives is a boolean mask."""
    n_pos = int(positives.sum())
    n_neg = len(scores) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise DataError("AUC undefined with a single class")
    ranks = rankdata(scores)
    u = ranks[positives].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def classification_report(labels, predictions, scores, positive_index: int = 1) -> dict:
    """Accuracy, sensitivity, specificity and AUC for one prediction set.

    Sensitivity/specificity/AUC are None (absent) when their class is missing
    from the labels, never silently 0.
    """
    labels = np.asarray(labels, dtype=np.int64)
    predictions = np.asarray(predictions, dtype=np.int64)
    scores = np.asarray(scores, dtype=np.float64)
    if not (len(labels) == len(predictions) == len(scores)) or len(labels) == 0:
        raise DataError("labels, predictions and scores must be equal-length and nonempty")
    pos = labels == positive_index
    pred_pos = predictions == positive_index
    tp = int(np.sum(pos & pred_pos))
    tn = int(np.sum(~pos & ~pred_pos))
    fp = int(np.sum(~pos & pred_pos))
    fn = int(np.sum(pos & ~pred_pos))
    accuracy = (tp + tn) / len(labels)
    sensitivity = tp / (tp + fn) if (tp + fn) > 0 else None
    specificity = tn / (tn + fp) if (tn + fp) > 0 else None
    if pos.any() and (~pos).any():
        oriented = scores if positive_index == 1 else -scores
        auc = mann_whitney_auc(oriented, pos)
    else:
        auc = None
    return {
        "n": int(len(labels)),
        "accuracy": accuracy,
        "sensitivity": sensitivity,
        "specificity": specificity,
        "auc": auc,
        "confusion": {"tp": tp, "tn": tn, "fp": fp, "fn": fn},
    }


def make_folds(matrix: DesignMatrix, protocol: str, seed: int, k: int = 10) -> list:
    """(train_indices, test_indices) pairs per the named protocol."""
    if protocol not in PROTOCOLS:
        raise ConfigError(f"unknown protocol {protocol!r}; known: {sorted(PROTOCOLS)}")
    mode = matrix.mode
    if protocol in SUBJECT_PROTOCOLS and mode != "subject-classification":
        raise ProtocolError(f"protocol {protocol!r} requires a subject-mode matrix, got {mode!r}")
    if protocol in TASK_PROTOCOLS and mode != "task-classification":
        raise ProtocolError(f"protocol {protocol!r} requires a task-mode matrix, got {mode!r}")
    n = len(matrix.rows)
    indices = np.arange(n)
    if protocol in ("loo_image", "loo_subject"):
        return [(np.delete(indices, i), np.array([i])) for i in range(n)]
    if protocol in ("half_images", "half_subjects"):
        rng = derive_rng(seed, "folds", protocol)
        perm = rng.permutation(n)
        half = n // 2
        return [(np.sort(perm[:half]), np.sort(perm[half:]))]
    # k-fold
    if k < 2:
        raise ConfigError(f"k-fold needs k >= 2, got {k}")
    if k > n:
        raise ConfigError(f"k-fold with k={k} on {n} rows")
    rng = derive_rng(seed, "folds", "kfold", str(k))
    perm = rng.permutation(n)
    chunks = np.array_split(perm, k)
    return [
        (np.sort(np.concatenate([c for j, c in enumerate(chunks) if j != i])), np.sort(chunks[i]))
        for i in range(k)
    ]


def cross_validate(
    matrix: DesignMatrix,
    protocol: str,
    learner_kind: str,
    learner_cfg,
    seed: int,
    k: int = 10,
) -> CvReport:
    """Train/evaluate per fold; metrics are pooled over held-out predictions."""
    folds = make_folds(matrix, protocol, seed, k=k)
    positive = _positive_index(matrix)
    all_labels, all_preds, all_scores = [], [], []
    fold_rows = []
    skipped = []
    for fold_id, (train_idx, test_idx) in enumerate(folds):
        train_matrix = matrix.subset_rows(train_idx)
        try:
            model = train(train_matrix, learner_kind, learner_cfg, seed=seed)
        except DataError as exc:
            skipped.append({"fold": fold_id, "reason": str(exc)})
            continue
        labels, preds, scores = [], [], []
        for i in test_idx:
            row = matrix.rows[i]
            label, score = predict(model, row.feature)
            labels.append(row.label)
            preds.append(label)
            scores.append(score)
        all_labels += labels
        all_preds += preds
        all_scores += scores
        fold_rows.append(
            {
                "fold": fold_id,
                "test_ids": [matrix.rows[i].sample_id for i in test_idx],
                **classification_report(labels, preds, scores, positive),
            }
        )
    if not all_labels:
        raise DataError("every fold was skipped; nothing to report")
    pooled = classification_report(all_labels, all_preds, all_scores, positive)
    return CvReport(
        protocol=protocol,
        seed=seed,
        pooled=pooled,
        folds=fold_rows,
        skipped_folds=skipped,
        config={"learner": learner_kind, "k": k if protocol == "kfold" else None},
    )


def ablation_sweep(
    matrix: DesignMatrix,
    subset_sizes,
    repeats: int,
    protocol: str,
    learner_kind: str,
    learner_cfg,
    seed: int,
    k: int = 10,
) -> list:
    """Mean pooled accuracy over random model subsets of each size.

    Returns rows {size, mean_accuracy, std_accuracy, accuracies}. Model ids
    come from the matrix layout, so features are sliced, never recomputed.
    """
    model_ids = []
    for mid, _ in matrix.layout:
        if mid not in model_ids:
            model_ids.append(mid)
    t = len(model_ids)
    results = []
    for size in subset_sizes:
        if size < 1 or size > t:
            raise ConfigError(f"subset size {size} out of range 1..{t}")
        accs = []
        for rep in range(repeats):
            rng = derive_rng(seed, "ablate", str(size), str(rep))
            chosen = [model_ids[i] for i in rng.choice(t, size=size, replace=False)]
            sub = matrix.subset_models(chosen)
            report = cross_validate(sub, protocol, learner_kind, learner_cfg, seed, k=k)
            accs.append(report.pooled["accuracy"])
        results.append(
            {
                "size": int(size),
                "mean_accuracy": float(np.mean(accs)),
                "std_accuracy": float(np.std(accs)),
                "accuracies": [float(a) for a in accs],
            }
        )
    return results


def format_report_table(report: CvReport) -> str:
    """Human-readable pooled metrics, percentages to 2 decimals."""
    pooled = report.pooled

    def pct(v: Optional[float]) -> str:
        return "   -  " if v is None else f"{100.0 * v:6.2f}"

    lines = [
        f"protocol: {report.protocol}   seed: {report.seed}   n: {pooled['n']}",
        "Accuracy  Sensitivity  Specificity  AUC",
        f"{pct(pooled['accuracy'])}    {pct(pooled['sensitivity'])}       {pct(pooled['specificity'])}     {pct(pooled['auc'])}",
    ]
    if report.skipped_folds:
        lines.append(f"skipped folds: {len(report.skipped_folds)}")
    return "\n".join(lines)


__all__ = [
    "CvReport",
    "GbtConfig",
    "SvmConfig",
    "TrainedModel",
    "ablation_sweep",
    "classification_report",
    "cross_validate",
    "format_report_table",
    "make_folds",
    "mann_whitney_auc",
    "predict",
    "train",
]
