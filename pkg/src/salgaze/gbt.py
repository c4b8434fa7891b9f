"""Gradient-boosted regression trees with logistic loss.

Stagewise boosting on {0,1} labels: each stage fits an exact-greedy regression
tree to the loss gradient and sets leaf values by a single Newton step
(sum of residuals over sum of hessians). No subsampling, so training is
deterministic; tree splits are rank-based, so predictions are invariant to
monotone per-feature transforms.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DataError


@dataclass(frozen=True)
class GbtConfig:
    n_estimators: int = 100
    max_depth: int = 3
    learning_rate: float = 0.1

    def __post_init__(self):
        if self.n_estimators < 1:
            raise ConfigError(f"n_estimators must be >= 1, got {self.n_estimators}")
        if self.max_depth < 1:
            raise ConfigError(f"max_depth must be >= 1, got {self.max_depth}")
        if not 0 < self.learning_rate <= 1:
            raise ConfigError(f"learning_rate must be in (0,1], got {self.learning_rate}")


@dataclass
class TreeNode:
    feature: int = -1
    threshold: float = 0.0
    left: "TreeNode" = None
    right: "TreeNode" = None
    value: float = 0.0

    @property
    def is_leaf(self) -> bool:
        return self.left is None

    def predict_one(self, x) -> float:
        node = self
        while not node.is_leaf:
            node = node.left if x[node.feature] < node.threshold else node.right
        return node.value


def best_split(x: np.ndarray, grad: np.ndarray):
    """Exact greedy squared-error split over all features and midpoints.

    Returns (feature, threshold, gain) or None if nothing reduces the error.
    """
    n = len(grad)
    if n < 2:
        return None
    total = grad.sum()
    base = (grad**2).sum() - total**2 / n
    best = None
    for feat in range(x.shape[1]):
        order = np.argsort(x[:, feat], kind="stable")
        xs = x[order, feat]
        gs = grad[order]
        csum = np.cumsum(gs)
        csq = np.cumsum(gs**2)
        for i in range(n - 1):
            if xs[i] == xs[i + 1]:
                continue
            nl = i + 1
            nr = n - nl
            left_err = csq[i] - csum[i] ** 2 / nl
            right_err = (csq[-1] - csq[i]) - (csum[-1] - csum[i]) ** 2 / nr
            gain = base - left_err - right_err
            if gain > 1e-12 and (best is None or gain > best[2]):
                best = (feat, (xs[i] + xs[i + 1]) / 2.0, gain)
    return best


def _newton_leaf(grad: np.ndarray, hess: np.ndarray) -> float:
    denom = hess.sum()
    if denom <= 1e-12:
        return 0.0
    return float(grad.sum() / denom)


def _grow(x: np.ndarray, grad: np.ndarray, hess: np.ndarray, depth: int) -> TreeNode:
    split = best_split(x, grad) if depth > 0 else None
    if split is None:
        return TreeNode(value=_newton_leaf(grad, hess))
    feat, threshold, _ = split
    mask = x[:, feat] < threshold
    node = TreeNode(feature=feat, threshold=threshold)
    node.left = _grow(x[mask], grad[mask], hess[mask], depth - 1)
    node.right = _grow(x[~mask], grad[~mask], hess[~mask], depth - 1)
    return node


def _sigmoid(z: np.ndarray) -> np.ndarray:
    return 1.0 / (1.0 + np.exp(-np.clip(z, -500, 500)))


def log_loss(y: np.ndarray, p: np.ndarray) -> float:
    p = np.clip(p, 1e-15, 1 - 1e-15)
    return float(-(y * np.log(p) + (1 - y) * np.log(1 - p)).mean())


@dataclass
class GbtModel:
    config: GbtConfig
    base_score: float
    trees: list = field(default_factory=list)
    stage_losses: list = field(default_factory=list)

    def raw_scores(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        single = x.ndim == 1
        if single:
            x = x[None, :]
        scores = np.full(len(x), self.base_score)
        for tree in self.trees:
            scores += self.config.learning_rate * np.array(
                [tree.predict_one(row) for row in x]
            )
        return scores[0] if single else scores

    def decision(self, x: np.ndarray) -> np.ndarray:
        return _sigmoid(self.raw_scores(x))


def gbt_train(x: np.ndarray, y: np.ndarray, cfg: GbtConfig, seed: int = 0) -> GbtModel:
    """Fit on labels y in {0,1}. seed is accepted for interface parity; the
    procedure itself is deterministic."""
    del seed
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if not np.isfinite(x).all():
        raise DataError("non-finite feature value in training data")
    classes = np.unique(y)
    if len(classes) < 2:
        raise DataError("training data contains a single class")
    if not set(classes.tolist()) <= {0.0, 1.0}:
        raise DataError(f"binary labels in {{0,1}} required, got {classes.tolist()}")
    prior = y.mean()
    base = float(np.log(prior / (1.0 - prior)))
    model = GbtModel(config=cfg, base_score=base)
    scores = np.full(len(y), base)
    for _ in range(cfg.n_estimators):
        p = _sigmoid(scores)
        grad = y - p
        hess = p * (1.0 - p)
        tree = _grow(x, grad, hess, cfg.max_depth)
        step = np.array([tree.predict_one(row) for row in x])
        scores = scores + cfg.learning_rate * step
        model.trees.append(tree)
        model.stage_losses.append(log_loss(y, _sigmoid(scores)))
    return model
