"""Kernel SVM trained by sequential minimal optimization.

Binary labels only; features are z-scored with training statistics before the
kernel is applied so decisions are invariant to positive feature rescaling.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import ConfigError, DataError


@dataclass(frozen=True)
class SvmConfig:
    c: float = 0.01
    degree: int = 3
    gamma: Optional[float] = None  # None -> 1/d
    coef0: float = 1.0
    tol: float = 1e-3
    max_passes: int = 10
    max_iter: int = 20_000

    def __post_init__(self):
        if self.c <= 0:
            raise ConfigError(f"C must be positive, got {self.c}")
        if self.degree < 1:
            raise ConfigError(f"polynomial degree must be >= 1, got {self.degree}")


def poly_kernel(a: np.ndarray, b: np.ndarray, gamma: float, coef0: float, degree: int) -> np.ndarray:
    return (gamma * (a @ b.T) + coef0) ** degree


@dataclass
class SvmModel:
    config: SvmConfig
    gamma: float
    support_vectors: np.ndarray  # (n_sv, d), already z-scored
    dual_targets: np.ndarray  # alpha_i * t_i for support vectors
    bias: float
    alphas: np.ndarray  # all training alphas, for KKT inspection
    mean: np.ndarray
    std: np.ndarray

    def decision(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        single = x.ndim == 1
        if single:
            x = x[None, :]
        z = (x - self.mean) / self.std
        k = poly_kernel(z, self.support_vectors, self.gamma, self.config.coef0, self.config.degree)
        scores = k @ self.dual_targets + self.bias
        return scores[0] if single else scores


def _smo(k: np.ndarray, t: np.ndarray, cfg: SvmConfig, rng: np.random.Generator):
    n = len(t)
    alpha = np.zeros(n)
    b = 0.0
    passes = 0
    iters = 0
    f = np.full(n, b)  # decision values, maintained incrementally
    while passes < cfg.max_passes and iters < cfg.max_iter:
        iters += 1
        changed = 0
        for i in range(n):
            e_i = f[i] - t[i]
            if (t[i] * e_i < -cfg.tol and alpha[i] < cfg.c) or (t[i] * e_i > cfg.tol and alpha[i] > 0):
                j = int(rng.integers(n - 1))
                if j >= i:
                    j += 1
                e_j = f[j] - t[j]
                ai_old, aj_old = alpha[i], alpha[j]
                if t[i] != t[j]:
                    lo = max(0.0, aj_old - ai_old)
                    hi = min(cfg.c, cfg.c + aj_old - ai_old)
                else:
                    lo = max(0.0, ai_old + aj_old - cfg.c)
                    hi = min(cfg.c, ai_old + aj_old)
                if lo == hi:
                    continue
                eta = 2.0 * k[i, j] - k[i, i] - k[j, j]
                if eta >= 0:
                    continue
                aj = aj_old - t[j] * (e_i - e_j) / eta
                aj = min(hi, max(lo, aj))
                if abs(aj - aj_old) < 1e-7:
                    continue
                ai = ai_old + t[i] * t[j] * (aj_old - aj)
                b1 = b - e_i - t[i] * (ai - ai_old) * k[i, i] - t[j] * (aj - aj_old) * k[i, j]
                b2 = b - e_j - t[i] * (ai - ai_old) * k[i, j] - t[j] * (aj - aj_old) * k[j, j]
                old_b = b
                if 0 < ai < cfg.c:
                    b = b1
                elif 0 < aj < cfg.c:
                    b = b2
                else:
                    b = (b1 + b2) / 2.0
                f += (ai - ai_old) * t[i] * k[i] + (aj - aj_old) * t[j] * k[j] + (b - old_b)
                alpha[i], alpha[j] = ai, aj
                changed += 1
        passes = passes + 1 if changed == 0 else 0
    return alpha, b


def dual_objective(k: np.ndarray, t: np.ndarray, alpha: np.ndarray) -> float:
    """W(alpha) = sum(alpha) - 1/2 sum_ij alpha_i alpha_j t_i t_j K_ij."""
    at = alpha * t
    return float(alpha.sum() - 0.5 * at @ k @ at)


def svm_train(x: np.ndarray, y: np.ndarray, cfg: SvmConfig, seed: int = 0) -> SvmModel:
    """Fit on labels y in {0,1}; class 1 maps to target +1."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if not np.isfinite(x).all():
        raise DataError("non-finite feature value in training data")
    classes = np.unique(y)
    if len(classes) < 2:
        raise DataError("training data contains a single class")
    if not set(classes.tolist()) <= {0, 1}:
        raise DataError(f"binary labels in {{0,1}} required, got {classes.tolist()}")
    t = np.where(y == 1, 1.0, -1.0)
    mean = x.mean(axis=0)
    std = x.std(axis=0)
    std = np.where(std == 0, 1.0, std)
    z = (x - mean) / std
    gamma = cfg.gamma if cfg.gamma is not None else 1.0 / x.shape[1]
    k = poly_kernel(z, z, gamma, cfg.coef0, cfg.degree)
    rng = np.random.default_rng(seed)
    alpha, b = _smo(k, t, cfg, rng)
    sv = alpha > 1e-12
    if not sv.any():
        sv = np.ones(len(alpha), dtype=bool)  # keep the decision well-defined
    return SvmModel(
        config=cfg,
        gamma=gamma,
        support_vectors=z[sv],
        dual_targets=(alpha * t)[sv],
        bias=float(b),
        alphas=alpha,
        mean=mean,
        std=std,
    )
