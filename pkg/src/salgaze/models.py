"""Bottom-up saliency models and the per-image model bank.

Five representative models sit behind one registry interface: an Itti-Koch
center-surround model, a graph-based Markov-equilibrium model, a spectral
residual model, a local covariance-contrast model, and a content-free center
Gaussian. The registry order fixes the feature-vector layout downstream.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass, field

import numpy as np
from PIL import Image
from scipy import ndimage

from .errors import ConfigError, ConvergenceError, DataError
from .imaging import (
    ImageBuffer,
    Pyramid,
    _resize_plane,
    center_surround,
    gabor_bank,
    gaussian_pyramid,
    itti_normalize,
    opponency_channels,
    resize_bilinear,
    to_grayscale,
)

ITTI_CENTER_LEVELS = (2, 3, 4)
ITTI_DELTA_LEVELS = (3, 4)
ITTI_PYRAMID_LEVELS = 9

GBVS_WORKING_WIDTH = 32
GBVS_SIGMA_FRAC = 0.15  # of the working-map diagonal
GBVS_TOL = 1e-8
GBVS_MAX_ITER = 10_000

SMF1_MAGIC = b"SMF1"


@dataclass(frozen=True)
class SaliencyMap:
    """One model's prediction for one image, min-max normalized to [0,1]."""

    values: np.ndarray
    model_id: str
    degenerate: bool = False

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 2 or v.size == 0:
            raise DataError("saliency map must be a non-empty 2-D grid")
        if v.min() < 0 or v.max() > 1:
            raise DataError("saliency map values must lie in [0,1]")
        if not self.degenerate and v.max() != 1.0:
            raise DataError("non-degenerate saliency map must attain max 1")
        v.flags.writeable = False
        object.__setattr__(self, "values", v)

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class SaliencyBank:
    """All registered models' maps for one image, in registry order."""

    image_id: str
    maps: tuple

    @property
    def model_ids(self) -> tuple:
        return tuple(m.model_id for m in self.maps)


def _finish_map(values: np.ndarray, model_id: str) -> SaliencyMap:
    values = np.asarray(values, dtype=np.float64)
    lo, hi = values.min(), values.max()
    if hi - lo <= 0.0:
        return SaliencyMap(np.zeros_like(values), model_id, degenerate=True)
    return SaliencyMap((values - lo) / (hi - lo), model_id)


# ---------------------------------------------------------------------------
# Itti-Koch


def _plane_pyramid(plane: np.ndarray, levels: int) -> Pyramid:
    # same construction as gaussian_pyramid but for unbounded feature planes
    from .imaging import _blur5

    out = [np.asarray(plane, dtype=np.float64)]
    while len(out) < levels:
        prev = out[-1]
        h, w = prev.shape
        if h == 1 and w == 1:
            break
        th, tw = max(1, h // 2), max(1, w // 2)
        out.append(_blur5(prev)[::2, ::2][:th, :tw])
    return Pyramid(levels=out, clipped=len(out) < levels)


def _valid_cs_pairs(n_levels: int):
    return [
        (c, d)
        for c in ITTI_CENTER_LEVELS
        for d in ITTI_DELTA_LEVELS
        if c + d < n_levels
    ]


def _cs_maps(pyr: Pyramid, pairs) -> list:
    maps = []
    for c, d in pairs:
        maps.extend(center_surround(pyr, [c], [d]))
    return maps


def _conspicuity(maps, target_shape) -> np.ndarray:
    th, tw = target_shape
    acc = np.zeros((th, tw))
    for m in maps:
        acc += _resize_plane(itti_normalize(m), tw, th)
    return acc / len(maps)


def itti_koch(img: ImageBuffer) -> SaliencyMap:
    """Center-surround conspicuity over intensity, opponent color and orientation."""
    if img.width < 32 or img.height < 32:
        raise DataError(f"itti_koch needs at least 32x32, got {img.width}x{img.height}")
    gray = to_grayscale(img)
    int_pyr = gaussian_pyramid(gray, ITTI_PYRAMID_LEVELS)
    pairs = _valid_cs_pairs(len(int_pyr))
    target = int_pyr.levels[2].shape

    channels = [_conspicuity(_cs_maps(int_pyr, pairs), target)]

    if img.channels == 3:
        rg, by = opponency_channels(img)
        color_maps = _cs_maps(_plane_pyramid(rg, ITTI_PYRAMID_LEVELS), pairs)
        color_maps += _cs_maps(_plane_pyramid(by, ITTI_PYRAMID_LEVELS), pairs)
        channels.append(_conspicuity(color_maps, target))

    orient_maps = []
    for theta_idx in range(4):
        levels = [gabor_bank(lev)[theta_idx] for lev in int_pyr.levels]
        orient_maps += _cs_maps(Pyramid(levels=levels), pairs)
    channels.append(_conspicuity(orient_maps, target))

    combined = np.mean(channels, axis=0)
    return _finish_map(_resize_plane(combined, img.width, img.height), "itti_koch")


# ---------------------------------------------------------------------------
# Graph-based saliency


def gbvs_transition_matrix(plane: np.ndarray, sigma: float) -> np.ndarray:
    """Row-stochastic matrix of the fully connected chain over one feature plane.

    Edge weight is |f(p)-f(q)| * exp(-dist^2 / (2 sigma^2)); a row with zero
    total weight (constant plane) falls back to the uniform row.
    """
    plane = np.asarray(plane, dtype=np.float64)
    h, w = plane.shape
    ys, xs = np.mgrid[0:h, 0:w]
    pos = np.stack([xs.ravel(), ys.ravel()], axis=1).astype(np.float64)
    d2 = ((pos[:, None, :] - pos[None, :, :]) ** 2).sum(axis=2)
    f = plane.ravel()
    weights = np.abs(f[:, None] - f[None, :]) * np.exp(-d2 / (2.0 * sigma**2))
    sums = weights.sum(axis=1)
    n = weights.shape[0]
    p = np.empty_like(weights)
    zero = sums <= 0.0
    p[zero] = 1.0 / n
    p[~zero] = weights[~zero] / sums[~zero, None]
    return p


def markov_equilibrium(p: np.ndarray, tol: float = GBVS_TOL, max_iter: int = GBVS_MAX_ITER) -> np.ndarray:
    """Stationary distribution by power iteration, to L1 residual < tol.

    Iterates the lazy chain (P+I)/2, which has the same fixed point but cannot
    oscillate on bipartite weight structure; the returned vector is certified
    against the original P.
    """
    p = np.asarray(p, dtype=np.float64)
    n = p.shape[0]
    pi = np.full(n, 1.0 / n)
    resid = np.inf
    for _ in range(max_iter):
        nxt = 0.5 * (pi @ p + pi)
        nxt /= nxt.sum()
        step = np.abs(nxt - pi).sum()
        pi = nxt
        if step < 0.5 * tol:
            resid = np.abs(pi @ p - pi).sum()
            if resid < tol:
                return pi
    raise ConvergenceError(
        f"power iteration did not converge in {max_iter} iterations", residual=float(resid)
    )


def _gbvs_feature_planes(img: ImageBuffer, working_width: int) -> list:
    wh = max(1, round(img.height * working_width / img.width))
    small = resize_bilinear(img, working_width, wh)
    gs = to_grayscale(small).values
    planes = [gs]
    if img.channels == 3:
        rg, by = opponency_channels(small)
        planes += [rg, by]
    planes += gabor_bank(gs)
    return planes


def gbvs(
    img: ImageBuffer,
    working_width: int = GBVS_WORKING_WIDTH,
    tol: float = GBVS_TOL,
    max_iter: int = GBVS_MAX_ITER,
) -> SaliencyMap:
    """Equilibrium of a fully connected Markov chain per feature channel."""
    planes = _gbvs_feature_planes(img, working_width)
    h, w = planes[0].shape
    sigma = GBVS_SIGMA_FRAC * float(np.hypot(h, w))
    acc = np.zeros((h, w))
    for plane in planes:
        p = gbvs_transition_matrix(plane, sigma)
        pi = markov_equilibrium(p, tol=tol, max_iter=max_iter)
        acc += pi.reshape(h, w)
    acc /= len(planes)
    blurred = ndimage.gaussian_filter(acc, sigma=max(1.0, working_width / 16.0), mode="reflect")
    return _finish_map(_resize_plane(blurred, img.width, img.height), "gbvs")


# ---------------------------------------------------------------------------
# Spectral residual


def spectral_residual(img: ImageBuffer) -> SaliencyMap:
    """Log-amplitude residual of the FFT spectrum, per Hou-Zhang-style recipe."""
    gray = to_grayscale(img).values
    ww = 64
    wh = max(1, round(img.height * ww / img.width))
    small = _resize_plane(gray, ww, wh)
    spectrum = np.fft.fft2(small)
    amplitude = np.abs(spectrum)
    phase = np.angle(spectrum)
    log_amp = np.log(amplitude + 1e-12)
    residual = log_amp - ndimage.uniform_filter(log_amp, size=3, mode="reflect")
    recon = np.fft.ifft2(np.exp(residual + 1j * phase))
    sal = np.abs(recon) ** 2
    sal = ndimage.gaussian_filter(sal, sigma=2.5, mode="reflect")
    return _finish_map(_resize_plane(sal, img.width, img.height), "spectral_residual")


# ---------------------------------------------------------------------------
# Local covariance contrast


def local_covariance(img: ImageBuffer, block: int = 8) -> SaliencyMap:
    """Frobenius distance between block feature covariances and their neighbors'."""
    if img.width < 24 or img.height < 24:
        raise DataError(f"local_covariance needs at least 24x24, got {img.width}x{img.height}")
    gray = to_grayscale(img).values
    h, w = gray.shape
    gy, gx = np.gradient(gray)
    ys, xs = np.mgrid[0:h, 0:w]
    feats = np.stack(
        [xs / w, ys / h, gray, np.abs(gx), np.abs(gy)], axis=-1
    )  # (h, w, 5)
    by, bx = h // block, w // block
    covs = np.empty((by, bx, 5, 5))
    for i in range(by):
        for j in range(bx):
            patch = feats[i * block : (i + 1) * block, j * block : (j + 1) * block]
            covs[i, j] = np.cov(patch.reshape(-1, 5), rowvar=False)
    sal = np.zeros((by, bx))
    for i in range(by):
        for j in range(bx):
            dists = []
            for di in (-1, 0, 1):
                for dj in (-1, 0, 1):
                    if di == 0 and dj == 0:
                        continue
                    ni, nj = i + di, j + dj
                    if 0 <= ni < by and 0 <= nj < bx:
                        dists.append(np.linalg.norm(covs[i, j] - covs[ni, nj]))
            sal[i, j] = np.mean(dists)
    return _finish_map(_resize_plane(sal, img.width, img.height), "local_covariance")


# ---------------------------------------------------------------------------
# Center Gaussian


def center_gaussian(width: int, height: int) -> SaliencyMap:
    """Content-free isotropic center prior; sigma = min(w,h)/4, max 1."""
    if width <= 0 or height <= 0:
        raise DataError(f"invalid dimensions {width}x{height}")
    cx, cy = (width - 1) / 2.0, (height - 1) / 2.0
    sigma = min(width, height) / 4.0
    ys, xs = np.mgrid[0:height, 0:width]
    g = np.exp(-((xs - cx) ** 2 + (ys - cy) ** 2) / (2.0 * sigma**2))
    return SaliencyMap(g / g.max(), "center_gaussian")


# ---------------------------------------------------------------------------
# Registry and banks

MODEL_BUILDERS = {
    "itti_koch": lambda img, **kw: itti_koch(img, **kw),
    "gbvs": lambda img, **kw: gbvs(img, **kw),
    "spectral_residual": lambda img, **kw: spectral_residual(img, **kw),
    "local_covariance": lambda img, **kw: local_covariance(img, **kw),
    "center_gaussian": lambda img, **kw: center_gaussian(img.width, img.height, **kw),
}

DEFAULT_MODEL_IDS = (
    "itti_koch",
    "gbvs",
    "spectral_residual",
    "local_covariance",
    "center_gaussian",
)


@dataclass(frozen=True)
class ModelRegistry:
    """Ordered (model_id, params) entries; the order is the feature layout."""

    entries: tuple

    def __post_init__(self):
        ids = [mid for mid, _ in self.entries]
        if not ids:
            raise ConfigError("model registry must not be empty")
        if len(set(ids)) != len(ids):
            raise ConfigError(f"duplicate model ids in registry: {ids}")
        for mid, _ in self.entries:
            if mid not in MODEL_BUILDERS:
                raise ConfigError(f"unknown model id {mid!r}; known: {sorted(MODEL_BUILDERS)}")

    @classmethod
    def default(cls) -> "ModelRegistry":
        return cls(tuple((mid, {}) for mid in DEFAULT_MODEL_IDS))

    @classmethod
    def from_ids(cls, ids, params=None) -> "ModelRegistry":
        params = params or {}
        return cls(tuple((mid, dict(params.get(mid, {}))) for mid in ids))

    @property
    def model_ids(self) -> tuple:
        return tuple(mid for mid, _ in self.entries)

    def __len__(self) -> int:
        return len(self.entries)

    def content_hash(self) -> str:
        blob = json.dumps([[mid, params] for mid, params in self.entries], sort_keys=True)
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:16]

    def subset(self, ids) -> "ModelRegistry":
        keep = set(ids)
        return ModelRegistry(tuple(e for e in self.entries if e[0] in keep))


def compute_map(model_id: str, params: dict, img: ImageBuffer) -> SaliencyMap:
    return MODEL_BUILDERS[model_id](img, **params)


def compute_bank(registry: ModelRegistry, img: ImageBuffer, image_id: str = "") -> SaliencyBank:
    """All registered maps for one image; any model failure poisons the bank."""
    maps = []
    for mid, params in registry.entries:
        try:
            maps.append(compute_map(mid, params, img))
        except Exception as exc:
            raise DataError(f"model {mid!r} failed for image {image_id!r}: {exc}") from exc
    return SaliencyBank(image_id=image_id, maps=tuple(maps))


# ---------------------------------------------------------------------------
# Persistence: SMF1 binary maps and 16-bit PNG export


def write_smf1(smap: SaliencyMap, path) -> None:
    values = smap.values.astype("<f4")
    with open(path, "wb") as fh:
        fh.write(SMF1_MAGIC)
        fh.write(struct.pack("<II", smap.width, smap.height))
        fh.write(values.tobytes(order="C"))


def read_smf1(path, model_id: str = "") -> SaliencyMap:
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != SMF1_MAGIC:
        raise DataError(f"{path}: not an SMF1 file")
    if len(blob) < 12:
        raise DataError(f"{path}: truncated SMF1 header")
    width, height = struct.unpack("<II", blob[4:12])
    expected = 12 + 4 * width * height
    if len(blob) != expected:
        raise DataError(f"{path}: expected {expected} bytes, got {len(blob)}")
    values = np.frombuffer(blob[12:], dtype="<f4").reshape(height, width).astype(np.float64)
    values = np.clip(values, 0.0, 1.0)
    degenerate = values.max() < 1.0
    return SaliencyMap(values, model_id, degenerate=degenerate)


def export_png16(smap: SaliencyMap, path) -> None:
    arr = np.round(smap.values * 65535.0).astype(np.uint16)
    Image.fromarray(arr).save(path)
