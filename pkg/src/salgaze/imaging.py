"""Low-level image operations backing the saliency models.

All operations are pure functions over immutable buffers. Convolutions use
reflect padding throughout; dark-border artifacts would otherwise inflate
center bias in every downstream model.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from PIL import Image
from scipy import ndimage

from .errors import ConfigError, DataError

# Itti-1998-style Gabor defaults; the source material gives no parameters.
GABOR_WAVELENGTH = 7.0
GABOR_SIGMA = 2.8
GABOR_ASPECT = 1.0
DEFAULT_ORIENTATIONS = (0.0, np.pi / 4, np.pi / 2, 3 * np.pi / 4)

_BINOMIAL5 = np.array([1.0, 4.0, 6.0, 4.0, 1.0]) / 16.0


@dataclass(frozen=True)
class ImageBuffer:
    """Image with float values in [0,1]; (h, w) for grayscale, (h, w, 3) for RGB."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim == 2:
            pass
        elif v.ndim == 3 and v.shape[2] == 3:
            pass
        else:
            raise DataError(f"image must have 1 or 3 channels, got shape {v.shape}")
        if v.size == 0:
            raise DataError("empty image")
        if v.min() < -1e-9 or v.max() > 1 + 1e-9:
            raise DataError("image values must lie in [0,1]")
        v = np.clip(v, 0.0, 1.0)
        v.flags.writeable = False
        object.__setattr__(self, "values", v)

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def channels(self) -> int:
        return 1 if self.values.ndim == 2 else 3


@dataclass(frozen=True)
class Pyramid:
    """Gaussian pyramid; level 0 is the source, dimensions halve (floor, min 1)."""

    levels: list = field(default_factory=list)
    clipped: bool = False

    def __len__(self) -> int:
        return len(self.levels)


def decode_image(path) -> ImageBuffer:
    """Load a PNG/JPEG file; 8-bit channels map to [0,1]. L stays single-channel."""
    with Image.open(path) as im:
        if im.mode == "L":
            arr = np.asarray(im, dtype=np.float64) / 255.0
        else:
            arr = np.asarray(im.convert("RGB"), dtype=np.float64) / 255.0
    return ImageBuffer(arr)


def save_image(img: ImageBuffer, path) -> None:
    """Write an ImageBuffer as 8-bit PNG."""
    arr = np.round(img.values * 255.0).astype(np.uint8)
    Image.fromarray(arr).save(path)


def to_grayscale(img: ImageBuffer) -> ImageBuffer:
    """Rec.601 luminance; identity for single-channel input."""
    if img.channels == 1:
        return img
    v = img.values
    lum = 0.299 * v[:, :, 0] + 0.587 * v[:, :, 1] + 0.114 * v[:, :, 2]
    return ImageBuffer(np.clip(lum, 0.0, 1.0))


def _blur5(plane: np.ndarray) -> np.ndarray:
    out = ndimage.convolve1d(plane, _BINOMIAL5, axis=0, mode="reflect")
    out = ndimage.convolve1d(out, _BINOMIAL5, axis=1, mode="reflect")
    return out


def gaussian_pyramid(img: ImageBuffer, levels: int) -> Pyramid:
    """5x5 binomial blur + 2x decimation per level.

    Requests past the point where dimensions stop shrinking are clipped and
    flagged rather than raised; callers decide whether a short pyramid is fatal.
    """
    if levels < 1:
        raise ConfigError("pyramid needs at least 1 level")
    if img.channels != 1:
        raise DataError("pyramid input must be single-channel")
    out = [np.array(img.values, dtype=np.float64)]
    while len(out) < levels:
        prev = out[-1]
        h, w = prev.shape
        if h == 1 and w == 1:
            break
        th, tw = max(1, h // 2), max(1, w // 2)
        blurred = _blur5(prev)
        out.append(blurred[::2, ::2][:th, :tw])
    return Pyramid(levels=out, clipped=len(out) < levels)


def _resize_plane(a: np.ndarray, new_width: int, new_height: int) -> np.ndarray:
    h, w = a.shape
    if (h, w) == (new_height, new_width):
        return np.array(a)
    xs = np.linspace(0.0, w - 1.0, new_width) if new_width > 1 else np.array([(w - 1) / 2.0])
    ys = np.linspace(0.0, h - 1.0, new_height) if new_height > 1 else np.array([(h - 1) / 2.0])
    x0 = np.floor(xs).astype(int)
    y0 = np.floor(ys).astype(int)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = xs - x0
    fy = ys - y0
    top = a[np.ix_(y0, x0)] * (1.0 - fx) + a[np.ix_(y0, x1)] * fx
    bot = a[np.ix_(y1, x0)] * (1.0 - fx) + a[np.ix_(y1, x1)] * fx
    return top * (1.0 - fy)[:, None] + bot * fy[:, None]


def resize_bilinear(img: ImageBuffer, new_width: int, new_height: int) -> ImageBuffer:
    """Corner-aligned bilinear resize."""
    if new_width < 1 or new_height < 1:
        raise ConfigError("resize targets must be positive")
    if img.channels == 1:
        return ImageBuffer(np.clip(_resize_plane(img.values, new_width, new_height), 0.0, 1.0))
    planes = [_resize_plane(img.values[:, :, c], new_width, new_height) for c in range(3)]
    return ImageBuffer(np.clip(np.stack(planes, axis=2), 0.0, 1.0))


def _gabor_pair(theta: float):
    half = int(np.ceil(3.0 * GABOR_SIGMA))
    ax = np.arange(-half, half + 1, dtype=np.float64)
    x, y = np.meshgrid(ax, ax)
    xp = x * np.cos(theta) + y * np.sin(theta)
    yp = -x * np.sin(theta) + y * np.cos(theta)
    env = np.exp(-(xp**2 + (GABOR_ASPECT * yp) ** 2) / (2.0 * GABOR_SIGMA**2))
    even = env * np.cos(2.0 * np.pi * xp / GABOR_WAVELENGTH)
    odd = env * np.sin(2.0 * np.pi * xp / GABOR_WAVELENGTH)
    # zero-mean kernels: responses must ignore the DC level of the input
    even -= even.mean()
    odd -= odd.mean()
    return even, odd


def _convolve_reflect(plane: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    # explicit pad: ndimage's own reflect mode breaks when the kernel is
    # larger than the input (tiny pyramid levels)
    ph, pw = kernel.shape[0] // 2, kernel.shape[1] // 2
    padded = np.pad(plane, ((ph, ph), (pw, pw)), mode="symmetric")
    out = ndimage.convolve(padded, kernel, mode="constant")
    return out[ph : ph + plane.shape[0], pw : pw + plane.shape[1]]


def gabor_bank(plane: np.ndarray, orientations=DEFAULT_ORIENTATIONS) -> list:
    """Per angle, magnitude of the even+odd Gabor pair (same-size, reflect)."""
    if len(orientations) == 0:
        raise ConfigError("gabor_bank needs at least one orientation")
    plane = np.asarray(plane, dtype=np.float64)
    responses = []
    for theta in orientations:
        even, odd = _gabor_pair(theta)
        re = _convolve_reflect(plane, even)
        ro = _convolve_reflect(plane, odd)
        responses.append(np.hypot(re, ro))
    return responses


def opponency_channels(img: ImageBuffer):
    """Broadly-tuned RG and BY opponency with low-luminance suppression."""
    if img.channels != 3:
        raise DataError("opponency channels need a 3-channel image")
    v = img.values
    r, g, b = v[:, :, 0], v[:, :, 1], v[:, :, 2]
    lum = 0.299 * r + 0.587 * g + 0.114 * b
    tr = r - (g + b) / 2.0
    tg = g - (r + b) / 2.0
    tb = b - (r + g) / 2.0
    rg = tr - tg
    by = tb - (tr + tg) / 2.0
    dark = lum < 0.1
    rg = np.where(dark, 0.0, rg)
    by = np.where(dark, 0.0, by)
    return rg, by


def center_surround(pyr: Pyramid, center_levels, delta_levels) -> list:
    """|center - upsampled surround| for every (c, c+delta) pair present."""
    maps = []
    for c in center_levels:
        for d in delta_levels:
            s = c + d
            if c < 0 or s >= len(pyr.levels):
                raise IndexError(f"pyramid level pair ({c},{s}) out of range ({len(pyr.levels)} levels)")
            center = pyr.levels[c]
            surround = _resize_plane(pyr.levels[s], center.shape[1], center.shape[0])
            maps.append(np.abs(center - surround))
    return maps


def itti_normalize(m: np.ndarray) -> np.ndarray:
    """Scale to [0,1] and multiply by (1 - mean-of-local-maxima)^2.

    Local maxima are taken over a non-overlapping 7x7 block grid (partial edge
    blocks included). An all-equal map is defined to yield the zero map.
    """
    m = np.asarray(m, dtype=np.float64)
    lo, hi = m.min(), m.max()
    if hi - lo <= 1e-12:  # all-equal up to float noise: defined as the zero map
        return np.zeros_like(m)
    scaled = (m - lo) / (hi - lo)
    h, w = scaled.shape
    block_maxima = []
    for y in range(0, h, 7):
        for x in range(0, w, 7):
            block_maxima.append(scaled[y : y + 7, x : x + 7].max())
    mbar = float(np.mean(block_maxima))
    return scaled * (1.0 - mbar) ** 2
