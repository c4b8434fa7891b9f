import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from salgaze.errors import DataError
from salgaze.imaging import (
    DEFAULT_ORIENTATIONS,
    ImageBuffer,
    Pyramid,
    _gabor_pair,
    center_surround,
    gabor_bank,
    gaussian_pyramid,
    itti_normalize,
    opponency_channels,
    resize_bilinear,
    to_grayscale,
)


def test_grayscale_white():
    img = ImageBuffer(np.ones((4, 4, 3)))
    assert np.allclose(to_grayscale(img).values, 1.0)


def test_grayscale_pure_red():
    arr = np.zeros((4, 4, 3))
    arr[:, :, 0] = 1.0
    assert np.allclose(to_grayscale(ImageBuffer(arr)).values, 0.299)


def test_grayscale_identity_for_single_channel():
    img = ImageBuffer(np.random.default_rng(0).random((5, 7)))
    out = to_grayscale(img)
    assert out.values is img.values


def test_pyramid_constant_levels():
    img = ImageBuffer(np.full((64, 64), 0.37))
    pyr = gaussian_pyramid(img, 5)
    for level in pyr.levels:
        assert np.allclose(level, 0.37, atol=1e-9)


def test_pyramid_single_level():
    img = ImageBuffer(np.random.default_rng(1).random((10, 10)))
    pyr = gaussian_pyramid(img, 1)
    assert len(pyr) == 1
    assert np.array_equal(pyr.levels[0], img.values)


def test_pyramid_dimensions():
    pyr = gaussian_pyramid(ImageBuffer(np.zeros((64, 64))), 4)
    assert [l.shape for l in pyr.levels] == [(64, 64), (32, 32), (16, 16), (8, 8)]
    assert not pyr.clipped


def test_pyramid_clipping():
    pyr = gaussian_pyramid(ImageBuffer(np.zeros((8, 8))), 10)
    assert pyr.clipped
    assert pyr.levels[-1].shape == (1, 1)


def test_resize_identity():
    arr = np.random.default_rng(2).random((6, 9))
    out = resize_bilinear(ImageBuffer(arr), 9, 6)
    assert np.allclose(out.values, arr)


def test_resize_constant():
    out = resize_bilinear(ImageBuffer(np.full((5, 5), 0.6)), 13, 7)
    assert np.allclose(out.values, 0.6)


def test_resize_linear_interpolation():
    out = resize_bilinear(ImageBuffer(np.array([[0.0, 1.0]])), 3, 1)
    assert np.allclose(out.values, [[0.0, 0.5, 1.0]])


@given(arrays(np.float64, (5, 6), elements=st.floats(0, 1)), st.integers(1, 12), st.integers(1, 12))
@settings(max_examples=40)
def test_resize_and_pyramid_preserve_bounds(arr, w, h):
    img = ImageBuffer(arr)
    out = resize_bilinear(img, w, h)
    assert out.values.min() >= arr.min() - 1e-9
    assert out.values.max() <= arr.max() + 1e-9
    pyr = gaussian_pyramid(to_grayscale(img), 3)
    for level in pyr.levels:
        assert level.min() >= arr.min() - 1e-9
        assert level.max() <= arr.max() + 1e-9


def test_gabor_constant_image_near_zero():
    responses = gabor_bank(np.full((20, 20), 0.5))
    for r in responses:
        assert np.abs(r).max() <= 1e-6


def _oracle_convolve_reflect(plane, kernel):
    # independent direct convolution with half-sample symmetric indexing
    h, w = plane.shape
    kh, kw = kernel.shape
    ry, rx = kh // 2, kw // 2

    def reflect(i, n):
        period = 2 * n
        i = i % period
        if i < 0:
            i += period
        return i if i < n else period - 1 - i

    out = np.zeros_like(plane)
    for y in range(h):
        for x in range(w):
            acc = 0.0
            for dy in range(-ry, ry + 1):
                for dx in range(-rx, rx + 1):
                    sy = reflect(y - dy, h)
                    sx = reflect(x - dx, w)
                    acc += plane[sy, sx] * kernel[dy + ry, dx + rx]
            out[y, x] = acc
    return out


def test_gabor_vertical_edge_oracle():
    # vertical step edge on 16x16: direct-convolution oracle confirms the map
    # and the 0-degree orientation wins
    plane = np.zeros((16, 16))
    plane[:, 8:] = 1.0
    responses = gabor_bank(plane, DEFAULT_ORIENTATIONS)
    even, odd = _gabor_pair(0.0)
    expected = np.hypot(_oracle_convolve_reflect(plane, even), _oracle_convolve_reflect(plane, odd))
    assert np.allclose(responses[0], expected, atol=1e-9)
    strengths = [r.max() for r in responses]
    assert int(np.argmax(strengths)) == 0


def test_gabor_response_shape():
    responses = gabor_bank(np.zeros((11, 17)))
    assert all(r.shape == (11, 17) for r in responses)


@given(arrays(np.float64, (12, 12), elements=st.floats(0, 0.5)), st.floats(0.01, 0.5))
@settings(max_examples=15, deadline=None)
def test_gabor_invariant_to_constant_offset(arr, offset):
    base = gabor_bank(arr, (0.0, np.pi / 2))
    shifted = gabor_bank(arr + offset, (0.0, np.pi / 2))
    for a, b in zip(base, shifted):
        assert np.abs(a - b).max() <= 1e-6


def test_opponency_gray_pixels():
    v = 0.4
    rg, by = opponency_channels(ImageBuffer(np.full((3, 3, 3), v)))
    assert np.allclose(rg, 0.0)
    assert np.all(by <= 0) and np.abs(by).max() <= abs(v / 2 - v)


def test_opponency_pure_red_maximal():
    arr = np.zeros((2, 2, 3))
    arr[:, :, 0] = 1.0
    rg, _ = opponency_channels(ImageBuffer(arr))
    mixed = np.full((2, 2, 3), 0.5)
    rg_mixed, _ = opponency_channels(ImageBuffer(mixed))
    assert rg.min() > 0
    assert rg.min() > rg_mixed.max()


def test_opponency_low_luminance_suppressed():
    rg, by = opponency_channels(ImageBuffer(np.full((2, 2, 3), 0.05)))
    assert np.all(rg == 0) and np.all(by == 0)


def test_opponency_rejects_grayscale():
    with pytest.raises(DataError):
        opponency_channels(ImageBuffer(np.zeros((4, 4))))


def test_center_surround_constant_zero():
    pyr = gaussian_pyramid(ImageBuffer(np.full((32, 32), 0.5)), 5)
    for m in center_surround(pyr, [2], [2]):
        assert np.abs(m).max() <= 1e-12


def test_center_surround_bright_pixel():
    arr = np.zeros((32, 32))
    arr[16, 16] = 1.0
    pyr = gaussian_pyramid(ImageBuffer(arr), 5)
    maps = center_surround(pyr, [2], [2])
    m = maps[0]
    assert m.shape == pyr.levels[2].shape
    peak = np.unravel_index(np.argmax(m), m.shape)
    # level-2 is 8x8: the pixel lands at (4, 4)
    assert abs(peak[0] - 4) <= 1 and abs(peak[1] - 4) <= 1
    assert m.max() > 0


def test_center_surround_out_of_range():
    pyr = gaussian_pyramid(ImageBuffer(np.zeros((32, 32))), 3)
    with pytest.raises(IndexError):
        center_surround(pyr, [2], [3])


def test_itti_normalize_formula_oracle():
    rng = np.random.default_rng(5)
    m = rng.random((21, 28))
    out = itti_normalize(m)
    scaled = (m - m.min()) / (m.max() - m.min())
    maxima = [
        scaled[y : y + 7, x : x + 7].max()
        for y in range(0, 21, 7)
        for x in range(0, 28, 7)
    ]
    expected = scaled * (1 - np.mean(maxima)) ** 2
    assert np.allclose(out, expected, atol=1e-12)


def test_itti_normalize_single_peak_multiplier_near_one():
    m = np.zeros((70, 70))
    m[3, 3] = 5.0
    out = itti_normalize(m)
    # one dominant maximum among 100 blocks: multiplier (1 - 1/100)^2
    assert out.max() == pytest.approx((1 - 0.01) ** 2, abs=1e-12)


def test_itti_normalize_constant_is_zero():
    assert np.all(itti_normalize(np.full((14, 14), 3.3)) == 0)


@given(arrays(np.float64, (10, 13), elements=st.floats(0, 5)))
@settings(max_examples=40)
def test_itti_normalize_range(arr):
    out = itti_normalize(arr)
    assert out.min() >= 0 and out.max() <= 1


def test_pyramid_wrapper_type():
    pyr = Pyramid(levels=[np.zeros((4, 4))])
    assert len(pyr) == 1
