import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gamdepth.gridcore import GridError, finite_diff_check
from gamdepth.photometric import (
    SSIM_C1,
    SSIM_C2,
    PerPixelLoss,
    box_filter3,
    l1_map,
    min_reprojection,
    photometric_map,
    ssim_map,
    window_valid,
)


def _imgs(seed, shape=(7, 9, 3)):
    rng = np.random.default_rng(seed)
    return rng.random(shape), rng.random(shape)


def test_l1_examples():
    a, b = _imgs(0)
    assert np.array_equal(l1_map(a, a).value, np.zeros(a.shape[:2]))
    np.testing.assert_allclose(l1_map(np.full((3, 3, 3), 0.2), np.full((3, 3, 3), 0.5)).value, 0.3, atol=1e-15)
    assert np.array_equal(l1_map(a, b).value, l1_map(b, a).value)


def test_shape_mismatch_rejected():
    with pytest.raises(GridError):
        l1_map(np.zeros((3, 3, 3)), np.zeros((3, 4, 3)))
    with pytest.raises(GridError):
        ssim_map(np.zeros((3, 3, 3)), np.zeros((3, 3, 1)))


def test_box_filter_matches_scipy_reflect():
    from scipy import ndimage

    x = np.random.default_rng(1).random((6, 5, 2))
    ref = ndimage.uniform_filter(x, size=(3, 3, 1), mode="mirror")
    np.testing.assert_allclose(box_filter3(x), ref, atol=1e-15)


def test_box_filter_gradient():
    x = np.random.default_rng(2).random((5, 4, 2))
    w = np.random.default_rng(3).random((5, 4, 2))
    assert finite_diff_check(lambda a: (box_filter3(a) * w).sum(), [x]) < 1e-8


def test_ssim_identical_and_symmetric():
    a, b = _imgs(4)
    assert np.max(np.abs(ssim_map(a, a).value)) < 1e-12
    np.testing.assert_allclose(ssim_map(a, b).value, ssim_map(b, a).value, atol=1e-15)


def test_ssim_constant_black_vs_white():
    zeros, ones = np.zeros((4, 4, 3)), np.ones((4, 4, 3))
    # constant patches: sigma terms vanish, only the luminance factor remains
    ssim = (2 * 0 * 1 + SSIM_C1) * SSIM_C2 / ((0 + 1 + SSIM_C1) * SSIM_C2)
    np.testing.assert_allclose(ssim_map(zeros, ones).value, (1 - ssim) / 2, atol=1e-15)
    assert ssim_map(zeros, ones).value.min() > 0.4999


def test_ssim_window_validity():
    a, b = _imgs(5, (6, 6, 1))
    valid = np.ones((6, 6), bool)
    valid[2, 3] = False
    out = ssim_map(a, b, valid).valid
    assert np.array_equal(out, window_valid(valid))
    assert not out[1:4, 2:5].any() and out.sum() == 36 - 9


def test_photometric_examples():
    a, b = _imgs(6)
    for alpha in (0.0, 0.3, 0.85, 1.0):
        assert np.max(np.abs(photometric_map(a, a, alpha).value)) < 1e-12
    assert np.array_equal(photometric_map(a, b, 0.0).value, l1_map(a, b).value)
    assert np.array_equal(photometric_map(a, b, 1.0).value, ssim_map(a, b).value)
    mixed = 0.15 * l1_map(a, b).value + 0.85 * ssim_map(a, b).value
    np.testing.assert_allclose(photometric_map(a, b).value, mixed, atol=1e-15)
    with pytest.raises(ValueError):
        photometric_map(a, b, 1.2)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31 - 1), st.floats(0.0, 1.0))
def test_photometric_symmetric_and_bounded(seed, alpha):
    a, b = _imgs(seed, (5, 6, 3))
    p = photometric_map(a, b, alpha).value
    np.testing.assert_allclose(p, photometric_map(b, a, alpha).value, atol=1e-14)
    assert p.min() >= 0.0 and p.max() <= 1.0


def test_photometric_gradient():
    a, b = _imgs(7, (5, 6, 3))
    assert finite_diff_check(lambda x: photometric_map(a, x).value.sum(), [b]) < 1e-4


def _loss(values, valid):
    return PerPixelLoss(np.asarray(values, float), np.asarray(valid, bool))


def test_min_reprojection_examples():
    m = min_reprojection([_loss([[0.3]], [[True]]), _loss([[0.1]], [[True]])])
    assert m.values()[0, 0] == 0.1
    single = _loss([[0.4, 0.2]], [[True, False]])
    m1 = min_reprojection([single])
    assert np.array_equal(m1.values()[m1.valid], single.value[single.valid])
    m2 = min_reprojection([_loss([[0.01]], [[False]]), _loss([[0.7]], [[True]])])
    assert m2.values()[0, 0] == 0.7 and m2.valid[0, 0]
    m3 = min_reprojection([_loss([[0.2]], [[False]]), _loss([[0.7]], [[False]])])
    assert not m3.valid[0, 0]
    with pytest.raises(ValueError):
        min_reprojection([])


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31 - 1), st.integers(1, 4))
def test_min_is_below_every_valid_input(seed, n):
    rng = np.random.default_rng(seed)
    losses = [_loss(rng.random((4, 5)), rng.random((4, 5)) > 0.3) for _ in range(n)]
    m = min_reprojection(losses)
    for l in losses:
        both = m.valid & l.valid
        assert np.all(m.values()[both] <= l.value[both])
    assert np.array_equal(m.valid, np.logical_or.reduce([l.valid for l in losses]))
