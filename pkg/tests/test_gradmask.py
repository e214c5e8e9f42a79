import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gamdepth.gradmask import (
    MaskConfig,
    gradient_aware_loss,
    gradient_aware_mask,
    keypoint_binary_mask,
    mask_bound_gaps,
    sobel_components,
    sobel_magnitude,
)
from gamdepth.gridcore import GridError, backward, parameter
from gamdepth.photometric import PerPixelLoss


def step_image(h=6, w=8, col=4):
    img = np.zeros((h, w, 3))
    img[:, col:] = 1.0
    return img


def test_constant_image_has_no_gradient():
    assert np.array_equal(sobel_magnitude(np.full((5, 5, 3), 0.4)), np.zeros((5, 5)))


def test_step_edge_response():
    m = sobel_magnitude(step_image())
    np.testing.assert_allclose(m[:, 3:5], 1020.0, rtol=1e-12)
    assert np.all(m[:, :3] == 0) and np.all(m[:, 5:] == 0)


def test_transpose_swaps_components():
    img = np.random.default_rng(0).random((7, 9, 3))
    gx, gy = sobel_components(img)
    tx, ty = sobel_components(img.transpose(1, 0, 2))
    np.testing.assert_allclose(np.abs(tx), np.abs(gy.T), atol=1e-10)
    np.testing.assert_allclose(np.abs(ty), np.abs(gx.T), atol=1e-10)
    np.testing.assert_allclose(sobel_magnitude(img.transpose(1, 0, 2)), sobel_magnitude(img).T, atol=1e-10)


def test_channel_count_checked():
    sobel_magnitude(np.zeros((4, 4, 1)))
    with pytest.raises(GridError):
        sobel_magnitude(np.zeros((4, 4, 2)))


def test_mask_anchor_values():
    M = gradient_aware_mask(np.array([[0.0, 400.0, 1e6]]))
    assert abs(M[0, 0] - (0.1 + 0.9 / (1 + np.exp(40.0)))) < 1e-12
    assert abs(M[0, 1] - 0.55) < 1e-12
    assert M[0, 2] == pytest.approx(1.0)


def test_mask_monotone_and_bounded():
    m = np.arange(1001, dtype=float)
    M = gradient_aware_mask(m)
    assert np.all(np.diff(M) >= 0)
    assert np.all(M >= 0.1) and np.all(M <= 1.0)
    low, high = mask_bound_gaps(m)
    assert np.all(low > 0) and np.all(high > 0)
    np.testing.assert_allclose(low, M - 0.1, atol=1e-15)
    np.testing.assert_allclose(high, 1.0 - M, atol=1e-15)


def test_mask_config_validation():
    with pytest.raises(ValueError):
        MaskConfig(beta=1.0)
    with pytest.raises(ValueError):
        MaskConfig(gamma1=0.0)
    with pytest.raises(ValueError):
        gradient_aware_mask(np.array([-1.0]))


def test_keypoint_mask_examples():
    assert not keypoint_binary_mask(sobel_magnitude(np.full((4, 4, 3), 0.7)), 10).any()
    img = np.random.default_rng(1).random((6, 6, 3))
    m = sobel_magnitude(img)
    assert np.array_equal(keypoint_binary_mask(m, 0) == 1, m > 0)
    m_step = sobel_magnitude(step_image())
    assert np.array_equal(keypoint_binary_mask(m_step, 400) == 1, m_step == 1020)


def _loss(value=0.2, shape=(4, 5), valid=None):
    valid = np.ones(shape, bool) if valid is None else valid
    return PerPixelLoss(np.full(shape, value), valid)


def test_loss_examples():
    rng = np.random.default_rng(2)
    L = PerPixelLoss(rng.random((4, 5)), rng.random((4, 5)) > 0.2)
    unit = gradient_aware_loss(np.ones((4, 5)), L)
    assert abs(unit - L.value[L.valid].mean()) < 1e-12
    assert gradient_aware_loss(np.full((4, 5), 0.5), L) == pytest.approx(unit / 2, abs=1e-15)
    assert gradient_aware_loss(np.full((4, 5), 0.1), _loss(0.2)) == pytest.approx(0.02, abs=1e-15)


def test_loss_needs_valid_pixels():
    with pytest.raises(ValueError, match="no valid pixels"):
        gradient_aware_loss(np.ones((4, 5)), _loss(valid=np.zeros((4, 5), bool)))


@settings(max_examples=30, deadline=None)
@given(st.floats(0.01, 100.0))
def test_loss_linear_in_mask(a):
    rng = np.random.default_rng(3)
    L = PerPixelLoss(rng.random((4, 5)), np.ones((4, 5), bool))
    M = gradient_aware_mask(rng.uniform(0, 800, size=(4, 5)))
    assert gradient_aware_loss(a * M, L) == pytest.approx(a * gradient_aware_loss(M, L), rel=1e-12)


def test_mask_is_detached():
    loss = parameter(np.random.default_rng(4).random((3, 3)))
    M = parameter(np.full((3, 3), 0.5))
    out = gradient_aware_loss(M, PerPixelLoss(loss, np.ones((3, 3), bool)))
    grads = backward(out)
    assert M not in grads or not np.any(grads[M])
    np.testing.assert_allclose(loss.grad, 0.5 / 9)
