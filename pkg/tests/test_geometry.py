import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gamdepth.geometry import (
    CameraIntrinsics,
    CoordGrid,
    PoseSE3,
    bilinear_sample,
    compose_residual,
    rodrigues,
    se3_from_axis_angle,
    synthesize_view,
    warp_coordinates,
)
from gamdepth.gridcore import finite_diff_check, pixel_grid

K = CameraIntrinsics(100.0, 100.0, 15.5, 11.5)


def test_intrinsics_validation():
    with pytest.raises(ValueError):
        CameraIntrinsics(0.0, 1.0, 0.0, 0.0)


def test_zero_rotation_is_identity():
    assert np.array_equal(se3_from_axis_angle(np.zeros(3), np.zeros(3)).rotation, np.eye(3))


def test_quarter_turn_about_z():
    R = se3_from_axis_angle([0, 0, np.pi / 2], np.zeros(3)).rotation
    np.testing.assert_allclose(R @ [1, 0, 0], [0, 1, 0], atol=1e-15)


def test_angle_range_enforced():
    with pytest.raises(ValueError):
        se3_from_axis_angle([0, 0, np.pi], np.zeros(3))


@settings(max_examples=50, deadline=None)
@given(st.floats(-3.0, 3.0))
def test_opposite_rotations_compose_to_identity(theta):
    a = se3_from_axis_angle([0, 0, theta], np.zeros(3))
    b = se3_from_axis_angle([0, 0, -theta], np.zeros(3))
    np.testing.assert_allclose(compose_residual(a, b).rotation, np.eye(3), atol=1e-12)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-1.7, 1.7), min_size=3, max_size=3))
def test_rotation_is_orthonormal(omega):
    T = se3_from_axis_angle(omega, np.zeros(3))
    assert T.orthonormality_error() < 1e-9
    assert abs(np.linalg.det(T.rotation) - 1.0) < 1e-9


def test_rodrigues_derivative():
    omega = np.array([0.3, -0.2, 0.5])
    assert finite_diff_check(lambda w: (rodrigues(w) * np.arange(9.0).reshape(3, 3)).sum(), [omega]) < 1e-6
    # small-angle branch
    assert finite_diff_check(lambda w: (rodrigues(w) * np.arange(9.0).reshape(3, 3)).sum(), [omega * 1e-9]) < 1e-4


def test_composition_identities():
    T = se3_from_axis_angle([0.1, 0.2, -0.3], [0.4, -0.1, 0.2])
    I = PoseSE3.identity()
    for C in (compose_residual(T, I), compose_residual(I, T)):
        np.testing.assert_allclose(C.rotation, T.rotation, atol=1e-12)
        np.testing.assert_allclose(C.translation, T.translation, atol=1e-12)


def test_translations_add():
    a = se3_from_axis_angle(np.zeros(3), [0.1, 0, 0])
    b = se3_from_axis_angle(np.zeros(3), [0.2, 0, 0])
    np.testing.assert_allclose(compose_residual(a, b).translation, [0.3, 0, 0], atol=1e-15)


def test_residual_applied_after_initial():
    T_init = se3_from_axis_angle([0, 0, np.pi / 2], np.zeros(3))
    T_res = se3_from_axis_angle(np.zeros(3), [1.0, 0, 0])
    # T_res after T_init: rotate then translate
    np.testing.assert_allclose(compose_residual(T_init, T_res).matrix() @ [1, 0, 0, 1], [1, 1, 0, 1], atol=1e-12)


def test_identity_warp_reproduces_grid():
    d = np.full((24, 32), 2.0)
    c = warp_coordinates(d, PoseSE3.identity(), K)
    u, v = pixel_grid(24, 32)
    assert np.max(np.abs(c.u - u)) < 1e-9 and np.max(np.abs(c.v - v)) < 1e-9
    assert c.valid.all()


def test_translation_gives_five_pixel_shift():
    d = np.full((24, 32), 2.0)
    c = warp_coordinates(d, se3_from_axis_angle(np.zeros(3), [0.1, 0, 0]), K)
    u, v = pixel_grid(24, 32)
    np.testing.assert_allclose(c.u - u, 5.0, atol=1e-12)
    np.testing.assert_allclose(c.v, v, atol=1e-12)
    assert not c.valid[:, -5:].any() and c.valid[:, :26].all()


def test_behind_camera_invalid():
    d = np.full((4, 4), 1.0)
    c = warp_coordinates(d, se3_from_axis_angle(np.zeros(3), [0, 0, -2.0]), K)
    assert not c.valid.any()


def test_non_positive_depth_invalid():
    d = np.full((4, 4), 1.0)
    d[1, 2] = 0.0
    d[3, 3] = -1.0
    c = warp_coordinates(d, PoseSE3.identity(), CameraIntrinsics(3, 3, 1.5, 1.5))
    assert not c.valid[1, 2] and not c.valid[3, 3] and c.valid.sum() == 14


def test_sampling_at_nodes_and_midpoints():
    src = np.random.default_rng(0).random((5, 6, 3))
    u, v = pixel_grid(5, 6)
    out = bilinear_sample(src, CoordGrid(u, v, np.ones((5, 6), bool)))
    assert np.array_equal(out, src)
    two = np.zeros((1, 2, 1))
    two[0, 1] = 1.0
    mid = bilinear_sample(two, CoordGrid(np.full((1, 1), 0.5), np.zeros((1, 1)), np.ones((1, 1), bool)))
    assert mid[0, 0, 0] == 0.5


def test_invalid_pixels_zero_filled():
    src = np.ones((4, 4, 1))
    c = CoordGrid(np.full((2, 2), 10.0), np.zeros((2, 2)), np.zeros((2, 2), bool))
    assert np.array_equal(bilinear_sample(src, c), np.zeros((2, 2, 1)))


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_bilinear_is_convex_combination(seed):
    rng = np.random.default_rng(seed)
    src = rng.random((6, 7, 1))
    u = rng.uniform(0, 6, size=(5, 5))
    v = rng.uniform(0, 5, size=(5, 5))
    out = bilinear_sample(src, CoordGrid(u, v, np.ones((5, 5), bool)))[..., 0]
    x0 = np.minimum(np.floor(u).astype(int), 5)
    y0 = np.minimum(np.floor(v).astype(int), 4)
    corners = np.stack([src[y0, x0, 0], src[y0, x0 + 1, 0], src[y0 + 1, x0, 0], src[y0 + 1, x0 + 1, 0]])
    assert np.all(out >= corners.min(0) - 1e-12) and np.all(out <= corners.max(0) + 1e-12)


def test_sampling_gradients():
    rng = np.random.default_rng(2)
    src = rng.random((6, 7, 2))
    u = rng.uniform(0.1, 5.9, size=(3, 3)) + 0.01
    v = rng.uniform(0.1, 4.9, size=(3, 3)) + 0.01
    valid = np.ones((3, 3), bool)
    w = rng.random((3, 3, 2))

    def f(s, uu, vv):
        return (bilinear_sample(s, CoordGrid(uu, vv, valid)) * w).sum()

    assert finite_diff_check(f, [src, u, v]) < 1e-4


def test_synthesize_identity_and_out_of_view():
    src = np.random.default_rng(0).random((8, 9, 3))
    warped, valid = synthesize_view(src, np.full((8, 9), 1.5), PoseSE3.identity(), K)
    assert np.array_equal(warped, src) and valid.all()
    _, valid = synthesize_view(src, np.full((8, 9), 1.5), se3_from_axis_angle(np.zeros(3), [5.0, 0, 0]), K)
    assert not valid.any()


def test_gt_warp_beats_scaled_depth(plane64):
    s = plane64

    def l1(scale):
        w, v = synthesize_view(s.references[0], s.gt_depth * scale, s.gt_poses[0], s.intrinsics)
        return np.abs(w - s.target).mean(-1)[v].mean()

    assert l1(1.0) * 10 < l1(1.2)
