import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gamdepth.gridcore import Node, finite_diff_check
from gamdepth.regularizers import LossConfig, edge_aware_smoothness, total_loss


def test_constant_depth_is_smooth():
    img = np.random.default_rng(0).random((6, 7, 3))
    assert edge_aware_smoothness(np.full((6, 7), 2.3), img) == 0.0


@settings(max_examples=30, deadline=None)
@given(st.floats(0.01, 100.0))
def test_smoothness_scale_invariant(c):
    rng = np.random.default_rng(1)
    d, img = rng.uniform(0.5, 3.0, size=(6, 7)), rng.random((6, 7, 3))
    assert abs(edge_aware_smoothness(c * d, img) - edge_aware_smoothness(d, img)) < 1e-10


def test_step_on_edge_is_cheaper():
    d = np.ones((8, 8))
    d[:, 4:] = 2.0
    edge = np.zeros((8, 8, 3))
    edge[:, 4:] = 1.0
    flat = np.full((8, 8, 3), 0.5)
    assert edge_aware_smoothness(d, edge) < edge_aware_smoothness(d, flat)


def test_smoothness_rejects_non_positive_depth():
    with pytest.raises(ValueError):
        edge_aware_smoothness(np.zeros((3, 3)), np.zeros((3, 3, 3)))


def test_smoothness_gradient():
    rng = np.random.default_rng(2)
    d, img = rng.uniform(0.5, 3.0, size=(5, 6)), rng.random((5, 6, 3))
    assert finite_diff_check(lambda x: edge_aware_smoothness(x, img), [d]) < 1e-4


def test_total_loss_examples():
    cfg = LossConfig(total_steps=100)
    assert total_loss({}, cfg).total == 0.0
    assert total_loss({"l_gra": 0.2}, cfg).total == pytest.approx(0.2, abs=1e-15)
    out = total_loss({"l_gra": 0.2, "l_seg": 1.0, "l_smooth": 0.5}, cfg, step=0)
    assert out.total == pytest.approx(0.251, abs=1e-12)
    assert out.l_norm == 0.0 and out.l_planar == 0.0
    late = total_loss({"l_gra": 0.2, "l_seg": 1.0, "l_smooth": 0.5}, cfg, step=50)
    assert late.total == pytest.approx(0.25, abs=1e-12)


def test_total_loss_rejects_bad_terms():
    with pytest.raises(ValueError, match="l_smooth"):
        total_loss({"l_gra": 0.1, "l_smooth": float("nan")})
    with pytest.raises(KeyError):
        total_loss({"l_bogus": 1.0})


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(0.0, 10.0), min_size=5, max_size=5), st.integers(0, 9))
def test_total_matches_weighted_sum(vals, step):
    cfg = LossConfig(total_steps=10)
    names = ("l_gra", "l_seg", "l_smooth", "l_norm", "l_planar")
    out = total_loss(dict(zip(names, vals)), cfg, step)
    lam1 = 0.001 if step < 5 else 0.0
    ref = vals[0] + lam1 * vals[1] + 0.1 * vals[2] + 0.05 * vals[3] + 0.1 * vals[4]
    assert abs(out.total - ref) < 1e-10


def test_total_linear_in_components():
    cfg = LossConfig(total_steps=10)
    names = ("l_gra", "l_seg", "l_smooth", "l_norm", "l_planar")
    f = lambda v: total_loss(dict(zip(names, [v[i] for i in range(5)])), cfg, 0).total
    v = np.array([0.2, 1.0, 0.5, 0.3, 0.4])
    assert finite_diff_check(f, [v]) < 1e-8


def test_pluggable_providers_enter_total():
    from gamdepth.harness.model import forward_loss, init_state
    from gamdepth.scenes import make_plane_scene

    scene = make_plane_scene(0, (16, 16))
    state = init_state(scene)
    cfg = LossConfig(norm_term=lambda d, s: 2.0, planar_term=lambda d, s: 1.0)
    base = forward_loss(state, scene, LossConfig(), 0)
    out = forward_loss(state, scene, cfg, 0)
    assert float(out.total) == pytest.approx(float(base.total) + 0.05 * 2.0 + 0.1 * 1.0, abs=1e-12)
