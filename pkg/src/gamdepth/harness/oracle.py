"""Finite-difference oracle for the full training objective."""

from __future__ import annotations

import numpy as np

from ..gridcore import GradCheckReport, gradient_check
from ..regularizers import LossConfig
from .model import ModelState, forward_loss, init_state
from .train import _axis_angle

__all__ = ["random_state", "check_forward_loss"]


def random_state(scene, seed: int = 0) -> ModelState:
    """A generic point: spatially varying depth, poses near the truth,
    non-trivial residuals and segmentation weights."""
    rng = np.random.default_rng(seed)
    state = init_state(scene, seed=seed)
    state.latent = rng.normal(scale=0.1, size=state.latent.shape)
    state.depth_b = np.log(np.median(scene.gt_depth)) + rng.normal(scale=0.05)
    state.seg_b = rng.normal(scale=0.1, size=state.seg_b.shape)
    for k, T in enumerate(scene.gt_poses):
        state.pose[k, :3] = _axis_angle(np.asarray(T.rotation)) + rng.normal(scale=0.01, size=3)
        state.pose[k, 3:] = np.asarray(T.translation) + rng.normal(scale=0.01, size=3)
    state.res_pose = rng.normal(scale=0.005, size=state.res_pose.shape)
    return state


def check_forward_loss(
    scene,
    cfg: LossConfig = LossConfig(),
    mask_mode: str = "gam",
    pose_mode: str = "res",
    seg: bool = True,
    seed: int = 0,
    max_coords: int | None = 6,
    eps: float = 3e-5,
) -> GradCheckReport:
    """Gradient check of ``forward_loss`` w.r.t. every parameter group.

    The segmentation schedule is evaluated in its active first half.
    """
    state = random_state(scene, seed)
    names = state.names()
    cfg = cfg.with_(total_steps=max(cfg.total_steps, 2))

    def f(*params):
        return forward_loss(ModelState(*params), scene, cfg, 0, mask_mode, pose_mode, seg).total

    rng = np.random.default_rng([seed, 2])
    return gradient_check(f, [getattr(state, n) for n in names], eps=eps, max_coords=max_coords, rng=rng)
