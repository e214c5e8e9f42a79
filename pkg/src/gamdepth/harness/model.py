"""
Desk-scale stand-in for the depth / segmentation / pose networks.

A per-pixel latent grid ``z`` (H x W x F) is shared by two heads applied
independently at every pixel (1x1 maps): a depth head giving log-depth and a
segmentation head giving class logits. Poses are free 6-vectors
(axis-angle, translation) per reference frame, with an optional residual
6-vector composed on top.
"""

from __future__ import annotations

from dataclasses import dataclass, fields, replace

import numpy as np

from ..geometry import PoseSE3, compose_residual, se3_from_axis_angle, synthesize_view
from ..gradmask import gradient_aware_loss, gradient_aware_mask, keypoint_binary_mask, sobel_magnitude
from ..gridcore import Node, parameter
from ..gridcore import ad
from ..photometric import min_reprojection, photometric_map
from ..regularizers import LossBreakdown, LossConfig, edge_aware_smoothness, total_loss
from ..semantics import cross_entropy_logits

__all__ = [
    "MASK_MODES",
    "POSE_MODES",
    "ModelState",
    "init_state",
    "decode_depth",
    "decode_logits",
    "scene_mask",
    "current_poses",
    "forward_loss",
]

MASK_MODES = ("gam", "key", "avg")
POSE_MODES = ("gt", "opt", "res")
_MASK_ALIASES = {"gradient-aware": "gam", "keypoint-binary": "key", "average": "avg"}
_POSE_ALIASES = {"ground-truth": "gt", "optimized": "opt", "optimized+residual": "res"}


def canonical_mask_mode(mode: str) -> str:
    mode = _MASK_ALIASES.get(mode, mode)
    if mode not in MASK_MODES:
        raise ValueError(f"unknown mask mode {mode!r}; expected one of {MASK_MODES}")
    return mode


def canonical_pose_mode(mode: str) -> str:
    mode = _POSE_ALIASES.get(mode, mode)
    if mode not in POSE_MODES:
        raise ValueError(f"unknown pose mode {mode!r}; expected one of {POSE_MODES}")
    return mode


@dataclass
class ModelState:
    latent: np.ndarray | Node  # (H, W, F)
    depth_w: np.ndarray | Node  # (F,)
    depth_b: np.ndarray | Node  # ()
    seg_w: np.ndarray | Node  # (F, C)
    seg_b: np.ndarray | Node  # (C,)
    pose: np.ndarray | Node  # (n_refs, 6): axis-angle then translation
    res_pose: np.ndarray | Node  # (n_refs, 6)

    def names(self):
        return [f.name for f in fields(self)]

    def as_parameters(self) -> "ModelState":
        return ModelState(**{n: parameter(np.asarray(getattr(self, n)), name=n) for n in self.names()})

    def values(self) -> "ModelState":
        return ModelState(
            **{n: (getattr(self, n).value if isinstance(getattr(self, n), Node) else getattr(self, n)).copy() for n in self.names()}
        )

    def copy(self) -> "ModelState":
        return self.values()


def init_state(scene, n_features=8, num_classes=None, init_depth=1.5, seed=0) -> ModelState:
    """Near-constant depth ``init_depth``, identity poses, uniform class logits."""
    rng = np.random.default_rng(seed)
    h, w = scene.shape
    c = scene.gt_labels.num_classes if num_classes is None else num_classes
    n_refs = len(scene.references)
    return ModelState(
        latent=rng.normal(scale=1e-3, size=(h, w, n_features)),
        depth_w=np.full(n_features, 1.0 / np.sqrt(n_features)),
        depth_b=np.array(np.log(init_depth)),
        seg_w=rng.normal(scale=0.1, size=(n_features, c)),
        seg_b=np.zeros(c),
        pose=np.zeros((n_refs, 6)),
        res_pose=np.zeros((n_refs, 6)),
    )


def decode_depth(state: ModelState):
    logd = ad.einsum("hwf,f->hw", state.latent, state.depth_w) + state.depth_b
    return ad.exp(logd)


def decode_logits(state: ModelState):
    return ad.einsum("hwf,fc->hwc", state.latent, state.seg_w) + state.seg_b


def scene_mask(scene, mode: str, cfg: LossConfig) -> np.ndarray:
    """Per-pixel photometric weight for the target frame (constant)."""
    mode = canonical_mask_mode(mode)
    if mode == "avg":
        return np.ones(scene.shape)
    m = sobel_magnitude(scene.target)
    if mode == "key":
        return keypoint_binary_mask(m)
    return gradient_aware_mask(m, cfg.mask)


def _pose_from(vec) -> PoseSE3:
    return se3_from_axis_angle(vec[:3], vec[3:])


def current_poses(state: ModelState, scene, pose_mode: str) -> list[PoseSE3]:
    pose_mode = canonical_pose_mode(pose_mode)
    if pose_mode == "gt":
        return list(scene.gt_poses)
    poses = []
    for k in range(len(scene.references)):
        t = _pose_from(state.pose[k])
        if pose_mode == "res":
            t = compose_residual(t, _pose_from(state.res_pose[k]))
        poses.append(t)
    return poses


def forward_loss(
    state: ModelState,
    scene,
    cfg: LossConfig = LossConfig(),
    step: int = 0,
    mask_mode: str = "gam",
    pose_mode: str = "gt",
    seg: bool = True,
    mask: np.ndarray | None = None,
) -> LossBreakdown:
    """Full objective for one target frame.

    ``mask`` may be passed to reuse a precomputed :func:`scene_mask`.
    """
    if mask is None:
        mask = scene_mask(scene, mask_mode, cfg)
    depth = decode_depth(state)
    maps = []
    for I_s, T in zip(scene.references, current_poses(state, scene, pose_mode)):
        warped, valid = synthesize_view(I_s, depth, T, scene.intrinsics)
        maps.append(photometric_map(scene.target, warped, cfg.alpha, valid))
    l_gra = gradient_aware_loss(mask, min_reprojection(maps))

    terms = {"l_gra": l_gra}
    terms["l_seg"] = cross_entropy_logits(decode_logits(state), scene.gt_labels) if seg else 0.0
    terms["l_smooth"] = edge_aware_smoothness(depth, scene.target)
    if cfg.norm_term is not None:
        terms["l_norm"] = cfg.norm_term(depth, scene)
    if cfg.planar_term is not None:
        terms["l_planar"] = cfg.planar_term(depth, scene)
    return total_loss(terms, cfg, step)
