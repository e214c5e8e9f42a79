"""Gradient-descent driver and the mask-mode ablation runner."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from ..gradmask import KEYPOINT_THRESHOLD, sobel_magnitude
from ..gridcore import Node, backward
from ..metrics import MetricsRow, evaluate_depth
from ..regularizers import LossBreakdown, LossConfig
from .model import (
    MASK_MODES,
    ModelState,
    canonical_mask_mode,
    canonical_pose_mode,
    decode_depth,
    forward_loss,
    init_state,
    scene_mask,
)

__all__ = [
    "OptimizationError",
    "RunConfig",
    "DEFAULT_LR_SCALE",
    "initial_state",
    "optimize",
    "predicted_depth",
    "AblationRow",
    "run_ablation",
    "ablation_csv",
]

# step multipliers per parameter group; "latent" is further scaled by H*W
# because each pixel only sees 1/(H*W) of the mean loss
DEFAULT_LR_SCALE = {
    "latent": 1.0,
    "depth_w": 0.0,
    "depth_b": 0.0,
    "seg_w": 1.0,
    "seg_b": 1.0,
    "pose": 0.01,
    "res_pose": 0.01,
}


class OptimizationError(RuntimeError):
    """The objective failed at ``iteration`` (non-finite value or no valid pixels)."""

    def __init__(self, iteration: int, message: str):
        super().__init__(f"iteration {iteration}: {message}")
        self.iteration = iteration


@dataclass(frozen=True)
class RunConfig:
    loss: LossConfig = field(default_factory=LossConfig)
    iterations: int = 2000
    lr: float = 0.01
    lr_scale: tuple = tuple(sorted(DEFAULT_LR_SCALE.items()))
    mask_mode: str = "gam"
    pose_mode: str = "gt"
    seg: bool = True
    seed: int = 0
    init_depth: float = 1.5
    n_features: int = 8
    pose_init_noise: tuple = (0.005, 0.02)  # (rad, m) std of the initial pose estimate
    scene_path: str | None = None
    generator: dict | None = None
    out_dir: str | None = None

    def __post_init__(self):
        if self.iterations < 1:
            raise ValueError(f"iterations must be at least 1, got {self.iterations}")
        if not self.lr > 0:
            raise ValueError(f"learning rate must be positive, got {self.lr}")
        if self.init_depth <= 0:
            raise ValueError("init_depth must be positive")
        object.__setattr__(self, "mask_mode", canonical_mask_mode(self.mask_mode))
        object.__setattr__(self, "pose_mode", canonical_pose_mode(self.pose_mode))

    def with_(self, **kw) -> "RunConfig":
        return replace(self, **kw)

    def group_lr(self, name: str, n_pixels: int) -> float:
        scale = dict(self.lr_scale)[name]
        return self.lr * scale * (n_pixels if name == "latent" else 1.0)


def initial_state(scene, run: RunConfig) -> ModelState:
    """Initial parameters: near-constant depth and a noisy pose estimate."""
    state = init_state(scene, run.n_features, init_depth=run.init_depth, seed=run.seed)
    if run.pose_mode != "gt":
        rng = np.random.default_rng([run.seed, 1])
        rot_sd, trans_sd = run.pose_init_noise
        for k, T in enumerate(scene.gt_poses):
            omega = _axis_angle(np.asarray(T.rotation))
            state.pose[k, :3] = omega + rng.normal(scale=rot_sd, size=3)
            state.pose[k, 3:] = np.asarray(T.translation) + rng.normal(scale=trans_sd, size=3)
    return state


def _axis_angle(R: np.ndarray) -> np.ndarray:
    angle = math.acos(np.clip((np.trace(R) - 1.0) / 2.0, -1.0, 1.0))
    w = np.array([R[2, 1] - R[1, 2], R[0, 2] - R[2, 0], R[1, 0] - R[0, 1]])
    if angle < 1e-12:
        return w / 2.0
    return w * angle / (2.0 * math.sin(angle))


def _frozen_groups(run: RunConfig, it: int) -> set:
    frozen = set()
    if run.pose_mode == "gt":
        frozen |= {"pose", "res_pose"}
    elif run.pose_mode == "opt":
        frozen.add("res_pose")
    else:
        # residual stage: initial pose frozen from the midpoint on
        frozen.add("pose" if it >= run.iterations // 2 else "res_pose")
    if not run.seg:
        frozen |= {"seg_w", "seg_b"}
    return frozen


def optimize(state: ModelState, scene, run: RunConfig, callback=None):
    """Fixed-step gradient descent.

    Each iteration evaluates the loss at the current parameters (recorded in
    the history) and then takes one step. Returns ``(state, history)`` with
    ``len(history) == run.iterations``.
    """
    cfg = run.loss.with_(total_steps=run.iterations)
    mask = scene_mask(scene, run.mask_mode, cfg)
    n_pixels = scene.shape[0] * scene.shape[1]
    state = state.copy()
    history = []
    for it in range(run.iterations):
        params = state.as_parameters()
        try:
            breakdown = forward_loss(params, scene, cfg, it, run.mask_mode, run.pose_mode, run.seg, mask=mask)
        except ValueError as exc:
            raise OptimizationError(it, str(exc)) from exc
        total = float(breakdown.total)
        if not math.isfinite(total):
            raise OptimizationError(it, f"non-finite loss {total}")
        history.append(breakdown.floats())
        backward(breakdown.total)
        frozen = _frozen_groups(run, it)
        for name in state.names():
            step = run.group_lr(name, n_pixels)
            if name in frozen or step == 0.0:
                continue
            grad = getattr(params, name).grad
            if not np.all(np.isfinite(grad)):
                raise OptimizationError(it, f"non-finite gradient for {name}")
            setattr(state, name, getattr(state, name) - step * grad)
        if callback is not None:
            callback(it, state, history[-1])
    return state, history


def predicted_depth(state: ModelState) -> np.ndarray:
    d = decode_depth(state.values())
    return np.asarray(d.value if isinstance(d, Node) else d)


@dataclass(frozen=True)
class AblationRow:
    mode: str
    overall: MetricsRow
    textureless: MetricsRow
    high_gradient: MetricsRow


_NAN_ROW = MetricsRow(*([math.nan] * 5))


def _region_metrics(pred, gt, region) -> MetricsRow:
    if region is not None and not np.any(region):
        return _NAN_ROW
    return evaluate_depth(pred, gt, region=region)


def run_ablation(scene, base: RunConfig, modes=MASK_MODES):
    """Train once per mask mode with identical seed and budget.

    Returns one :class:`AblationRow` per mode plus the trained states.
    """
    high_grad = sobel_magnitude(scene.target) > KEYPOINT_THRESHOLD
    textureless = np.asarray(scene.textureless_mask) > 0.5
    rows, states = [], {}
    for mode in modes:
        run = base.with_(mask_mode=mode)
        state, _ = optimize(initial_state(scene, run), scene, run)
        pred = predicted_depth(state)
        rows.append(
            AblationRow(
                run.mask_mode,
                _region_metrics(pred, scene.gt_depth, None),
                _region_metrics(pred, scene.gt_depth, textureless),
                _region_metrics(pred, scene.gt_depth, high_grad),
            )
        )
        states[run.mask_mode] = state
    return rows, states


def ablation_csv(rows) -> str:
    cols = ["abs_rel", "rms", "d1", "d2", "d3"]
    header = ["mode"] + [f"{region}_{c}" for region in ("all", "textureless", "highgrad") for c in cols]
    lines = [",".join(header)]
    for r in rows:
        lines.append(",".join([r.mode, r.overall.to_csv(), r.textureless.to_csv(), r.high_gradient.to_csv()]))
    return "\n".join(lines) + "\n"
