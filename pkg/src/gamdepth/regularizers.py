"""Edge-aware smoothness and assembly of the weighted training objective."""

from __future__ import annotations

from dataclasses import dataclass, field, fields, replace
from typing import Callable, Mapping

import numpy as np

from .gradmask import MaskConfig
from .gridcore import Node, as_node, unwrap
from .gridcore import ad
from .gridcore.grids import GridError, check_image, check_scalar_grid
from .semantics import seg_weight_schedule

__all__ = ["LossConfig", "LossBreakdown", "edge_aware_smoothness", "total_loss", "TERMS"]

TERMS = ("l_gra", "l_seg", "l_smooth", "l_norm", "l_planar")


@dataclass(frozen=True)
class LossConfig:
    """Loss weights. ``norm_term``/``planar_term`` are optional providers
    ``f(depth, scene) -> scalar``; absent providers contribute 0."""

    alpha: float = 0.85
    lambda1: float = 0.001
    lambda2: float = 0.1
    lambda3: float = 0.05
    lambda4: float = 0.1
    mask: MaskConfig = field(default_factory=MaskConfig)
    total_steps: int = 1
    norm_term: Callable | None = None
    planar_term: Callable | None = None

    def __post_init__(self):
        for name in ("alpha", "lambda1", "lambda2", "lambda3", "lambda4"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative, got {getattr(self, name)}")
        if self.alpha > 1:
            raise ValueError(f"alpha must lie in [0, 1], got {self.alpha}")
        if self.total_steps < 1:
            raise ValueError("total_steps must be at least 1")

    def with_(self, **kw) -> "LossConfig":
        return replace(self, **kw)


@dataclass
class LossBreakdown:
    l_gra: float | Node = 0.0
    l_seg: float | Node = 0.0
    l_smooth: float | Node = 0.0
    l_norm: float | Node = 0.0
    l_planar: float | Node = 0.0
    total: float | Node = 0.0

    def floats(self) -> "LossBreakdown":
        return LossBreakdown(**{f.name: float(getattr(self, f.name)) for f in fields(self)})

    def as_dict(self) -> dict:
        return {f.name: float(getattr(self, f.name)) for f in fields(self)}


def edge_aware_smoothness(depth, image):
    """First-order edge-aware smoothness of mean-normalised inverse depth.

    mean(|dx d| * exp(-|dx I|)) + mean(|dy d| * exp(-|dy I|)) with ``I`` the
    channel-mean intensity and ``d = (1/D) / mean(1/D)``.
    """
    check_scalar_grid(depth, "depth")
    check_image(image, "image")
    dval = depth.value if isinstance(depth, Node) else np.asarray(depth)
    img = image.value if isinstance(image, Node) else np.asarray(image, dtype=np.float64)
    if dval.shape != img.shape[:2]:
        raise GridError(f"depth {dval.shape} and image {img.shape[:2]} differ in size")
    if np.any(dval <= 0):
        raise ValueError("edge_aware_smoothness: depth must be positive")
    gray = img.mean(axis=-1)
    wx = np.exp(-np.abs(np.diff(gray, axis=1)))
    wy = np.exp(-np.abs(np.diff(gray, axis=0)))

    inv = 1.0 / as_node(depth)
    d = inv / inv.mean()
    dx = ad.absolute(d[:, 1:] - d[:, :-1])
    dy = ad.absolute(d[1:, :] - d[:-1, :])
    return unwrap((dx * wx).mean() + (dy * wy).mean())


def total_loss(components: Mapping, cfg: LossConfig = LossConfig(), step: int = 0) -> LossBreakdown:
    """Weighted sum of the loss terms; the segmentation weight follows the schedule.

    ``components`` maps term names (``l_gra``, ``l_seg``, ``l_smooth``,
    ``l_norm``, ``l_planar``) to scalars or scalar nodes; missing terms are 0.
    """
    unknown = set(components) - set(TERMS)
    if unknown:
        raise KeyError(f"unknown loss terms: {sorted(unknown)}")
    vals = {}
    for name in TERMS:
        v = components.get(name, 0.0)
        if not np.isfinite(float(v.value if isinstance(v, Node) else v)):
            raise ValueError(f"loss term {name} is not finite: {float(v.value if isinstance(v, Node) else v)}")
        vals[name] = v
    lam1 = seg_weight_schedule(step, cfg.total_steps, cfg.lambda1)
    weights = {"l_gra": 1.0, "l_seg": lam1, "l_smooth": cfg.lambda2, "l_norm": cfg.lambda3, "l_planar": cfg.lambda4}
    total = 0.0
    for name in TERMS:
        total = total + weights[name] * vals[name]
    return LossBreakdown(**vals, total=total)
