"""
Per-pixel reconstruction losses: L1, SSIM dissimilarity, their weighted
combination, and the validity-aware minimum over reference frames.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .gridcore import Node, as_node, record, register_op, unwrap
from .gridcore import ad
from .gridcore.grids import GridError, check_image

__all__ = [
    "PerPixelLoss",
    "SSIM_C1",
    "SSIM_C2",
    "box_filter3",
    "window_valid",
    "l1_map",
    "ssim_map",
    "photometric_map",
    "min_reprojection",
]

SSIM_C1 = 0.01**2
SSIM_C2 = 0.03**2


@dataclass
class PerPixelLoss:
    """An ``(H, W)`` loss raster with a boolean validity grid."""

    value: np.ndarray | Node
    valid: np.ndarray

    @property
    def shape(self):
        return self.valid.shape

    def values(self) -> np.ndarray:
        return self.value.value if isinstance(self.value, Node) else np.asarray(self.value)


def _shape_of(x):
    return x.value.shape if isinstance(x, Node) else np.shape(x)


def _same_shape(a, b):
    check_image(a, "I_t")
    check_image(b, "I_w")
    if _shape_of(a) != _shape_of(b):
        raise GridError(f"image shapes differ: {_shape_of(a)} vs {_shape_of(b)}")


def _valid_or_all(valid, shape):
    if valid is None:
        return np.ones(shape[:2], dtype=bool)
    valid = np.asarray(valid, dtype=bool)
    if valid.shape != tuple(shape[:2]):
        raise GridError(f"validity grid {valid.shape} does not match raster {shape[:2]}")
    return valid


# ----------------------------------------------------------------------
# 3x3 box filter with reflection padding
# ----------------------------------------------------------------------


def _reflect_index(n):
    if n < 2:
        raise GridError("reflection padding needs at least 2 pixels per axis")
    return np.pad(np.arange(n), 1, mode="reflect")


def _fold_reflect(gp, axis):
    """Adjoint of one-pixel reflection padding along ``axis``."""
    gp = np.moveaxis(gp, axis, 0)
    n = gp.shape[0] - 2
    out = gp[1 : n + 1].copy()
    out[1] += gp[0]
    out[n - 2] += gp[n + 1]
    return np.moveaxis(out, 0, axis)


@register_op("box3_reflect")
def _box3(x):
    h, w = x.shape[:2]
    p = x[_reflect_index(h)][:, _reflect_index(w)]
    out = sum(p[i : i + h, j : j + w] for i in range(3) for j in range(3)) / 9.0

    def bw(g):
        gp = np.zeros(p.shape)
        for i in range(3):
            for j in range(3):
                gp[i : i + h, j : j + w] += g
        gp /= 9.0
        return (_fold_reflect(_fold_reflect(gp, 0), 1),)

    return out, bw, None


def window_valid(valid) -> np.ndarray:
    """Pixels whose whole 3x3 (reflection-padded) window is valid."""
    valid = np.asarray(valid, dtype=bool)
    h, w = valid.shape
    p = valid[_reflect_index(h)][:, _reflect_index(w)]
    out = np.ones_like(valid)
    for i in range(3):
        for j in range(3):
            out &= p[i : i + h, j : j + w]
    return out


def box_filter3(x):
    """Mean over each 3x3 neighbourhood, mirrored at the border (no edge repeat)."""
    return unwrap(record("box3_reflect", [x]))


# ----------------------------------------------------------------------
# loss maps
# ----------------------------------------------------------------------


def l1_map(I_t, I_w, valid=None) -> PerPixelLoss:
    """Channel-mean absolute difference."""
    _same_shape(I_t, I_w)
    diff = ad.absolute(as_node(I_t) - I_w).mean(axis=-1)
    return PerPixelLoss(unwrap(diff), _valid_or_all(valid, _shape_of(I_t)))


def _ssim_dissimilarity(x, y):
    x, y = as_node(x), as_node(y)
    box = lambda a: record("box3_reflect", [a])
    mu_x, mu_y = box(x), box(y)
    sigma_x = box(x * x) - mu_x * mu_x
    sigma_y = box(y * y) - mu_y * mu_y
    sigma_xy = box(x * y) - mu_x * mu_y
    num = (2.0 * mu_x * mu_y + SSIM_C1) * (2.0 * sigma_xy + SSIM_C2)
    den = (mu_x * mu_x + mu_y * mu_y + SSIM_C1) * (sigma_x + sigma_y + SSIM_C2)
    return ad.clip((1.0 - num / den) * 0.5, 0.0, 1.0)


def ssim_map(I_t, I_w, valid=None) -> PerPixelLoss:
    """Per-pixel ``(1 - SSIM) / 2`` from 3x3 statistics, averaged over channels.

    Uses C1 = 0.01**2 and C2 = 0.03**2 on the 0-1 intensity scale; the
    result is clamped to [0, 1]. A pixel stays valid only if every pixel of
    its window is valid, since zero-filled neighbours corrupt the statistics.
    """
    _same_shape(I_t, I_w)
    d = _ssim_dissimilarity(I_t, I_w).mean(axis=-1)
    return PerPixelLoss(unwrap(d), window_valid(_valid_or_all(valid, _shape_of(I_t))))


def photometric_map(I_t, I_w, alpha: float = 0.85, valid=None) -> PerPixelLoss:
    """``(1 - alpha) * L1 + alpha * SSIM-dissimilarity`` per pixel."""
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must lie in [0, 1], got {alpha}")
    _same_shape(I_t, I_w)
    valid = _valid_or_all(valid, _shape_of(I_t))
    # degenerate weights return the single term untouched so alpha=0/1 is exact
    if alpha == 0.0:
        return l1_map(I_t, I_w, valid)
    if alpha == 1.0:
        return ssim_map(I_t, I_w, valid)
    l1 = l1_map(I_t, I_w).value
    ss = ssim_map(I_t, I_w, valid)
    return PerPixelLoss(unwrap((1.0 - alpha) * as_node(l1) + alpha * as_node(ss.value)), ss.valid)


@register_op("masked_min")
def _masked_min(*maps, valids):
    stacked = np.stack(maps)
    v = np.stack(valids).astype(bool)
    masked = np.where(v, stacked, np.inf)
    idx = np.argmin(masked, axis=0)
    any_valid = v.any(axis=0)
    out = np.where(any_valid, np.take_along_axis(stacked, idx[None], 0)[0], 0.0)

    def bw(g):
        g = np.where(any_valid, g, 0.0)
        return tuple(np.where(idx == k, g, 0.0) for k in range(len(maps)))

    branch = np.where(any_valid, idx, -1)
    return out, bw, branch


def min_reprojection(losses) -> PerPixelLoss:
    """Per-pixel minimum over reference frames, counting only frames where the
    pixel is valid. Pixels valid in no frame are zero and flagged invalid."""
    losses = list(losses)
    if not losses:
        raise ValueError("min_reprojection needs at least one per-pixel loss")
    shapes = {l.shape for l in losses}
    if len(shapes) != 1:
        raise GridError(f"per-pixel losses have differing shapes {sorted(shapes)}")
    valids = [np.asarray(l.valid, dtype=bool) for l in losses]
    out = record("masked_min", [l.value for l in losses], valids=valids)
    return PerPixelLoss(unwrap(out), np.logical_or.reduce(valids))
