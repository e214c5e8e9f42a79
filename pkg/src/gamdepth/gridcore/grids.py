"""Raster conventions.

An image is an ``(H, W, C)`` float array with intensities on the 0-1 scale;
a scalar grid (depth, mask, gradient magnitude, per-pixel loss) is ``(H, W)``.
Plain ndarrays are used throughout; these helpers only validate.
"""

from __future__ import annotations

import numpy as np

from .autodiff import Node


class GridError(ValueError):
    pass


def _raw(x):
    return x.value if isinstance(x, Node) else np.asarray(x)


def check_image(img, name="image") -> None:
    a = _raw(img)
    if a.ndim != 3 or min(a.shape) < 1:
        raise GridError(f"{name}: expected (H, W, C) raster, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise GridError(f"{name}: contains non-finite values")


def check_scalar_grid(grid, name="grid") -> None:
    a = _raw(grid)
    if a.ndim != 2 or min(a.shape) < 1:
        raise GridError(f"{name}: expected (H, W) raster, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise GridError(f"{name}: contains non-finite values")


def check_same_hw(a, b, what="operands") -> None:
    sa, sb = _raw(a).shape[:2], _raw(b).shape[:2]
    if sa != sb:
        raise GridError(f"{what}: spatial shapes differ, {sa} vs {sb}")


def pixel_grid(height: int, width: int):
    """Column and row coordinates of pixel centres, each ``(H, W)``; (0, 0) is top-left."""
    v, u = np.mgrid[0:height, 0:width].astype(np.float64)
    return u, v
