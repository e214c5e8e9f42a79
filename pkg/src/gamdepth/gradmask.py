"""
Gradient-magnitude weighting of the photometric loss.

``m`` is the 3x3 Sobel magnitude of the target frame on the 0-255 luma
scale. The soft mask maps it through a floored sigmoid; the keypoint
baseline thresholds it to {0, 1}. Both masks are constants as far as
differentiation is concerned.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage, special

from .gridcore import Node, as_node, unwrap
from .gridcore.grids import GridError, check_image, check_scalar_grid
from .photometric import PerPixelLoss

__all__ = [
    "MaskConfig",
    "SOBEL_X",
    "SOBEL_Y",
    "luma255",
    "sobel_components",
    "sobel_magnitude",
    "gradient_aware_mask",
    "mask_bound_gaps",
    "gradient_aware_loss",
    "keypoint_binary_mask",
    "KEYPOINT_THRESHOLD",
]

SOBEL_X = np.array([[-1.0, 0.0, 1.0], [-2.0, 0.0, 2.0], [-1.0, 0.0, 1.0]])
SOBEL_Y = SOBEL_X.T.copy()
LUMA_WEIGHTS = np.array([0.299, 0.587, 0.114])
KEYPOINT_THRESHOLD = 400.0


@dataclass(frozen=True)
class MaskConfig:
    beta: float = 0.1
    gamma1: float = 0.1
    gamma2: float = 40.0

    def __post_init__(self):
        if not 0.0 <= self.beta < 1.0:
            raise ValueError(f"beta must lie in [0, 1), got {self.beta}")
        if not self.gamma1 > 0.0:
            raise ValueError(f"gamma1 must be positive, got {self.gamma1}")


def luma255(img) -> np.ndarray:
    """Luma on the 0-255 scale from a 1- or 3-channel 0-1 image."""
    img = np.asarray(img.value if isinstance(img, Node) else img, dtype=np.float64)
    check_image(img)
    c = img.shape[2]
    if c == 1:
        return img[..., 0] * 255.0
    if c == 3:
        # integer weights keep gray levels exact (white -> 255.0)
        return (img @ (LUMA_WEIGHTS * 1000.0)) * 255.0 / 1000.0
    raise GridError(f"sobel expects 1 or 3 channels, got {c}")


def sobel_components(img):
    """Horizontal and vertical Sobel responses, replicate-padded."""
    y = luma255(img)
    # separable form: flat regions give exactly 0 (the 2-D sum can leave rounding residue)
    gx = ndimage.sobel(y, axis=1, mode="nearest")
    gy = ndimage.sobel(y, axis=0, mode="nearest")
    return gx, gy


def sobel_magnitude(img) -> np.ndarray:
    gx, gy = sobel_components(img)
    return np.hypot(gx, gy)


def gradient_aware_mask(m, cfg: MaskConfig = MaskConfig()) -> np.ndarray:
    """``beta + (1 - beta) / (1 + exp(-gamma1 * m + gamma2))`` per pixel."""
    m = np.asarray(m, dtype=np.float64)
    if np.any(m < 0):
        raise ValueError("gradient magnitude must be non-negative")
    # exp overflow for very negative exponents just saturates the sigmoid at 0
    with np.errstate(over="ignore"):
        return cfg.beta + (1.0 - cfg.beta) / (1.0 + np.exp(-cfg.gamma1 * m + cfg.gamma2))


def mask_bound_gaps(m, cfg: MaskConfig = MaskConfig()):
    """``(M - beta, 1 - M)`` evaluated without cancellation.

    Both are strictly positive for finite ``m``, although the float64 mask
    itself rounds onto ``beta`` or 1 once a gap drops below half an ulp
    (e.g. ``M(0) - beta`` is about 4e-18 with the defaults).
    """
    z = -cfg.gamma1 * np.asarray(m, dtype=np.float64) + cfg.gamma2
    return (1.0 - cfg.beta) * special.expit(-z), (1.0 - cfg.beta) * special.expit(z)


def keypoint_binary_mask(m, threshold: float = KEYPOINT_THRESHOLD) -> np.ndarray:
    """1 where ``m > threshold`` else 0."""
    if threshold < 0:
        raise ValueError(f"threshold must be non-negative, got {threshold}")
    return (np.asarray(m) > threshold).astype(np.float64)


def gradient_aware_loss(M, min_loss: PerPixelLoss):
    """Mean of ``M * min_loss`` over valid pixels.

    ``M`` is used as a constant weight; a node passed in is detached.
    """
    M = np.asarray(M.value if isinstance(M, Node) else M, dtype=np.float64)
    check_scalar_grid(M, "mask")
    if M.shape != min_loss.shape:
        raise GridError(f"mask {M.shape} and loss {min_loss.shape} differ in shape")
    valid = np.asarray(min_loss.valid, dtype=bool)
    n = int(valid.sum())
    if n == 0:
        raise ValueError("gradient_aware_loss: no valid pixels to average over")
    return unwrap((as_node(min_loss.value) * (M * valid)).sum() / float(n))
