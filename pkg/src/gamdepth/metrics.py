"""
Depth evaluation: median scaling, depth capping and the AbsRel / RMS /
delta-threshold battery.
"""

from __future__ import annotations

from dataclasses import astuple, dataclass

import numpy as np

__all__ = [
    "MetricsRow",
    "MIN_DEPTH",
    "MAX_DEPTH",
    "CSV_HEADER",
    "median_scale",
    "cap_depth",
    "evaluate",
    "gt_valid_mask",
    "evaluate_depth",
]

MIN_DEPTH = 1e-3
MAX_DEPTH = 10.0
CSV_HEADER = "abs_rel,rms,d1,d2,d3"


@dataclass(frozen=True)
class MetricsRow:
    abs_rel: float
    rms: float
    delta1: float
    delta2: float
    delta3: float

    def to_csv(self) -> str:
        return ",".join(f"{x:.6f}" for x in astuple(self))

    def as_array(self) -> np.ndarray:
        return np.array(astuple(self))


def _valid(valid, shape):
    if valid is None:
        return np.ones(shape, dtype=bool)
    valid = np.asarray(valid, dtype=bool)
    if valid.shape != shape:
        raise ValueError(f"validity mask {valid.shape} does not match depth {shape}")
    return valid


def median_scale(pred, gt, valid=None) -> np.ndarray:
    """Rescale ``pred`` so its median over ``valid`` matches that of ``gt``."""
    pred, gt = np.asarray(pred, dtype=np.float64), np.asarray(gt, dtype=np.float64)
    valid = _valid(valid, gt.shape)
    if not valid.any():
        raise ValueError("median_scale: no valid pixels")
    med_pred = np.median(pred[valid])
    if med_pred == 0:
        raise ValueError("median_scale: median prediction is zero")
    return pred * (np.median(gt[valid]) / med_pred)


def cap_depth(d, max_depth: float = MAX_DEPTH) -> np.ndarray:
    """Clamp depths into ``[1e-3, max_depth]``."""
    if max_depth <= 0:
        raise ValueError(f"max_depth must be positive, got {max_depth}")
    return np.clip(np.asarray(d, dtype=np.float64), MIN_DEPTH, max_depth)


def evaluate(pred, gt, valid=None) -> MetricsRow:
    """Metrics over ``valid`` pixels. Scaling and capping are the caller's job."""
    pred, gt = np.asarray(pred, dtype=np.float64), np.asarray(gt, dtype=np.float64)
    if pred.shape != gt.shape:
        raise ValueError(f"prediction {pred.shape} and ground truth {gt.shape} differ in shape")
    valid = _valid(valid, gt.shape)
    if not valid.any():
        raise ValueError("evaluate: no valid pixels")
    p, g = pred[valid], gt[valid]
    ratio = np.maximum(p / g, g / p)
    return MetricsRow(
        abs_rel=float(np.mean(np.abs(p - g) / g)),
        rms=float(np.sqrt(np.mean((p - g) ** 2))),
        delta1=float(np.mean(ratio < 1.25)),
        delta2=float(np.mean(ratio < 1.25**2)),
        delta3=float(np.mean(ratio < 1.25**3)),
    )


def gt_valid_mask(gt, max_depth: float = MAX_DEPTH, valid=None) -> np.ndarray:
    gt = np.asarray(gt, dtype=np.float64)
    return (gt > 0) & (gt <= max_depth) & _valid(valid, gt.shape)


def evaluate_depth(pred, gt, valid=None, max_depth: float = MAX_DEPTH, region=None) -> MetricsRow:
    """Standard protocol: mask gt to (0, max_depth], median-scale, cap, evaluate.

    ``region`` optionally restricts the evaluated pixels after the scale
    factor has been fixed on the full valid set.
    """
    mask = gt_valid_mask(gt, max_depth, valid)
    scaled = cap_depth(median_scale(pred, gt, mask), max_depth)
    if region is not None:
        mask = mask & np.asarray(region, dtype=bool)
    return evaluate(scaled, gt, mask)
