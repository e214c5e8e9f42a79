"""
Semantic-constraint loss: softmax class probabilities, cross-entropy
against proxy labels, and the mid-training cut-off of its weight.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

import numpy as np

from .gridcore import Node, as_node, record, register_op, unwrap
from .gridcore import ad
from .io import FormatError, read_pnm, write_pgm

__all__ = [
    "DEFAULT_NUM_CLASSES",
    "PROB_FLOOR",
    "LabelGrid",
    "softmax_probs",
    "log_softmax",
    "cross_entropy_seg",
    "cross_entropy_logits",
    "seg_weight_schedule",
    "save_proxy_labels",
    "load_proxy_labels",
]

DEFAULT_NUM_CLASSES = 40
PROB_FLOOR = 1e-12


@dataclass
class LabelGrid:
    """Per-pixel class indices in ``[0, num_classes)``."""

    labels: np.ndarray
    num_classes: int = DEFAULT_NUM_CLASSES

    def __post_init__(self):
        self.labels = np.asarray(self.labels)
        if self.labels.ndim != 2:
            raise ValueError(f"labels must be (H, W), got {self.labels.shape}")
        if not np.issubdtype(self.labels.dtype, np.integer):
            raise ValueError("labels must be integers")
        self.labels = self.labels.astype(np.int64)
        bad = np.argwhere((self.labels < 0) | (self.labels >= self.num_classes))
        if len(bad):
            r, c = bad[0]
            raise ValueError(
                f"label {self.labels[r, c]} at pixel (row={r}, col={c}) outside [0, {self.num_classes})"
            )

    @property
    def shape(self):
        return self.labels.shape


@register_op("log_softmax")
def _log_softmax(z):
    shifted = z - z.max(axis=-1, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=-1, keepdims=True))
    out = shifted - lse
    p = np.exp(out)

    def bw(g):
        return (g - p * g.sum(axis=-1, keepdims=True),)

    return out, bw, None


def log_softmax(logits):
    return unwrap(record("log_softmax", [logits]))


def softmax_probs(logits):
    """Class probabilities along the last axis (max-subtracted for stability)."""
    z = logits.value if isinstance(logits, Node) else np.asarray(logits, dtype=np.float64)
    if z.shape[-1] < 2:
        raise ValueError(f"need at least 2 classes, got {z.shape[-1]}")
    if isinstance(logits, Node) and logits.requires_grad:
        return ad.exp(record("log_softmax", [logits]))
    e = np.exp(z - z.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def _pick(grid, proxy: LabelGrid):
    shape = grid.value.shape if isinstance(grid, Node) else np.shape(grid)
    if shape[:2] != proxy.shape:
        raise ValueError(f"prediction {shape[:2]} and proxy labels {proxy.shape} differ in size")
    if shape[-1] != proxy.num_classes:
        raise ValueError(f"prediction has {shape[-1]} classes, proxy labels declare {proxy.num_classes}")
    rows, cols = np.indices(proxy.shape)
    return as_node(grid)[rows, cols, proxy.labels]


def cross_entropy_seg(probs, proxy: LabelGrid):
    """Mean over pixels of ``-log p(proxy class)``, probabilities floored at 1e-12."""
    picked = _pick(probs, proxy)
    return unwrap(-ad.log(ad.clip(picked, PROB_FLOOR)).mean())


def cross_entropy_logits(logits, proxy: LabelGrid):
    """Same quantity as :func:`cross_entropy_seg` evaluated from logits."""
    picked = _pick(record("log_softmax", [logits]), proxy)
    return unwrap(-ad.clip(picked, np.log(PROB_FLOOR)).mean())


def seg_weight_schedule(step: int, total_steps: int, lambda1: float = 0.001) -> float:
    """``lambda1`` during the first half of training, 0 from the halfway step on."""
    if not 0 <= step <= total_steps:
        raise ValueError(f"step {step} outside [0, {total_steps}]")
    return lambda1 if step < total_steps / 2 else 0.0


_CLASSES_RE = re.compile(r"classes:\s*(\d+)")


def save_proxy_labels(path, proxy: LabelGrid):
    """16-bit PGM with a ``# classes: C`` comment."""
    write_pgm(path, proxy.labels, maxval=65535, comments=[f"classes: {proxy.num_classes}"])


def load_proxy_labels(path) -> LabelGrid:
    try:
        arr, _, comments = read_pnm(path)
    except FileNotFoundError:
        raise FormatError(f"{path}: label file not found") from None
    if arr.ndim != 2:
        raise FormatError(f"{path}: label file must be a gray (P5) image")
    num = None
    for c in comments:
        m = _CLASSES_RE.search(c)
        if m:
            num = int(m.group(1))
    if num is None:
        raise FormatError(f"{path}: missing '# classes: C' header comment")
    bad = np.argwhere(arr >= num)
    if len(bad):
        r, c = bad[0]
        raise FormatError(f"{path}: label {arr[r, c]} at pixel (row={r}, col={c}) is not below classes={num}")
    return LabelGrid(arr, num)
