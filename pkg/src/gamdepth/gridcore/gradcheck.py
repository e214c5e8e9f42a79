"""Central finite-difference oracle for the autodiff core."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .autodiff import Node, as_node, backward, branch_signature, parameter, same_branches

__all__ = ["GradCheckError", "GradCheckReport", "gradient_check", "finite_diff_check"]


class GradCheckError(FloatingPointError):
    """The checked function produced a non-finite value."""


@dataclass
class GradCheckReport:
    max_rel_error: float
    n_checked: int
    n_skipped: int
    worst: tuple | None = None  # (param index, flat coordinate)
    per_param: list = field(default_factory=list)


def _relative_error(a: float, c: float) -> float:
    return abs(a - c) / max(abs(a), abs(c), 1e-8)


def _evaluate(f, values):
    nodes = [parameter(v) for v in values]
    out = as_node(f(*nodes))
    val = float(out.value)
    if not np.isfinite(val):
        raise GradCheckError(f"checked function returned non-finite value {val!r}")
    return out, nodes, val


def _shifted(f, values, k, j, delta):
    vals = [x.copy() for x in values]
    vals[k].flat[j] += delta
    out, _, val = _evaluate(f, vals)
    return out, val


def _kink_free_difference(f, values, k, j, eps, f0, base_sig):
    """Derivative estimate from the widest stencil that stays on the base branch.

    Order of preference: 5-point central (O(eps^4)), 3-point central, then
    3-point one-sided on either side. ``None`` when every stencil crosses a kink.
    """
    cache = {}

    def at(m):
        if m not in cache:
            cache[m] = _shifted(f, values, k, j, m * eps)
        return cache[m]

    def smooth(*ms):
        return base_sig is None or all(same_branches(base_sig, branch_signature(at(m)[0])) for m in ms)

    if smooth(1, -1, 2, -2):
        return (8.0 * (at(1)[1] - at(-1)[1]) - (at(2)[1] - at(-2)[1])) / (12.0 * eps)
    if smooth(1, -1):
        return (at(1)[1] - at(-1)[1]) / (2.0 * eps)
    for s in (1, -1):
        if smooth(s, 2 * s):
            return s * (-3.0 * f0 + 4.0 * at(s)[1] - at(2 * s)[1]) / (2.0 * eps)
    return None


def gradient_check(f, params, eps=1e-4, max_coords=None, rng=None, skip_kinks=True):
    """Compare reverse-mode gradients of ``f`` against central differences.

    Parameters
    ----------
    f : callable
        Takes one :class:`Node` per entry of ``params`` and returns a scalar
        node (or float).
    params : sequence of array_like
        Point at which to differentiate.
    eps : float
        Central-difference step.
    max_coords : int, optional
        Check at most this many randomly chosen coordinates per parameter
        block; all coordinates when ``None``.
    rng : numpy.random.Generator, optional
        Source for coordinate subsampling.
    skip_kinks : bool
        When true, a coordinate whose central stencil crosses a kink of a
        non-smooth op (branch signature differs from the base point) falls
        back to a second-order one-sided stencil on the kink-free side; if
        both sides cross a kink the coordinate is skipped.
    """
    if eps <= 0:
        raise ValueError(f"eps must be positive, got {eps}")
    values = [np.array(p, dtype=np.float64) for p in params]
    rng = np.random.default_rng(0) if rng is None else rng

    out, nodes, f0 = _evaluate(f, values)
    grads = backward(out) if isinstance(out, Node) else {}
    analytic = [grads.get(n, np.zeros_like(n.value)) for n in nodes]
    base_sig = branch_signature(out) if skip_kinks else None

    worst, worst_at = 0.0, None
    n_checked = n_skipped = 0
    per_param = []
    for k, v in enumerate(values):
        coords = np.arange(v.size)
        if max_coords is not None and v.size > max_coords:
            coords = np.sort(rng.choice(v.size, size=max_coords, replace=False))
        block_worst = 0.0
        for j in coords:
            numeric = _kink_free_difference(f, values, k, j, eps, f0, base_sig)
            if numeric is None:
                n_skipped += 1
                continue
            err = _relative_error(float(analytic[k].flat[j]), numeric)
            n_checked += 1
            block_worst = max(block_worst, err)
            if worst_at is None or err > worst:
                worst, worst_at = err, (k, int(j))
        per_param.append(block_worst)
    return GradCheckReport(worst, n_checked, n_skipped, worst_at, per_param)


def finite_diff_check(f, params, eps=1e-4, **kwargs) -> float:
    """Max relative error between analytic and central-difference gradients.

    >>> finite_diff_check(lambda x: x * x, [3.0]) < 1e-6
    True
    """
    return gradient_check(f, params, eps=eps, **kwargs).max_rel_error
