"""
Reverse-mode differentiation over a dynamically recorded graph.

Every raster is a single node: a depth map, an image or a whole logit
volume carries one value array and, after ``backward``, one gradient array
of the same shape. Graph size therefore grows with the number of
operations, not with the number of pixels.

Values and gradients are always held in float64.

Operations are registered by name in a small table and created through
:func:`record`. Domain modules (warping, SSIM, softmax, ...) register their
own primitives with :func:`register_op` so that the core stays generic.

Non-smooth primitives (``abs``, ``clip``, masked minimum, bilinear cell
selection) attach a *branch* array to their output node describing which
piece of the piecewise definition was taken. :func:`branch_signature`
collects them so a finite-difference oracle can tell when a perturbation
crossed a kink.
"""

from __future__ import annotations

from typing import Callable

import numpy as np

__all__ = [
    "GraphError",
    "ShapeError",
    "Node",
    "parameter",
    "constant",
    "as_node",
    "unwrap",
    "record",
    "register_op",
    "backward",
    "branch_signature",
    "same_branches",
]


class GraphError(ValueError):
    """Raised for misuse of the recorded graph (non-scalar roots, unknown ops)."""


class ShapeError(GraphError):
    """Raised when operand shapes are incompatible with an operation."""


_OPS: dict[str, Callable] = {}


def register_op(kind: str):
    """Decorator adding a primitive to the op table.

    The decorated function receives the input *values* (ndarrays) followed by
    keyword parameters and returns ``(value, backward_fn, branch)`` where
    ``backward_fn(g)`` yields one gradient (or ``None``) per input.
    """

    def deco(fn):
        if kind in _OPS:
            raise GraphError(f"op kind {kind!r} already registered")
        _OPS[kind] = fn
        return fn

    return deco


class Node:
    """A value in the recorded graph.

    Leaves created with :func:`parameter` have ``requires_grad=True`` and
    receive ``.grad`` from :func:`backward`. Nodes derived only from
    constants are themselves constants and keep no parents.
    """

    __slots__ = ("value", "grad", "requires_grad", "parents", "op", "_backward", "branch", "name")

    __array_priority__ = 100.0

    def __init__(self, value, requires_grad: bool = False, name: str | None = None):
        self.value = np.asarray(value, dtype=np.float64)
        self.grad = None
        self.requires_grad = requires_grad
        self.parents: tuple[Node, ...] = ()
        self.op = "leaf"
        self._backward = None
        self.branch = None
        self.name = name

    # -- introspection -------------------------------------------------
    @property
    def shape(self):
        return self.value.shape

    @property
    def ndim(self):
        return self.value.ndim

    @property
    def size(self):
        return self.value.size

    def item(self) -> float:
        return float(self.value)

    def __float__(self):
        return float(self.value)

    def __repr__(self):
        tag = "param" if (self.requires_grad and not self.parents) else self.op
        if self.value.size == 1:
            return f"Node({tag}, value={float(self.value)!r})"
        return f"Node({tag}, shape={self.value.shape})"

    # -- arithmetic ----------------------------------------------------
    def __add__(self, other):
        return record("add", [self, other])

    def __radd__(self, other):
        return record("add", [other, self])

    def __sub__(self, other):
        return record("sub", [self, other])

    def __rsub__(self, other):
        return record("sub", [other, self])

    def __mul__(self, other):
        return record("mul", [self, other])

    def __rmul__(self, other):
        return record("mul", [other, self])

    def __truediv__(self, other):
        return record("div", [self, other])

    def __rtruediv__(self, other):
        return record("div", [other, self])

    def __neg__(self):
        return record("neg", [self])

    def __pow__(self, exponent):
        return record("pow", [self], exponent=float(exponent))

    def __getitem__(self, idx):
        return record("getitem", [self], index=idx)

    def sum(self, axis=None, keepdims=False):
        return record("sum", [self], axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return record("mean", [self], axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], tuple):
            shape = shape[0]
        return record("reshape", [self], shape=shape)


def parameter(value, name: str | None = None) -> Node:
    """A leaf whose gradient is wanted."""
    return Node(np.array(value, dtype=np.float64), requires_grad=True, name=name)


def constant(value) -> Node:
    return Node(value)


def as_node(x) -> Node:
    return x if isinstance(x, Node) else Node(x)


def unwrap(x):
    """Plain value unless ``x`` is a node that depends on a parameter."""
    if isinstance(x, Node):
        return x if x.requires_grad else x.value
    return x


def record(kind: str, inputs, **params) -> Node:
    """Apply op ``kind`` to ``inputs`` and record the edge.

    >>> record("add", [2.0, 3.0]).item()
    5.0
    """
    try:
        fn = _OPS[kind]
    except KeyError:
        raise GraphError(f"unknown op kind {kind!r}") from None
    nodes = [as_node(x) for x in inputs]
    values = [n.value for n in nodes]
    value, bw, branch = fn(*values, **params)
    out = Node(value)
    out.op = kind
    if any(n.requires_grad for n in nodes):
        out.requires_grad = True
        out.parents = tuple(nodes)
        out._backward = bw
        out.branch = branch
    return out


# ----------------------------------------------------------------------
# backward pass
# ----------------------------------------------------------------------


def _topo_order(root: Node) -> list[Node]:
    order: list[Node] = []
    seen: set[int] = set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in reversed(node.parents):
            if id(p) not in seen and p.requires_grad:
                stack.append((p, False))
    return order


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g.reshape(shape)


def backward(loss: Node) -> dict[Node, np.ndarray]:
    """Propagate d(loss)/d(.) to every parameter leaf reachable from ``loss``.

    Returns a mapping parameter-node -> gradient array and also stores each
    gradient on ``node.grad``. Leaves that are not parameters are left alone.
    """
    loss = as_node(loss)
    if loss.value.size != 1:
        raise GraphError(f"backward needs a scalar loss, got shape {loss.value.shape}")
    if not loss.requires_grad:
        return {}
    order = _topo_order(loss)
    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.value)}
    leaves: list[Node] = []
    for node in reversed(order):
        g = grads.pop(id(node), None)
        if not node.parents:
            if node.requires_grad:
                leaves.append(node)
                node.grad = np.zeros_like(node.value) if g is None else np.array(g, dtype=np.float64)
            continue
        if g is None:
            continue
        pgrads = node._backward(g)
        for p, pg in zip(node.parents, pgrads):
            if pg is None or not p.requires_grad:
                continue
            pg = _unbroadcast(np.asarray(pg, dtype=np.float64), p.value.shape)
            key = id(p)
            if key in grads:
                grads[key] = grads[key] + pg
            else:
                grads[key] = pg
    return {leaf: leaf.grad for leaf in leaves}


def branch_signature(root: Node) -> list[np.ndarray]:
    """Branch decisions of every non-smooth op feeding ``root``, in graph order."""
    return [n.branch for n in _topo_order(as_node(root)) if n.branch is not None]


def same_branches(a: list[np.ndarray], b: list[np.ndarray]) -> bool:
    if len(a) != len(b):
        return False
    return all(x.shape == y.shape and np.array_equal(x, y) for x, y in zip(a, b))


# ----------------------------------------------------------------------
# generic primitives
# ----------------------------------------------------------------------


def _check_broadcast(kind, a, b):
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{kind}: shapes {a.shape} and {b.shape} do not broadcast") from None


@register_op("add")
def _add(a, b):
    _check_broadcast("add", a, b)
    return a + b, lambda g: (g, g), None


@register_op("sub")
def _sub(a, b):
    _check_broadcast("sub", a, b)
    return a - b, lambda g: (g, -g), None


@register_op("mul")
def _mul(a, b):
    _check_broadcast("mul", a, b)
    return a * b, lambda g: (g * b, g * a), None


@register_op("div")
def _div(a, b):
    _check_broadcast("div", a, b)
    out = a / b
    return out, lambda g: (g / b, -g * out / b), None


@register_op("neg")
def _neg(a):
    return -a, lambda g: (-g,), None


@register_op("pow")
def _pow(a, exponent):
    out = a**exponent
    return out, lambda g: (g * exponent * a ** (exponent - 1.0),), None


@register_op("exp")
def _exp(a):
    out = np.exp(a)
    return out, lambda g: (g * out,), None


@register_op("log")
def _log(a):
    return np.log(a), lambda g: (g / a,), None


@register_op("sqrt")
def _sqrt(a):
    out = np.sqrt(a)
    return out, lambda g: (g / (2.0 * out),), None


@register_op("abs")
def _abs(a):
    s = np.sign(a)
    return np.abs(a), lambda g: (g * s,), s.astype(np.int8)


@register_op("sigmoid")
def _sigmoid(a):
    out = 0.5 * (1.0 + np.tanh(0.5 * a))
    return out, lambda g: (g * out * (1.0 - out),), None


@register_op("clip")
def _clip(a, lo=-np.inf, hi=np.inf):
    code = np.zeros(a.shape, dtype=np.int8)
    code[a < lo] = -1
    code[a > hi] = 1
    inside = code == 0
    return np.clip(a, lo, hi), lambda g: (g * inside,), code


@register_op("sum")
def _sum(a, axis=None, keepdims=False):
    out = a.sum(axis=axis, keepdims=keepdims)

    def bw(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape).copy(),)

    return out, bw, None


@register_op("mean")
def _mean(a, axis=None, keepdims=False):
    out = a.mean(axis=axis, keepdims=keepdims)
    count = a.size / max(out.size, 1)

    def bw(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g / count, a.shape).copy(),)

    return out, bw, None


@register_op("reshape")
def _reshape(a, shape):
    try:
        out = a.reshape(shape)
    except ValueError:
        raise ShapeError(f"reshape: cannot reshape {a.shape} into {shape}") from None
    return out, lambda g: (g.reshape(a.shape),), None


def _is_basic_index(idx) -> bool:
    items = idx if isinstance(idx, tuple) else (idx,)
    return all(isinstance(i, (slice, int, type(Ellipsis), type(None))) for i in items)


@register_op("getitem")
def _getitem(a, index):
    out = a[index]
    basic = _is_basic_index(index)

    def bw(g):
        z = np.zeros(a.shape)
        if basic:
            z[index] = g
        else:
            np.add.at(z, index, g)
        return (z,)

    return out, bw, None


@register_op("stack")
def _stack(*arrays, axis=0):
    shapes = {x.shape for x in arrays}
    if len(shapes) != 1:
        raise ShapeError(f"stack: operands have differing shapes {sorted(shapes)}")
    out = np.stack(arrays, axis=axis)

    def bw(g):
        return tuple(np.take(g, i, axis=axis) for i in range(len(arrays)))

    return out, bw, None


@register_op("einsum")
def _einsum(a, b, subscripts):
    """Two-operand einsum where every input index survives in the other operand or the output."""
    lhs, out_sub = subscripts.replace(" ", "").split("->")
    sa, sb = lhs.split(",")
    for s, other in ((sa, sb), (sb, sa)):
        if len(set(s)) != len(s) or any(c not in other and c not in out_sub for c in s):
            raise GraphError(f"einsum: unsupported subscripts {subscripts!r}")
    try:
        out = np.einsum(subscripts, a, b)
    except ValueError as exc:
        raise ShapeError(f"einsum {subscripts!r}: shapes {a.shape}, {b.shape}: {exc}") from None

    def bw(g):
        ga = np.einsum(f"{out_sub},{sb}->{sa}", g, b)
        gb = np.einsum(f"{out_sub},{sa}->{sb}", g, a)
        return ga, gb

    return out, bw, None


# thin functional wrappers -------------------------------------------


def exp(x):
    return record("exp", [x])


def log(x):
    return record("log", [x])


def sqrt(x):
    return record("sqrt", [x])


def absolute(x):
    return record("abs", [x])


def sigmoid(x):
    return record("sigmoid", [x])


def clip(x, lo=-np.inf, hi=np.inf):
    return record("clip", [x], lo=lo, hi=hi)


def stack(xs, axis=0):
    return record("stack", list(xs), axis=axis)


def einsum(subscripts, a, b):
    return record("einsum", [a, b], subscripts=subscripts)


__all__ += ["exp", "log", "sqrt", "absolute", "sigmoid", "clip", "stack", "einsum"]
