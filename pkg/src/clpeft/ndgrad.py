"""Dense float64 tensors with tape-style reverse-mode differentiation.

Only the operation set needed by the encoder, the adapters, the
classification head and the loss is provided. Every op builds a new
:class:`Node`; calling :meth:`Node.backward` on a scalar node walks the
graph in reverse topological order and accumulates gradients into every
node that requires them.
"""

from __future__ import annotations

import math
from typing import Callable, Iterable, Sequence

import numpy as np

MAX_RANK = 3
GELU_C = math.sqrt(2.0 / math.pi)


class DimensionError(ValueError):
    """Raised when operand shapes are incompatible."""


def as_tensor(values, *, check_finite: bool = True) -> np.ndarray:
    """Validate external input and return a contiguous float64 array."""
    arr = np.ascontiguousarray(values, dtype=np.float64)
    if arr.ndim > MAX_RANK:
        raise DimensionError(f"rank {arr.ndim} exceeds maximum rank {MAX_RANK}")
    if any(s < 1 for s in arr.shape):
        raise DimensionError(f"shape {arr.shape} has an empty dimension")
    if check_finite and not np.all(np.isfinite(arr)):
        raise ValueError("tensor contains NaN or Inf")
    return arr


class Node:
    """A value in the computation graph plus its accumulated gradient."""

    __slots__ = ("value", "grad", "requires_grad", "_parents", "_backward", "name")

    def __init__(self, value, parents: Sequence["Node"] = (), backward=None,
                 requires_grad: bool | None = None, name: str | None = None):
        self.value = value if isinstance(value, np.ndarray) else np.asarray(value, dtype=np.float64)
        self._parents = tuple(parents)
        self._backward = backward
        if requires_grad is None:
            requires_grad = any(p.requires_grad for p in self._parents)
        self.requires_grad = requires_grad
        self.grad = None
        self.name = name

    @property
    def shape(self):
        return self.value.shape

    def __repr__(self):
        tag = f" {self.name!r}" if self.name else ""
        return f"Node{tag}(shape={self.shape}, requires_grad={self.requires_grad})"

    def zero_grad(self):
        self.grad = np.zeros_like(self.value)

    def backward(self):
        if self.value.size != 1:
            raise DimensionError(f"backward() needs a scalar, got shape {self.shape}")
        order = _topological_order(self)
        for node in order:
            node.grad = None
        self.grad = np.ones_like(self.value)
        for node in reversed(order):
            if node._backward is None or node.grad is None:
                continue
            grads = node._backward(node.grad)
            for parent, g in zip(node._parents, grads):
                if g is None or not parent.requires_grad:
                    continue
                if parent.grad is None:
                    parent.grad = np.array(g, dtype=np.float64, copy=True)
                else:
                    parent.grad = parent.grad + g

    # operator sugar
    def __add__(self, other):
        return add(self, _lift(other))

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, neg(_lift(other)))

    def __rsub__(self, other):
        return add(_lift(other), neg(self))

    def __mul__(self, other):
        return mul(self, _lift(other))

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, _lift(other))

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, _lift(other))


def param(values, name: str | None = None) -> Node:
    """Leaf node that receives a gradient."""
    return Node(as_tensor(values), requires_grad=True, name=name)


def const(values, name: str | None = None) -> Node:
    """Leaf node excluded from differentiation."""
    return Node(np.asarray(values, dtype=np.float64), requires_grad=False, name=name)


def _lift(x) -> Node:
    return x if isinstance(x, Node) else const(x)


def _topological_order(root: Node) -> list[Node]:
    order: list[Node] = []
    seen: set[int] = set()
    stack: list[tuple[Node, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    return order


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


# ---------------------------------------------------------------- elementwise

def add(a: Node, b: Node) -> Node:
    try:
        out = np.add(a.value, b.value)
    except ValueError:
        raise DimensionError(f"cannot add shapes {a.shape} and {b.shape}") from None
    sa, sb = a.shape, b.shape
    return Node(out, (a, b), lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)))


def neg(a: Node) -> Node:
    return Node(-a.value, (a,), lambda g: (-g,))


def mul(a: Node, b: Node) -> Node:
    try:
        out = np.multiply(a.value, b.value)
    except ValueError:
        raise DimensionError(f"cannot multiply shapes {a.shape} and {b.shape}") from None
    av, bv = a.value, b.value
    return Node(out, (a, b), lambda g: (_unbroadcast(g * bv, av.shape),
                                        _unbroadcast(g * av, bv.shape)))


def div(a: Node, b: Node) -> Node:
    try:
        out = np.divide(a.value, b.value)
    except ValueError:
        raise DimensionError(f"cannot divide shapes {a.shape} and {b.shape}") from None
    av, bv = a.value, b.value
    return Node(out, (a, b), lambda g: (_unbroadcast(g / bv, av.shape),
                                        _unbroadcast(-g * av / (bv * bv), bv.shape)))


def scale(a: Node, s: float) -> Node:
    s = float(s)
    return Node(a.value * s, (a,), lambda g: (g * s,))


def gelu(x: Node) -> Node:
    """Tanh-approximated GELU: 0.5 x (1 + tanh(sqrt(2/pi) (x + 0.044715 x^3)))."""
    v = x.value
    inner = GELU_C * (v + 0.044715 * v ** 3)
    t = np.tanh(inner)
    out = 0.5 * v * (1.0 + t)

    def backward(g):
        dinner = GELU_C * (1.0 + 3 * 0.044715 * v ** 2)
        return (g * (0.5 * (1.0 + t) + 0.5 * v * (1.0 - t * t) * dinner),)

    return Node(out, (x,), backward)


# -------------------------------------------------------------- linear algebra

def matmul(a: Node, b: Node) -> Node:
    """Matrix product, batched over a leading axis when either operand is rank 3."""
    if a.value.ndim < 2 or b.value.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise DimensionError(f"matmul shape mismatch: {a.shape} x {b.shape}")
    av, bv = a.value, b.value
    out = av @ bv

    def backward(g):
        ga = g @ np.swapaxes(bv, -1, -2) if a.requires_grad else None
        gb = np.swapaxes(av, -1, -2) @ g if b.requires_grad else None
        if ga is not None:
            ga = _unbroadcast(ga, av.shape)
        if gb is not None:
            gb = _unbroadcast(gb, bv.shape)
        return ga, gb

    return Node(out, (a, b), backward)


def transpose(a: Node) -> Node:
    """Swap the last two axes."""
    return Node(np.swapaxes(a.value, -1, -2), (a,), lambda g: (np.swapaxes(g, -1, -2),))


def split_heads(x: Node, n_heads: int) -> Node:
    """T x d -> H x T x (d / H)."""
    t, d = x.shape
    if d % n_heads:
        raise DimensionError(f"width {d} not divisible by {n_heads} heads")
    dh = d // n_heads
    out = x.value.reshape(t, n_heads, dh).transpose(1, 0, 2)
    return Node(np.ascontiguousarray(out), (x,),
                lambda g: (g.transpose(1, 0, 2).reshape(t, d),))


def merge_heads(x: Node) -> Node:
    """H x T x dh -> T x (H * dh)."""
    h, t, dh = x.shape
    out = x.value.transpose(1, 0, 2).reshape(t, h * dh)
    return Node(out, (x,), lambda g: (g.reshape(t, h, dh).transpose(1, 0, 2),))


# ------------------------------------------------------------------ reductions

def sum_all(x: Node) -> Node:
    shape = x.shape
    return Node(np.asarray(x.value.sum()), (x,), lambda g: (np.broadcast_to(g, shape),))


def mean_rows(x: Node) -> Node:
    """Average over the first axis of a T x d matrix, giving a length-d vector."""
    t = x.shape[0]
    if t == 0:
        raise DimensionError("mean over zero rows")
    return Node(x.value.mean(axis=0), (x,),
                lambda g: (np.broadcast_to(g / t, x.shape).copy(),))


def column_norms(x: Node) -> Node:
    """Euclidean norm of every column of a d x k matrix."""
    v = x.value
    n = np.sqrt(np.sum(v * v, axis=0))
    return Node(n, (x,), lambda g: (v * (g / n),))


# ------------------------------------------------------------ normalizations

def softmax_rows(x: Node) -> Node:
    """Softmax along the last axis with max subtraction."""
    v = x.value
    e = np.exp(v - v.max(axis=-1, keepdims=True))
    s = e / e.sum(axis=-1, keepdims=True)

    def backward(g):
        return (s * (g - np.sum(g * s, axis=-1, keepdims=True)),)

    return Node(s, (x,), backward)


def layer_norm(x: Node, gamma: Node, beta: Node, eps: float = 1e-5) -> Node:
    v = x.value
    d = v.shape[-1]
    if d < 2:
        raise DimensionError("layer_norm needs at least 2 features")
    mu = v.mean(axis=-1, keepdims=True)
    xc = v - mu
    var = np.mean(xc * xc, axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    gv = gamma.value
    out = xhat * gv + beta.value

    def backward(g):
        gx = gg = gb = None
        if x.requires_grad:
            gh = g * gv
            gx = inv * (gh - gh.mean(axis=-1, keepdims=True)
                        - xhat * np.mean(gh * xhat, axis=-1, keepdims=True))
        if gamma.requires_grad:
            gg = _unbroadcast(g * xhat, gv.shape)
        if beta.requires_grad:
            gb = _unbroadcast(g, beta.value.shape)
        return gx, gg, gb

    return Node(out, (x, gamma, beta), backward)


def cross_entropy(logits: Node, label: int) -> Node:
    """Negative log-softmax probability of ``label`` for a length-C logit vector."""
    z = logits.value
    if z.ndim != 1:
        raise DimensionError(f"logits must be a vector, got shape {z.shape}")
    c = z.shape[0]
    if not 0 <= label < c:
        raise IndexError(f"label {label} out of range for {c} classes")
    zmax = z.max()
    lse = zmax + math.log(np.exp(z - zmax).sum())
    loss = lse - z[label]

    def backward(g):
        p = np.exp(z - lse)
        p[label] -= 1.0
        return (g * p,)

    return Node(np.asarray(loss), (logits,), backward)


# --------------------------------------------------------------- verification

def grad_check(f: Callable[[Sequence[Node]], Node], params: Iterable[np.ndarray],
               eps: float = 1e-5) -> float:
    """Largest relative error between reverse-mode and central-difference gradients.

    ``f`` receives one leaf node per array in ``params`` and must return a
    scalar node. The relative error per coordinate is
    ``|g_ad - g_fd| / max(1e-8, |g_ad| + |g_fd|)``.
    """
    arrays = [np.array(p, dtype=np.float64, copy=True) for p in params]
    leaves = [param(a) for a in arrays]
    out = f(leaves)
    out.backward()
    analytic = [leaf.grad if leaf.grad is not None else np.zeros_like(leaf.value)
                for leaf in leaves]

    def evaluate():
        return float(f([const(a) for a in arrays]).value)

    worst = 0.0
    for arr, g_ad in zip(arrays, analytic):
        flat = arr.reshape(-1)
        gflat = g_ad.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            up = evaluate()
            flat[i] = orig - eps
            down = evaluate()
            flat[i] = orig
            g_fd = (up - down) / (2 * eps)
            err = abs(gflat[i] - g_fd) / max(1e-8, abs(gflat[i]) + abs(g_fd))
            worst = max(worst, err)
    return worst
