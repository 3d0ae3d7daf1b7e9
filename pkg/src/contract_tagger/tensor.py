"""Dense float64 arrays with a define-by-run reverse-mode differentiation graph.

Values are plain ``numpy`` arrays; a :class:`Node` wraps one value together
with the operator that produced it and a closure mapping the output gradient
to input gradients.  Node ids come from a global counter, so sorting by id is
a valid topological order.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

import numpy as np

DTYPE = np.float64

_ids = itertools.count()


class ShapeError(ValueError):
    pass


class NonFiniteError(FloatingPointError):
    pass


def make_rng(seed: int) -> np.random.Generator:
    """PCG64 stream; identical seeds give identical draws on every platform."""
    return np.random.Generator(np.random.PCG64(seed))


class Node:
    __slots__ = ("id", "op", "value", "parents", "backward", "requires_grad", "name")

    def __init__(self, value, op="input", parents=(), backward=None, requires_grad=False, name=None):
        value = np.asarray(value, dtype=DTYPE)
        self.id = next(_ids)
        self.op = op
        self.value = value
        self.parents = tuple(parents)
        self.backward = backward
        self.requires_grad = requires_grad or any(p.requires_grad for p in self.parents)
        self.name = name
        if not np.isfinite(value).all():
            label = f"'{name}'" if name else f"#{self.id}"
            raise NonFiniteError(f"node {label} (op {op}) produced non-finite values")

    @property
    def shape(self):
        return self.value.shape

    @property
    def ndim(self):
        return self.value.ndim

    def __repr__(self):
        return f"Node(op={self.op}, shape={self.value.shape})"

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, idx):
        return getitem(self, idx)


def param(value, name=None) -> Node:
    return Node(value, op="param", requires_grad=True, name=name)


def const(value) -> Node:
    return Node(value, op="const")


def as_node(x) -> Node:
    return x if isinstance(x, Node) else const(x)


def _result(value, op, parents, backward):
    if not any(p.requires_grad for p in parents):
        return Node(value, op=op, parents=parents)
    return Node(value, op=op, parents=parents, backward=backward)


def _unbroadcast(g, shape):
    """Sum ``g`` down to ``shape`` after numpy broadcasting."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


def _broadcast_shape(op, a, b):
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{op}: incompatible shapes {a.shape} and {b.shape}") from None


# ---------------------------------------------------------------- elementwise

def add(a, b) -> Node:
    a, b = as_node(a), as_node(b)
    _broadcast_shape("add", a, b)

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _result(a.value + b.value, "add", (a, b), backward)


def sub(a, b) -> Node:
    a, b = as_node(a), as_node(b)
    _broadcast_shape("sub", a, b)

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return _result(a.value - b.value, "sub", (a, b), backward)


def neg(a) -> Node:
    return _result(-a.value, "neg", (a,), lambda g: (-g,))


def mul(a, b) -> Node:
    a, b = as_node(a), as_node(b)
    _broadcast_shape("mul", a, b)

    def backward(g):
        return _unbroadcast(g * b.value, a.shape), _unbroadcast(g * a.value, b.shape)

    return _result(a.value * b.value, "mul", (a, b), backward)


def scale(a: Node, c: float) -> Node:
    return _result(a.value * c, "scale", (a,), lambda g: (g * c,))


def tanh(a: Node) -> Node:
    y = np.tanh(a.value)
    return _result(y, "tanh", (a,), lambda g: (g * (1.0 - y * y),))


def sigmoid(a: Node) -> Node:
    x = a.value
    # split by sign so exp never overflows
    e = np.exp(-np.abs(x))
    y = np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))
    return _result(y, "sigmoid", (a,), lambda g: (g * y * (1.0 - y),))


def relu(a: Node) -> Node:
    on = a.value > 0
    return _result(np.where(on, a.value, 0.0), "relu", (a,), lambda g: (g * on,))


def apply_mask(a: Node, mask) -> Node:
    """Multiply by a constant 0/1 mask broadcast against ``a``."""
    m = np.asarray(mask, dtype=DTYPE)
    try:
        np.broadcast_shapes(a.shape, m.shape)
    except ValueError:
        raise ShapeError(f"apply_mask: incompatible shapes {a.shape} and {m.shape}") from None
    return _result(a.value * m, "mask", (a,), lambda g: (_unbroadcast(g * m, a.shape),))


def dropout(a: Node, rate: float, rng: np.random.Generator | None, train: bool = True) -> Node:
    """Inverted dropout; identity when not training or ``rate == 0``."""
    if not train or rate <= 0.0:
        return a
    if rate >= 1.0:
        raise ValueError("dropout rate must be < 1")
    keep = (rng.random(a.shape) >= rate) / (1.0 - rate)
    return _result(a.value * keep, "dropout", (a,), lambda g: (g * keep,))


# ------------------------------------------------------------------ structure

def matmul(a, b) -> Node:
    a, b = as_node(a), as_node(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} and {b.shape}")
    try:
        y = np.matmul(a.value, b.value)
    except ValueError:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} and {b.shape}") from None

    def backward(g):
        ga = np.matmul(g, np.swapaxes(b.value, -1, -2))
        gb = np.matmul(np.swapaxes(a.value, -1, -2), g)
        return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)

    return _result(y, "matmul", (a, b), backward)


def concat(nodes: Sequence[Node], axis: int = -1) -> Node:
    nodes = [as_node(n) for n in nodes]
    try:
        y = np.concatenate([n.value for n in nodes], axis=axis)
    except ValueError:
        shapes = ", ".join(str(n.shape) for n in nodes)
        raise ShapeError(f"concat: incompatible shapes {shapes}") from None
    bounds = np.cumsum([n.shape[axis] for n in nodes])[:-1]

    def backward(g):
        return tuple(np.split(g, bounds, axis=axis))

    return _result(y, "concat", nodes, backward)


def stack(nodes: Sequence[Node], axis: int = 0) -> Node:
    nodes = [as_node(n) for n in nodes]
    try:
        y = np.stack([n.value for n in nodes], axis=axis)
    except ValueError:
        shapes = ", ".join(str(n.shape) for n in nodes)
        raise ShapeError(f"stack: incompatible shapes {shapes}") from None

    def backward(g):
        return tuple(np.moveaxis(g, axis, 0))

    return _result(y, "stack", nodes, backward)


def _is_basic_index(idx):
    items = idx if isinstance(idx, tuple) else (idx,)
    return all(isinstance(i, (int, slice, type(None), type(Ellipsis))) for i in items)


def getitem(a: Node, idx) -> Node:
    y = a.value[idx]
    basic = _is_basic_index(idx)

    def backward(g):
        ga = np.zeros(a.shape, dtype=DTYPE)
        if basic:
            ga[idx] += g
        else:
            np.add.at(ga, idx, g)
        return (ga,)

    return _result(np.array(y, dtype=DTYPE), "getitem", (a,), backward)


def reshape(a: Node, shape) -> Node:
    try:
        y = a.value.reshape(shape)
    except ValueError:
        raise ShapeError(f"reshape: cannot reshape {a.shape} to {tuple(shape)}") from None
    return _result(y, "reshape", (a,), lambda g: (g.reshape(a.shape),))


def transpose(a: Node, axes) -> Node:
    inverse = np.argsort(axes)
    return _result(np.transpose(a.value, axes), "transpose", (a,),
                   lambda g: (np.transpose(g, inverse),))


def sum(a: Node, axis=None) -> Node:  # noqa: A001 - mirrors numpy
    y = a.value.sum(axis=axis)

    def backward(g):
        if axis is not None:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape).copy(),)

    return _result(y, "sum", (a,), backward)


def mean(a: Node, axis=None) -> Node:
    n = a.value.size if axis is None else np.prod([a.shape[i] for i in np.atleast_1d(axis)])
    return scale(sum(a, axis), 1.0 / n)


# --------------------------------------------------------------- reductions

def logsumexp(a: Node, axis: int = -1) -> Node:
    x = a.value
    m = x.max(axis=axis, keepdims=True)
    s = np.exp(x - m)
    total = s.sum(axis=axis, keepdims=True)
    y = np.squeeze(m + np.log(total), axis=axis)
    p = s / total

    def backward(g):
        return (np.expand_dims(g, axis) * p,)

    return _result(y, "logsumexp", (a,), backward)


def softmax(a: Node, axis: int = -1, mask=None) -> Node:
    """Softmax along ``axis``; positions where ``mask`` is False get probability 0.

    Every slice must keep at least one unmasked entry.
    """
    x = a.value
    if mask is not None:
        x = np.where(mask, x, -np.inf)
    m = x.max(axis=axis, keepdims=True)
    e = np.exp(x - m)
    y = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        return (y * (g - (g * y).sum(axis=axis, keepdims=True)),)

    return _result(y, "softmax", (a,), backward)


def gather(table: Node, indices) -> Node:
    """Embedding lookup: rows of a ``V x D`` table at integer ``indices``."""
    idx = np.asarray(indices, dtype=np.intp)
    if table.ndim != 2:
        raise ShapeError(f"gather: table must be 2-D, got {table.shape}")
    if idx.size and (idx.min() < 0 or idx.max() >= table.shape[0]):
        raise IndexError(f"gather: index out of range for table {table.shape}")
    y = table.value[idx]

    def backward(g):
        gt = np.zeros(table.shape, dtype=DTYPE)
        np.add.at(gt, idx.reshape(-1), g.reshape(-1, table.shape[1]))
        return (gt,)

    return _result(y, "gather", (table,), backward)


def conv1d(x: Node, w: Node, b: Node, dilation: int = 1, padding: str = "same") -> Node:
    """1-D convolution over axis 1 of a ``B x T x Cin`` input.

    ``w`` has shape ``width x Cin x Cout``.  ``same`` zero-pads so the output
    keeps length T (odd widths only); ``valid`` uses no padding.
    """
    if x.ndim != 3 or w.ndim != 3 or x.shape[2] != w.shape[1] or b.shape != (w.shape[2],):
        raise ShapeError(f"conv1d: incompatible shapes {x.shape}, {w.shape} and {b.shape}")
    width = w.shape[0]
    span = dilation * (width - 1)
    T = x.shape[1]
    if padding == "same":
        if width % 2 == 0:
            raise ShapeError("conv1d: 'same' padding needs an odd filter width")
        pad = span // 2
        xp = np.pad(x.value, ((0, 0), (pad, pad), (0, 0)))
        t_out = T
    elif padding == "valid":
        pad = 0
        xp = x.value
        t_out = T - span
        if t_out < 1:
            raise ShapeError(f"conv1d: input length {T} shorter than filter span {span + 1}")
    else:
        raise ValueError(f"unknown padding {padding!r}")

    y = np.broadcast_to(b.value, (x.shape[0], t_out, w.shape[2])).copy()
    for k in range(width):
        y += xp[:, k * dilation:k * dilation + t_out, :] @ w.value[k]

    def backward(g):
        gxp = np.zeros_like(xp)
        gw = np.empty_like(w.value)
        g2 = g.reshape(-1, g.shape[-1])
        for k in range(width):
            sl = xp[:, k * dilation:k * dilation + t_out, :]
            gxp[:, k * dilation:k * dilation + t_out, :] += g @ w.value[k].T
            gw[k] = sl.reshape(-1, sl.shape[-1]).T @ g2
        gx = gxp[:, pad:pad + T, :] if pad else gxp
        return gx, gw, g2.sum(axis=0)

    return _result(y, "conv1d", (x, w, b), backward)


def max_over_time(x: Node, mask=None) -> Node:
    """Max over axis 1 of ``B x T x C``; masked-out steps never win."""
    v = x.value
    if mask is not None:
        v = np.where(np.asarray(mask, dtype=bool)[:, :, None], v, -np.inf)
    arg = v.argmax(axis=1)
    y = np.take_along_axis(x.value, arg[:, None, :], axis=1)[:, 0, :]

    def backward(g):
        gx = np.zeros(x.shape, dtype=DTYPE)
        np.put_along_axis(gx, arg[:, None, :], g[:, None, :], axis=1)
        return (gx,)

    return _result(y, "max_over_time", (x,), backward)


def layer_norm(x: Node, gain: Node, bias: Node, eps: float = 1e-5) -> Node:
    """Normalize the last axis to zero mean / unit variance, then affine."""
    v = x.value
    mu = v.mean(axis=-1, keepdims=True)
    xc = v - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    y = xhat * gain.value + bias.value

    def backward(g):
        gg = _unbroadcast(g * xhat, gain.shape)
        gb = _unbroadcast(g, bias.shape)
        gh = g * gain.value
        gx = inv * (gh - gh.mean(axis=-1, keepdims=True)
                    - xhat * (gh * xhat).mean(axis=-1, keepdims=True))
        return gx, gg, gb

    return _result(y, "layer_norm", (x, gain, bias), backward)


# ------------------------------------------------------------ graph drivers

def backprop(loss: Node) -> dict[int, np.ndarray]:
    """Gradients of a scalar ``loss`` for every reachable node, keyed by node id."""
    if loss.value.size != 1:
        raise ShapeError(f"gradients: loss must be scalar, got shape {loss.shape}")
    order, seen, stack_ = [], set(), [loss]
    while stack_:
        n = stack_.pop()
        if n.id in seen or not n.requires_grad:
            continue
        seen.add(n.id)
        order.append(n)
        stack_.extend(n.parents)
    order.sort(key=lambda n: n.id, reverse=True)

    grads = {loss.id: np.ones(loss.shape, dtype=DTYPE)}
    for n in order:
        g = grads.get(n.id)
        if g is None or n.backward is None:
            continue
        for p, gp in zip(n.parents, n.backward(g)):
            if gp is None or not p.requires_grad:
                continue
            if p.id in grads:
                grads[p.id] = grads[p.id] + gp
            else:
                grads[p.id] = gp
    return grads


def gradients(loss: Node, params: Mapping[str, Node]) -> dict[str, np.ndarray]:
    """dLoss/dParam for each named parameter; zeros for unreachable ones.

    Pure: calling it twice on the same graph returns identical arrays.
    """
    grads = backprop(loss)
    out = {}
    for name, p in params.items():
        g = grads.get(p.id)
        out[name] = np.zeros(p.shape, dtype=DTYPE) if g is None else np.asarray(g, dtype=DTYPE).reshape(p.shape)
    return out


def evaluate(fn: Callable[..., Node], bindings: Mapping[str, np.ndarray]) -> np.ndarray:
    """Run the graph ``fn`` on named input arrays and return the root value.

    ``fn`` receives one :class:`Node` keyword argument per binding.
    """
    nodes = {k: param(v, name=k) for k, v in bindings.items()}
    return fn(**nodes).value.copy()


@dataclass
class GradCheckReport:
    max_rel_error: float
    passed: bool
    worst: tuple[str, tuple] | None = None


def check_gradient(fn: Callable[..., Node], bindings: Mapping[str, np.ndarray],
                   params: str | Sequence[str] | None = None, step: float = 1e-5,
                   tolerance: float = 1e-4,
                   analytic: Mapping[str, np.ndarray] | None = None) -> GradCheckReport:
    """Compare analytic gradients of scalar ``fn`` with central differences.

    ``params`` selects which bindings to check (default: all).  ``analytic``
    overrides the backprop gradients, which lets tests feed a corrupted one.
    """
    if step <= 0:
        raise ValueError("step must be positive")
    if params is None:
        names = list(bindings)
    elif isinstance(params, str):
        names = [params]
    else:
        names = list(params)
    base = {k: np.array(v, dtype=DTYPE) for k, v in bindings.items()}

    if analytic is None:
        nodes = {k: param(v, name=k) for k, v in base.items()}
        loss = fn(**nodes)
        analytic = gradients(loss, {k: nodes[k] for k in names})

    def f(vals):
        return float(evaluate(fn, vals))

    worst_err, worst_at = 0.0, None
    for name in names:
        x = base[name]
        flat = x.reshape(-1)
        a = np.asarray(analytic[name]).reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            up = f(base)
            flat[i] = orig - step
            down = f(base)
            flat[i] = orig
            num = (up - down) / (2 * step)
            err = abs(a[i] - num) / max(abs(a[i]), abs(num), 1e-8)
            if err > worst_err:
                worst_err, worst_at = err, (name, np.unravel_index(i, x.shape))
    return GradCheckReport(worst_err, worst_err < tolerance, worst_at)
