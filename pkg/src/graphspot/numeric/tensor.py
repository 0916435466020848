"""Dense tensors with tape-based reverse-mode differentiation.

Operations are recorded on the innermost active :class:`Tape` whenever at
least one input requires a gradient.  Outside a tape nothing is recorded,
which is the inference path.
"""

from __future__ import annotations

import threading
from typing import Callable, Sequence

import numpy as np

DTYPE = np.float64
L2_EPS = 1e-12


class ShapeMismatch(ValueError):
    def __init__(self, op: str, *shapes):
        self.shapes = shapes
        shown = " vs ".join(str(tuple(s)) for s in shapes)
        super().__init__(f"{op}: incompatible shapes {shown}")


class NotScalar(ValueError):
    pass


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "name")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        if isinstance(data, Tensor):
            data = data.data
        self.data = np.asarray(data, dtype=DTYPE)
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self) -> None:
        tape = current_tape()
        if tape is None:
            raise RuntimeError("backward() needs an active Tape")
        tape.backward(self)

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag})"

    # operator sugar
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, index):
        return getitem(self, index)

    @property
    def T(self):
        return transpose(self)


class _Entry:
    __slots__ = ("out", "inputs", "backward")

    def __init__(self, out, inputs, backward):
        self.out = out
        self.inputs = inputs
        self.backward = backward


_local = threading.local()


def _stack() -> list:
    if not hasattr(_local, "tapes"):
        _local.tapes = []
    return _local.tapes


def current_tape() -> "Tape | None":
    stack = _stack()
    return stack[-1] if stack else None


class Tape:
    """Ordered log of primitive operations for one forward pass.

    Use as a context manager; :meth:`backward` walks the log in exact
    reverse order and accumulates into ``.grad`` of leaf tensors.
    """

    def __init__(self):
        self.entries: list[_Entry] = []

    def __enter__(self) -> "Tape":
        _stack().append(self)
        return self

    def __exit__(self, *exc) -> None:
        _stack().pop()

    def __len__(self) -> int:
        return len(self.entries)

    def record(self, out: Tensor, inputs: tuple, backward: Callable) -> None:
        self.entries.append(_Entry(out, inputs, backward))

    def backward(self, loss: Tensor) -> None:
        if loss.size != 1:
            raise NotScalar(f"loss must be scalar, got shape {loss.shape}")
        grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
        produced = set()
        for entry in reversed(self.entries):
            key = id(entry.out)
            produced.add(key)
            g = grads.pop(key, None)
            if g is None:
                continue
            in_grads = entry.backward(g)
            for t, gi in zip(entry.inputs, in_grads):
                if gi is None or not t.requires_grad:
                    continue
                k = id(t)
                if k in grads:
                    grads[k] = grads[k] + gi
                else:
                    grads[k] = gi
        leaves = {}
        for entry in self.entries:
            for t in entry.inputs:
                if t.requires_grad and id(t) not in produced:
                    leaves[id(t)] = t
        if loss.requires_grad and id(loss) not in produced:
            leaves[id(loss)] = loss
        for k, t in leaves.items():
            g = grads.get(k)
            if g is None:
                continue
            t.grad = g.copy() if t.grad is None else t.grad + g


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(data: np.ndarray, inputs: tuple, backward: Callable) -> Tensor:
    req = any(t.requires_grad for t in inputs)
    out = Tensor.__new__(Tensor)
    out.data = data
    out.requires_grad = req
    out.grad = None
    out.name = None
    if req:
        tape = current_tape()
        if tape is not None:
            tape.record(out, inputs, backward)
    return out


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


def _broadcast_check(op: str, a: Tensor, b: Tensor) -> None:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeMismatch(op, a.shape, b.shape) from None


# ---------------------------------------------------------------- elementwise


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_check("add", a, b)
    sa, sb = a.shape, b.shape
    return _make(a.data + b.data, (a, b), lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)))


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_check("sub", a, b)
    sa, sb = a.shape, b.shape
    return _make(a.data - b.data, (a, b), lambda g: (_unbroadcast(g, sa), -_unbroadcast(g, sb)))


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_check("mul", a, b)
    ad, bd = a.data, b.data

    def back(g):
        return (
            _unbroadcast(g * bd, ad.shape) if a.requires_grad else None,
            _unbroadcast(g * ad, bd.shape) if b.requires_grad else None,
        )

    return _make(ad * bd, (a, b), back)


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_check("div", a, b)
    ad, bd = a.data, b.data
    out = ad / bd

    def back(g):
        return (
            _unbroadcast(g / bd, ad.shape) if a.requires_grad else None,
            _unbroadcast(-g * out / bd, bd.shape) if b.requires_grad else None,
        )

    return _make(out, (a, b), back)


def neg(a) -> Tensor:
    a = as_tensor(a)
    return _make(-a.data, (a,), lambda g: (-g,))


def relu(a) -> Tensor:
    a = as_tensor(a)
    mask = a.data > 0
    return _make(np.where(mask, a.data, 0.0), (a,), lambda g: (g * mask,))


def sigmoid(a) -> Tensor:
    a = as_tensor(a)
    out = _sigmoid(a.data)
    return _make(out, (a,), lambda g: (g * out * (1.0 - out),))


def _sigmoid(x: np.ndarray) -> np.ndarray:
    # split by sign so exp never overflows
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def exp(a) -> Tensor:
    a = as_tensor(a)
    out = np.exp(a.data)
    return _make(out, (a,), lambda g: (g * out,))


def log(a) -> Tensor:
    a = as_tensor(a)
    ad = a.data
    return _make(np.log(ad), (a,), lambda g: (g / ad,))


def clip(a, lo: float, hi: float) -> Tensor:
    """Clamp values; the gradient is zero where the clamp is active."""
    a = as_tensor(a)
    inside = (a.data >= lo) & (a.data <= hi)
    return _make(np.clip(a.data, lo, hi), (a,), lambda g: (g * inside,))


# ---------------------------------------------------------------- linear algebra


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeMismatch("matmul (operands must be at least 2-D)", a.shape, b.shape)
    if a.shape[-1] != b.shape[-2]:
        raise ShapeMismatch("matmul", a.shape, b.shape)
    try:
        np.broadcast_shapes(a.shape[:-2], b.shape[:-2])
    except ValueError:
        raise ShapeMismatch("matmul", a.shape, b.shape) from None
    ad, bd = a.data, b.data

    def back(g):
        ga = gb = None
        if a.requires_grad:
            ga = _unbroadcast(g @ np.swapaxes(bd, -1, -2), ad.shape)
        if b.requires_grad:
            if bd.ndim == 2 and ad.ndim > 2:
                # shared weight matrix: one big GEMM instead of a batched one plus a sum
                gb = ad.reshape(-1, ad.shape[-1]).T @ g.reshape(-1, g.shape[-1])
            else:
                gb = _unbroadcast(np.swapaxes(ad, -1, -2) @ g, bd.shape)
        return ga, gb

    return _make(ad @ bd, (a, b), back)


def transpose(a, axes: Sequence[int] | None = None) -> Tensor:
    a = as_tensor(a)
    if axes is None:
        axes = tuple(range(a.ndim))[::-1]
    axes = tuple(axes)
    inverse = tuple(np.argsort(axes))
    return _make(np.transpose(a.data, axes), (a,), lambda g: (np.transpose(g, inverse),))


def swapaxes(a, ax1: int, ax2: int) -> Tensor:
    a = as_tensor(a)
    return _make(np.swapaxes(a.data, ax1, ax2), (a,), lambda g: (np.swapaxes(g, ax1, ax2),))


def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    old = a.shape
    try:
        out = a.data.reshape(shape)
    except ValueError:
        raise ShapeMismatch("reshape", old, tuple(np.atleast_1d(shape))) from None
    return _make(out, (a,), lambda g: (g.reshape(old),))


# ---------------------------------------------------------------- reductions


def _norm_axis(axis, ndim):
    if axis is None:
        return None
    if isinstance(axis, int):
        return axis % ndim
    return tuple(ax % ndim for ax in axis)


def _expand(g: np.ndarray, axis, shape, keepdims: bool) -> np.ndarray:
    if axis is None:
        return np.broadcast_to(np.reshape(g, (1,) * len(shape)), shape)
    if not keepdims:
        g = np.expand_dims(g, axis)
    return np.broadcast_to(g, shape)


def sum(a, axis=None, keepdims: bool = False) -> Tensor:  # noqa: A001
    a = as_tensor(a)
    axis = _norm_axis(axis, a.ndim)
    shape = a.shape
    out = a.data.sum(axis=axis, keepdims=keepdims)
    return _make(np.asarray(out), (a,), lambda g: (np.array(_expand(g, axis, shape, keepdims)),))


def mean(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    axis = _norm_axis(axis, a.ndim)
    shape = a.shape
    if axis is None:
        count = a.size
    elif isinstance(axis, int):
        count = shape[axis]
    else:
        count = int(np.prod([shape[ax] for ax in axis]))
    out = a.data.mean(axis=axis, keepdims=keepdims)
    return _make(
        np.asarray(out), (a,), lambda g: (np.array(_expand(g, axis, shape, keepdims)) / count,)
    )


def max(a, axis: int, keepdims: bool = False) -> Tensor:  # noqa: A001
    """Maximum over one axis; the gradient goes to the first maximal entry."""
    a = as_tensor(a)
    axis = _norm_axis(axis, a.ndim)
    idx = np.expand_dims(np.argmax(a.data, axis=axis), axis)
    out = np.take_along_axis(a.data, idx, axis=axis)
    shape = a.shape

    def back(g):
        full = np.zeros(shape, dtype=DTYPE)
        gg = g if keepdims else np.expand_dims(g, axis)
        np.put_along_axis(full, idx, gg, axis=axis)
        return (full,)

    return _make(out if keepdims else np.squeeze(out, axis), (a,), back)


def softmax(a, axis: int = -1) -> Tensor:
    a = as_tensor(a)
    z = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    out = e / e.sum(axis=axis, keepdims=True)

    def back(g):
        return (out * (g - (g * out).sum(axis=axis, keepdims=True)),)

    return _make(out, (a,), back)


def l2_normalize(a, axis: int = -1, eps: float = L2_EPS) -> Tensor:
    """x / max(||x||, eps) along ``axis``; the guard branch is treated as constant."""
    a = as_tensor(a)
    norm = np.sqrt((a.data * a.data).sum(axis=axis, keepdims=True))
    guarded = norm <= eps
    denom = np.where(guarded, eps, norm)
    out = a.data / denom

    def back(g):
        proj = (g * out).sum(axis=axis, keepdims=True)
        return (np.where(guarded, g / denom, (g - out * proj) / denom),)

    return _make(out, (a,), back)


def standardize(a, axis: int, eps: float = 1e-5) -> Tensor:
    """(x - mean) / sqrt(biased_var + eps) along ``axis``."""
    a = as_tensor(a)
    mu = a.data.mean(axis=axis, keepdims=True)
    xc = a.data - mu
    var = (xc * xc).mean(axis=axis, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    out = xc * inv

    def back(g):
        gm = g.mean(axis=axis, keepdims=True)
        gy = (g * out).mean(axis=axis, keepdims=True)
        return (inv * (g - gm - out * gy),)

    return _make(out, (a,), back)


def norm_affine_relu(a, gamma, beta, axis, eps: float = 1e-5) -> Tensor:
    """relu(gamma * standardize(a, axis) + beta) as one fused primitive.

    Same values and gradients as composing ``standardize``, ``mul``, ``add``
    and ``relu``, with far fewer temporaries.
    """
    a, gamma, beta = as_tensor(a), as_tensor(gamma), as_tensor(beta)
    if gamma.shape != (a.shape[-1],) or beta.shape != gamma.shape:
        raise ShapeMismatch("norm_affine_relu", a.shape, gamma.shape, beta.shape)
    mu = a.data.mean(axis=axis, keepdims=True)
    z = a.data - mu
    var = np.square(z).mean(axis=axis, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    z *= inv
    u = z * gamma.data
    u += beta.data
    active = u > 0
    np.maximum(u, 0.0, out=u)
    lead = tuple(range(a.ndim - 1))

    def back(g):
        gu = g * active
        p = gu * z
        p_mean = p.mean(axis=axis, keepdims=True)
        gu_mean = gu.mean(axis=axis, keepdims=True)
        count = a.shape[axis]
        g_gamma = p_mean.sum(axis=lead) * count if gamma.requires_grad else None
        g_beta = gu_mean.sum(axis=lead) * count if beta.requires_grad else None
        ga = None
        if a.requires_grad:
            # inv * gamma * (gu - mean(gu) - z * mean(gu * z))
            np.multiply(z, p_mean, out=p)
            gu -= gu_mean
            gu -= p
            gu *= inv * gamma.data
            ga = gu
        return ga, g_gamma, g_beta

    return _make(u, (a, gamma, beta), back)


# ---------------------------------------------------------------- structure


def concatenate(tensors: Sequence, axis: int = 0) -> Tensor:
    tensors = tuple(as_tensor(t) for t in tensors)
    if not tensors:
        raise ValueError("concatenate needs at least one tensor")
    ndim = tensors[0].ndim
    axis = axis % ndim
    for t in tensors[1:]:
        if t.ndim != ndim or any(
            t.shape[i] != tensors[0].shape[i] for i in range(ndim) if i != axis
        ):
            raise ShapeMismatch("concatenate", tensors[0].shape, t.shape)
    sizes = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def back(g):
        return tuple(np.split(g, sizes, axis=axis))

    return _make(np.concatenate([t.data for t in tensors], axis=axis), tensors, back)


def stack(tensors: Sequence, axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    return concatenate([expand_dims(t, axis) for t in tensors], axis=axis)


def expand_dims(a, axis: int) -> Tensor:
    a = as_tensor(a)
    shape = a.shape
    return _make(np.expand_dims(a.data, axis), (a,), lambda g: (g.reshape(shape),))


def getitem(a, index) -> Tensor:
    """Basic or advanced indexing; backward scatters (with accumulation) into place."""
    a = as_tensor(a)
    shape = a.shape
    out = a.data[index]

    parts = index if isinstance(index, tuple) else (index,)
    basic = all(p is Ellipsis or p is None or isinstance(p, (int, slice)) for p in parts)

    def back(g):
        full = np.zeros(shape, dtype=DTYPE)
        if basic:
            full[index] = g
        else:
            np.add.at(full, index, g)
        return (full,)

    return _make(np.array(out, dtype=DTYPE), (a,), back)


def take(a, indices, axis: int = 0) -> Tensor:
    """Gather along ``axis`` with an integer index array of any shape."""
    a = as_tensor(a)
    indices = np.asarray(indices, dtype=np.intp)
    axis = axis % a.ndim
    shape = a.shape
    out = np.take(a.data, indices, axis=axis)

    def back(g):
        full = np.zeros(shape, dtype=DTYPE)
        moved = np.moveaxis(full, axis, 0)
        gm = np.moveaxis(g, tuple(range(axis, axis + indices.ndim)), tuple(range(indices.ndim)))
        np.add.at(moved, indices, gm)
        return (full,)

    return _make(out, (a,), back)
