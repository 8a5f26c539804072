"""Minimal differentiable n-dimensional array engine.

Tensors wrap numpy arrays; operations executed while a GradientTape is active
are recorded onto it, and ``tape.backward(scalar)`` replays the records in
exact reverse order to accumulate vector-Jacobian products. Leaf tensors
marked ``requires_grad`` receive their gradient in ``.grad``.

Float64 is used for oracle/testing work, float32 for training. Everything is
single-threaded per tape; independent tapes are independent.
"""

from __future__ import annotations

import math
from typing import Callable, Iterable, Sequence

import numpy as np


class ShapeError(ValueError):
    """Operand shapes are incompatible for the requested operation."""


class NoGradientGraphError(RuntimeError):
    """backward() was called on a tensor that is not part of any tape."""


# --------------------------------------------------------------------------
# operation accounting (used by scaling tests and diagnostics)
# --------------------------------------------------------------------------

class OpCounter:
    """Running totals of multiply-accumulates and elementwise array ops."""

    def __init__(self):
        self.macs = 0
        self.elems = 0

    def snapshot(self) -> tuple[int, int]:
        return self.macs, self.elems

    @property
    def total(self) -> int:
        return self.macs + self.elems


_COUNTER = OpCounter()


class count_ops:
    """Context manager measuring (macs, elems) performed inside the block."""

    def __enter__(self) -> "count_ops":
        self._m0, self._e0 = _COUNTER.snapshot()
        self.macs = 0
        self.elems = 0
        return self

    def __exit__(self, *exc):
        m1, e1 = _COUNTER.snapshot()
        self.macs = m1 - self._m0
        self.elems = e1 - self._e0
        return False

    @property
    def total(self) -> int:
        return self.macs + self.elems


_nan_hook: Callable[[str, np.ndarray], None] | None = None


def set_nan_hook(hook: Callable[[str, np.ndarray], None] | None):
    """Install a callback invoked as hook(op_name, data) whenever an op
    produces non-finite values. None disables the check entirely."""
    global _nan_hook
    _nan_hook = hook


# --------------------------------------------------------------------------
# tape
# --------------------------------------------------------------------------

class GradientTape:
    """Append-only record of executed ops; backward replays in reverse.

    Use as a context manager. Ops run outside any active tape produce
    untracked tensors and cost no bookkeeping.
    """

    def __init__(self):
        # each node: (out, inputs, vjp) where vjp(grad_out) yields one
        # gradient array (or None) per input, in order; holding the output
        # keeps ids stable for the grad accumulation dict
        self._nodes: list[tuple["Tensor", tuple["Tensor", ...], Callable]] = []

    def __enter__(self) -> "GradientTape":
        _TAPES.append(self)
        return self

    def __exit__(self, *exc):
        assert _TAPES and _TAPES[-1] is self
        _TAPES.pop()
        return False

    def __len__(self) -> int:
        return len(self._nodes)

    def _record(self, out: "Tensor", inputs: tuple["Tensor", ...], vjp: Callable):
        out.node = len(self._nodes)
        out.tape = self
        self._nodes.append((out, inputs, vjp))

    def backward(self, target: "Tensor", seed: np.ndarray | None = None):
        """Accumulate gradients of ``target`` w.r.t. every tracked leaf.

        ``target`` must be a scalar unless an explicit ``seed`` array of the
        same shape is given. Leaf tensors with requires_grad get ``.grad``
        assigned (overwriting any previous value).
        """
        if target.node is None or target.tape is not self:
            raise NoGradientGraphError(
                "target tensor was not produced under this tape; nothing to differentiate"
            )
        if seed is None:
            if target.data.size != 1:
                raise ValueError("backward() without seed requires a scalar target")
            seed = np.ones_like(target.data)
        grads: dict[int, np.ndarray] = {id(target): np.asarray(seed, dtype=target.data.dtype)}
        for out, inputs, vjp in reversed(self._nodes):
            g_out = grads.pop(id(out), None)
            if g_out is None:
                continue
            for t, g in zip(inputs, vjp(g_out)):
                if g is None or not t.tracked:
                    continue
                prev = grads.get(id(t))
                grads[id(t)] = g if prev is None else prev + g
                if t.requires_grad:
                    t.grad = grads[id(t)]


_TAPES: list[GradientTape] = []


def _active_tape() -> GradientTape | None:
    return _TAPES[-1] if _TAPES else None


# --------------------------------------------------------------------------
# tensor
# --------------------------------------------------------------------------

class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "node", "tape")

    def __init__(self, data: np.ndarray, requires_grad: bool = False):
        self.data = data
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self.node: int | None = None
        self.tape: GradientTape | None = None

    # -- introspection ------------------------------------------------
    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def tracked(self) -> bool:
        return self.requires_grad or self.node is not None

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(()))

    def __repr__(self):
        flag = ", requires_grad" if self.requires_grad else ""
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype}{flag})"

    # -- operators ----------------------------------------------------
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

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)


def tensor(data, dtype=None, requires_grad: bool = False) -> Tensor:
    arr = np.asarray(data, dtype=dtype)
    if arr.dtype.kind in "iub":
        arr = arr.astype(np.float64)
    return Tensor(arr, requires_grad=requires_grad)


def zeros(shape, dtype=np.float64, requires_grad: bool = False) -> Tensor:
    return Tensor(np.zeros(shape, dtype=dtype), requires_grad=requires_grad)


def ones(shape, dtype=np.float64, requires_grad: bool = False) -> Tensor:
    return Tensor(np.ones(shape, dtype=dtype), requires_grad=requires_grad)


def _as_tensor(x, like: Tensor | None = None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    dtype = like.data.dtype if like is not None else None
    arr = np.asarray(x, dtype=dtype)
    return Tensor(arr)


def _make(out_data: np.ndarray, inputs: tuple[Tensor, ...], vjp: Callable, name: str) -> Tensor:
    out = Tensor(out_data)
    if _nan_hook is not None and not np.all(np.isfinite(out_data)):
        _nan_hook(name, out_data)
    tape = _active_tape()
    if tape is not None and any(t.tracked for t in inputs):
        tape._record(out, inputs, vjp)
    return out


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum a broadcast gradient back down to ``shape``."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


# --------------------------------------------------------------------------
# elementwise arithmetic
# --------------------------------------------------------------------------

def add(a, b) -> Tensor:
    a = _as_tensor(a, b if isinstance(b, Tensor) else None)
    b = _as_tensor(b, a)
    out = a.data + b.data
    _COUNTER.elems += out.size

    def vjp(g):
        return _unbroadcast(g, a.data.shape), _unbroadcast(g, b.data.shape)

    return _make(out, (a, b), vjp, "add")


def sub(a, b) -> Tensor:
    a = _as_tensor(a, b if isinstance(b, Tensor) else None)
    b = _as_tensor(b, a)
    out = a.data - b.data
    _COUNTER.elems += out.size

    def vjp(g):
        return _unbroadcast(g, a.data.shape), _unbroadcast(-g, b.data.shape)

    return _make(out, (a, b), vjp, "sub")


def mul(a, b) -> Tensor:
    a = _as_tensor(a, b if isinstance(b, Tensor) else None)
    b = _as_tensor(b, a)
    out = a.data * b.data
    _COUNTER.elems += out.size

    def vjp(g):
        ga = _unbroadcast(g * b.data, a.data.shape) if a.tracked else None
        gb = _unbroadcast(g * a.data, b.data.shape) if b.tracked else None
        return ga, gb

    return _make(out, (a, b), vjp, "mul")


def div(a, b) -> Tensor:
    a = _as_tensor(a, b if isinstance(b, Tensor) else None)
    b = _as_tensor(b, a)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = a.data / b.data
    _COUNTER.elems += out.size

    def vjp(g):
        with np.errstate(divide="ignore", invalid="ignore"):
            ga = _unbroadcast(g / b.data, a.data.shape) if a.tracked else None
            gb = (
                _unbroadcast(-g * a.data / (b.data * b.data), b.data.shape)
                if b.tracked
                else None
            )
        return ga, gb

    return _make(out, (a, b), vjp, "div")


def neg(a: Tensor) -> Tensor:
    _COUNTER.elems += a.size
    return _make(-a.data, (a,), lambda g: (-g,), "neg")


def exp(a: Tensor) -> Tensor:
    out = np.exp(a.data)
    _COUNTER.elems += out.size
    return _make(out, (a,), lambda g: (g * out,), "exp")


def log(a: Tensor) -> Tensor:
    out = np.log(a.data)
    _COUNTER.elems += out.size
    return _make(out, (a,), lambda g: (g / a.data,), "log")


def sqrt(a: Tensor) -> Tensor:
    out = np.sqrt(a.data)
    _COUNTER.elems += out.size
    return _make(out, (a,), lambda g: (g * (0.5 / out),), "sqrt")


def sin(a: Tensor) -> Tensor:
    out = np.sin(a.data)
    _COUNTER.elems += out.size
    return _make(out, (a,), lambda g: (g * np.cos(a.data),), "sin")


def cos(a: Tensor) -> Tensor:
    out = np.cos(a.data)
    _COUNTER.elems += out.size
    return _make(out, (a,), lambda g: (g * -np.sin(a.data),), "cos")


def tanh(a: Tensor) -> Tensor:
    out = np.tanh(a.data)
    _COUNTER.elems += out.size
    return _make(out, (a,), lambda g: (g * (1.0 - out * out),), "tanh")


def relu(a: Tensor) -> Tensor:
    out = np.maximum(a.data, 0.0)
    _COUNTER.elems += out.size
    return _make(out, (a,), lambda g: (g * (a.data > 0),), "relu")


def elu(a: Tensor) -> Tensor:
    # alpha fixed at 1 so that elu(x) + 1 > 0 everywhere
    e = np.exp(np.minimum(a.data, 0.0))
    out = np.where(a.data > 0, a.data, e - 1.0)
    _COUNTER.elems += out.size
    return _make(out, (a,), lambda g: (g * np.where(a.data > 0, 1.0, e),), "elu")


def clamp_min(a: Tensor, floor: float) -> Tensor:
    out = np.maximum(a.data, floor)
    _COUNTER.elems += out.size
    return _make(out, (a,), lambda g: (g * (a.data >= floor),), "clamp_min")


def stop_gradient(a: Tensor) -> Tensor:
    """Identity with the gradient path severed."""
    return Tensor(a.data)


# --------------------------------------------------------------------------
# matmul and linear layers
# --------------------------------------------------------------------------

def matmul(a: Tensor, b: Tensor) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError(f"matmul requires rank >= 2 operands, got {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul inner extents disagree: {a.shape} x {b.shape}")
    try:
        out = np.matmul(a.data, b.data)
    except ValueError as err:
        raise ShapeError(f"matmul batch extents disagree: {a.shape} x {b.shape}") from err
    m, k = a.shape[-2], a.shape[-1]
    n = b.shape[-1]
    _COUNTER.macs += (out.size // (m * n)) * m * n * k

    def vjp(g):
        ga = gb = None
        if a.tracked:
            ga = _unbroadcast(np.matmul(g, np.swapaxes(b.data, -1, -2)), a.data.shape)
        if b.tracked:
            gb = _unbroadcast(np.matmul(np.swapaxes(a.data, -1, -2), g), b.data.shape)
        return ga, gb

    return _make(out, (a, b), vjp, "matmul")


def linear(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """x @ weight + bias, with x of shape (..., in) and weight (in, out)."""
    out = matmul(x, weight)
    if bias is not None:
        out = add(out, bias)
    return out


# --------------------------------------------------------------------------
# reductions
# --------------------------------------------------------------------------

def _norm_axis(axis, ndim: int):
    if axis is None:
        return None
    if isinstance(axis, int):
        axis = (axis,)
    axis = tuple(a % ndim for a in axis)
    for a in axis:
        if a >= ndim:
            raise ShapeError(f"reduction axis {a} out of range for rank {ndim}")
    return axis


def sum(t: Tensor, axis=None, keepdims: bool = False) -> Tensor:  # noqa: A001
    axis = _norm_axis(axis, t.ndim)
    out = t.data.sum(axis=axis, keepdims=keepdims)
    out = np.asarray(out)
    _COUNTER.elems += t.size

    def vjp(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, t.data.shape).astype(t.data.dtype, copy=False),)

    return _make(out, (t,), vjp, "sum")


def mean(t: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    axis = _norm_axis(axis, t.ndim)
    out = np.asarray(t.data.mean(axis=axis, keepdims=keepdims))
    _COUNTER.elems += t.size
    if axis is None:
        count = t.size
    else:
        count = math.prod(t.data.shape[a] for a in axis)

    def vjp(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        g = g / count
        return (np.broadcast_to(g, t.data.shape).astype(t.data.dtype, copy=False),)

    return _make(out, (t,), vjp, "mean")


def max(t: Tensor, axis: int, keepdims: bool = False) -> Tensor:  # noqa: A001
    axis = axis % t.ndim
    if t.data.shape[axis] == 0:
        raise ShapeError("max over an empty axis")
    out = t.data.max(axis=axis, keepdims=keepdims)
    out = np.asarray(out)
    idx = np.expand_dims(t.data.argmax(axis=axis), axis)
    _COUNTER.elems += t.size

    def vjp(g):
        if not keepdims:
            g = np.expand_dims(g, axis)
        gt = np.zeros_like(t.data)
        np.put_along_axis(gt, idx, np.asarray(g), axis)
        return (gt,)

    return _make(out, (t,), vjp, "max")


def cumsum(t: Tensor, axis: int) -> Tensor:
    axis = axis % t.ndim
    if t.data.shape[axis] == 0:
        raise ShapeError("cumsum over an empty axis")
    out = np.cumsum(t.data, axis=axis)
    _COUNTER.elems += t.size

    def vjp(g):
        return (np.flip(np.cumsum(np.flip(g, axis), axis=axis), axis),)

    return _make(out, (t,), vjp, "cumsum")


# --------------------------------------------------------------------------
# shape manipulation
# --------------------------------------------------------------------------

def reshape(t: Tensor, shape) -> Tensor:
    out = t.data.reshape(shape)
    return _make(out, (t,), lambda g: (g.reshape(t.data.shape),), "reshape")


def transpose(t: Tensor, axes: Sequence[int]) -> Tensor:
    axes = tuple(a % t.ndim for a in axes)
    inv = tuple(np.argsort(axes))
    out = t.data.transpose(axes)
    return _make(out, (t,), lambda g: (g.transpose(inv),), "transpose")


def swap_last(t: Tensor) -> Tensor:
    """Transpose the last two axes."""
    axes = tuple(range(t.ndim - 2)) + (t.ndim - 1, t.ndim - 2)
    return transpose(t, axes)


def concat(parts: Iterable[Tensor], axis: int) -> Tensor:
    parts = list(parts)
    axis = axis % parts[0].ndim
    out = np.concatenate([p.data for p in parts], axis=axis)
    sizes = [p.data.shape[axis] for p in parts]
    bounds = np.cumsum(sizes)[:-1]

    def vjp(g):
        return tuple(np.split(g, bounds, axis=axis))

    return _make(out, tuple(parts), vjp, "concat")


def slice_axis(t: Tensor, axis: int, start: int, stop: int) -> Tensor:
    axis = axis % t.ndim
    index = [slice(None)] * t.ndim
    index[axis] = slice(start, stop)
    index = tuple(index)
    out = t.data[index]

    def vjp(g):
        gt = np.zeros_like(t.data)
        gt[index] = g
        return (gt,)

    return _make(out, (t,), vjp, "slice")


# --------------------------------------------------------------------------
# neural-net specific ops
# --------------------------------------------------------------------------

def dropout(t: Tensor, p: float, training: bool, rng: np.random.Generator | None = None) -> Tensor:
    if not 0.0 <= p < 1.0:
        raise ValueError(f"dropout probability must be in [0, 1), got {p}")
    if not training or p == 0.0:
        return t
    if rng is None:
        raise ValueError("dropout in training mode requires a seeded generator")
    keep = (rng.random(t.data.shape) >= p).astype(t.data.dtype)
    scale = np.asarray(1.0 / (1.0 - p), dtype=t.data.dtype)
    out = t.data * keep * scale
    _COUNTER.elems += out.size

    def vjp(g):
        return (g * keep * scale,)

    return _make(out, (t,), vjp, "dropout")


def conv2d(x: Tensor, kernel: Tensor) -> Tensor:
    """Same-padded 2D cross-correlation.

    x: (b, c_in, h, w), kernel: (c_out, c_in, kh, kw) with odd kh, kw.
    """
    if x.ndim != 4 or kernel.ndim != 4:
        raise ShapeError(f"conv2d expects 4-d input and kernel, got {x.shape} and {kernel.shape}")
    b, c_in, h, w = x.shape
    c_out, c_k, kh, kw = kernel.shape
    if c_k != c_in:
        raise ShapeError(f"conv2d channel mismatch: input has {c_in}, kernel expects {c_k}")
    if kh % 2 == 0 or kw % 2 == 0:
        raise ShapeError(f"conv2d kernel extents must be odd, got {kh}x{kw}")
    ph, pw = kh // 2, kw // 2
    xp = np.pad(x.data, ((0, 0), (0, 0), (ph, ph), (pw, pw)))
    # patches: (b, c_in, h, w, kh, kw)
    patches = np.lib.stride_tricks.sliding_window_view(xp, (kh, kw), axis=(2, 3))
    out = np.einsum("bchwij,ocij->bohw", patches, kernel.data, optimize=True)
    out = np.ascontiguousarray(out)
    _COUNTER.macs += b * c_out * h * w * c_in * kh * kw

    def vjp(g):
        gx = gk = None
        if kernel.tracked:
            gk = np.einsum("bchwij,bohw->ocij", patches, g, optimize=True)
        if x.tracked:
            gxp = np.zeros_like(xp)
            for i in range(kh):
                for j in range(kw):
                    # each kernel tap contributes a shifted copy
                    gxp[:, :, i : i + h, j : j + w] += np.einsum(
                        "bohw,oc->bchw", g, kernel.data[:, :, i, j], optimize=True
                    )
            gx = gxp[:, :, ph : ph + h, pw : pw + w]
        return gx, gk

    return _make(out, (x, kernel), vjp, "conv2d")


def softmax(t: Tensor, axis: int = -1) -> Tensor:
    """Numerically stable softmax composed from primitive ops."""
    shifted = sub(t, max(t, axis=axis, keepdims=True))
    e = exp(shifted)
    return div(e, sum(e, axis=axis, keepdims=True))
