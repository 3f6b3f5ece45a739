"""Reverse-mode automatic differentiation over numpy arrays.

Every backward rule is written with differentiable ``Tensor`` operations, so
a gradient computed with ``create_graph=True`` is itself part of a graph and
can be differentiated again. The gradient penalty relies on this.
"""

from __future__ import annotations

import contextlib
from typing import Callable, Iterable, Sequence

import numpy as np

__all__ = [
    "Tensor",
    "Function",
    "DisconnectedGradError",
    "DomainError",
    "ShapeError",
    "no_grad",
    "grad",
    "finite_difference_gradient",
    "tensor",
    "add",
    "sub",
    "mul",
    "div",
    "neg",
    "absolute",
    "exp",
    "log",
    "power",
    "elementwise",
    "reduce",
    "sum",
    "mean",
    "reshape",
    "transpose",
    "broadcast_to",
    "sum_to",
    "concat",
    "take",
    "matmul",
    "conv2d",
    "upsample_nearest",
    "activation",
    "relu",
    "leaky_relu",
    "elu",
    "tanh",
    "sigmoid",
]


class ShapeError(ValueError):
    pass


class DomainError(ValueError):
    pass


class DisconnectedGradError(RuntimeError):
    pass


_GRAD_ENABLED = True


@contextlib.contextmanager
def _grad_mode(enabled: bool):
    global _GRAD_ENABLED
    prev = _GRAD_ENABLED
    _GRAD_ENABLED = enabled
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


def no_grad():
    """Context manager under which no graph nodes are recorded."""
    return _grad_mode(False)


def enable_grad():
    """Record graphs again, e.g. for a gradient penalty evaluated inside ``no_grad``."""
    return _grad_mode(True)


def is_grad_enabled() -> bool:
    return _GRAD_ENABLED


class Tensor:
    """An array plus an optional link to the op that produced it."""

    __slots__ = ("data", "requires_grad", "_ctx", "__weakref__")
    __array_priority__ = 1000

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        if isinstance(data, Tensor):
            data = data.data
        arr = np.asarray(data, dtype=dtype)
        if arr.dtype.kind != "f":
            arr = arr.astype(np.float64)
        if arr.dtype not in (np.float32, np.float64):
            raise TypeError(f"unsupported dtype {arr.dtype}")
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self._ctx: Function | None = None

    # -- introspection -------------------------------------------------
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
    def is_leaf(self) -> bool:
        return self._ctx is None

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else _raise_item(self)

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{flag})"

    def __len__(self) -> int:
        return self.shape[0]

    # -- operator sugar ------------------------------------------------
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

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)

    def __pow__(self, other):
        return power(self, other)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, index):
        return take(self, index)

    def sum(self, axes=None, keepdims: bool = False):
        return sum(self, axes, keepdims)

    def mean(self, axes=None, keepdims: bool = False):
        return mean(self, axes, keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    @property
    def T(self):
        return transpose(self)


def _raise_item(t: Tensor):
    raise ValueError(f"item() needs a single-element tensor, got shape {t.shape}")


def tensor(data, requires_grad: bool = False, dtype=None) -> Tensor:
    return Tensor(data, requires_grad=requires_grad, dtype=dtype)


def _as_tensor(x, like: Tensor | None = None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    dtype = like.dtype if like is not None else None
    return Tensor(np.asarray(x, dtype=dtype))


class Function:
    """One differentiable op.

    ``forward`` works on raw arrays; ``backward`` receives the upstream
    gradient as a Tensor and must return one Tensor (or None) per input,
    built only from Tensor ops so that higher-order gradients work.
    """

    inputs: tuple[Tensor, ...]
    needs_input_grad: tuple[bool, ...]

    def forward(self, *arrays: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def backward(self, g: Tensor) -> Sequence[Tensor | None]:
        raise NotImplementedError

    @classmethod
    def apply(cls, *inputs: Tensor, **kwargs) -> Tensor:
        fn = cls(**kwargs)
        fn.inputs = inputs
        fn.needs_input_grad = tuple(t.requires_grad for t in inputs)
        out = fn.forward(*(t.data for t in inputs))
        track = _GRAD_ENABLED and any(fn.needs_input_grad)
        result = Tensor(out, requires_grad=track)
        if track:
            result._ctx = fn
        else:
            fn.inputs = ()
        return result


# ---------------------------------------------------------------------------
# broadcasting helpers


def _broadcast_shape(a: tuple[int, ...], b: tuple[int, ...]) -> tuple[int, ...]:
    try:
        return np.broadcast_shapes(a, b)
    except ValueError:
        raise ShapeError(f"shapes {a} and {b} are not broadcastable") from None


def _sum_to_shape(arr: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if arr.shape == shape:
        return arr
    lead = arr.ndim - len(shape)
    axes = tuple(range(lead)) + tuple(
        lead + i for i, n in enumerate(shape) if n == 1 and arr.shape[lead + i] != 1
    )
    out = arr.sum(axis=axes, keepdims=True) if axes else arr
    if lead:
        out = out.reshape(out.shape[lead:])
    return out.reshape(shape)


class BroadcastTo(Function):
    def __init__(self, shape):
        self.shape = tuple(shape)

    def forward(self, x):
        self.in_shape = x.shape
        try:
            return np.ascontiguousarray(np.broadcast_to(x, self.shape))
        except ValueError:
            raise ShapeError(f"cannot broadcast {x.shape} to {self.shape}") from None

    def backward(self, g):
        return (sum_to(g, self.in_shape),)


class SumTo(Function):
    def __init__(self, shape):
        self.shape = tuple(shape)

    def forward(self, x):
        self.in_shape = x.shape
        return _sum_to_shape(x, self.shape)

    def backward(self, g):
        return (broadcast_to(g, self.in_shape),)


def broadcast_to(x: Tensor, shape) -> Tensor:
    if x.shape == tuple(shape):
        return x
    return BroadcastTo.apply(x, shape=shape)


def sum_to(x: Tensor, shape) -> Tensor:
    if x.shape == tuple(shape):
        return x
    return SumTo.apply(x, shape=shape)


# ---------------------------------------------------------------------------
# elementwise arithmetic


class Add(Function):
    def forward(self, a, b):
        _broadcast_shape(a.shape, b.shape)
        return a + b

    def backward(self, g):
        a, b = self.inputs
        return (
            sum_to(g, a.shape) if self.needs_input_grad[0] else None,
            sum_to(g, b.shape) if self.needs_input_grad[1] else None,
        )


class Sub(Function):
    def forward(self, a, b):
        _broadcast_shape(a.shape, b.shape)
        return a - b

    def backward(self, g):
        a, b = self.inputs
        return (
            sum_to(g, a.shape) if self.needs_input_grad[0] else None,
            sum_to(neg(g), b.shape) if self.needs_input_grad[1] else None,
        )


class Mul(Function):
    def forward(self, a, b):
        _broadcast_shape(a.shape, b.shape)
        return a * b

    def backward(self, g):
        a, b = self.inputs
        return (
            sum_to(mul(g, b), a.shape) if self.needs_input_grad[0] else None,
            sum_to(mul(g, a), b.shape) if self.needs_input_grad[1] else None,
        )


class Div(Function):
    def forward(self, a, b):
        _broadcast_shape(a.shape, b.shape)
        if np.any(b == 0):
            raise DomainError("division by zero")
        return a / b

    def backward(self, g):
        a, b = self.inputs
        ga = gb = None
        if self.needs_input_grad[0]:
            ga = sum_to(div(g, b), a.shape)
        if self.needs_input_grad[1]:
            gb = sum_to(neg(div(mul(g, a), mul(b, b))), b.shape)
        return ga, gb


class Neg(Function):
    def forward(self, x):
        return -x

    def backward(self, g):
        return (neg(g),)


class Abs(Function):
    def forward(self, x):
        self.sign = np.sign(x)
        return np.abs(x)

    def backward(self, g):
        # subgradient 0 at 0 comes from sign(0) == 0
        return (mul(g, Tensor(self.sign)),)


class Exp(Function):
    def forward(self, x):
        return np.exp(x)

    def backward(self, g):
        return (mul(g, exp(self.inputs[0])),)


class Log(Function):
    def forward(self, x):
        if np.any(x <= 0):
            raise DomainError("log of non-positive value")
        return np.log(x)

    def backward(self, g):
        return (div(g, self.inputs[0]),)


class Pow(Function):
    def forward(self, a, b):
        _broadcast_shape(a.shape, b.shape)
        if self.needs_input_grad[1] and np.any(a <= 0):
            raise DomainError("differentiable exponent needs a positive base")
        with np.errstate(divide="raise", invalid="raise"):
            try:
                return np.power(a, b)
            except FloatingPointError as exc:
                raise DomainError(f"power: {exc}") from None

    def backward(self, g):
        a, b = self.inputs
        ga = gb = None
        if self.needs_input_grad[0]:
            ga = sum_to(mul(g, mul(b, power(a, sub(b, 1.0)))), a.shape)
        if self.needs_input_grad[1]:
            gb = sum_to(mul(g, mul(power(a, b), log(a))), b.shape)
        return ga, gb


def add(a, b) -> Tensor:
    a, b = _pair(a, b)
    return Add.apply(a, b)


def sub(a, b) -> Tensor:
    a, b = _pair(a, b)
    return Sub.apply(a, b)


def mul(a, b) -> Tensor:
    a, b = _pair(a, b)
    return Mul.apply(a, b)


def div(a, b) -> Tensor:
    a, b = _pair(a, b)
    return Div.apply(a, b)


def neg(x: Tensor) -> Tensor:
    return Neg.apply(x)


def absolute(x: Tensor) -> Tensor:
    return Abs.apply(x)


def exp(x: Tensor) -> Tensor:
    return Exp.apply(x)


def log(x: Tensor) -> Tensor:
    return Log.apply(x)


def power(a, b) -> Tensor:
    a, b = _pair(a, b)
    return Pow.apply(a, b)


def _pair(a, b) -> tuple[Tensor, Tensor]:
    if isinstance(a, Tensor):
        return a, _as_tensor(b, a)
    b = _as_tensor(b)
    return _as_tensor(a, b), b


_BINARY = {"add": add, "sub": sub, "mul": mul, "div": div, "pow": power}
_UNARY = {"neg": neg, "abs": absolute, "exp": exp, "log": log}


def elementwise(kind: str, a, b=None) -> Tensor:
    """Dispatch by name: add, sub, mul, div, pow (binary); neg, abs, exp, log (unary)."""
    if kind in _BINARY:
        if b is None:
            raise TypeError(f"{kind} needs two operands")
        return _BINARY[kind](a, b)
    if kind in _UNARY:
        return _UNARY[kind](_as_tensor(a))
    raise ValueError(f"unknown elementwise op {kind!r}")


# ---------------------------------------------------------------------------
# reductions and shape ops


def _normalize_axes(axes, ndim: int) -> tuple[int, ...]:
    if axes is None:
        return tuple(range(ndim))
    if isinstance(axes, int):
        axes = (axes,)
    out = []
    for ax in axes:
        if not -ndim <= ax < ndim:
            raise ShapeError(f"axis {ax} out of range for rank {ndim}")
        out.append(ax % ndim)
    if len(set(out)) != len(out):
        raise ShapeError(f"repeated axis in {axes}")
    return tuple(sorted(out))


class Sum(Function):
    def __init__(self, axes, keepdims):
        self.axes = axes
        self.keepdims = keepdims

    def forward(self, x):
        self.in_shape = x.shape
        return np.asarray(x.sum(axis=self.axes, keepdims=self.keepdims))

    def backward(self, g):
        kept = list(self.in_shape)
        for ax in self.axes:
            kept[ax] = 1
        return (broadcast_to(reshape(g, tuple(kept)), self.in_shape),)


def sum(x: Tensor, axes=None, keepdims: bool = False) -> Tensor:
    axes = _normalize_axes(axes, x.ndim)
    if not axes:
        return x
    return Sum.apply(x, axes=axes, keepdims=keepdims)


def mean(x: Tensor, axes=None, keepdims: bool = False) -> Tensor:
    axes = _normalize_axes(axes, x.ndim)
    if not axes:
        return x
    count = int(np.prod([x.shape[a] for a in axes]))
    return div(sum(x, axes, keepdims), float(count))


def reduce(kind: str, x: Tensor, axes=None, keepdims: bool = False) -> Tensor:
    if kind == "sum":
        return sum(x, axes, keepdims)
    if kind == "mean":
        return mean(x, axes, keepdims)
    raise ValueError(f"unknown reduction {kind!r}")


class Reshape(Function):
    def __init__(self, shape):
        self.shape = shape

    def forward(self, x):
        self.in_shape = x.shape
        try:
            return x.reshape(self.shape)
        except ValueError:
            raise ShapeError(f"cannot reshape {x.shape} to {self.shape}") from None

    def backward(self, g):
        return (reshape(g, self.in_shape),)


def reshape(x: Tensor, shape) -> Tensor:
    shape = tuple(shape)
    if x.shape == shape:
        return x
    return Reshape.apply(x, shape=shape)


class Transpose(Function):
    def __init__(self, axes):
        self.axes = axes

    def forward(self, x):
        return np.ascontiguousarray(np.transpose(x, self.axes))

    def backward(self, g):
        return (transpose(g, tuple(np.argsort(self.axes))),)


def transpose(x: Tensor, axes=None) -> Tensor:
    if axes is None:
        axes = tuple(reversed(range(x.ndim)))
    return Transpose.apply(x, axes=tuple(axes))


class Concat(Function):
    def __init__(self, axis):
        self.axis = axis

    def forward(self, *xs):
        self.sizes = [x.shape[self.axis] for x in xs]
        try:
            return np.concatenate(xs, axis=self.axis)
        except ValueError as exc:
            raise ShapeError(str(exc)) from None

    def backward(self, g):
        grads = []
        start = 0
        for size, need in zip(self.sizes, self.needs_input_grad):
            if need:
                index = [slice(None)] * g.ndim
                index[self.axis] = slice(start, start + size)
                grads.append(take(g, tuple(index)))
            else:
                grads.append(None)
            start += size
        return grads


def concat(xs: Sequence[Tensor], axis: int = 0) -> Tensor:
    xs = list(xs)
    axis = _normalize_axes(axis, xs[0].ndim)[0]
    return Concat.apply(*xs, axis=axis)


class Take(Function):
    """``x[index]`` for basic or advanced numpy indices."""

    def __init__(self, index):
        self.index = index

    def forward(self, x):
        self.in_shape = x.shape
        return np.array(x[self.index])

    def backward(self, g):
        return (IndexAdd.apply(g, index=self.index, shape=self.in_shape),)


class IndexAdd(Function):
    """Scatter-add of ``g`` into zeros of ``shape`` at ``index``; adjoint of Take."""

    def __init__(self, index, shape):
        self.index = index
        self.shape = shape

    def forward(self, g):
        out = np.zeros(self.shape, dtype=g.dtype)
        np.add.at(out, self.index, g)
        return out

    def backward(self, gg):
        return (take(gg, self.index),)


def take(x: Tensor, index) -> Tensor:
    return Take.apply(x, index=index)


# ---------------------------------------------------------------------------
# linear algebra


class MatMul(Function):
    def forward(self, a, b):
        if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
            raise ShapeError(f"matmul of {a.shape} and {b.shape}")
        return a @ b

    def backward(self, g):
        a, b = self.inputs
        return (
            matmul(g, transpose(b)) if self.needs_input_grad[0] else None,
            matmul(transpose(a), g) if self.needs_input_grad[1] else None,
        )


def matmul(a: Tensor, b: Tensor) -> Tensor:
    return MatMul.apply(a, b)


# ---------------------------------------------------------------------------
# convolution
#
# Conv2d, Conv2dGradInput and Conv2dGradWeight are adjoint to one another, so
# each backward is expressed with the other two and the family is closed
# under differentiation.


def _pair_arg(v) -> tuple[int, int]:
    if isinstance(v, (int, np.integer)):
        return int(v), int(v)
    a, b = v
    return int(a), int(b)


def conv_output_size(size: int, kernel: int, stride: int, pad: int, dilation: int) -> int:
    return (size + 2 * pad - dilation * (kernel - 1) - 1) // stride + 1


class _ConvGeometry:
    def __init__(self, stride, padding, dilation):
        self.stride = _pair_arg(stride)
        self.padding = _pair_arg(padding)
        self.dilation = _pair_arg(dilation)

    def out_hw(self, h, w, kh, kw):
        (sh, sw), (ph, pw), (dh, dw) = self.stride, self.padding, self.dilation
        oh = conv_output_size(h, kh, sh, ph, dh)
        ow = conv_output_size(w, kw, sw, pw, dw)
        if oh < 1 or ow < 1:
            raise ShapeError(f"non-positive conv output extent ({oh}, {ow}) for input ({h}, {w})")
        return oh, ow

    def _taps(self, kh, kw, oh, ow):
        (sh, sw), (dh, dw) = self.stride, self.dilation
        for i in range(kh):
            for j in range(kw):
                r0, c0 = i * dh, j * dw
                yield i, j, slice(r0, r0 + sh * (oh - 1) + 1, sh), slice(c0, c0 + sw * (ow - 1) + 1, sw)

    def columns(self, x, kh, kw, oh, ow):
        """im2col: (C*kh*kw, B*oh*ow) matrix of zero-padded input taps."""
        ph, pw = self.padding
        b, c, h, w = x.shape
        if ph or pw:
            xp = np.zeros((b, c, h + 2 * ph, w + 2 * pw), dtype=x.dtype)
            xp[:, :, ph : ph + h, pw : pw + w] = x
        else:
            xp = x
        cols = np.empty((c, kh, kw, b, oh, ow), dtype=x.dtype)
        for i, j, rs, cs in self._taps(kh, kw, oh, ow):
            cols[:, i, j] = xp[:, :, rs, cs].transpose(1, 0, 2, 3)
        return cols.reshape(c * kh * kw, b * oh * ow)

    def fold(self, cols, in_shape, kh, kw, oh, ow):
        """col2im, the adjoint of ``columns``: scatter-add taps back onto the input."""
        ph, pw = self.padding
        b, c, h, w = in_shape
        cols = cols.reshape(c, kh, kw, b, oh, ow)
        out = np.zeros((b, c, h + 2 * ph, w + 2 * pw), dtype=cols.dtype)
        for i, j, rs, cs in self._taps(kh, kw, oh, ow):
            out[:, :, rs, cs] += cols[:, i, j].transpose(1, 0, 2, 3)
        return np.ascontiguousarray(out[:, :, ph : ph + h, pw : pw + w])


def _conv_forward(x, w, geom: _ConvGeometry):
    if x.ndim != 4 or w.ndim != 4:
        raise ShapeError(f"conv2d expects 4-d input and weight, got {x.shape}, {w.shape}")
    if x.shape[1] != w.shape[1]:
        raise ShapeError(f"conv2d channel mismatch: input {x.shape[1]}, weight {w.shape[1]}")
    f, c, kh, kw = w.shape
    oh, ow = geom.out_hw(x.shape[2], x.shape[3], kh, kw)
    cols = geom.columns(x, kh, kw, oh, ow)
    out = (w.reshape(f, -1) @ cols).reshape(f, x.shape[0], oh, ow)
    return np.ascontiguousarray(out.transpose(1, 0, 2, 3)), cols


def _flat_grad(g):
    """(B, F, oh, ow) -> (F, B*oh*ow)."""
    b, f, oh, ow = g.shape
    return np.ascontiguousarray(g.transpose(1, 0, 2, 3)).reshape(f, b * oh * ow)


def _conv_grad_weight(x, g, w_shape, geom: _ConvGeometry, cols=None):
    _, _, kh, kw = w_shape
    if cols is None:
        cols = geom.columns(x, kh, kw, g.shape[2], g.shape[3])
    return (_flat_grad(g) @ cols.T).reshape(w_shape)


def _conv_grad_input(g, w, x_shape, geom: _ConvGeometry):
    f, c, kh, kw = w.shape
    cols = w.reshape(f, -1).T @ _flat_grad(g)
    return geom.fold(cols, x_shape, kh, kw, g.shape[2], g.shape[3])


class Conv2d(Function):
    def __init__(self, geom):
        self.geom = geom

    def forward(self, x, w):
        out, cols = _conv_forward(x, w, self.geom)
        if self.needs_input_grad[1]:
            self.cols = cols
        return out

    def backward(self, g):
        x, w = self.inputs
        gx = gw = None
        if self.needs_input_grad[0]:
            gx = Conv2dGradInput.apply(g, w, geom=self.geom, x_shape=x.shape)
        if self.needs_input_grad[1]:
            gw = Conv2dGradWeight.apply(
                x, g, geom=self.geom, w_shape=w.shape, cols=getattr(self, "cols", None)
            )
        return gx, gw


class Conv2dGradInput(Function):
    """Input gradient of a convolution as a function of (upstream grad, weight)."""

    def __init__(self, geom, x_shape):
        self.geom = geom
        self.x_shape = x_shape

    def forward(self, g, w):
        return _conv_grad_input(g, w, self.x_shape, self.geom)

    def backward(self, gg):
        g, w = self.inputs
        dg = dw = None
        if self.needs_input_grad[0]:
            dg = Conv2d.apply(gg, w, geom=self.geom)
        if self.needs_input_grad[1]:
            dw = Conv2dGradWeight.apply(gg, g, geom=self.geom, w_shape=w.shape)
        return dg, dw


class Conv2dGradWeight(Function):
    """Weight gradient of a convolution as a function of (input, upstream grad)."""

    def __init__(self, geom, w_shape, cols=None):
        self.geom = geom
        self.w_shape = w_shape
        self.cols = cols

    def forward(self, x, g):
        out = _conv_grad_weight(x, g, self.w_shape, self.geom, self.cols)
        self.cols = None
        return out

    def backward(self, gw):
        x, g = self.inputs
        dx = dg = None
        if self.needs_input_grad[0]:
            dx = Conv2dGradInput.apply(g, gw, geom=self.geom, x_shape=x.shape)
        if self.needs_input_grad[1]:
            dg = Conv2d.apply(x, gw, geom=self.geom)
        return dx, dg


def conv2d(
    x: Tensor,
    weight: Tensor,
    bias: Tensor | None = None,
    stride=1,
    padding=0,
    dilation=1,
) -> Tensor:
    """2-d cross-correlation with zero padding, NCHW layout."""
    geom = _ConvGeometry(stride, padding, dilation)
    if min(geom.stride) < 1 or min(geom.dilation) < 1 or min(geom.padding) < 0:
        raise ShapeError("stride and dilation must be >= 1, padding >= 0")
    out = Conv2d.apply(x, weight, geom=geom)
    if bias is not None:
        out = add(out, reshape(bias, (1, -1, 1, 1)) if bias.ndim == 1 else bias)
    return out


# ---------------------------------------------------------------------------
# resampling


class UpsampleNearest(Function):
    def __init__(self, factor):
        self.factor = factor

    def forward(self, x):
        f = self.factor
        return np.ascontiguousarray(x.repeat(f, axis=2).repeat(f, axis=3))

    def backward(self, g):
        return (BlockSum.apply(g, factor=self.factor),)


class BlockSum(Function):
    """Sum over non-overlapping factor x factor blocks; adjoint of UpsampleNearest."""

    def __init__(self, factor):
        self.factor = factor

    def forward(self, g):
        b, c, h, w = g.shape
        f = self.factor
        return g.reshape(b, c, h // f, f, w // f, f).sum(axis=(3, 5))

    def backward(self, gg):
        return (UpsampleNearest.apply(gg, factor=self.factor),)


def upsample_nearest(x: Tensor, factor: int) -> Tensor:
    factor = int(factor)
    if factor < 1:
        raise ValueError("upsample factor must be >= 1")
    if x.ndim != 4:
        raise ShapeError(f"upsample_nearest expects 4-d input, got {x.shape}")
    if factor == 1:
        return x
    return UpsampleNearest.apply(x, factor=factor)


# ---------------------------------------------------------------------------
# nonlinearities


class Relu(Function):
    def forward(self, x):
        self.mask = (x > 0).astype(x.dtype)
        return x * self.mask

    def backward(self, g):
        return (mul(g, Tensor(self.mask)),)


class LeakyRelu(Function):
    def __init__(self, slope):
        self.slope = slope

    def forward(self, x):
        self.scale = np.where(x > 0, 1.0, self.slope).astype(x.dtype)
        return x * self.scale

    def backward(self, g):
        return (mul(g, Tensor(self.scale)),)


class Elu(Function):
    def __init__(self, alpha):
        self.alpha = alpha

    def forward(self, x):
        self.pos = (x > 0).astype(x.dtype)
        neg_part = self.alpha * np.expm1(np.minimum(x, 0))
        return np.where(x > 0, x, neg_part)

    def backward(self, g):
        x = self.inputs[0]
        pos = Tensor(self.pos)
        negative = 1.0 - pos
        # alpha*exp(x) on the negative side; x*negative keeps exp from overflowing
        slope = add(pos, mul(negative, mul(self.alpha, exp(mul(x, negative)))))
        return (mul(g, slope),)


class Tanh(Function):
    def forward(self, x):
        self.out = np.tanh(x)
        return self.out

    def backward(self, g):
        y = tanh(self.inputs[0]) if _GRAD_ENABLED else Tensor(self.out)
        return (mul(g, sub(1.0, mul(y, y))),)


class Sigmoid(Function):
    def forward(self, x):
        self.out = _stable_sigmoid(x)
        return self.out

    def backward(self, g):
        y = sigmoid(self.inputs[0]) if _GRAD_ENABLED else Tensor(self.out)
        return (mul(g, mul(y, sub(1.0, y))),)


def _stable_sigmoid(x):
    e = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e)).astype(x.dtype)


def relu(x: Tensor) -> Tensor:
    return Relu.apply(x)


def leaky_relu(x: Tensor, slope: float = 0.2) -> Tensor:
    return LeakyRelu.apply(x, slope=slope)


def elu(x: Tensor, alpha: float = 1.0) -> Tensor:
    return Elu.apply(x, alpha=alpha)


def tanh(x: Tensor) -> Tensor:
    return Tanh.apply(x)


def sigmoid(x: Tensor) -> Tensor:
    return Sigmoid.apply(x)


def activation(kind: str, x: Tensor, param: float | None = None) -> Tensor:
    if kind == "relu":
        return relu(x)
    if kind == "leaky_relu":
        return leaky_relu(x, 0.2 if param is None else param)
    if kind == "elu":
        return elu(x, 1.0 if param is None else param)
    if kind == "tanh":
        return tanh(x)
    if kind == "sigmoid":
        return sigmoid(x)
    if kind in ("none", "identity"):
        return x
    raise ValueError(f"unknown activation {kind!r}")


# ---------------------------------------------------------------------------
# differentiation


def _toposort(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        if node._ctx is not None:
            for parent in node._ctx.inputs:
                if parent.requires_grad and id(parent) not in seen:
                    stack.append((parent, False))
    return order


def grad(
    output: Tensor,
    wrt: Iterable[Tensor],
    create_graph: bool = False,
    grad_output: Tensor | None = None,
) -> list[Tensor]:
    """Gradients of ``output`` with respect to each tensor in ``wrt``.

    With ``create_graph=True`` the returned tensors are graph nodes and can
    be differentiated again. A target that ``output`` does not depend on
    raises ``DisconnectedGradError``.
    """
    wrt = list(wrt)
    if grad_output is None:
        if output.size != 1:
            raise ShapeError(f"grad needs a scalar output, got shape {output.shape}")
        grad_output = Tensor(np.ones(output.shape, dtype=output.dtype))
    for t in wrt:
        if not t.requires_grad:
            raise ValueError("differentiation target does not require grad")
    if not output.requires_grad:
        raise DisconnectedGradError("output is not connected to any tensor requiring grad")

    order = _toposort(output)
    targets = {id(t) for t in wrt}

    # prune to nodes lying on a path from some target to the output
    relevant: dict[int, bool] = {}
    for node in order:
        hit = id(node) in targets
        if not hit and node._ctx is not None:
            hit = any(relevant.get(id(p), False) for p in node._ctx.inputs)
        relevant[id(node)] = hit

    grads: dict[int, Tensor] = {id(output): grad_output}
    with _grad_mode(create_graph):
        for node in reversed(order):
            g = grads.get(id(node))
            if g is None or node._ctx is None or not relevant[id(node)]:
                continue
            if id(node) not in targets:
                del grads[id(node)]
            fn = node._ctx
            saved = fn.needs_input_grad
            fn.needs_input_grad = tuple(
                p.requires_grad and relevant.get(id(p), False) for p in fn.inputs
            )
            try:
                in_grads = fn.backward(g)
            finally:
                fn.needs_input_grad = saved
            for parent, pg in zip(fn.inputs, in_grads):
                if pg is None or not relevant.get(id(parent), False):
                    continue
                prev = grads.get(id(parent))
                grads[id(parent)] = pg if prev is None else add(prev, pg)

    result = []
    for t in wrt:
        g = grads.get(id(t))
        if g is None:
            raise DisconnectedGradError(f"output does not depend on target {t!r}")
        if not create_graph:
            g = Tensor(g.data)
        result.append(g)
    return result


def finite_difference_gradient(
    f: Callable[[Tensor], Tensor], x: Tensor, eps: float = 1e-6
) -> Tensor:
    """Central-difference estimate of the gradient of scalar ``f`` at ``x``."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    base = np.array(x.data, copy=True)
    flat = base.reshape(-1)
    out = np.empty_like(flat)
    with no_grad():
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            hi = float(f(Tensor(base.copy())).data.sum())
            flat[i] = orig - eps
            lo = float(f(Tensor(base.copy())).data.sum())
            flat[i] = orig
            out[i] = (hi - lo) / (2 * eps)
    return Tensor(out.reshape(base.shape))
