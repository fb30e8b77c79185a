"""
Differentiable operations on Tensors.

Every op computes its value with numpy and, inside an active Graph, records a
numeric backward and (where the gradient penalty needs it) a recorded vjp.
Broadcasting is limited to identical shapes or a scalar operand; ``expand``
is the only explicit broadcast.
"""

from typing import Optional, Sequence, Tuple, Union

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..errors import ContractError, DimensionError, DomainError
from .tensor import Tensor, current_graph

Operand = Union[Tensor, float, int, np.ndarray]

PADDING_MODES = ("zero", "replicate")


def as_tensor(x: Operand) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _emit(op, inputs, data, backward, vjp=None) -> Tensor:
    out = Tensor.wrap(data)
    graph = current_graph()
    if graph is not None and any(t.requires_grad for t in inputs):
        graph.record(op, inputs, out, backward, vjp)
    return out


def _pair(a: Operand, b: Operand, op: str) -> Tuple[Tensor, Tensor]:
    a, b = as_tensor(a), as_tensor(b)
    if a.shape != b.shape and a.ndim != 0 and b.ndim != 0:
        raise DimensionError(f"{op}: shapes {a.shape} and {b.shape} differ")
    return a, b


def _reduce_to(g: np.ndarray, shape) -> np.ndarray:
    if shape == () and g.shape != ():
        return np.asarray(g.sum())
    return g


def _reduce_to_graph(g: Tensor, shape) -> Tensor:
    if shape == () and g.shape != ():
        return sum(g)
    return g


# ==================== Elementwise ====================

def add(a: Operand, b: Operand) -> Tensor:
    a, b = _pair(a, b, "add")

    def backward(g):
        return _reduce_to(g, a.shape), _reduce_to(g, b.shape)

    def vjp(g, needs):
        return _reduce_to_graph(g, a.shape), _reduce_to_graph(g, b.shape)

    return _emit("add", (a, b), a.data + b.data, backward, vjp)


def sub(a: Operand, b: Operand) -> Tensor:
    a, b = _pair(a, b, "sub")

    def backward(g):
        return _reduce_to(g, a.shape), _reduce_to(-g, b.shape)

    def vjp(g, needs):
        return _reduce_to_graph(g, a.shape), _reduce_to_graph(neg(g), b.shape)

    return _emit("sub", (a, b), a.data - b.data, backward, vjp)


def mul(a: Operand, b: Operand) -> Tensor:
    a, b = _pair(a, b, "mul")

    def backward(g):
        return _reduce_to(g * b.data, a.shape), _reduce_to(g * a.data, b.shape)

    def vjp(g, needs):
        ga = _reduce_to_graph(mul(g, b), a.shape) if needs[0] else None
        gb = _reduce_to_graph(mul(g, a), b.shape) if needs[1] else None
        return ga, gb

    return _emit("mul", (a, b), a.data * b.data, backward, vjp)


def div(a: Operand, b: Operand) -> Tensor:
    """Elementwise quotient; callers guard denominators that can reach zero."""
    a, b = _pair(a, b, "div")
    out = a.data / b.data

    def backward(g):
        return _reduce_to(g / b.data, a.shape), _reduce_to(-g * out / b.data, b.shape)

    def vjp(g, needs):
        ga = _reduce_to_graph(div(g, b), a.shape) if needs[0] else None
        gb = _reduce_to_graph(mul(g, Tensor.wrap(-out / b.data)), b.shape) if needs[1] else None
        return ga, gb

    return _emit("div", (a, b), out, backward, vjp)


def neg(x: Operand) -> Tensor:
    x = as_tensor(x)
    return _emit("neg", (x,), -x.data, lambda g: (-g,), lambda g, needs: (neg(g),))


def _unary(op: str, x: Tensor, value: np.ndarray, slope: np.ndarray) -> Tensor:
    """Op whose derivative is the elementwise factor ``slope``."""
    return _emit(
        op, (x,), value,
        lambda g: (g * slope,),
        lambda g, needs: (mul(g, Tensor.wrap(slope)),),
    )


def relu(x: Operand) -> Tensor:
    x = as_tensor(x)
    return _unary("relu", x, np.maximum(x.data, 0.0), (x.data > 0).astype(np.float64))


def leaky_relu(x: Operand, slope: float = 0.2) -> Tensor:
    x = as_tensor(x)
    factor = np.where(x.data > 0, 1.0, slope)
    return _unary("leaky_relu", x, x.data * factor, factor)


def tanh(x: Operand) -> Tensor:
    x = as_tensor(x)
    t = np.tanh(x.data)
    return _unary("tanh", x, t, 1.0 - t * t)


def sqrt(x: Operand, eps: float = 0.0) -> Tensor:
    """Square root of ``x + eps``."""
    x = as_tensor(x)
    r = np.sqrt(x.data + eps)
    return _unary("sqrt", x, r, 0.5 / r)


def abs(x: Operand) -> Tensor:
    x = as_tensor(x)
    return _unary("abs", x, np.abs(x.data), np.sign(x.data))


def square(x: Operand) -> Tensor:
    x = as_tensor(x)

    def vjp(g, needs):
        return (mul(g, mul(x, 2.0)),)

    return _emit("square", (x,), x.data * x.data, lambda g: (2.0 * g * x.data,), vjp)


def exp(x: Operand) -> Tensor:
    x = as_tensor(x)
    e = np.exp(x.data)
    out = None

    def vjp(g, needs):
        return (mul(g, out),)

    out = _emit("exp", (x,), e, lambda g: (g * e,), vjp)
    return out


_ELEMENTWISE = {
    "add": add,
    "sub": sub,
    "mul": mul,
    "div": div,
    "neg": neg,
    "relu": relu,
    "leaky_relu": leaky_relu,
    "tanh": tanh,
    "sqrt": sqrt,
    "abs": abs,
    "square": square,
    "exp": exp,
}


def elementwise(kind: str, *args, **kwargs) -> Tensor:
    """Dispatch an elementwise op by name (``leaky_relu`` takes ``slope``)."""
    try:
        fn = _ELEMENTWISE[kind]
    except KeyError:
        raise ValueError(f"Unknown elementwise op: {kind}") from None
    return fn(*args, **kwargs)


# ==================== Reductions and shape ops ====================

def _axes(axis, ndim) -> Tuple[int, ...]:
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(a % ndim for a in axis)


def sum(x: Operand, axis=None, keepdims: bool = False) -> Tensor:
    x = as_tensor(x)
    if x.size == 0:
        raise DomainError("sum of an empty tensor")
    axes = _axes(axis, x.ndim)
    kept = tuple(1 if i in axes else n for i, n in enumerate(x.shape))

    def backward(g):
        return (np.broadcast_to(np.reshape(g, kept), x.shape).copy(),)

    def vjp(g, needs):
        return (expand(reshape(g, kept), x.shape),)

    return _emit("sum", (x,), np.sum(x.data, axis=axes, keepdims=keepdims), backward, vjp)


def mean(x: Operand, axis=None, keepdims: bool = False) -> Tensor:
    x = as_tensor(x)
    if x.size == 0:
        raise DomainError("mean of an empty tensor")
    axes = _axes(axis, x.ndim)
    n = int(np.prod([x.shape[a] for a in axes])) if axes else 1
    return mul(sum(x, axis=axis, keepdims=keepdims), 1.0 / n)


def reduce(kind: str, x: Operand, axis=None) -> Tensor:
    """``sum`` or ``mean`` reduction; scalar when ``axis`` is None."""
    if kind == "sum":
        return sum(x, axis=axis)
    if kind == "mean":
        return mean(x, axis=axis)
    raise ValueError(f"Unknown reduction: {kind}")


def reshape(x: Operand, shape) -> Tensor:
    x = as_tensor(x)
    shape = tuple(shape)
    return _emit(
        "reshape", (x,), x.data.reshape(shape),
        lambda g: (np.reshape(g, x.shape),),
        lambda g, needs: (reshape(g, x.shape),),
    )


def expand(x: Operand, shape) -> Tensor:
    """Broadcast size-1 axes of ``x`` to ``shape`` (same rank)."""
    x = as_tensor(x)
    shape = tuple(shape)
    if x.ndim != len(shape) or any(a != b and a != 1 for a, b in zip(x.shape, shape)):
        raise DimensionError(f"expand: cannot broadcast {x.shape} to {shape}")
    axes = tuple(i for i, (a, b) in enumerate(zip(x.shape, shape)) if a == 1 and b != 1)

    def backward(g):
        return (np.sum(g, axis=axes, keepdims=True) if axes else g,)

    def vjp(g, needs):
        return (sum(g, axis=axes, keepdims=True) if axes else g,)

    return _emit("expand", (x,), np.broadcast_to(x.data, shape).copy(), backward, vjp)


def take(x: Operand, index: np.ndarray) -> Tensor:
    """Gather flat elements of ``x``; index -1 yields 0.

    The result has the shape of ``index``.
    """
    x = as_tensor(x)
    index = np.asarray(index, dtype=np.int64)
    valid = index >= 0
    safe = np.where(valid, index, 0)
    data = np.where(valid, x.data.reshape(-1)[safe], 0.0)

    def backward(g):
        flat = np.zeros(x.size)
        np.add.at(flat, index[valid], np.asarray(g)[valid])
        return (flat.reshape(x.shape),)

    def vjp(g, needs):
        return (scatter(g, index, x.shape),)

    return _emit("take", (x,), data, backward, vjp)


def scatter(x: Operand, index: np.ndarray, shape) -> Tensor:
    """Adjoint of ``take``: add ``x`` into a zero tensor of ``shape`` at ``index``."""
    x = as_tensor(x)
    index = np.asarray(index, dtype=np.int64)
    if index.shape != x.shape:
        raise DimensionError(f"scatter: index shape {index.shape} != value shape {x.shape}")
    shape = tuple(shape)
    valid = index >= 0
    flat = np.zeros(int(np.prod(shape)))
    np.add.at(flat, index[valid], x.data[valid])
    safe = np.where(valid, index, 0)

    def backward(g):
        return (np.where(valid, np.reshape(g, -1)[safe], 0.0),)

    def vjp(g, needs):
        return (take(g, index),)

    return _emit("scatter", (x,), flat.reshape(shape), backward, vjp)


def narrow(x: Operand, axis: int, start: int, length: int) -> Tensor:
    """Slice ``length`` entries along ``axis`` starting at ``start``."""
    x = as_tensor(x)
    ids = np.arange(x.size).reshape(x.shape)
    sl = [slice(None)] * x.ndim
    sl[axis] = slice(start, start + length)
    return take(x, ids[tuple(sl)])


def concat(tensors: Sequence[Operand], axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    if not tensors:
        raise DimensionError("concat of nothing")
    ref = tensors[0].shape
    for t in tensors[1:]:
        if t.ndim != len(ref) or any(a != b for i, (a, b) in enumerate(zip(t.shape, ref)) if i != axis % len(ref)):
            raise DimensionError(f"concat: shapes {ref} and {t.shape} disagree off axis {axis}")
    sizes = [t.shape[axis] for t in tensors]
    bounds = np.cumsum([0] + sizes)

    def backward(g):
        return tuple(np.take(g, np.arange(bounds[i], bounds[i + 1]), axis=axis)
                     for i in range(len(tensors)))

    def vjp(g, needs):
        return tuple(narrow(g, axis, int(bounds[i]), sizes[i]) if needs[i] else None
                     for i in range(len(tensors)))

    return _emit("concat", tuple(tensors), np.concatenate([t.data for t in tensors], axis=axis),
                 backward, vjp)


def softmax(x: Operand, axis: int = 0) -> Tensor:
    """Numerically stable softmax along ``axis``."""
    x = as_tensor(x)
    shifted = x.data - np.max(x.data, axis=axis, keepdims=True)
    e = np.exp(shifted)
    s = e / np.sum(e, axis=axis, keepdims=True)
    out = None

    def backward(g):
        return (s * (g - np.sum(g * s, axis=axis, keepdims=True)),)

    def vjp(g, needs):
        inner = sum(mul(g, out), axis=axis, keepdims=True)
        return (mul(out, sub(g, expand(inner, x.shape))),)

    out = _emit("softmax", (x,), s, backward, vjp)
    return out


def upsample_nearest(x: Operand, factor: int = 2) -> Tensor:
    """Nearest-neighbour upsampling of a [C, H, W] tensor."""
    x = as_tensor(x)
    if x.ndim != 3:
        raise DimensionError(f"upsample_nearest expects [C,H,W], got {x.shape}")
    c, h, w = x.shape
    ids = np.arange(x.size).reshape(x.shape)
    rows = np.arange(h * factor) // factor
    cols = np.arange(w * factor) // factor
    return take(x, ids[:, rows][:, :, cols])


# ==================== Convolutions ====================

def _check_conv(x: Tensor, k: Tensor, stride: int, op: str):
    if x.ndim != 3:
        raise DimensionError(f"{op}: input must be [C,H,W], got {x.shape}")
    if k.ndim != 4:
        raise DimensionError(f"{op}: kernel must be [C_out,C_in,kh,kw], got {k.shape}")
    if k.shape[2] % 2 == 0 or k.shape[3] % 2 == 0:
        raise ContractError(f"{op}: kernel size {k.shape[2:]} must be odd")
    if stride < 1:
        raise ContractError(f"{op}: stride must be >= 1, got {stride}")


def _pad(x: np.ndarray, pad: int, mode: str) -> np.ndarray:
    if pad == 0:
        return x
    return np.pad(x, ((0, 0), (pad, pad), (pad, pad)),
                  mode="constant" if mode == "zero" else "edge")


def _windows(xp: np.ndarray, kh: int, kw: int, stride: int) -> np.ndarray:
    """[C, H', W', kh, kw] view of every kernel placement."""
    return sliding_window_view(xp, (kh, kw), axis=(1, 2))[:, ::stride, ::stride]


def _spread(x: np.ndarray, k: np.ndarray, stride: int, out_hw) -> np.ndarray:
    """Accumulate each input pixel times the kernel into a [C_in, ...] canvas."""
    _, c, kh, kw = k.shape
    hi, wi = x.shape[1:]
    canvas = np.zeros((c,) + tuple(out_hw))
    for u in range(kh):
        for v in range(kw):
            canvas[:, u:u + stride * (hi - 1) + 1:stride, v:v + stride * (wi - 1) + 1:stride] += \
                np.einsum("oc,oyx->cyx", k[:, :, u, v], x)
    return canvas


def _fold_replicate(gp: np.ndarray, pad: int) -> np.ndarray:
    """Adjoint of edge padding: fold the padded border back onto the edge."""
    if pad == 0:
        return gp
    g = gp.copy()
    g[:, pad, :] += g[:, :pad, :].sum(axis=1)
    g[:, -pad - 1, :] += g[:, -pad:, :].sum(axis=1)
    g = g[:, pad:-pad, :]
    g[:, :, pad] += g[:, :, :pad].sum(axis=2)
    g[:, :, -pad - 1] += g[:, :, -pad:].sum(axis=2)
    return g[:, :, pad:-pad]


def _replicate_index(c: int, h: int, w: int, pad: int) -> np.ndarray:
    """Flat source index of every pixel of an edge-padded [c,h,w] tensor."""
    ids = np.arange(c * h * w).reshape(c, h, w)
    rows = np.clip(np.arange(-pad, h + pad), 0, h - 1)
    cols = np.clip(np.arange(-pad, w + pad), 0, w - 1)
    return ids[:, rows][:, :, cols]


def conv2d(x: Operand, kernel: Operand, stride: int = 1, padding: str = "zero",
           pad: Optional[int] = None) -> Tensor:
    """2-D cross-correlation of a [C_in, H, W] input with [C_out, C_in, kh, kw].

    Parameters
    ----------
    stride : int
        Step between kernel placements.
    padding : {"zero", "replicate"}
        Border mode.
    pad : int, optional
        Border width; defaults to ``kh // 2`` (same size at stride 1).

    Returns
    -------
    Tensor
        [C_out, H', W'] with H' = (H + 2 pad - kh) // stride + 1.
    """
    x, k = as_tensor(x), as_tensor(kernel)
    _check_conv(x, k, stride, "conv2d")
    if k.shape[1] != x.shape[0]:
        raise DimensionError(f"conv2d: input has {x.shape[0]} channels, kernel expects {k.shape[1]}")
    if padding not in PADDING_MODES:
        raise ValueError(f"padding must be one of {PADDING_MODES}, got {padding}")
    kh, kw = k.shape[2:]
    pad = kh // 2 if pad is None else pad
    xp = _pad(x.data, pad, padding)
    if xp.shape[1] < kh or xp.shape[2] < kw:
        raise DimensionError(f"conv2d: input {x.shape} too small for kernel {k.shape}")
    win = _windows(xp, kh, kw, stride)
    out = np.einsum("cyxuv,ocuv->oyx", win, k.data, optimize=True)

    def backward(g):
        gx = None
        if x.requires_grad:
            gp = _spread(g, k.data, stride, xp.shape[1:])
            gx = _fold_replicate(gp, pad) if padding == "replicate" else gp[:, pad:pad + x.shape[1], pad:pad + x.shape[2]]
        gk = np.einsum("oyx,cyxuv->ocuv", g, win, optimize=True) if k.requires_grad else None
        return gx, gk

    def vjp(g, needs):
        if needs[1]:
            raise ContractError("conv2d: kernel gradient cannot be differentiated again")
        if padding == "zero":
            return transpose_conv2d(g, k, stride=stride, pad=pad, output_size=x.shape[1:]), None
        full = transpose_conv2d(g, k, stride=stride, pad=0, output_size=xp.shape[1:])
        idx = _replicate_index(x.shape[0], x.shape[1], x.shape[2], pad)
        return scatter(full, idx, x.shape), None

    return _emit("conv2d", (x, k), out, backward, vjp)


def transpose_conv2d(x: Operand, kernel: Operand, stride: int = 1, pad: int = 0,
                     output_size: Optional[Tuple[int, int]] = None) -> Tensor:
    """Adjoint of zero-padded ``conv2d`` with the same kernel and stride.

    ``x`` is [C_out, H', W'] and the result [C_in, H, W]. Without
    ``output_size``, H = (H' - 1) stride + kh - 2 pad.
    """
    x, k = as_tensor(x), as_tensor(kernel)
    _check_conv(x, k, stride, "transpose_conv2d")
    if k.shape[0] != x.shape[0]:
        raise DimensionError(f"transpose_conv2d: input has {x.shape[0]} channels, kernel expects {k.shape[0]}")
    kh, kw = k.shape[2:]
    hi, wi = x.shape[1:]
    full_hw = ((hi - 1) * stride + kh, (wi - 1) * stride + kw)
    if output_size is None:
        output_size = (full_hw[0] - 2 * pad, full_hw[1] - 2 * pad)
    ho, wo = int(output_size[0]), int(output_size[1])
    if ho < 1 or wo < 1 or (ho + 2 * pad - kh) // stride + 1 != hi or (wo + 2 * pad - kw) // stride + 1 != wi:
        raise DimensionError(f"transpose_conv2d: output size {(ho, wo)} inconsistent with input {x.shape[1:]}")
    full = _spread(x.data, k.data, stride, full_hw)
    out = np.zeros((k.shape[1], ho, wo))
    h_keep, w_keep = min(ho, full_hw[0] - pad), min(wo, full_hw[1] - pad)
    out[:, :h_keep, :w_keep] = full[:, pad:pad + h_keep, pad:pad + w_keep]

    def backward(g):
        gp = _pad(np.asarray(g), pad, "zero")
        win = _windows(gp, kh, kw, stride)[:, :hi, :wi]
        gx = np.einsum("cyxuv,ocuv->oyx", win, k.data, optimize=True) if x.requires_grad else None
        gk = np.einsum("oyx,cyxuv->ocuv", x.data, win, optimize=True) if k.requires_grad else None
        return gx, gk

    def vjp(g, needs):
        if needs[1]:
            raise ContractError("transpose_conv2d: kernel gradient cannot be differentiated again")
        return conv2d(g, k, stride=stride, padding="zero", pad=pad), None

    return _emit("transpose_conv2d", (x, k), out, backward, vjp)
