"""Differentiable operations on :class:`~sketchvid.core.tensor.Tensor`.

Each op computes its forward value with numpy and, when a tape is active,
records a closure mapping the output gradient to input gradients. Layer ops
accept a single sample or a leading batch axis.
"""
import numpy as np

from .. import kernels
from .tensor import ShapeError, Tensor, make_output


def _same_shape(a, b, op):
    if a.shape != b.shape:
        raise ShapeError(f"{op}: shapes {a.shape} and {b.shape} differ")


# ---------------------------------------------------------------- elementwise

def add(a, b):
    _same_shape(a, b, "add")
    return make_output(a.data + b.data, (a, b), lambda g: (g, g), "add")


def sub(a, b):
    _same_shape(a, b, "sub")
    return make_output(a.data - b.data, (a, b), lambda g: (g, -g), "sub")


def mul(a, b):
    _same_shape(a, b, "mul")
    ad, bd = a.data, b.data
    return make_output(ad * bd, (a, b), lambda g: (g * bd, g * ad), "mul")


def scale(a, c):
    c = float(c)
    return make_output(a.data * c, (a,), lambda g: (g * c,), "scale")


def add_scalar(a, c):
    return make_output(a.data + float(c), (a,), lambda g: (g,), "add_scalar")


def square(a):
    ad = a.data
    return make_output(ad * ad, (a,), lambda g: (2.0 * ad * g,), "square")


def relu(x):
    """Elementwise ``max(0, x)``; the subgradient at 0 is taken as 0."""
    mask = x.data > 0
    return make_output(np.where(mask, x.data, 0.0).astype(x.dtype, copy=False),
                       (x,), lambda g: (g * mask,), "relu")


def scale_grad(x, factor):
    """Identity forward; multiplies the gradient flowing back by ``factor``."""
    factor = float(factor)
    return make_output(x.data, (x,), lambda g: (g * factor,), "scale_grad")


# ---------------------------------------------------------------- reductions

def sum(x, axis=None):  # noqa: A001 - mirrors numpy naming
    shape = x.shape
    out = np.sum(x.data, axis=axis)

    def back(g):
        if axis is None:
            return (np.broadcast_to(g, shape).copy(),)
        return (np.broadcast_to(np.expand_dims(g, axis), shape).copy(),)

    return make_output(np.asarray(out), (x,), back, "sum")


def mean(x, axis=None):
    n = x.data.size if axis is None else x.shape[axis]
    return scale(sum(x, axis=axis), 1.0 / n)


# ---------------------------------------------------------------- structure

def reshape(x, shape):
    old = x.shape
    return make_output(x.data.reshape(shape), (x,), lambda g: (g.reshape(old),), "reshape")


def concat(tensors, axis=-1):
    tensors = list(tensors)
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]
    out = np.concatenate([t.data for t in tensors], axis=axis)
    return make_output(out, tuple(tensors),
                       lambda g: tuple(np.split(g, splits, axis=axis)), "concat")


def take(x, indices):
    """Rows ``x[indices]`` along axis 0 (indices may repeat)."""
    idx = np.asarray(indices, dtype=np.intp)
    shape = x.shape

    def back(g):
        gx = np.zeros(shape, dtype=g.dtype)
        np.add.at(gx, idx, g)
        return (gx,)

    return make_output(x.data[idx], (x,), back, "take")


def stack(tensors):
    tensors = list(tensors)
    out = np.stack([t.data for t in tensors])
    return make_output(out, tuple(tensors), lambda g: tuple(g[i] for i in range(len(tensors))),
                       "stack")


# ---------------------------------------------------------------- layers

def linear(x, weight, bias):
    """Affine map ``weight @ x + bias`` for ``x`` of shape (D_in,) or (N, D_in)."""
    if weight.data.ndim != 2 or bias.data.ndim != 1:
        raise ShapeError("linear: weight must be 2-D and bias 1-D")
    d_out, d_in = weight.shape
    if x.shape[-1] != d_in or bias.shape[0] != d_out or x.data.ndim not in (1, 2):
        raise ShapeError(f"linear: input {x.shape}, weight {weight.shape}, bias {bias.shape}")
    xd, wd = x.data, weight.data
    out = xd @ wd.T + bias.data

    def back(g):
        if xd.ndim == 1:
            return g @ wd, np.outer(g, xd), g
        return g @ wd, g.T @ xd, g.sum(axis=0)

    return make_output(out, (x, weight, bias), back, "linear")


def conv2d(x, kernels_, stride=1, padding=0):
    """Cross-correlation of (C_in, H, W) or (N, C_in, H, W) input with
    (C_out, C_in, k, k) kernels. No bias term."""
    batched = x.data.ndim == 4
    if x.data.ndim not in (3, 4) or kernels_.data.ndim != 4:
        raise ShapeError(f"conv2d: input {x.shape} / kernels {kernels_.shape} have wrong rank")
    if stride < 1 or padding < 0:
        raise ValueError("conv2d: stride must be >= 1 and padding >= 0")
    xd = x.data if batched else x.data[None]
    n, c, h, w = xd.shape
    c_out, c_in, k, k2 = kernels_.shape
    if k != k2:
        raise ShapeError("conv2d: kernels must be square")
    if c_in != c:
        raise ShapeError(f"conv2d: input has {c} channels, kernels expect {c_in}")
    hp, wp = h + 2 * padding, w + 2 * padding
    if k > hp or k > wp:
        raise ShapeError(f"conv2d: kernel {k} larger than padded input {hp}x{wp}")
    out_h = (hp - k) // stride + 1
    out_w = (wp - k) // stride + 1
    if padding:
        xp = np.pad(xd, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    else:
        xp = xd
    xp = np.ascontiguousarray(xp, dtype=kernels_.dtype)
    cols = kernels.im2col(xp, k, stride, out_h, out_w)
    wmat = kernels_.data.reshape(c_out, -1)
    out = np.matmul(wmat, cols).reshape(n, c_out, out_h, out_w)
    if not batched:
        out = out[0]

    def back(g):
        g = g if batched else g[None]
        g2 = g.reshape(n, c_out, out_h * out_w)
        gw = np.tensordot(g2, cols, axes=([0, 2], [0, 2])).reshape(kernels_.shape)
        gcols = np.ascontiguousarray(np.matmul(wmat.T, g2))
        gxp = kernels.col2im(gcols, n, c, hp, wp, k, stride, out_h, out_w)
        if padding:
            gxp = gxp[:, :, padding:padding + h, padding:padding + w]
        gx = gxp if batched else gxp[0]
        return gx, gw

    return make_output(out, (x, kernels_), back, "conv2d")


def global_avg_pool(x):
    """Per-channel spatial mean: (C, H, W) -> (C,) or (N, C, H, W) -> (N, C)."""
    if x.data.ndim not in (3, 4):
        raise ShapeError(f"global_avg_pool: expected 3-D or 4-D input, got {x.shape}")
    shape = x.shape
    hw = shape[-1] * shape[-2]
    out = x.data.mean(axis=(-2, -1))

    def back(g):
        return (np.broadcast_to(g[..., None, None] / hw, shape).copy(),)

    return make_output(out, (x,), back, "global_avg_pool")


def softmax_cross_entropy(scores, target):
    """``-log softmax(scores)[true]`` for a one-hot ``target`` of the same length."""
    t = np.asarray(target.data if isinstance(target, Tensor) else target, dtype=np.float64)
    if scores.data.ndim != 1 or t.shape != scores.shape:
        raise ShapeError(f"softmax_cross_entropy: scores {scores.shape}, target {t.shape}")
    if not (np.all((t == 0) | (t == 1)) and np.count_nonzero(t) == 1):
        raise ValueError("softmax_cross_entropy: target must be one-hot")
    s = scores.data.astype(np.float64)
    shifted = s - s.max()
    logz = np.log(np.exp(shifted).sum())
    true = int(np.argmax(t))
    loss = logz - shifted[true]
    probs = np.exp(shifted - logz)

    def back(g):
        return ((probs - t) * g).astype(scores.dtype, copy=False)

    return make_output(np.asarray(loss, dtype=scores.dtype), (scores,),
                       lambda g: (back(g),), "softmax_cross_entropy")
