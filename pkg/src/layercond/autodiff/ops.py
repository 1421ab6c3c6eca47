"""Differentiable primitives.

Image tensors are channels-last (N, H, W, C); convolution weights are
stored as (kh, kw, C_in, C_out) so im2col patches multiply them directly.
"""

from __future__ import annotations

import math

import numpy as np

from ..errors import ContractError, DimensionError
from .tensor import Tensor, as_tensor, make_result

LN_EPS = 1e-5


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


# ----------------------------------------------------------------------------
# elementwise


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    sa, sb = a.shape, b.shape

    def bw(g):
        return _unbroadcast(g, sa), _unbroadcast(g, sb)

    return make_result("add", a.data + b.data, (a, b), bw)


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    sa, sb = a.shape, b.shape

    def bw(g):
        return _unbroadcast(g, sa), _unbroadcast(-g, sb)

    return make_result("sub", a.data - b.data, (a, b), bw)


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    ad, bd = a.data, b.data

    def bw(g):
        ga = _unbroadcast(g * bd, ad.shape) if a.requires_grad else None
        gb = _unbroadcast(g * ad, bd.shape) if b.requires_grad else None
        return ga, gb

    return make_result("mul", ad * bd, (a, b), bw)


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    ad, bd = a.data, b.data
    out = ad / bd

    def bw(g):
        ga = _unbroadcast(g / bd, ad.shape) if a.requires_grad else None
        gb = _unbroadcast(-g * out / bd, bd.shape) if b.requires_grad else None
        return ga, gb

    return make_result("div", out, (a, b), bw)


def exp(x: Tensor) -> Tensor:
    out = np.exp(x.data)
    return make_result("exp", out, (x,), lambda g: (g * out,))


def log(x: Tensor) -> Tensor:
    xd = x.data
    return make_result("log", np.log(xd), (x,), lambda g: (g / xd,))


def silu(x: Tensor) -> Tensor:
    xd = x.data
    sig = 1.0 / (1.0 + np.exp(-xd))
    out = xd * sig

    def bw(g):
        return (g * (sig * (1.0 + xd * (1.0 - sig))),)

    return make_result("silu", out, (x,), bw)


_GELU_C = math.sqrt(2.0 / math.pi)


def gelu(x: Tensor) -> Tensor:
    """Tanh-approximated GELU."""
    xd = x.data
    inner = _GELU_C * (xd + 0.044715 * xd**3)
    th = np.tanh(inner)
    out = 0.5 * xd * (1.0 + th)

    def bw(g):
        dinner = _GELU_C * (1.0 + 3 * 0.044715 * xd**2)
        return (g * (0.5 * (1.0 + th) + 0.5 * xd * (1.0 - th**2) * dinner),)

    return make_result("gelu", out, (x,), bw)


# ----------------------------------------------------------------------------
# shape and reductions


def reshape(x: Tensor, shape) -> Tensor:
    src = x.shape
    return make_result("reshape", x.data.reshape(shape), (x,), lambda g: (g.reshape(src),))


def transpose(x: Tensor, axes=None) -> Tensor:
    if axes is None:
        axes = tuple(reversed(range(x.ndim)))
    inv = tuple(np.argsort(axes))
    return make_result("transpose", x.data.transpose(axes), (x,), lambda g: (g.transpose(inv),))


def sum(x: Tensor, axis=None, keepdims=False) -> Tensor:  # noqa: A001 - mirrors numpy
    src = x.shape

    def bw(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, src).copy(),)

    return make_result("sum", np.asarray(x.data.sum(axis=axis, keepdims=keepdims)), (x,), bw)


def mean(x: Tensor, axis=None, keepdims=False) -> Tensor:
    src = x.shape
    n = x.size if axis is None else int(np.prod([src[a] for a in np.atleast_1d(axis)]))

    def bw(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g / n, src).copy(),)

    return make_result("mean", np.asarray(x.data.mean(axis=axis, keepdims=keepdims)), (x,), bw)


def index(x: Tensor, idx) -> Tensor:
    src, dt = x.shape, x.data.dtype

    def bw(g):
        out = np.zeros(src, dtype=dt)
        np.add.at(out, idx, g)
        return (out,)

    return make_result("index", x.data[idx], (x,), bw)


def concat(tensors, axis: int = -1) -> Tensor:
    tensors = tuple(as_tensor(t) for t in tensors)
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def bw(g):
        return tuple(np.split(g, splits, axis=axis))

    return make_result("concat", np.concatenate([t.data for t in tensors], axis=axis), tensors, bw)


# ----------------------------------------------------------------------------
# linear algebra


def matmul(a, b) -> Tensor:
    """Matrix product with numpy batching rules on leading dimensions."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise DimensionError(f"matmul shape mismatch: {a.shape} x {b.shape}")
    ad, bd = a.data, b.data

    if bd.ndim == 2:
        # fold leading dims of a into one GEMM
        k, n = bd.shape
        a2 = ad.reshape(-1, k)
        out = (a2 @ bd).reshape(ad.shape[:-1] + (n,))

        def bw(g):
            g2 = g.reshape(-1, n)
            ga = (g2 @ bd.T).reshape(ad.shape) if a.requires_grad else None
            gb = a2.T @ g2 if b.requires_grad else None
            return ga, gb

        return make_result("matmul", out, (a, b), bw)

    out = ad @ bd

    def bw(g):
        ga = _unbroadcast(g @ np.swapaxes(bd, -1, -2), ad.shape) if a.requires_grad else None
        gb = _unbroadcast(np.swapaxes(ad, -1, -2) @ g, bd.shape) if b.requires_grad else None
        return ga, gb

    return make_result("matmul", out, (a, b), bw)


def linear(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    y = matmul(x, weight)
    return y if bias is None else add(y, bias)


# ----------------------------------------------------------------------------
# normalisation and attention pieces


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    xd = x.data
    z = np.exp(xd - xd.max(axis=axis, keepdims=True))
    y = z / z.sum(axis=axis, keepdims=True)

    def bw(g):
        return (y * (g - (g * y).sum(axis=axis, keepdims=True)),)

    return make_result("softmax", y, (x,), bw)


def layer_norm(x: Tensor, eps: float = LN_EPS, weight: Tensor | None = None, bias: Tensor | None = None) -> Tensor:
    """Normalise over the last axis with population variance."""
    if x.shape[-1] < 2:
        raise ContractError(f"layer_norm needs a trailing dimension >= 2, got {x.shape}")
    xd = x.data
    xc = xd - xd.mean(axis=-1, keepdims=True)
    xc -= xc.mean(axis=-1, keepdims=True)  # second pass removes float32 rounding of the mean
    var = (xc * xc).mean(axis=-1, keepdims=True)
    rstd = 1.0 / np.sqrt(var + eps)
    xhat = xc * rstd
    wd = weight.data if weight is not None else None
    out = xhat if wd is None else xhat * wd
    if bias is not None:
        out = out + bias.data
    inputs = (x,) + tuple(t for t in (weight, bias) if t is not None)

    def bw(g):
        dxhat = g if wd is None else g * wd
        dx = rstd * (dxhat - dxhat.mean(axis=-1, keepdims=True) - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True))
        grads = [dx]
        if weight is not None:
            grads.append(_unbroadcast(g * xhat, weight.shape))
        if bias is not None:
            grads.append(_unbroadcast(g, bias.shape))
        return tuple(grads)

    return make_result("layer_norm", out, inputs, bw)


def _group_mean(a: np.ndarray) -> np.ndarray:
    # a: (N, HW, G, Cg); reduce the contiguous spatial axis first
    return a.mean(axis=1).mean(axis=-1)[:, None, :, None]


def group_norm(x: Tensor, groups: int, weight: Tensor | None = None, bias: Tensor | None = None,
               eps: float = LN_EPS) -> Tensor:
    """Group normalisation of a channels-last (N, H, W, C) tensor."""
    n, h, w, c = x.shape
    if c % groups:
        raise DimensionError(f"{c} channels not divisible into {groups} groups")
    xg = x.data.reshape(n, h * w, groups, c // groups)
    xc = xg - _group_mean(xg)
    var = _group_mean(xc * xc)
    rstd = 1.0 / np.sqrt(var + eps)
    xh = xc * rstd
    xhat = xh.reshape(n, h, w, c)
    wd = weight.data if weight is not None else None
    out = xhat if wd is None else xhat * wd
    if bias is not None:
        out = out + bias.data
    inputs = (x,) + tuple(t for t in (weight, bias) if t is not None)

    def bw(g):
        dxhat = (g if wd is None else g * wd).reshape(xg.shape)
        dx = rstd * (dxhat - _group_mean(dxhat) - xh * _group_mean(dxhat * xh))
        grads = [dx.reshape(n, h, w, c)]
        if weight is not None:
            grads.append((g * xhat).reshape(-1, c).sum(axis=0).reshape(weight.shape))
        if bias is not None:
            grads.append(g.reshape(-1, c).sum(axis=0).reshape(bias.shape))
        return tuple(grads)

    return make_result("group_norm", out, inputs, bw)


def embedding(table: Tensor, ids) -> Tensor:
    ids = np.asarray(ids, dtype=np.int64)
    vocab = table.shape[0]
    if ids.size and (ids.min() < 0 or ids.max() >= vocab):
        raise ContractError(f"token id out of range for table of {vocab} rows")
    tshape, dt = table.shape, table.data.dtype

    def bw(g):
        out = np.zeros(tshape, dtype=dt)
        np.add.at(out, ids.reshape(-1), g.reshape(-1, tshape[1]))
        return (out,)

    return make_result("embedding", table.data[ids], (table,), bw)


# ----------------------------------------------------------------------------
# convolution and resampling


def _shift_conv(xp: np.ndarray, wk: np.ndarray, stride: int, ho: int, wo: int) -> np.ndarray:
    """Sum of per-offset GEMMs over shifted views of the padded input."""
    kh, kw, _, cout = wk.shape
    out = np.empty(xp.shape[:1] + (ho, wo, cout), dtype=xp.dtype)
    for i in range(kh):
        for j in range(kw):
            view = xp[:, i:i + stride * ho:stride, j:j + stride * wo:stride, :]
            if i == 0 and j == 0:
                np.matmul(view, wk[i, j], out=out)
            else:
                out += view @ wk[i, j]
    return out


def conv2d(x: Tensor, weight: Tensor, bias: Tensor | None = None, stride: int = 1) -> Tensor:
    """Zero-padded 'same'-style convolution; stride 2 halves the resolution."""
    n, h, w, c = x.shape
    kh, kw, cin, cout = weight.shape
    if cin != c:
        raise DimensionError(f"conv2d input has {c} channels, weight expects {cin}: {x.shape} x {weight.shape}")
    if stride not in (1, 2):
        raise ContractError(f"unsupported stride {stride}")
    if kh % 2 == 0 or kw % 2 == 0:
        raise ContractError(f"kernel must have odd size, got {kh}x{kw}")
    ph, pw = kh // 2, kw // 2
    ho = (h + 2 * ph - kh) // stride + 1
    wo = (w + 2 * pw - kw) // stride + 1
    xd, wd = x.data, weight.data
    pointwise = kh == kw == 1 and stride == 1
    xp = np.pad(xd, ((0, 0), (ph, ph), (pw, pw), (0, 0))) if (ph or pw) else xd
    out = (xd @ wd[0, 0]) if pointwise else _shift_conv(xp, wd, stride, ho, wo)
    if bias is not None:
        out += bias.data
    inputs = (x, weight) + ((bias,) if bias is not None else ())

    def bw(g):
        grads = []
        if not x.requires_grad:
            grads.append(None)
        elif pointwise:
            grads.append(g @ wd[0, 0].T)
        elif stride == 1:
            # input gradient of a stride-1 conv is a conv of the padded
            # output gradient with the spatially flipped, transposed kernel
            gp = np.pad(g, ((0, 0), (ph, ph), (pw, pw), (0, 0)))
            wflip = np.ascontiguousarray(wd[::-1, ::-1].transpose(0, 1, 3, 2))
            grads.append(_shift_conv(gp, wflip, 1, h, w))
        else:
            dxp = np.zeros(xp.shape, dtype=xd.dtype)
            for i in range(kh):
                for j in range(kw):
                    dxp[:, i:i + stride * ho:stride, j:j + stride * wo:stride, :] += g @ wd[i, j].T
            grads.append(dxp[:, ph:ph + h, pw:pw + w, :])
        if weight.requires_grad:
            g2 = g.reshape(-1, cout)
            dw = np.empty_like(wd)
            for i in range(kh):
                for j in range(kw):
                    view = xp[:, i:i + stride * ho:stride, j:j + stride * wo:stride, :]
                    dw[i, j] = view.reshape(-1, cin).T @ g2
            grads.append(dw)
        else:
            grads.append(None)
        if bias is not None:
            grads.append(g.reshape(-1, cout).sum(axis=0).reshape(bias.shape))
        return tuple(grads)

    return make_result("conv2d", out, inputs, bw)


def upsample2x(x: Tensor) -> Tensor:
    """Nearest-neighbour 2x upsampling of (N, H, W, C)."""
    n, h, w, c = x.shape
    out = np.broadcast_to(x.data[:, :, None, :, None, :], (n, h, 2, w, 2, c)).reshape(n, 2 * h, 2 * w, c)

    def bw(g):
        return (g.reshape(n, h, 2, w, 2, c).sum(axis=(2, 4)),)

    return make_result("upsample2x", out, (x,), bw)


# ----------------------------------------------------------------------------
# losses


def mse_loss(pred: Tensor, target) -> Tensor:
    target = as_tensor(target)
    if pred.shape != target.shape:
        raise DimensionError(f"mse_loss shape mismatch: {pred.shape} vs {target.shape}")
    diff = pred.data - target.data
    n = diff.size

    def bw(g):
        gd = g * (2.0 / n) * diff
        return gd, (-gd if target.requires_grad else None)

    return make_result("mse_loss", np.asarray((diff * diff).mean(), dtype=diff.dtype), (pred, target), bw)


def cross_entropy(logits: Tensor, targets, weights=None) -> Tensor:
    """Token cross-entropy averaged over positions with nonzero weight.

    ``logits`` is (..., V); ``targets`` holds integer ids of shape (...).
    With every weight zero the loss is exactly 0.
    """
    targets = np.asarray(targets, dtype=np.int64)
    ld = logits.data
    v = ld.shape[-1]
    if targets.shape != ld.shape[:-1]:
        raise DimensionError(f"cross_entropy targets {targets.shape} vs logits {ld.shape}")
    w = np.ones(targets.shape, dtype=ld.dtype) if weights is None else np.asarray(weights, dtype=ld.dtype)
    flat = ld.reshape(-1, v)
    t = targets.reshape(-1)
    wf = w.reshape(-1)
    shifted = flat - flat.max(axis=1, keepdims=True)
    logz = np.log(np.exp(shifted).sum(axis=1))
    nll = logz - shifted[np.arange(t.size), t]
    denom = wf.sum()
    denom = denom if denom > 0 else 1.0
    loss = np.asarray((nll * wf).sum() / denom, dtype=ld.dtype)

    def bw(g):
        p = np.exp(shifted - logz[:, None])
        p[np.arange(t.size), t] -= 1.0
        return ((g * p * (wf / denom)[:, None]).reshape(ld.shape),)

    return make_result("cross_entropy", loss, (logits,), bw)
