"""Differentiable kernels.

Every function takes and returns :class:`Tensor`; python scalars and numpy
arrays are accepted where a constant operand makes sense. Image tensors use
the N x C x H x W layout throughout.
"""
from __future__ import annotations

from typing import Sequence

import numpy as np

from . import _kernels as _k
from .core import ContractError, ShapeError, Tensor, as_tensor, make_node

# --------------------------------------------------------------------------
# elementwise arithmetic


def _coerce(a, b):
    if isinstance(a, Tensor) and not isinstance(b, Tensor):
        b = Tensor(np.asarray(b, dtype=a.dtype))
    elif isinstance(b, Tensor) and not isinstance(a, Tensor):
        a = Tensor(np.asarray(a, dtype=b.dtype))
    return as_tensor(a), as_tensor(b)


def add(a, b) -> Tensor:
    a, b = _coerce(a, b)
    return make_node(a.data + b.data, (a, b), lambda g: (g, g), "add")


def sub(a, b) -> Tensor:
    a, b = _coerce(a, b)
    return make_node(a.data - b.data, (a, b), lambda g: (g, -g), "sub")


def mul(a, b) -> Tensor:
    a, b = _coerce(a, b)
    ad, bd = a.data, b.data
    return make_node(ad * bd, (a, b), lambda g: (g * bd, g * ad), "mul")


def div(a, b) -> Tensor:
    a, b = _coerce(a, b)
    ad, bd = a.data, b.data
    return make_node(ad / bd, (a, b), lambda g: (g / bd, -g * ad / (bd * bd)), "div")


def abs(x: Tensor) -> Tensor:  # noqa: A001 - mirrors numpy naming
    xd = x.data
    return make_node(np.abs(xd), (x,), lambda g: (g * np.sign(xd),), "abs")


# --------------------------------------------------------------------------
# activations


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    return make_node(x.data * mask, (x,), lambda g: (g * mask,), "relu")


def sigmoid(x: Tensor) -> Tensor:
    s = _sigmoid(x.data)
    return make_node(s, (x,), lambda g: (g * s * (1.0 - s),), "sigmoid")


def _sigmoid(z: np.ndarray) -> np.ndarray:
    # tanh form: overflow-free and much faster than expit on float32
    out = np.tanh(z * 0.5)
    out += 1.0
    out *= 0.5
    return out


def silu(x: Tensor) -> Tensor:
    xd = x.data
    s = _sigmoid(xd)

    def bw(g):
        # g * s * (1 + x * (1 - s)), written to reuse one buffer
        t = 1.0 - s
        t *= xd
        t += 1.0
        t *= s
        t *= g
        return (t,)

    return make_node(xd * s, (x,), bw, "silu")


def tanh(x: Tensor) -> Tensor:
    t = np.tanh(x.data)
    return make_node(t, (x,), lambda g: (g * (1.0 - t * t),), "tanh")


# --------------------------------------------------------------------------
# reductions and shape manipulation


def _norm_axes(axis, ndim):
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(a % ndim for a in axis)


def sum(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:  # noqa: A001
    axes = _norm_axes(axis, x.ndim)
    shape = x.shape
    kept = tuple(1 if i in axes else s for i, s in enumerate(shape))

    def bw(g):
        return (np.broadcast_to(g.reshape(kept), shape),)

    return make_node(x.data.sum(axis=axes, keepdims=keepdims), (x,), bw, "sum")


def mean(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    axes = _norm_axes(axis, x.ndim)
    count = int(np.prod([x.shape[a] for a in axes])) if axes else 1
    shape = x.shape
    kept = tuple(1 if i in axes else s for i, s in enumerate(shape))

    def bw(g):
        return (np.broadcast_to(g.reshape(kept) / count, shape),)

    return make_node(x.data.mean(axis=axes, keepdims=keepdims), (x,), bw, "mean")


def amax(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    """Max reduction; ties share the gradient equally."""
    axes = _norm_axes(axis, x.ndim)
    m = x.data.max(axis=axes, keepdims=True)
    mask = (x.data == m)
    share = mask / mask.sum(axis=axes, keepdims=True)

    def bw(g):
        return (g.reshape(m.shape) * share,)

    out = m if keepdims else m.squeeze(axis=axes)
    return make_node(out, (x,), bw, "amax")


def reshape(x: Tensor, shape) -> Tensor:
    src = x.shape
    return make_node(x.data.reshape(shape), (x,), lambda g: (g.reshape(src),), "reshape")


def unsqueeze(x: Tensor, axis: int) -> Tensor:
    shape = list(x.shape)
    shape.insert(axis % (x.ndim + 1), 1)
    return reshape(x, tuple(shape))


def squeeze(x: Tensor, axis: int) -> Tensor:
    if x.shape[axis] != 1:
        raise ShapeError(f"cannot squeeze axis {axis} of size {x.shape[axis]}")
    shape = list(x.shape)
    del shape[axis]
    return reshape(x, tuple(shape))


def concat(xs: Sequence[Tensor], axis: int = 1) -> Tensor:
    xs = [as_tensor(x) for x in xs]
    ref = xs[0].shape
    ax = axis % len(ref)
    for t in xs[1:]:
        if t.ndim != len(ref):
            raise ShapeError("concat: rank mismatch")
        for i, (s0, s1) in enumerate(zip(ref, t.shape)):
            if i != ax and s0 != s1:
                raise ShapeError(f"concat: axis {i} has size {s1}, expected {s0}")
    bounds = np.cumsum([0] + [t.shape[ax] for t in xs])

    def bw(g):
        idx = [slice(None)] * g.ndim
        out = []
        for lo, hi in zip(bounds[:-1], bounds[1:]):
            idx[ax] = slice(lo, hi)
            out.append(g[tuple(idx)])
        return tuple(out)

    return make_node(np.concatenate([t.data for t in xs], axis=ax), xs, bw, "concat")


def slice_batch(x: Tensor, lo: int, hi: int) -> Tensor:
    """Rows lo:hi of the leading axis."""
    shape = x.shape

    def bw(g):
        out = np.zeros(shape, dtype=g.dtype)
        out[lo:hi] = g
        return (out,)

    return make_node(x.data[lo:hi], (x,), bw, "slice_batch")


def gather_points(x: Tensor, ys: np.ndarray, xs: np.ndarray) -> Tensor:
    """Pick feature vectors at pixel coordinates: (N,C,H,W) -> (N,C,n)."""
    ys = np.asarray(ys, dtype=np.intp)
    xs = np.asarray(xs, dtype=np.intp)
    H, W = x.shape[2], x.shape[3]
    if ys.size and (ys.min() < 0 or ys.max() >= H or xs.min() < 0 or xs.max() >= W):
        raise ContractError(f"point coordinates outside the {H}x{W} grid")
    shape = x.shape

    def bw(g):
        out = np.zeros(shape, dtype=g.dtype)
        np.add.at(out, (slice(None), slice(None), ys, xs), g)
        return (out,)

    return make_node(x.data[:, :, ys, xs], (x,), bw, "gather_points")


# --------------------------------------------------------------------------
# similarity and losses


def cosine_similarity(a: Tensor, b: Tensor, axis: int = 1, eps: float = 1e-8,
                      keepdims: bool = True) -> Tensor:
    """dot(a, b) / (max(|a|, eps) * max(|b|, eps)) along ``axis``."""
    if a.shape != b.shape:
        raise ShapeError(f"cosine_similarity: shapes {a.shape} and {b.shape} differ")
    ad, bd = a.data, b.data
    dot = (ad * bd).sum(axis=axis, keepdims=True)
    sa = (ad * ad).sum(axis=axis, keepdims=True)
    sb = (bd * bd).sum(axis=axis, keepdims=True)
    eps2 = eps * eps
    sa_g = np.maximum(sa, eps2)
    sb_g = np.maximum(sb, eps2)
    # sqrt of the product (not product of sqrts) makes cos(a, a) exactly 1
    denom = np.sqrt(sa_g * sb_g)
    cos = np.clip(dot / denom, -1.0, 1.0)
    # norm terms only carry gradient where the guard is inactive
    ka = (sa > eps2) / sa_g
    kb = (sb > eps2) / sb_g

    def bw(g):
        if not keepdims:
            g = np.expand_dims(g, axis)
        ga = g * (bd / denom - cos * ad * ka)
        gb = g * (ad / denom - cos * bd * kb)
        return ga, gb

    out = cos if keepdims else cos.squeeze(axis=axis)
    return make_node(out, (a, b), bw, "cosine_similarity")


def cosine_similarity_map(a: Tensor, b: Tensor, eps: float = 1e-8) -> Tensor:
    """Per-pixel cosine similarity over channels: (N,C,H,W) x2 -> (N,1,H,W)."""
    if a.ndim != 4:
        raise ShapeError(f"cosine_similarity_map expects N,C,H,W, got rank {a.ndim}")
    return cosine_similarity(a, b, axis=1, eps=eps, keepdims=True)


tanh_map = tanh


def mse(pred: Tensor, target) -> Tensor:
    target = as_tensor(target)
    if pred.shape != target.shape:
        raise ShapeError(f"mse: prediction {pred.shape} vs target {target.shape}")
    diff = pred.data - target.data
    n = diff.size

    def bw(g):
        k = 2.0 * g / n
        return k * diff, -k * diff

    return make_node(np.asarray(np.mean(diff * diff)), (pred, target), bw, "mse")


# --------------------------------------------------------------------------
# convolution


def _check_conv_shapes(x: Tensor, w: Tensor, groups_in: int):
    if x.ndim != 4:
        raise ShapeError(f"conv input must be N,C,H,W; got rank {x.ndim}")
    if w.ndim != 4:
        raise ShapeError(f"conv weight must be O,C,kh,kw; got rank {w.ndim}")
    if w.shape[1] != groups_in:
        raise ShapeError(f"axis 1 (channels): input has {x.shape[1]}, weight expects "
                         f"{w.shape[1] if groups_in == x.shape[1] else groups_in}")
    kh, kw = w.shape[2], w.shape[3]
    if kh % 2 == 0 or kw % 2 == 0:
        raise ContractError(f"kernel size must be odd, got {kh}x{kw}")


def _out_size(n, k, stride, pad, axis_name):
    o = (n + 2 * pad - k) // stride + 1
    if o < 1:
        raise ShapeError(f"axis {axis_name}: size {n} too small for kernel {k} "
                         f"with padding {pad}")
    return o


def _pad(x: np.ndarray, p: int) -> np.ndarray:
    if p == 0:
        return x
    return np.pad(x, ((0, 0), (0, 0), (p, p), (p, p)))


def _im2col(xp: np.ndarray, kh: int, kw: int, stride: int, Ho: int, Wo: int) -> np.ndarray:
    """N x (kh*kw*C) x (Ho*Wo) patch matrix, offset-major then channel."""
    N, C = xp.shape[:2]
    cols = np.empty((N, kh, kw, C, Ho, Wo), dtype=xp.dtype)
    hs = stride * (Ho - 1) + 1
    ws = stride * (Wo - 1) + 1
    for i in range(kh):
        for j in range(kw):
            cols[:, i, j] = xp[:, :, i:i + hs:stride, j:j + ws:stride]
    return cols.reshape(N, kh * kw * C, Ho * Wo)


def _conv_fwd(xp: np.ndarray, w: np.ndarray, stride: int, Ho: int, Wo: int):
    """Cross-correlation of an already padded input.

    Returns the N,O,Ho,Wo output and the patch matrix reused by the backward pass.
    """
    O, C, kh, kw = w.shape
    N = xp.shape[0]
    if kh == 1 and kw == 1:
        xs = xp[:, :, : stride * (Ho - 1) + 1: stride, : stride * (Wo - 1) + 1: stride]
        cols = xs.reshape(N, C, Ho * Wo)
        out = np.matmul(w[:, :, 0, 0], cols)
    else:
        cols = _im2col(xp, kh, kw, stride, Ho, Wo)
        out = np.matmul(w.transpose(0, 2, 3, 1).reshape(O, -1), cols)
    return out.reshape(N, O, Ho, Wo), cols


def _conv_bwd(g: np.ndarray, cols: np.ndarray, xp_shape: tuple, w: np.ndarray, stride: int,
              pad: int, need_x: bool = True):
    """Gradients w.r.t. the unpadded input and the weight."""
    O, C, kh, kw = w.shape
    N, _, Ho, Wo = g.shape
    g2 = g.reshape(N, O, Ho * Wo)
    gw_r = np.matmul(g2, cols.transpose(0, 2, 1)).sum(axis=0)  # O, kh*kw*C
    gw = gw_r.reshape(O, kh, kw, C).transpose(0, 3, 1, 2)
    if not need_x:
        return None, gw
    H, W = xp_shape[2] - 2 * pad, xp_shape[3] - 2 * pad
    if kh == 1 and kw == 1:
        gxs = np.matmul(w[:, :, 0, 0].T, g2).reshape(N, C, Ho, Wo)
        if stride == 1 and pad == 0:
            return gxs, gw
        gx = np.zeros(xp_shape, dtype=g.dtype)
        gx[:, :, : stride * (Ho - 1) + 1: stride, : stride * (Wo - 1) + 1: stride] = gxs
        return _unpad(gx, pad), gw
    if stride == 1 and kh == kw and 2 * pad == kh - 1:
        # full correlation with the flipped, transposed kernel
        wt = np.ascontiguousarray(w[:, :, ::-1, ::-1].transpose(1, 0, 2, 3))
        return _conv_fwd(_pad(g, kh - 1 - pad), wt, 1, H, W)[0], gw
    gcols = np.matmul(w.transpose(0, 2, 3, 1).reshape(O, -1).T, g2)
    gcols = gcols.reshape(N, kh, kw, C, Ho, Wo)
    gx = np.zeros(xp_shape, dtype=g.dtype)
    hs = stride * (Ho - 1) + 1
    ws = stride * (Wo - 1) + 1
    for i in range(kh):
        for j in range(kw):
            gx[:, :, i:i + hs:stride, j:j + ws:stride] += gcols[:, i, j]
    return _unpad(gx, pad), gw


def _unpad(x: np.ndarray, p: int) -> np.ndarray:
    if p == 0:
        return x
    return x[:, :, p:-p, p:-p]


def conv2d(x: Tensor, w: Tensor, b: Tensor | None = None, stride: int = 1,
           padding: int = 0) -> Tensor:
    _check_conv_shapes(x, w, x.shape[1])
    if padding < 0:
        raise ContractError("padding must be >= 0")
    kh, kw = w.shape[2], w.shape[3]
    Ho = _out_size(x.shape[2], kh, stride, padding, "2 (height)")
    Wo = _out_size(x.shape[3], kw, stride, padding, "3 (width)")
    if b is not None and b.shape != (w.shape[0],):
        raise ShapeError(f"axis 0 (bias): expected {w.shape[0]}, got {b.shape}")
    xp = _pad(x.data, padding)
    out, cols = _conv_fwd(xp, w.data, stride, Ho, Wo)
    if b is not None:
        out = out + b.data[None, :, None, None]
    wd = w.data
    xp_shape = xp.shape
    del xp

    def bw(g):
        gx, gw = _conv_bwd(g, cols, xp_shape, wd, stride, padding, x.requires_grad)
        gb = g.sum(axis=(0, 2, 3)) if b is not None else None
        return gx, gw, gb

    parents = (x, w) if b is None else (x, w, b)
    return make_node(np.ascontiguousarray(out), parents, bw, "conv2d")


def depthwise_conv2d(x: Tensor, w: Tensor, b: Tensor | None = None, stride: int = 1,
                     padding: int = 0) -> Tensor:
    """Per-channel convolution; weight shape C,1,kh,kw."""
    if x.ndim != 4 or w.ndim != 4:
        raise ShapeError("depthwise_conv2d expects rank-4 input and weight")
    C = x.shape[1]
    if w.shape[0] != C or w.shape[1] != 1:
        raise ShapeError(f"axis 0 (channels): input has {C}, weight shape {w.shape}")
    kh, kw = w.shape[2], w.shape[3]
    if kh % 2 == 0 or kw % 2 == 0:
        raise ContractError(f"kernel size must be odd, got {kh}x{kw}")
    Ho = _out_size(x.shape[2], kh, stride, padding, "2 (height)")
    Wo = _out_size(x.shape[3], kw, stride, padding, "3 (width)")
    xp = _pad(x.data, padding)
    wd = np.ascontiguousarray(w.data[:, 0])
    out = _k.dw_forward(xp, wd, stride, Ho, Wo)
    if b is not None:
        out += b.data[None, :, None, None]

    def bw(g):
        g = np.ascontiguousarray(g)
        gxp, gw = _k.dw_backward(g, xp, wd, stride, x.requires_grad)
        gb = g.sum(axis=(0, 2, 3)) if b is not None else None
        gx = _unpad(gxp, padding) if x.requires_grad else None
        return gx, gw[:, None].astype(g.dtype), gb

    parents = (x, w) if b is None else (x, w, b)
    return make_node(out, parents, bw, "depthwise_conv2d")


def conv3d(x: Tensor, w: Tensor, b: Tensor | None = None, padding: int = 0) -> Tensor:
    """Stride-1 3D convolution, N,C,D,H,W input, O,C,kd,kh,kw weight.

    ``padding`` applies to the two spatial axes only; the depth axis is never
    padded, so the output depth is D - kd + 1.
    """
    if x.ndim != 5 or w.ndim != 5:
        raise ShapeError("conv3d expects rank-5 input and weight")
    if w.shape[1] != x.shape[1]:
        raise ShapeError(f"axis 1 (channels): input has {x.shape[1]}, weight expects {w.shape[1]}")
    kd, kh, kw = w.shape[2:]
    Dout = x.shape[2] - kd + 1
    if Dout < 1:
        raise ShapeError(f"axis 2 (depth): size {x.shape[2]} smaller than kernel depth {kd}")
    Ho = _out_size(x.shape[3], kh, 1, padding, "3 (height)")
    Wo = _out_size(x.shape[4], kw, 1, padding, "4 (width)")
    xd, wd = x.data, w.data
    padded = [_pad(xd[:, :, t], padding) for t in range(xd.shape[2])]
    out = np.zeros((xd.shape[0], wd.shape[0], Dout, Ho, Wo), dtype=np.result_type(xd, wd))
    cols = []
    for t in range(Dout):
        row = []
        for d in range(kd):
            o, c = _conv_fwd(padded[t + d], wd[:, :, d], 1, Ho, Wo)
            out[:, :, t] += o
            row.append(c)
        cols.append(row)
    if b is not None:
        out += b.data[None, :, None, None, None]
    pshape = padded[0].shape
    del padded

    def bw(g):
        gx = np.zeros_like(xd)
        gw = np.zeros_like(wd)
        for t in range(Dout):
            gt = np.ascontiguousarray(g[:, :, t])
            for d in range(kd):
                gxd, gwd = _conv_bwd(gt, cols[t][d], pshape, wd[:, :, d], 1, padding,
                                     x.requires_grad)
                if gxd is not None:
                    gx[:, :, t + d] += gxd
                gw[:, :, d] += gwd
        gb = g.sum(axis=(0, 2, 3, 4)) if b is not None else None
        return gx, gw, gb

    parents = (x, w) if b is None else (x, w, b)
    return make_node(out, parents, bw, "conv3d")


def pad2d(x: Tensor, pad: int, mode: str = "edge") -> Tensor:
    """Spatial padding of an N,C,H,W tensor ('edge' replicates, 'constant' zero-fills)."""
    if pad == 0:
        return x
    if mode not in ("edge", "constant"):
        raise ContractError(f"unknown pad mode {mode!r}")
    out = np.pad(x.data, ((0, 0), (0, 0), (pad, pad), (pad, pad)), mode=mode)
    H, W = x.shape[2], x.shape[3]

    def bw(g):
        if mode == "constant":
            return (g[:, :, pad:pad + H, pad:pad + W],)
        gh = g[:, :, pad:pad + H].copy()
        gh[:, :, 0] += g[:, :, :pad].sum(axis=2)
        gh[:, :, -1] += g[:, :, pad + H:].sum(axis=2)
        gx = gh[:, :, :, pad:pad + W].copy()
        gx[:, :, :, 0] += gh[:, :, :, :pad].sum(axis=3)
        gx[:, :, :, -1] += gh[:, :, :, pad + W:].sum(axis=3)
        return (gx,)

    return make_node(out, (x,), bw, "pad2d")


# --------------------------------------------------------------------------
# normalization, pooling, resampling


def batch_norm(x: Tensor, gamma: Tensor, beta: Tensor, running_mean: np.ndarray,
               running_var: np.ndarray, training: bool, momentum: float = 0.1,
               eps: float = 1e-5) -> Tensor:
    """Batch normalization over (N, H, W) per channel.

    In training mode the running buffers are updated in place.
    """
    xd = x.data
    C = xd.shape[1]
    if gamma.shape != (C,) or beta.shape != (C,):
        raise ShapeError(f"axis 1 (channels): input has {C}, affine params {gamma.shape}")
    xd = np.ascontiguousarray(xd)
    if training:
        mu, var = _k.bn_stats(xd)
        m = xd.size // C
        running_mean *= 1.0 - momentum
        running_mean += momentum * mu
        running_var *= 1.0 - momentum
        running_var += momentum * var * (m / max(m - 1, 1))
    else:
        mu, var = running_mean.astype(np.float64), running_var.astype(np.float64)
    inv = 1.0 / np.sqrt(var + eps)
    out, xhat = _k.bn_apply(xd, mu.astype(xd.dtype), inv.astype(xd.dtype),
                            gamma.data.astype(xd.dtype), beta.data.astype(xd.dtype))
    gd = gamma.data.astype(np.float64)

    def bw(g):
        return _k.bn_backward(np.ascontiguousarray(g), xhat, gd, inv, training)

    return make_node(out, (x, gamma, beta), bw, "batch_norm")


def global_avg_pool(x: Tensor) -> Tensor:
    return mean(x, axis=(2, 3), keepdims=True)


def global_max_pool(x: Tensor) -> Tensor:
    return amax(x, axis=(2, 3), keepdims=True)


def channel_mean(x: Tensor) -> Tensor:
    return mean(x, axis=1, keepdims=True)


def channel_max(x: Tensor) -> Tensor:
    return amax(x, axis=1, keepdims=True)


_interp_cache: dict = {}


def _upsample_matrix(n: int, dtype) -> np.ndarray:
    """2n x n linear interpolation matrix, half-pixel centers, edge clamped."""
    key = (n, np.dtype(dtype).str)
    m = _interp_cache.get(key)
    if m is None:
        m = np.zeros((2 * n, n), dtype=dtype)
        for o in range(2 * n):
            src = (o + 0.5) / 2.0 - 0.5
            lo = int(np.floor(src))
            frac = src - lo
            m[o, min(max(lo, 0), n - 1)] += 1.0 - frac
            m[o, min(max(lo + 1, 0), n - 1)] += frac
        _interp_cache[key] = m
    return m


def upsample2x(x: Tensor) -> Tensor:
    """Bilinear x2 upsampling (half-pixel centers, as align_corners=False)."""
    H, W = x.shape[2], x.shape[3]
    uh = _upsample_matrix(H, x.dtype)
    uw = _upsample_matrix(W, x.dtype)
    out = np.matmul(np.matmul(uh, x.data), uw.T)

    def bw(g):
        return (np.matmul(np.matmul(uh.T, g), uw),)

    return make_node(out, (x,), bw, "upsample2x")
