"""Compiled loops for the memory-bound kernels (depthwise conv, batch norm).

numpy needs one full pass per kernel tap or per reduction for these; the
fused loops below touch each element a handful of times instead.
"""
from __future__ import annotations

import numpy as np
from numba import njit


@njit(cache=True)
def dw_forward(xp, w, stride, Ho, Wo):
    N, C = xp.shape[0], xp.shape[1]
    kh, kw = w.shape[1], w.shape[2]
    out = np.empty((N, C, Ho, Wo), dtype=xp.dtype)
    for n in range(N):
        for c in range(C):
            for y in range(Ho):
                for x in range(Wo):
                    acc = xp.dtype.type(0)
                    for i in range(kh):
                        for j in range(kw):
                            acc += w[c, i, j] * xp[n, c, y * stride + i, x * stride + j]
                    out[n, c, y, x] = acc
    return out


@njit(cache=True)
def dw_backward(g, xp, w, stride, need_x):
    """Weight gradient (float64 accumulation) and, optionally, padded-input gradient."""
    N, C, Ho, Wo = g.shape
    kh, kw = w.shape[1], w.shape[2]
    gw = np.zeros((C, kh, kw), dtype=np.float64)
    gxp = np.zeros(xp.shape if need_x else (0, 0, 0, 0), dtype=xp.dtype)
    for n in range(N):
        for c in range(C):
            for y in range(Ho):
                for x in range(Wo):
                    gv = g[n, c, y, x]
                    y0 = y * stride
                    x0 = x * stride
                    for i in range(kh):
                        for j in range(kw):
                            gw[c, i, j] += gv * xp[n, c, y0 + i, x0 + j]
                            if need_x:
                                gxp[n, c, y0 + i, x0 + j] += w[c, i, j] * gv
    return gxp, gw


@njit(cache=True)
def bn_stats(x):
    """Per-channel mean and biased variance (two-pass, float64 accumulation)."""
    N, C, H, W = x.shape
    m = N * H * W
    mean = np.zeros(C)
    var = np.zeros(C)
    for c in range(C):
        s = 0.0
        for n in range(N):
            for h in range(H):
                for w in range(W):
                    s += x[n, c, h, w]
        mu = s / m
        q = 0.0
        for n in range(N):
            for h in range(H):
                for w in range(W):
                    d = x[n, c, h, w] - mu
                    q += d * d
        mean[c] = mu
        var[c] = q / m
    return mean, var


@njit(cache=True)
def bn_apply(x, mean, inv, gamma, beta):
    N, C, H, W = x.shape
    xhat = np.empty_like(x)
    out = np.empty_like(x)
    for n in range(N):
        for c in range(C):
            mu = mean[c]
            iv = inv[c]
            ga = gamma[c]
            be = beta[c]
            for h in range(H):
                for w in range(W):
                    v = (x[n, c, h, w] - mu) * iv
                    xhat[n, c, h, w] = v
                    out[n, c, h, w] = v * ga + be
    return out, xhat


@njit(cache=True)
def bn_backward(g, xhat, gamma, inv, training):
    N, C, H, W = g.shape
    m = N * H * W
    gx = np.empty_like(g)
    ggamma = np.zeros(C, dtype=g.dtype)
    gbeta = np.zeros(C, dtype=g.dtype)
    for c in range(C):
        sg = 0.0
        sgx = 0.0
        for n in range(N):
            for h in range(H):
                for w in range(W):
                    gv = g[n, c, h, w]
                    sg += gv
                    sgx += gv * xhat[n, c, h, w]
        ggamma[c] = sgx
        gbeta[c] = sg
        k = gamma[c] * inv[c]
        if training:
            mg = sg / m
            mgx = sgx / m
            for n in range(N):
                for h in range(H):
                    for w in range(W):
                        gx[n, c, h, w] = k * (g[n, c, h, w] - mg - xhat[n, c, h, w] * mgx)
        else:
            for n in range(N):
                for h in range(H):
                    for w in range(W):
                        gx[n, c, h, w] = k * g[n, c, h, w]
    return gx, ggamma, gbeta
