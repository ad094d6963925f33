"""Finite-difference gradient checking and the kernel registry it covers."""
from __future__ import annotations

from typing import Callable

import numpy as np

from . import ops
from .core import Tensor, backward

# builder(rng) -> (fn(list[Tensor]) -> Tensor, list[np.ndarray])
Builder = Callable[[np.random.Generator], tuple[Callable, list]]


def _away_from_zero(rng, shape, margin=0.05):
    x = rng.uniform(margin, 1.0, size=shape)
    return x * rng.choice([-1.0, 1.0], size=shape)


def _distinct(rng, shape):
    # spread values so max reductions have a unique winner
    n = int(np.prod(shape))
    vals = rng.permutation(n).astype(np.float64) / n + rng.uniform(0, 0.2 / n, size=n)
    return (vals - 0.5).reshape(shape)


def _bn(training):
    def build(rng):
        C = 3
        rm = rng.normal(size=C)
        rv = rng.uniform(0.5, 2.0, size=C)

        def fn(t):
            return ops.batch_norm(t[0], t[1], t[2], rm.copy(), rv.copy(), training)
        return fn, [rng.normal(size=(2, C, 3, 3)), rng.uniform(0.5, 1.5, C), rng.normal(size=C)]
    return build


def _conv2d(stride, padding):
    def build(rng):
        k = int(rng.choice([1, 3]))
        def fn(t):
            return ops.conv2d(t[0], t[1], t[2], stride=stride, padding=padding if k > 1 else 0)
        return fn, [rng.normal(size=(2, 2, 5, 5)), rng.normal(size=(3, 2, k, k)),
                    rng.normal(size=3)]
    return build


def _depthwise(rng):
    stride = int(rng.integers(1, 3))
    k = int(rng.choice([3, 5]))

    def fn(t):
        return ops.depthwise_conv2d(t[0], t[1], t[2], stride=stride, padding=k // 2)
    return fn, [rng.normal(size=(2, 3, 5, 5)), rng.normal(size=(3, 1, k, k)), rng.normal(size=3)]


def _gather(rng):
    ys = rng.integers(0, 4, size=6)
    xs = rng.integers(0, 5, size=6)
    return (lambda t: ops.gather_points(t[0], ys, xs)), [rng.normal(size=(2, 3, 4, 5))]


KERNELS: dict[str, Builder] = {
    "add": lambda r: (lambda t: ops.add(t[0], t[1]), [r.normal(size=(2, 3)), r.normal(size=(1, 3))]),
    "sub": lambda r: (lambda t: ops.sub(t[0], t[1]), [r.normal(size=(2, 3)), r.normal(size=(2, 1))]),
    "mul": lambda r: (lambda t: ops.mul(t[0], t[1]), [r.normal(size=(2, 3, 2, 2)), r.normal(size=(2, 1, 2, 2))]),
    "div": lambda r: (lambda t: ops.div(t[0], t[1]), [r.normal(size=(3, 2)), r.uniform(0.5, 2.0, size=(3, 2))]),
    "scalar_mul": lambda r: (lambda t: t[0] * 2.5, [r.normal(size=(4,))]),
    "scalar_add": lambda r: (lambda t: 1.0 - t[0] + 0.5, [r.normal(size=(4,))]),
    "abs": lambda r: (lambda t: ops.abs(t[0]), [_away_from_zero(r, (3, 4))]),
    "relu": lambda r: (lambda t: ops.relu(t[0]), [_away_from_zero(r, (3, 4))]),
    "sigmoid": lambda r: (lambda t: ops.sigmoid(t[0]), [r.normal(scale=2.0, size=(3, 4))]),
    "silu": lambda r: (lambda t: ops.silu(t[0]), [r.normal(scale=2.0, size=(3, 4))]),
    "tanh": lambda r: (lambda t: ops.tanh(t[0]), [r.normal(size=(3, 4))]),
    "sum": lambda r: (lambda t: ops.sum(t[0], axis=(0, 2), keepdims=True), [r.normal(size=(2, 3, 4))]),
    "mean": lambda r: (lambda t: ops.mean(t[0], axis=1), [r.normal(size=(2, 3, 4))]),
    "channel_mean": lambda r: (lambda t: ops.channel_mean(t[0]), [r.normal(size=(2, 3, 2, 2))]),
    "channel_max": lambda r: (lambda t: ops.channel_max(t[0]), [_distinct(r, (2, 3, 2, 2))]),
    "global_avg_pool": lambda r: (lambda t: ops.global_avg_pool(t[0]), [r.normal(size=(2, 3, 3, 3))]),
    "max_pool": lambda r: (lambda t: ops.global_max_pool(t[0]), [_distinct(r, (2, 3, 3, 3))]),
    "reshape": lambda r: (lambda t: ops.unsqueeze(ops.reshape(t[0], (3, 4)), 1), [r.normal(size=(2, 6))]),
    "concat": lambda r: (lambda t: ops.concat([t[0], t[1]], axis=1), [r.normal(size=(2, 1, 3)), r.normal(size=(2, 2, 3))]),
    "gather_points": _gather,
    "cosine_similarity": lambda r: (lambda t: ops.cosine_similarity_map(t[0], t[1]), [r.normal(size=(2, 4, 2, 3)), r.normal(size=(2, 4, 2, 3))]),
    "mse": lambda r: (lambda t: ops.mse(t[0], t[1]), [r.uniform(size=(2, 1, 3, 3)), r.uniform(size=(2, 1, 3, 3))]),
    "conv2d": _conv2d(1, 1),
    "conv2d_stride2": _conv2d(2, 1),
    "depthwise_conv2d": _depthwise,
    "conv3d": lambda r: (lambda t: ops.conv3d(t[0], t[1], t[2], padding=1),
                         [r.normal(size=(2, 2, 2, 4, 4)), r.normal(size=(3, 2, 2, 3, 3)), r.normal(size=3)]),
    "pad2d_edge": lambda r: (lambda t: ops.pad2d(t[0], 2, "edge"), [r.normal(size=(1, 2, 3, 4))]),
    "batch_norm_train": _bn(True),
    "batch_norm_eval": _bn(False),
    "upsample2x": lambda r: (lambda t: ops.upsample2x(t[0]), [r.normal(size=(2, 2, 3, 4))]),
}


def numerical_grad(fn: Callable, arrays: list, index: int, weights: np.ndarray,
                   h: float = 1e-5) -> np.ndarray:
    base = [np.array(a, dtype=np.float64) for a in arrays]
    target = base[index]
    grad = np.zeros_like(target)
    flat = target.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = float((fn([Tensor(a) for a in base]).data * weights).sum())
        flat[i] = orig - h
        fm = float((fn([Tensor(a) for a in base]).data * weights).sum())
        flat[i] = orig
        gflat[i] = (fp - fm) / (2 * h)
    return grad


def analytic_grads(fn: Callable, arrays: list, weights: np.ndarray) -> list[np.ndarray]:
    leaves = [Tensor(np.array(a, dtype=np.float64), requires_grad=True) for a in arrays]
    out = fn(leaves)
    loss = ops.sum(ops.mul(out, Tensor(weights)))
    backward(loss)
    return [np.zeros_like(t.data) if t.grad is None else t.grad for t in leaves]


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-6) -> float:
    """Largest elementwise |a - n| / max(|a|, |n|, floor)."""
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return float(np.max(np.abs(analytic - numeric) / denom)) if analytic.size else 0.0


def check_gradients(fn: Callable, arrays: list, rng: np.random.Generator,
                    h: float = 1e-5) -> float:
    """Max relative error between backprop and central differences over all inputs.

    The output is contracted with a fixed random weight tensor so every
    Jacobian row contributes.
    """
    out = fn([Tensor(np.array(a, dtype=np.float64)) for a in arrays])
    weights = rng.normal(size=out.shape)
    grads = analytic_grads(fn, arrays, weights)
    worst = 0.0
    for i, g in enumerate(grads):
        num = numerical_grad(fn, arrays, i, weights, h)
        worst = max(worst, relative_error(g, num))
    return worst
