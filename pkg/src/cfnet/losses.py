"""Main MSE loss and the content-aware auxiliary losses.

Internal structural similarity (ISS) is the vector of cosine similarities
between feature vectors at randomly sampled point pairs. The changed-content
loss rewards the two images' ISS vectors for disagreeing, the
unchanged-content loss penalises disagreement.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .focuser import COSINE_EPS
from .tensor import ops
from .tensor.core import ContractError, ShapeError, Tensor

# incremented on every iss() call; lets callers assert a branch never ran
ISS_CALLS = [0]


@dataclass(frozen=True)
class PointPairSet:
    y1: np.ndarray
    x1: np.ndarray
    y2: np.ndarray
    x2: np.ndarray

    def __len__(self) -> int:
        return len(self.y1)

    @property
    def pairs(self) -> list[tuple[tuple[int, int], tuple[int, int]]]:
        return [((int(a), int(b)), (int(c), int(d)))
                for a, b, c, d in zip(self.y1, self.x1, self.y2, self.x2)]


def num_pairs(h: int, w: int) -> int:
    return math.isqrt(h * w)


def sample_pairs(h: int, w: int, rng: np.random.Generator) -> PointPairSet:
    """floor(sqrt(h*w)) pairs drawn uniformly with replacement."""
    if h * w < 2:
        raise ContractError(f"cannot sample point pairs from a {h}x{w} map")
    n = num_pairs(h, w)
    return PointPairSet(rng.integers(0, h, n), rng.integers(0, w, n),
                        rng.integers(0, h, n), rng.integers(0, w, n))


def iss(features: Tensor, pairs: PointPairSet, eps: float = COSINE_EPS) -> Tensor:
    """Cosine similarity per sampled pair: (N,D,H,W) -> (N,n)."""
    ISS_CALLS[0] += 1
    p = ops.gather_points(features, pairs.y1, pairs.x1)
    q = ops.gather_points(features, pairs.y2, pairs.x2)
    return ops.cosine_similarity(p, q, axis=1, eps=eps, keepdims=False)


def _mean_abs_diff(iss_a: Tensor, iss_b: Tensor) -> Tensor:
    if iss_a.shape != iss_b.shape:
        raise ContractError(f"ISS lengths differ: {iss_a.shape} vs {iss_b.shape}")
    # mean per batch item, then over the batch; equal lengths make this one mean
    return ops.mean(ops.abs(ops.sub(iss_a, iss_b)))


def changed_content_loss(iss_a: Tensor, iss_b: Tensor) -> Tensor:
    return ops.sub(1.0, _mean_abs_diff(iss_a, iss_b))


def unchanged_content_loss(iss_a: Tensor, iss_b: Tensor) -> Tensor:
    return _mean_abs_diff(iss_a, iss_b)


def aggregate_scale_losses(per_scale_cc: Sequence[Tensor],
                           per_scale_ucc: Sequence[Tensor]) -> tuple[Tensor, Tensor]:
    if len(per_scale_cc) != 4 or len(per_scale_ucc) != 4:
        raise ContractError(f"expected 4 scales, got {len(per_scale_cc)} and {len(per_scale_ucc)}")
    l_cc = per_scale_cc[0]
    l_ucc = per_scale_ucc[0]
    for a, b in zip(per_scale_cc[1:], per_scale_ucc[1:]):
        l_cc = ops.add(l_cc, a)
        l_ucc = ops.add(l_ucc, b)
    return ops.mul(l_cc, 0.25), ops.mul(l_ucc, 0.25)


def main_loss(change_map: Tensor, gt) -> Tensor:
    if not isinstance(gt, Tensor):
        gt = Tensor(np.asarray(gt, dtype=change_map.dtype))
    if change_map.shape != gt.shape:
        raise ShapeError(f"change map {change_map.shape} vs ground truth {gt.shape}")
    return ops.mse(change_map, gt)


def content_losses(collections, rng: np.random.Generator,
                   eps: float = COSINE_EPS) -> tuple[Tensor, Tensor]:
    """(l_cc, l_ucc) over four scales; one fresh pair set per scale.

    The same pairs index both temporal images and both collections of a scale.
    """
    cc, ucc = [], []
    for col in collections:
        h, w = col.cc_a.shape[2:]
        pairs = sample_pairs(h, w, rng)
        cc.append(changed_content_loss(iss(col.cc_a, pairs, eps), iss(col.cc_b, pairs, eps)))
        ucc.append(unchanged_content_loss(iss(col.ucc_a, pairs, eps), iss(col.ucc_b, pairs, eps)))
    return aggregate_scale_losses(cc, ucc)


@dataclass
class LossBundle:
    l_main: Tensor
    l_cc: Tensor | None
    l_ucc: Tensor | None
    total: Tensor
    alpha: float
    beta: float
    gamma: float

    def values(self) -> dict[str, float]:
        def f(t):
            return 0.0 if t is None else float(t.data)
        return {"l_main": f(self.l_main), "l_cc": f(self.l_cc), "l_ucc": f(self.l_ucc),
                "total": f(self.total)}


def total_loss(l_main: Tensor, l_cc: Tensor | None = None, l_ucc: Tensor | None = None,
               alpha: float = 1.0, beta: float = 0.1, gamma: float = 0.1) -> LossBundle:
    if min(alpha, beta, gamma) < 0:
        raise ValueError(f"loss weights must be non-negative: {(alpha, beta, gamma)}")
    total = ops.mul(l_main, alpha)
    if l_cc is not None and beta:
        total = ops.add(total, ops.mul(l_cc, beta))
    if l_ucc is not None and gamma:
        total = ops.add(total, ops.mul(l_ucc, gamma))
    return LossBundle(l_main, l_cc, l_ucc, total, alpha, beta, gamma)
