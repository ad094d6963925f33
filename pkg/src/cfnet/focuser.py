"""Parameter-free reweighting of bi-temporal content features.

The reweight map is ``tanh(1 - cos)`` where ``cos`` is the per-pixel cosine
similarity over channels, so it lives in ``[0, tanh 2]``. Multiplying the
content by the map and by its complement splits it into changed and
unchanged collections.
"""
from __future__ import annotations

from typing import NamedTuple

from .tensor import ops
from .tensor.core import ContractError, Tensor

COSINE_EPS = 1e-8


class ContentCollections(NamedTuple):
    cc_a: Tensor
    cc_b: Tensor
    ucc_a: Tensor
    ucc_b: Tensor


def reweight_map(c_a: Tensor, c_b: Tensor, eps: float = COSINE_EPS) -> Tensor:
    if c_a.shape != c_b.shape:
        raise ContractError(f"content shapes differ: {c_a.shape} vs {c_b.shape}")
    distance = ops.sub(1.0, ops.cosine_similarity_map(c_a, c_b, eps))
    return ops.tanh_map(distance)


def split_content(c_a: Tensor, c_b: Tensor, rm: Tensor) -> ContentCollections:
    """CC = rm * C and UCC = (1 - rm) * C.

    UCC is formed as C - CC: the same value, but CC + UCC then returns C to
    within one rounding of the subtraction (below 1e-7 relative in float32).
    """
    cc_a = ops.mul(rm, c_a)
    cc_b = ops.mul(rm, c_b)
    return ContentCollections(cc_a=cc_a, cc_b=cc_b,
                              ucc_a=ops.sub(c_a, cc_a), ucc_b=ops.sub(c_b, cc_b))


def focus(content_a, content_b, eps: float = COSINE_EPS):
    """Reweight maps and collections for every scale of two content pyramids."""
    rms = [reweight_map(a, b, eps) for a, b in zip(content_a, content_b)]
    cols = [split_content(a, b, rm) for a, b, rm in zip(content_a, content_b, rms)]
    return rms, cols
