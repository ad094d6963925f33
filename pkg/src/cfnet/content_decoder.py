"""Top-down content decoder with adjacent-scale aggregation."""
from __future__ import annotations

from typing import NamedTuple, Sequence

import numpy as np

from .encoder import FeaturePyramid
from .tensor import ops
from .tensor.core import ContractError, Tensor
from .tensor.nn import Conv2d, ConvBNAct, Module


class ContentPyramid(NamedTuple):
    c1: Tensor
    c2: Tensor
    c3: Tensor
    c4: Tensor


class Agg(Module):
    """Upsample the coarse map, project both to ``width`` channels, concat, fuse.

    The 3x3 fuse convolution pads by edge replication so a spatially constant
    input stays constant up to the border.
    """

    def __init__(self, hi_channels: int, lo_channels: int, width: int, rng,
                 dtype=np.float32):
        super().__init__()
        self.proj_hi = ConvBNAct(hi_channels, width, 1, rng, dtype=dtype)
        self.proj_lo = ConvBNAct(lo_channels, width, 1, rng, dtype=dtype)
        self.fuse = Conv2d(2 * width, width, 3, rng, pad_mode="edge", dtype=dtype)

    def forward(self, f_hi: Tensor, f_lo: Tensor) -> Tensor:
        return agg(f_hi, f_lo, self)


def agg(f_hi: Tensor, f_lo: Tensor, module: Agg) -> Tensor:
    if f_hi.shape[2] != 2 * f_lo.shape[2] or f_hi.shape[3] != 2 * f_lo.shape[3]:
        raise ContractError(f"agg expects the coarse map at half resolution: "
                            f"{f_hi.shape[2:]} vs {f_lo.shape[2:]}")
    up = ops.upsample2x(f_lo)
    merged = ops.concat([module.proj_hi(f_hi), module.proj_lo(up)], axis=1)
    return module.fuse(merged)


class ContentDecoder(Module):
    def __init__(self, pyramid_channels: Sequence[int], width: int, rng, dtype=np.float32):
        super().__init__()
        c1, c2, c3, c4 = pyramid_channels
        self.width = width
        self.top = ConvBNAct(c4, width, 1, rng, dtype=dtype)
        self.agg3 = Agg(c3, width, width, rng, dtype=dtype)
        self.agg2 = Agg(c2, width, width, rng, dtype=dtype)
        self.agg1 = Agg(c1, width, width, rng, dtype=dtype)

    def forward(self, pyramid: FeaturePyramid) -> ContentPyramid:
        return decode_content(pyramid, self)


def decode_content(pyramid: FeaturePyramid, decoder: ContentDecoder) -> ContentPyramid:
    f1, f2, f3, f4 = pyramid
    c4 = decoder.top(f4)
    c3 = decoder.agg3(f3, c4)
    c2 = decoder.agg2(f2, c3)
    c1 = decoder.agg1(f1, c2)
    return ContentPyramid(c1, c2, c3, c4)
