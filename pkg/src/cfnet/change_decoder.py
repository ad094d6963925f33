"""Change decoder: CBAM, 3D-conv bi-temporal fusion, RM gating, coarse-to-fine Agg."""
from __future__ import annotations

from typing import Optional, Sequence

import numpy as np

from .content_decoder import Agg, ContentPyramid
from .tensor import ops
from .tensor.core import ContractError, Tensor
from .tensor.nn import Conv2d, Conv3d, Module


class CBAM(Module):
    """Channel gate (shared MLP on avg/max pools) followed by a 7x7 spatial gate."""

    def __init__(self, channels: int, rng, reduction: int = 8, dtype=np.float32):
        super().__init__()
        hidden = max(1, channels // reduction)
        self.fc1 = Conv2d(channels, hidden, 1, rng, dtype=dtype)
        self.fc2 = Conv2d(hidden, channels, 1, rng, dtype=dtype)
        self.spatial = Conv2d(2, 1, 7, rng, dtype=dtype)

    def channel_gate(self, x: Tensor) -> Tensor:
        avg = self.fc2(ops.relu(self.fc1(ops.global_avg_pool(x))))
        mx = self.fc2(ops.relu(self.fc1(ops.global_max_pool(x))))
        return ops.sigmoid(ops.add(avg, mx))

    def spatial_gate(self, x: Tensor) -> Tensor:
        pooled = ops.concat([ops.channel_mean(x), ops.channel_max(x)], axis=1)
        return ops.sigmoid(self.spatial(pooled))

    def forward(self, x: Tensor) -> Tensor:
        x = ops.mul(x, self.channel_gate(x))
        return ops.mul(x, self.spatial_gate(x))


def cbam(x: Tensor, module: CBAM) -> Tensor:
    return module(x)


class BitemporalFusion(Module):
    """Stack the two inputs on a new depth axis and collapse it with a 2x3x3 conv."""

    def __init__(self, channels: int, rng, dtype=np.float32):
        super().__init__()
        self.conv = Conv3d(channels, channels, (2, 3, 3), rng, padding=1, dtype=dtype)

    def forward(self, x_a: Tensor, x_b: Tensor) -> Tensor:
        return fuse_bitemporal(x_a, x_b, self)


def fuse_bitemporal(x_a: Tensor, x_b: Tensor, module: BitemporalFusion) -> Tensor:
    if x_a.shape != x_b.shape:
        raise ContractError(f"bi-temporal shapes differ: {x_a.shape} vs {x_b.shape}")
    stacked = ops.concat([ops.unsqueeze(x_a, 2), ops.unsqueeze(x_b, 2)], axis=2)
    return ops.squeeze(module.conv(stacked), 2)


class ChangeDecoder(Module):
    def __init__(self, width: int, rng, cbam_reduction: int = 8, dtype=np.float32):
        super().__init__()
        for i in range(1, 5):
            self.add(f"cbam{i}", CBAM(width, rng, cbam_reduction, dtype=dtype))
            self.add(f"fuse{i}", BitemporalFusion(width, rng, dtype=dtype))
        for i in range(1, 4):
            self.add(f"agg{i}", Agg(width, width, width, rng, dtype=dtype))
        self.head = Conv2d(width, 1, 1, rng, dtype=dtype)

    def forward(self, ca: ContentPyramid, cb: ContentPyramid,
                rms: Optional[Sequence[Tensor]] = None) -> Tensor:
        return decode_change(ca, cb, rms, self)


def decode_change(ca: ContentPyramid, cb: ContentPyramid, rms: Optional[Sequence[Tensor]],
                  decoder: ChangeDecoder) -> Tensor:
    """Change map in [0, 1] at twice the resolution of the finest content level.

    ``rms`` of ``None`` skips the reweighting (the Focuser-ablated decoder).
    """
    if len(ca) != 4 or len(cb) != 4:
        raise ContractError("content pyramids must have four scales")
    if rms is not None and len(rms) != 4:
        raise ContractError(f"expected four reweight maps, got {len(rms)}")
    state = None
    for i in (4, 3, 2, 1):
        cbam_i = getattr(decoder, f"cbam{i}")
        fused = getattr(decoder, f"fuse{i}")(cbam_i(ca[i - 1]), cbam_i(cb[i - 1]))
        if rms is not None:
            rm = rms[i - 1]
            if rm.shape[2:] != fused.shape[2:]:
                raise ContractError(f"reweight map {i} is {rm.shape[2:]}, features {fused.shape[2:]}")
            fused = ops.mul(fused, rm)
        state = fused if state is None else getattr(decoder, f"agg{i}")(fused, state)
    logits = decoder.head(state)
    return ops.upsample2x(ops.sigmoid(logits))
