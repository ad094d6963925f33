"""Width-scalable siamese encoder with the five-stage MBConv topology."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .tensor import ops
from .tensor.core import ContractError, Tensor
from .tensor.nn import BatchNorm2d, Conv2d, ConvBNAct, DepthwiseConv2d, Module

# (operator, expansion, kernel, out_channels, layers, first-layer stride)
STAGES = (
    ("conv", None, 3, 48, 1, 2),
    ("mbconv", 1, 3, 24, 3, 1),
    ("mbconv", 6, 3, 40, 5, 2),
    ("mbconv", 6, 5, 64, 5, 2),
    ("mbconv", 6, 3, 128, 7, 2),
)


def scale_channels(channels: int, width: float) -> int:
    # round half up, never below one channel
    return max(1, int(math.floor(channels * width + 0.5)))


@dataclass(frozen=True)
class EncoderConfig:
    width_multiplier: float = 0.25
    se_ratio: float = 0.25

    def __post_init__(self):
        if not 0 < self.width_multiplier <= 1:
            raise ValueError("width_multiplier must be in (0, 1]")

    def stage_channels(self) -> list[int]:
        return [scale_channels(s[3], self.width_multiplier) for s in STAGES]

    def pyramid_channels(self) -> list[int]:
        return self.stage_channels()[1:]


class FeaturePyramid(NamedTuple):
    f1: Tensor
    f2: Tensor
    f3: Tensor
    f4: Tensor


class SqueezeExcite(Module):
    def __init__(self, channels: int, reduced: int, rng, dtype=np.float32):
        super().__init__()
        self.reduce = Conv2d(channels, reduced, 1, rng, dtype=dtype)
        self.expand = Conv2d(reduced, channels, 1, rng, dtype=dtype)

    def forward(self, x: Tensor) -> Tensor:
        s = ops.global_avg_pool(x)
        s = ops.silu(self.reduce(s))
        s = ops.sigmoid(self.expand(s))
        return ops.mul(x, s)


class MBConv(Module):
    """Inverted bottleneck: expand, depthwise, squeeze-excite, project."""

    def __init__(self, cin: int, cout: int, expansion: int, kernel: int, stride: int,
                 se_ratio: float, rng, dtype=np.float32):
        super().__init__()
        if stride not in (1, 2):
            raise ContractError(f"stride must be 1 or 2, got {stride}")
        if kernel not in (3, 5):
            raise ContractError(f"kernel must be 3 or 5, got {kernel}")
        mid = cin * expansion
        self.expand = ConvBNAct(cin, mid, 1, rng, dtype=dtype) if expansion != 1 else None
        self.dw = DepthwiseConv2d(mid, kernel, rng, stride=stride, dtype=dtype)
        self.dw_bn = BatchNorm2d(mid, dtype=dtype)
        self.se = SqueezeExcite(mid, max(1, int(cin * se_ratio)), rng, dtype=dtype)
        self.project = Conv2d(mid, cout, 1, rng, bias=False, dtype=dtype)
        self.project_bn = BatchNorm2d(cout, dtype=dtype)
        self.residual = stride == 1 and cin == cout

    def forward(self, x: Tensor) -> Tensor:
        h = self.expand(x) if self.expand is not None else x
        h = ops.silu(self.dw_bn(self.dw(h)))
        h = self.se(h)
        h = self.project_bn(self.project(h))
        return ops.add(h, x) if self.residual else h


def mbconv_block(x: Tensor, expansion: int, kernel: int, out_channels: int, stride: int,
                 se_ratio: float = 0.25, rng=None) -> Tensor:
    """Functional convenience: a freshly initialized block applied once."""
    rng = np.random.default_rng(0) if rng is None else rng
    block = MBConv(x.shape[1], out_channels, expansion, kernel, stride, se_ratio, rng,
                   dtype=x.dtype)
    return block(x)


class Encoder(Module):
    """One parameter set applied to both temporal images."""

    def __init__(self, config: EncoderConfig, rng, dtype=np.float32):
        super().__init__()
        self.config = config
        chans = config.stage_channels()
        self.stem = ConvBNAct(3, chans[0], 3, rng, stride=STAGES[0][5], dtype=dtype)
        cin = chans[0]
        self.stages: list[list[MBConv]] = []
        for s, (_, expansion, kernel, _, layers, stride) in enumerate(STAGES[1:], start=1):
            blocks = []
            for layer in range(layers):
                blk = MBConv(cin, chans[s], expansion, kernel, stride if layer == 0 else 1,
                             config.se_ratio, rng, dtype=dtype)
                self.add(f"stage{s + 1}_{layer}", blk)
                blocks.append(blk)
                cin = chans[s]
            self.stages.append(blocks)

    def forward(self, image: Tensor) -> FeaturePyramid:
        if image.ndim != 4 or image.shape[1] != 3:
            raise ContractError(f"expected N,3,H,W image, got {image.shape}")
        H, W = image.shape[2:]
        if H % 16 or W % 16:
            raise ContractError(f"spatial dims must be divisible by 16, got {H}x{W}")
        x = self.stem(image)
        taps = []
        for blocks in self.stages:
            for blk in blocks:
                x = blk(x)
            taps.append(x)
        return FeaturePyramid(*taps)

    def encode_pair(self, img_a: Tensor, img_b: Tensor) -> tuple[FeaturePyramid, FeaturePyramid]:
        """Encode both images in a single batch so they see identical weights."""
        n = img_a.shape[0]
        pyr = self.forward(ops.concat([img_a, img_b], axis=0))
        pa, pb = [], []
        for f in pyr:
            pa.append(ops.slice_batch(f, 0, n))
            pb.append(ops.slice_batch(f, n, 2 * n))
        return FeaturePyramid(*pa), FeaturePyramid(*pb)


def encode(image: Tensor, config: EncoderConfig, encoder: Encoder | None = None,
           rng=None) -> FeaturePyramid:
    if encoder is None:
        encoder = Encoder(config, np.random.default_rng(0) if rng is None else rng,
                          dtype=image.dtype)
    return encoder(image)
