"""CFNet assembly: siamese encoder, two content decoders, focuser, change decoder."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .change_decoder import ChangeDecoder
from .content_decoder import ContentDecoder, ContentPyramid
from .encoder import Encoder, EncoderConfig
from .focuser import ContentCollections, focus, reweight_map
from .losses import LossBundle, content_losses, main_loss, total_loss
from .tensor.core import Tensor
from .tensor.nn import Module


@dataclass(frozen=True)
class ModelConfig:
    width_multiplier: float = 0.25
    content_width: int = 16
    se_ratio: float = 0.25
    cbam_reduction: int = 8
    enable_focuser: bool = True
    enable_content_aware: bool = True
    # both content decoders start from the same draw (storage stays separate)
    mirror_content_init: bool = True
    dtype: str = "float32"


@dataclass
class ForwardResult:
    change_map: Tensor
    content_a: ContentPyramid
    content_b: ContentPyramid
    rms: Optional[list[Tensor]] = None
    collections: Optional[list[ContentCollections]] = None
    extras: dict = field(default_factory=dict)


class CFNet(Module):
    def __init__(self, config: ModelConfig = ModelConfig(), seed: int = 0):
        super().__init__()
        self.config = config
        dtype = np.dtype(config.dtype)
        root = np.random.SeedSequence(seed)
        enc_ss, ca_ss, cb_ss, chg_ss = root.spawn(4)
        if config.mirror_content_init:
            cb_ss = ca_ss
        enc_cfg = EncoderConfig(config.width_multiplier, config.se_ratio)
        self.encoder = Encoder(enc_cfg, np.random.default_rng(enc_ss), dtype=dtype)
        chans = enc_cfg.pyramid_channels()
        D = config.content_width
        self.content_a = ContentDecoder(chans, D, np.random.default_rng(ca_ss), dtype=dtype)
        self.content_b = ContentDecoder(chans, D, np.random.default_rng(cb_ss), dtype=dtype)
        self.change = ChangeDecoder(D, np.random.default_rng(chg_ss), config.cbam_reduction,
                                    dtype=dtype)

    @property
    def dtype(self):
        return np.dtype(self.config.dtype)

    def forward(self, img_a: Tensor, img_b: Tensor) -> ForwardResult:
        cfg = self.config
        fa, fb = self.encoder.encode_pair(img_a, img_b)
        ca = self.content_a(fa)
        cb = self.content_b(fb)
        rms = cols = None
        if cfg.enable_content_aware:
            rms, cols = focus(ca, cb)
        elif cfg.enable_focuser:
            rms = [reweight_map(a, b) for a, b in zip(ca, cb)]
        change_map = self.change(ca, cb, rms if cfg.enable_focuser else None)
        return ForwardResult(change_map, ca, cb, rms, cols)

    def loss(self, out: ForwardResult, gt: Tensor, rng: np.random.Generator,
             alpha: float = 1.0, beta: float = 0.1, gamma: float = 0.1) -> LossBundle:
        l_main = main_loss(out.change_map, gt)
        if not self.config.enable_content_aware or out.collections is None:
            return total_loss(l_main, None, None, alpha, 0.0, 0.0)
        l_cc, l_ucc = content_losses(out.collections, rng)
        return total_loss(l_main, l_cc, l_ucc, alpha, beta, gamma)
