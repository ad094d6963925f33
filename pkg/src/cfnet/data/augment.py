"""Training-time augmentation.

Geometric transforms (flips, scale, rotation, translation) hit both images
and the label with one shared draw. Blur and contrast are drawn per image so
the two dates drift apart in style.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy import ndimage

from .sample import SamplePair


@dataclass(frozen=True)
class AugmentConfig:
    p: float = 0.5
    scale: tuple[float, float] = (0.8, 1.2)
    rotation: float = 15.0          # degrees, symmetric range
    translate: float = 0.1          # fraction of the side length
    blur_sigma: tuple[float, float] = (0.0, 1.5)
    contrast: tuple[float, float] = (0.7, 1.3)


@dataclass(frozen=True)
class AugmentParams:
    hflip: bool = False
    vflip: bool = False
    scale: float = 1.0
    angle: float = 0.0
    shift: tuple[float, float] = (0.0, 0.0)
    blur: tuple[float, float] = (0.0, 0.0)
    contrast: tuple[float, float] = (1.0, 1.0)

    @property
    def is_affine_identity(self) -> bool:
        return self.scale == 1.0 and self.angle == 0.0 and self.shift == (0.0, 0.0)


def hflip(sample: SamplePair) -> SamplePair:
    return SamplePair(sample.img_a[:, ::-1].copy(), sample.img_b[:, ::-1].copy(),
                      sample.label[:, ::-1].copy(), sample.name)


def vflip(sample: SamplePair) -> SamplePair:
    return SamplePair(sample.img_a[::-1].copy(), sample.img_b[::-1].copy(),
                      sample.label[::-1].copy(), sample.name)


def rotate90(sample: SamplePair, k: int = 1) -> SamplePair:
    """Exact counter-clockwise rotation by k quarter turns."""
    return SamplePair(np.rot90(sample.img_a, k).copy(), np.rot90(sample.img_b, k).copy(),
                      np.rot90(sample.label, k).copy(), sample.name)


def _affine_matrix(shape, scale: float, angle: float, shift) -> tuple[np.ndarray, np.ndarray]:
    # maps output coordinates to input coordinates about the image centre
    h, w = shape
    c = np.array([(h - 1) / 2.0, (w - 1) / 2.0])
    t = math.radians(angle)
    rot = np.array([[math.cos(t), -math.sin(t)], [math.sin(t), math.cos(t)]])
    m = rot / scale
    offset = c - m @ (c + np.asarray(shift, dtype=float))
    return m, offset


def affine(sample: SamplePair, scale: float = 1.0, angle: float = 0.0,
           shift=(0.0, 0.0)) -> SamplePair:
    """Scale/rotate/translate about the centre; labels use nearest neighbour."""
    if angle % 90 == 0 and scale == 1.0 and tuple(shift) == (0.0, 0.0):
        return rotate90(sample, int(angle // 90) % 4)
    m, offset = _affine_matrix(sample.shape, scale, angle, shift)

    def warp(img, order):
        if img.ndim == 2:
            return ndimage.affine_transform(img, m, offset, order=order, mode="reflect")
        chans = [ndimage.affine_transform(img[..., c].astype(np.float64), m, offset,
                                          order=order, mode="reflect")
                 for c in range(img.shape[2])]
        return np.clip(np.rint(np.stack(chans, axis=-1)), 0, 255).astype(np.uint8)

    return SamplePair(warp(sample.img_a, 1), warp(sample.img_b, 1),
                      warp(sample.label, 0), sample.name)


def blur(img: np.ndarray, sigma: float) -> np.ndarray:
    if sigma <= 0:
        return img
    out = ndimage.gaussian_filter(img.astype(np.float64), sigma=(sigma, sigma, 0))
    return np.clip(np.rint(out), 0, 255).astype(np.uint8)


def adjust_contrast(img: np.ndarray, factor: float) -> np.ndarray:
    if factor == 1.0:
        return img
    x = img.astype(np.float64)
    mean = x.mean()
    return np.clip(np.rint((x - mean) * factor + mean), 0, 255).astype(np.uint8)


def draw_params(rng: np.random.Generator, shape, cfg: AugmentConfig = AugmentConfig()) -> AugmentParams:
    def on():
        return bool(rng.random() < cfg.p)

    h, w = shape
    params = AugmentParams(
        hflip=on(),
        vflip=on(),
        scale=float(rng.uniform(*cfg.scale)) if on() else 1.0,
        angle=float(rng.uniform(-cfg.rotation, cfg.rotation)) if on() else 0.0,
        shift=(tuple(float(v) for v in rng.uniform(-cfg.translate, cfg.translate, 2) * (h, w))
               if on() else (0.0, 0.0)),
    )
    blurs = tuple(float(rng.uniform(*cfg.blur_sigma)) if on() else 0.0 for _ in range(2))
    contrasts = tuple(float(rng.uniform(*cfg.contrast)) if on() else 1.0 for _ in range(2))
    return replace(params, blur=blurs, contrast=contrasts)


def apply(sample: SamplePair, params: AugmentParams) -> SamplePair:
    out = sample
    if params.hflip:
        out = hflip(out)
    if params.vflip:
        out = vflip(out)
    if not params.is_affine_identity:
        out = affine(out, params.scale, params.angle, params.shift)
    a = adjust_contrast(blur(out.img_a, params.blur[0]), params.contrast[0])
    b = adjust_contrast(blur(out.img_b, params.blur[1]), params.contrast[1])
    return SamplePair(a, b, out.label, sample.name)


def augment(sample: SamplePair, rng: np.random.Generator,
            cfg: AugmentConfig = AugmentConfig()) -> SamplePair:
    return apply(sample, draw_params(rng, sample.shape, cfg))
