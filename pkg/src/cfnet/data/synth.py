"""Synthetic bi-temporal scenes with controllable style shift.

Each sample is a textured background carrying a few ellipses and polygons.
The second date re-renders the scene after per-shape change decisions
(remove, move, add) and each date gets its own global style perturbation.
The label marks the pixels whose shape identity differs between dates.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy import ndimage
from skimage import draw

from .sample import SamplePair


@dataclass(frozen=True)
class SynthConfig:
    size: int = 64
    count: int = 200
    shapes: tuple[int, int] = (2, 5)        # inclusive range of shapes per scene
    radius: tuple[float, float] = (6.0, 14.0)
    change_prob: float = 0.5
    brightness: float = 40.0                # |delta| bound, intensity units
    contrast: tuple[float, float] = (0.7, 1.3)
    blur: tuple[float, float] = (0.0, 1.0)
    # minimum RGB distance between a shape's color and the background base color
    min_contrast: float = 80.0
    seed: int = 0

    def without_style(self) -> "SynthConfig":
        return replace(self, brightness=0.0, contrast=(1.0, 1.0), blur=(0.0, 0.0))

    @property
    def has_style(self) -> bool:
        return self.brightness > 0 or self.contrast != (1.0, 1.0) or self.blur[1] > 0


@dataclass(frozen=True)
class Shape:
    kind: str                   # "ellipse" or "polygon"
    center: tuple[float, float]
    radii: tuple[float, float]
    angle: float
    vertices: int
    color: tuple[int, int, int]

    def moved(self, center) -> "Shape":
        return replace(self, center=center)

    def pixels(self, size: int) -> tuple[np.ndarray, np.ndarray]:
        cy, cx = self.center
        ry, rx = self.radii
        if self.kind == "ellipse":
            return draw.ellipse(cy, cx, ry, rx, shape=(size, size), rotation=self.angle)
        t = self.angle + np.linspace(0, 2 * np.pi, self.vertices, endpoint=False)
        return draw.polygon(cy + ry * np.sin(t), cx + rx * np.cos(t), shape=(size, size))


def sample_rng(seed: int, index: int) -> np.random.Generator:
    """Independent stream per sample so generation order does not matter."""
    return np.random.default_rng([seed, index])


def _shape_color(rng: np.random.Generator, base: np.ndarray, min_contrast: float) -> np.ndarray:
    # rejection sampling; the cap keeps the stream finite for extreme settings
    for _ in range(100):
        color = rng.integers(20, 236, size=3)
        if np.linalg.norm(color - base) >= min_contrast:
            break
    return color


def _random_shape(rng: np.random.Generator, cfg: SynthConfig, base: np.ndarray) -> Shape:
    r = rng.uniform(*cfg.radius, size=2)
    margin = cfg.radius[0]
    center = tuple(rng.uniform(margin, cfg.size - margin, size=2))
    return Shape(kind="ellipse" if rng.random() < 0.5 else "polygon",
                 center=center, radii=(float(r[0]), float(r[1])),
                 angle=float(rng.uniform(0, np.pi)), vertices=int(rng.integers(3, 7)),
                 color=tuple(int(c) for c in _shape_color(rng, base, cfg.min_contrast)))


def _background(rng: np.random.Generator, size: int) -> tuple[np.ndarray, np.ndarray]:
    base = rng.uniform(60, 190, size=3)
    coarse = ndimage.gaussian_filter(rng.normal(size=(size, size, 3)), sigma=(6, 6, 0))
    fine = ndimage.gaussian_filter(rng.normal(size=(size, size, 3)), sigma=(1, 1, 0))
    coarse *= 25 / max(coarse.std(), 1e-9)
    fine *= 8 / max(fine.std(), 1e-9)
    return base + coarse + fine, base


def apply_style(img: np.ndarray, rng: np.random.Generator, cfg: SynthConfig) -> np.ndarray:
    """Global brightness, contrast and blur drawn from the configured ranges."""
    out = img
    lo, hi = cfg.blur
    sigma = rng.uniform(lo, hi) if hi > 0 else 0.0
    if sigma > 0:
        out = ndimage.gaussian_filter(out, sigma=(sigma, sigma, 0))
    c = rng.uniform(*cfg.contrast) if cfg.contrast != (1.0, 1.0) else 1.0
    d = rng.uniform(-cfg.brightness, cfg.brightness) if cfg.brightness > 0 else 0.0
    if c != 1.0 or d != 0.0:
        mean = out.mean()
        out = (out - mean) * c + mean + d
    return out


def _to_uint8(img: np.ndarray) -> np.ndarray:
    return np.clip(np.rint(img), 0, 255).astype(np.uint8)


def synth_sample(cfg: SynthConfig, index: int) -> SamplePair:
    rng = sample_rng(cfg.seed, index)
    size = cfg.size
    background, base = _background(rng, size)
    n = int(rng.integers(cfg.shapes[0], cfg.shapes[1] + 1))
    shapes_a: list[Shape] = []
    shapes_b: list[Shape] = []
    # ids must describe the same object in both dates, so both lists share
    # one index space; absent shapes become None and are skipped at render
    for _ in range(n):
        s = _random_shape(rng, cfg, base)
        if rng.random() >= cfg.change_prob:
            shapes_a.append(s)
            shapes_b.append(s)
            continue
        action = rng.choice(["remove", "move", "add"])
        if action == "remove":
            shapes_a.append(s)
            shapes_b.append(None)
        elif action == "move":
            margin = cfg.radius[0]
            shapes_a.append(s)
            shapes_b.append(s.moved(tuple(rng.uniform(margin, size - margin, size=2))))
        else:
            shapes_a.append(None)
            shapes_b.append(s)
    img_a, ids_a = render(background, shapes_a)
    img_b, ids_b = render(background, shapes_b)
    label = (ids_a != ids_b).astype(np.uint8)
    img_a = apply_style(img_a, rng, cfg)
    img_b = apply_style(img_b, rng, cfg)
    return SamplePair(_to_uint8(img_a), _to_uint8(img_b), label, f"synth_{index:05d}")


def render(background: np.ndarray, shapes: list) -> tuple[np.ndarray, np.ndarray]:
    """Float image and id map; 0 is background, k+1 is shapes[k] (None entries skipped)."""
    size = background.shape[0]
    img = background.copy()
    ids = np.zeros((size, size), dtype=np.int32)
    detail = background - background.mean(axis=(0, 1))
    for k, s in enumerate(shapes):
        if s is None:
            continue
        rr, cc = s.pixels(size)
        img[rr, cc] = np.asarray(s.color, dtype=np.float64) + 0.3 * detail[rr, cc]
        ids[rr, cc] = k + 1
    return img, ids


def synth_generate(cfg: SynthConfig = SynthConfig()) -> list[SamplePair]:
    if cfg.size < 1 or cfg.count < 0 or cfg.shapes[0] > cfg.shapes[1]:
        raise ValueError(f"invalid synthetic config: {cfg}")
    return [synth_sample(cfg, i) for i in range(cfg.count)]
