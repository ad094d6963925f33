from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class IngestionError(ValueError):
    """A raster on disk violates the bi-temporal sample layout."""


@dataclass
class SamplePair:
    img_a: np.ndarray   # (H, W, 3) uint8
    img_b: np.ndarray   # (H, W, 3) uint8
    label: np.ndarray   # (H, W) uint8 in {0, 1}
    name: str = ""

    def __post_init__(self):
        validate(self)

    @property
    def shape(self) -> tuple[int, int]:
        return self.label.shape


def validate(sample: SamplePair) -> None:
    a, b, lab = sample.img_a, sample.img_b, sample.label
    if a.ndim != 3 or a.shape[2] != 3 or b.shape != a.shape:
        raise ValueError(f"{sample.name}: image shapes {a.shape} and {b.shape} are not matching RGB rasters")
    if lab.shape != a.shape[:2]:
        raise ValueError(f"{sample.name}: label {lab.shape} does not match images {a.shape[:2]}")
    if lab.size and lab.max() > 1:
        raise ValueError(f"{sample.name}: label is not binary")
