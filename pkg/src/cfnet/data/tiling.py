"""Grid tiling of sample pairs and the inverse stitch."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..tensor.core import ContractError
from .sample import SamplePair


@dataclass(frozen=True)
class TilingSpec:
    patch: int
    overlap: int = 0

    def __post_init__(self):
        if self.overlap < 0:
            raise ContractError(f"overlap must be >= 0, got {self.overlap}")
        if self.stride < 1:
            raise ContractError(f"stride patch-overlap must be >= 1, got {self.stride}")

    @property
    def stride(self) -> int:
        return self.patch - self.overlap


def valid_strides(dim: int, patch: int) -> list[int]:
    if dim == patch:
        return list(range(1, patch + 1))
    return [s for s in range(1, patch + 1) if (dim - patch) % s == 0]


def grid_origins(dim: int, spec: TilingSpec) -> list[int]:
    if dim < spec.patch or (dim - spec.patch) % spec.stride:
        raise ContractError(
            f"patch {spec.patch} at stride {spec.stride} does not exactly cover {dim} px; "
            f"valid strides: {valid_strides(dim, spec.patch) if dim >= spec.patch else []}")
    return list(range(0, dim - spec.patch + 1, spec.stride))


def tile_origins(height: int, width: int, spec: TilingSpec) -> list[tuple[int, int]]:
    """Row-major top-left corners."""
    return [(y, x) for y in grid_origins(height, spec) for x in grid_origins(width, spec)]


def tile(sample: SamplePair, spec: TilingSpec) -> list[SamplePair]:
    h, w = sample.shape
    p = spec.patch
    out = []
    for k, (y, x) in enumerate(tile_origins(h, w, spec)):
        out.append(SamplePair(sample.img_a[y:y + p, x:x + p].copy(),
                              sample.img_b[y:y + p, x:x + p].copy(),
                              sample.label[y:y + p, x:x + p].copy(),
                              f"{sample.name}_{k:03d}" if sample.name else f"{k:03d}"))
    return out


def stitch(patches: Sequence[np.ndarray], height: int, width: int, spec: TilingSpec) -> np.ndarray:
    """Reassemble row-major patches; overlapping regions are averaged.

    Without overlap this is the exact inverse of ``tile`` (dtype preserved).
    """
    origins = tile_origins(height, width, spec)
    if len(patches) != len(origins):
        raise ContractError(f"expected {len(origins)} patches, got {len(patches)}")
    p = spec.patch
    first = np.asarray(patches[0])
    tail = first.shape[2:]
    if spec.overlap == 0:
        out = np.empty((height, width) + tail, dtype=first.dtype)
        for (y, x), patch in zip(origins, patches):
            out[y:y + p, x:x + p] = patch
        return out
    acc = np.zeros((height, width) + tail, dtype=np.float64)
    hits = np.zeros((height, width) + (1,) * len(tail))
    for (y, x), patch in zip(origins, patches):
        acc[y:y + p, x:x + p] += patch
        hits[y:y + p, x:x + p] += 1
    return acc / hits


def stitch_prediction(probabilities: Sequence[np.ndarray], height: int, width: int,
                      spec: TilingSpec, threshold: float = 0.5) -> np.ndarray:
    """Average overlapping change probabilities, then binarize."""
    avg = stitch([np.asarray(p, dtype=np.float64) for p in probabilities], height, width, spec)
    return (avg > threshold).astype(np.uint8)
