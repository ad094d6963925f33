"""Confusion counts, derived scores and the two visualization conventions."""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

from .tensor.core import ContractError

OVERLAY_COLORS = {
    "tp": (255, 255, 255),
    "tn": (0, 0, 0),
    "fn": (255, 0, 0),
    "fp": (0, 255, 0),
}
METRIC_COLUMNS = ("split", "iou", "f1", "recall", "precision")


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int = 0
    fp: int = 0
    fn: int = 0
    tn: int = 0

    def __add__(self, other: "ConfusionCounts") -> "ConfusionCounts":
        return ConfusionCounts(self.tp + other.tp, self.fp + other.fp,
                               self.fn + other.fn, self.tn + other.tn)

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn


def _as_binary(x, what: str) -> np.ndarray:
    a = np.asarray(x)
    if a.dtype == bool:
        return a
    if a.size and not np.isin(a, (0, 1)).all():
        raise ContractError(f"{what} must contain only 0 and 1")
    return a.astype(bool)


def confusion(pred, gt) -> ConfusionCounts:
    p = _as_binary(pred, "prediction")
    g = _as_binary(gt, "ground truth")
    if p.shape != g.shape:
        raise ContractError(f"prediction {p.shape} vs ground truth {g.shape}")
    tp = int(np.count_nonzero(p & g))
    fp = int(np.count_nonzero(p & ~g))
    fn = int(np.count_nonzero(~p & g))
    return ConfusionCounts(tp, fp, fn, int(p.size) - tp - fp - fn)


def fold(counts: Iterable[ConfusionCounts]) -> ConfusionCounts:
    total = ConfusionCounts()
    for c in counts:
        total = total + c
    return total


def binarize(change_map, threshold: float = 0.5) -> np.ndarray:
    return (np.asarray(change_map) > threshold).astype(np.uint8)


@dataclass(frozen=True)
class Scores:
    iou: float
    precision: float
    recall: float
    f1: float
    degenerate: bool = False

    def as_dict(self) -> dict[str, float]:
        return {"iou": self.iou, "f1": self.f1, "recall": self.recall,
                "precision": self.precision}


def _ratio(num: int, den: int) -> tuple[float, bool]:
    return (num / den, False) if den else (0.0, True)


def metrics(counts: ConfusionCounts) -> Scores:
    """Micro scores; any zero denominator yields 0 and sets ``degenerate``."""
    iou, d1 = _ratio(counts.tp, counts.tp + counts.fp + counts.fn)
    prec, d2 = _ratio(counts.tp, counts.tp + counts.fp)
    rec, d3 = _ratio(counts.tp, counts.tp + counts.fn)
    f1, d4 = _ratio(2 * counts.tp, 2 * counts.tp + counts.fp + counts.fn)
    return Scores(iou, prec, rec, f1, d1 or d2 or d3 or d4)


def render_overlay(pred, gt) -> np.ndarray:
    p = _as_binary(pred, "prediction")
    g = _as_binary(gt, "ground truth")
    if p.shape != g.shape:
        raise ContractError(f"prediction {p.shape} vs ground truth {g.shape}")
    out = np.zeros(p.shape + (3,), dtype=np.uint8)
    out[p & g] = OVERLAY_COLORS["tp"]
    out[~p & g] = OVERLAY_COLORS["fn"]
    out[p & ~g] = OVERLAY_COLORS["fp"]
    return out


def render_rm_heatmap(rm, vmax: float = 1.0) -> np.ndarray:
    """Linear blue-to-red ramp: 0 is pure blue, ``vmax`` is pure red."""
    t = np.clip(np.asarray(rm, dtype=np.float64) / vmax, 0.0, 1.0)
    out = np.zeros(t.shape + (3,), dtype=np.uint8)
    out[..., 0] = np.floor(255 * t)
    out[..., 2] = 255 - out[..., 0]
    return out


def write_metrics_csv(path, rows: Mapping[str, Scores]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(METRIC_COLUMNS)
        for split, s in rows.items():
            w.writerow([split] + [f"{s.as_dict()[k]:.6f}" for k in METRIC_COLUMNS[1:]])
    return path
