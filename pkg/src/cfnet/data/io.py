"""Bi-temporal dataset layout on disk: root/{A,B,label}/<name>.png."""
from __future__ import annotations

from pathlib import Path
from typing import Iterable

import numpy as np
from PIL import Image

from .sample import IngestionError, SamplePair

SUBDIRS = ("A", "B", "label")


def read_png(path: Path, mode: str) -> np.ndarray:
    with Image.open(path) as im:
        return np.asarray(im.convert(mode), dtype=np.uint8)


def write_png(path: Path, array: np.ndarray) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(np.ascontiguousarray(array, dtype=np.uint8)).save(path)


def load_sample(root: Path, filename: str) -> SamplePair:
    root = Path(root)
    paths = {d: root / d / filename for d in SUBDIRS}
    for d, p in paths.items():
        if not p.is_file():
            raise IngestionError(f"missing counterpart file {p}")
    a = read_png(paths["A"], "RGB")
    b = read_png(paths["B"], "RGB")
    lab = read_png(paths["label"], "L")
    if a.shape != b.shape:
        raise IngestionError(f"dimension mismatch: {paths['A']} is {a.shape[:2]}, "
                             f"{paths['B']} is {b.shape[:2]}")
    if lab.shape != a.shape[:2]:
        raise IngestionError(f"dimension mismatch: {paths['label']} is {lab.shape}, "
                             f"{paths['A']} is {a.shape[:2]}")
    values = np.unique(lab)
    if not set(values.tolist()) <= {0, 255}:
        raise IngestionError(f"non-binary label {paths['label']}: values {values[:8].tolist()}")
    return SamplePair(a, b, (lab == 255).astype(np.uint8), Path(filename).stem)


def load_dataset(root) -> list[SamplePair]:
    root = Path(root)
    names: set[str] = set()
    for d in SUBDIRS:
        sub = root / d
        if sub.is_dir():
            names |= {p.name for p in sub.glob("*.png")}
    return [load_sample(root, n) for n in sorted(names)]


def save_dataset(samples: Iterable[SamplePair], root) -> Path:
    root = Path(root)
    for d in SUBDIRS:
        (root / d).mkdir(parents=True, exist_ok=True)
    for s in samples:
        fname = f"{s.name}.png"
        write_png(root / "A" / fname, s.img_a)
        write_png(root / "B" / fname, s.img_b)
        write_png(root / "label" / fname, s.label * 255)
    return root
