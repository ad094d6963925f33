"""Training, evaluation, the ablation matrix and the loss-ratio sweep."""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import asdict, dataclass, fields, replace
from fractions import Fraction
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import checkpoint as ckpt_io
from .data.augment import augment
from .data.io import load_dataset, write_png
from .data.sample import SamplePair
from .data.synth import SynthConfig, synth_generate
from .metrics import (Scores, binarize, confusion, fold, metrics, render_overlay,
                      render_rm_heatmap, write_metrics_csv)
from .model import CFNet, ModelConfig
from .tensor.core import Tensor, backward, no_grad
from .tensor.optim import AdamW, TrainingAborted, cosine_anneal_lr

log = logging.getLogger(__name__)

LOG_COLUMNS = ("step", "l_main", "l_cc", "l_ucc", "total", "lr")
DEFAULT_RATIOS = ("100:1", "50:1", "10:1", "1:1", "1:5", "1:10")


@dataclass(frozen=True)
class TrainConfig:
    data: Optional[str] = None          # dataset root; None means synthetic
    synth_size: int = 64
    synth_count: int = 200
    synth_seed: int = 0
    style_shift: bool = True
    change_prob: float = 0.5
    val_fraction: float = 0.15
    test_fraction: float = 0.15
    epochs: int = 30
    batch_size: int = 8
    lr0: float = 5e-4
    lr_min: float = 0.0
    weight_decay: float = 0.01
    seed: int = 0
    width_multiplier: float = 0.25
    content_width: int = 16
    alpha: float = 1.0
    beta: float = 0.1
    gamma: float = 0.1
    enable_focuser: bool = True
    enable_content_aware: bool = True
    augment: bool = True
    threshold: float = 0.5
    save_images: bool = True
    out_dir: str = "runs/default"

    def __post_init__(self):
        if min(self.alpha, self.beta, self.gamma) < 0:
            raise ValueError("loss weights must be non-negative")
        if self.epochs < 0 or self.batch_size < 1:
            raise ValueError("epochs must be >= 0 and batch_size >= 1")

    @property
    def loss_weights(self) -> tuple[float, float, float]:
        if not self.enable_content_aware:
            return (self.alpha, 0.0, 0.0)
        return (self.alpha, self.beta, self.gamma)

    def model_config(self) -> ModelConfig:
        return ModelConfig(width_multiplier=self.width_multiplier,
                           content_width=self.content_width,
                           enable_focuser=self.enable_focuser,
                           enable_content_aware=self.enable_content_aware)

    def synth_config(self) -> SynthConfig:
        cfg = SynthConfig(size=self.synth_size, count=self.synth_count,
                          change_prob=self.change_prob, seed=self.synth_seed)
        return cfg if self.style_shift else cfg.without_style()

    @classmethod
    def field_types(cls) -> dict[str, type]:
        hints = {"Optional[str]": str, "str": str, "int": int, "float": float, "bool": bool}
        return {f.name: hints[str(f.type)] for f in fields(cls)}


# --------------------------------------------------------------------- data

def split_dataset(samples: Sequence[SamplePair], cfg: TrainConfig) -> dict[str, list[SamplePair]]:
    n = len(samples)
    n_test = int(round(n * cfg.test_fraction))
    n_val = int(round(n * cfg.val_fraction))
    n_train = n - n_val - n_test
    return {"train": list(samples[:n_train]),
            "val": list(samples[n_train:n_train + n_val]),
            "test": list(samples[n_train + n_val:])}


def load_splits(cfg: TrainConfig) -> dict[str, list[SamplePair]]:
    if cfg.data is None:
        return split_dataset(synth_generate(cfg.synth_config()), cfg)
    root = Path(cfg.data)
    if all((root / s).is_dir() for s in ("train", "val", "test")):
        return {s: load_dataset(root / s) for s in ("train", "val", "test")}
    return split_dataset(load_dataset(root), cfg)


def to_batch(samples: Sequence[SamplePair], dtype=np.float32):
    """uint8 rasters to (N,3,H,W) inputs in [-1, 1] and an (N,1,H,W) label."""
    a = np.stack([s.img_a for s in samples]).transpose(0, 3, 1, 2)
    b = np.stack([s.img_b for s in samples]).transpose(0, 3, 1, 2)
    lab = np.stack([s.label for s in samples])[:, None]
    dtype = np.dtype(dtype)
    scale = dtype.type(1 / 127.5)
    return ((a.astype(dtype) * scale - 1), (b.astype(dtype) * scale - 1), lab.astype(dtype))


# --------------------------------------------------------------- evaluation

@dataclass
class EvalResult:
    scores: Scores
    predictions: list[np.ndarray]
    rm4: list[Optional[np.ndarray]]


def predict(model: CFNet, samples: Sequence[SamplePair], batch_size: int = 8):
    """Change probabilities and coarsest reweight maps, in eval mode."""
    was_training = model.training
    model.eval()
    probs, rm4 = [], []
    try:
        with no_grad():
            for i in range(0, len(samples), batch_size):
                chunk = samples[i:i + batch_size]
                a, b, _ = to_batch(chunk, model.dtype)
                out = model(Tensor(a), Tensor(b))
                probs.extend(out.change_map.data[:, 0])
                if out.rms is not None:
                    rm4.extend(out.rms[3].data[:, 0])
                else:
                    rm4.extend([None] * len(chunk))
    finally:
        model.train(was_training)
    return probs, rm4


def evaluate_samples(model: CFNet, samples: Sequence[SamplePair], threshold: float = 0.5,
                     batch_size: int = 8) -> EvalResult:
    if not samples:
        raise ValueError("cannot evaluate an empty split")
    probs, rm4 = predict(model, samples, batch_size)
    preds = [binarize(p, threshold) for p in probs]
    counts = fold(confusion(p, s.label) for p, s in zip(preds, samples))
    return EvalResult(metrics(counts), preds, rm4)


def save_visuals(out_dir: Path, samples: Sequence[SamplePair], result: EvalResult) -> None:
    for s, pred, rm in zip(samples, result.predictions, result.rm4):
        write_png(out_dir / "overlays" / f"{s.name}.png", render_overlay(pred, s.label))
        if rm is not None:
            k = s.label.shape[0] // rm.shape[0]
            up = np.kron(rm, np.ones((k, k)))
            write_png(out_dir / "rm4" / f"{s.name}.png", render_rm_heatmap(up))


# ------------------------------------------------------------- checkpoints

def make_checkpoint(model: CFNet, opt: Optional[AdamW], cfg: TrainConfig, **meta) -> ckpt_io.Checkpoint:
    tensors = {f"param/{n}": p.data for n, p in model.named_parameters()}
    tensors.update({f"buffer/{n}": b for n, b in model.named_buffers()})
    info = {"train_config": asdict(cfg), "model_config": asdict(model.config)}
    if opt is not None:
        st = opt.state
        tensors.update({f"optim/m/{n}": a for n, a in st.m.items()})
        tensors.update({f"optim/v/{n}": a for n, a in st.v.items()})
        info["optimizer"] = {"lr": st.lr, "beta1": st.beta1, "beta2": st.beta2, "eps": st.eps,
                             "weight_decay": st.weight_decay, "step": st.step}
    info.update(meta)
    return ckpt_io.Checkpoint(tensors, info)


def restore_model(ck: ckpt_io.Checkpoint, seed: int = 0) -> CFNet:
    model = CFNet(ModelConfig(**ck.meta["model_config"]), seed=seed)
    state = ck.section("param")
    state.update(ck.section("buffer"))
    model.load_state_dict(state)
    return model


def restore_optimizer(ck: ckpt_io.Checkpoint, model: CFNet) -> AdamW:
    o = ck.meta["optimizer"]
    opt = AdamW(model.named_parameters(), lr=o["lr"], betas=(o["beta1"], o["beta2"]),
                eps=o["eps"], weight_decay=o["weight_decay"])
    opt.state.step = o["step"]
    for n, a in ck.section("optim/m").items():
        opt.state.m[n] = a.copy()
    for n, a in ck.section("optim/v").items():
        opt.state.v[n] = a.copy()
    return opt


def load_checkpoint(path) -> tuple[CFNet, ckpt_io.Checkpoint]:
    """Model in eval mode (running batch-norm statistics) plus the raw checkpoint."""
    ck = ckpt_io.load(path)
    model = restore_model(ck)
    model.eval()
    return model, ck


# ------------------------------------------------------------------ train

@dataclass
class RunResult:
    out_dir: Path
    test: Scores
    val: Scores
    history: list[dict]
    epoch_loss: list[float]


def _fmt(x: float) -> str:
    return repr(float(x))


def train(cfg: TrainConfig, splits: Optional[dict[str, list[SamplePair]]] = None) -> RunResult:
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if splits is None:
        splits = load_splits(cfg)
    train_set = splits["train"]
    if not train_set:
        raise ValueError("training split is empty")
    model = CFNet(cfg.model_config(), seed=cfg.seed)
    opt = AdamW(model.named_parameters(), lr=cfg.lr0, weight_decay=cfg.weight_decay)
    alpha, beta, gamma = cfg.loss_weights
    steps_per_epoch = math.ceil(len(train_set) / cfg.batch_size)
    total_steps = steps_per_epoch * cfg.epochs
    best_iou = best_f1 = -1.0
    history, epoch_loss = [], []
    best_path = out / "best.ckpt"
    step = 0
    with (out / "train_log.csv").open("w", newline="") as log_fh, \
            (out / "val_log.csv").open("w", newline="") as val_fh:
        step_log = csv.writer(log_fh)
        step_log.writerow(LOG_COLUMNS)
        val_log = csv.writer(val_fh)
        val_log.writerow(("epoch", "iou", "f1", "recall", "precision", "saved"))
        for epoch in range(cfg.epochs):
            order = np.random.default_rng([cfg.seed, 1, epoch]).permutation(len(train_set))
            losses = []
            for k in range(steps_per_epoch):
                idx = order[k * cfg.batch_size:(k + 1) * cfg.batch_size]
                batch = [train_set[i] for i in idx]
                if cfg.augment:
                    batch = [augment(s, np.random.default_rng([cfg.seed, 2, epoch, int(i)]))
                             for s, i in zip(batch, idx)]
                a, b, lab = to_batch(batch, model.dtype)
                lr = cosine_anneal_lr(step, total_steps, cfg.lr0, cfg.lr_min)
                opt.lr = lr
                out_fwd = model(Tensor(a), Tensor(b))
                bundle = model.loss(out_fwd, lab, np.random.default_rng([cfg.seed, 3, step]),
                                    alpha, beta, gamma)
                vals = bundle.values()
                step += 1
                step_log.writerow([step] + [_fmt(vals[c]) for c in LOG_COLUMNS[1:5]] + [_fmt(lr)])
                if not math.isfinite(vals["total"]):
                    log_fh.flush()
                    log.error("non-finite loss at step %d: %s", step, vals)
                    raise TrainingAborted(f"non-finite loss at step {step}: {vals}")
                opt.zero_grad()
                backward(bundle.total)
                opt.step()
                losses.append(vals["total"])
                history.append({"step": step, **vals, "lr": lr})
            epoch_loss.append(float(np.mean(losses)))
            log_fh.flush()
            val = evaluate_samples(model, splits["val"], cfg.threshold) if splits["val"] else None
            saved = False
            if val is None or val.scores.iou > best_iou or val.scores.f1 > best_f1:
                if val is not None:
                    best_iou = max(best_iou, val.scores.iou)
                    best_f1 = max(best_f1, val.scores.f1)
                ckpt_io.save(best_path, make_checkpoint(model, opt, cfg, epoch=epoch + 1,
                                                        step=step, best_iou=best_iou,
                                                        best_f1=best_f1))
                saved = True
            if val is not None:
                s = val.scores
                val_log.writerow([epoch + 1] + [f"{v:.6f}" for v in (s.iou, s.f1, s.recall, s.precision)]
                                 + [int(saved)])
                val_fh.flush()
                log.info("epoch %d loss %.5f val iou %.4f f1 %.4f", epoch + 1,
                         epoch_loss[-1], s.iou, s.f1)
    if not best_path.exists():
        ckpt_io.save(best_path, make_checkpoint(model, opt, cfg, epoch=0, step=0,
                                                best_iou=best_iou, best_f1=best_f1))
    best, _ = load_checkpoint(best_path)
    rows = {}
    if splits["val"]:
        rows["val"] = evaluate_samples(best, splits["val"], cfg.threshold).scores
    test = evaluate_samples(best, splits["test"], cfg.threshold)
    rows["test"] = test.scores
    write_metrics_csv(out / "metrics.csv", rows)
    if cfg.save_images:
        save_visuals(out / "test", splits["test"], test)
    return RunResult(out, test.scores, rows.get("val", test.scores), history, epoch_loss)


def evaluate(checkpoint_path, samples: Sequence[SamplePair], out_dir, split: str = "test",
             threshold: float = 0.5, save_images: bool = True) -> Scores:
    model, _ = load_checkpoint(checkpoint_path)
    res = evaluate_samples(model, samples, threshold)
    out = Path(out_dir)
    write_metrics_csv(out / f"metrics_{split}.csv", {split: res.scores})
    if save_images:
        save_visuals(out / split, samples, res)
    return res.scores


# --------------------------------------------------------------- ablation

# row order follows the ablation tables: (content-aware, focuser)
ABLATION_CELLS = ((False, False), (True, False), (False, True), (True, True))


def _mark(flag: bool) -> str:
    return "✓" if flag else "✗"


def ablation_cell(base: TrainConfig, seed: int, content_aware: bool, focuser: bool,
                  out_dir) -> TrainConfig:
    tag = f"seed{seed}_ca{int(content_aware)}_f{int(focuser)}"
    return replace(base, seed=seed, enable_content_aware=content_aware, enable_focuser=focuser,
                   out_dir=str(Path(out_dir) / tag), save_images=False)


def ablate(base: TrainConfig, seeds: Optional[Sequence[int]] = None,
           out_dir=None) -> Path:
    seeds = [base.seed] if seeds is None else list(seeds)
    out = Path(out_dir or base.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    splits = load_splits(base)
    rows = []
    for seed in seeds:
        for ca, foc in ABLATION_CELLS:
            res = train(ablation_cell(base, seed, ca, foc, out), splits)
            rows.append((seed, _mark(ca), _mark(foc), res.test.iou, res.test.f1))
    path = out / "ablation.csv"
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(("seed", "content_aware", "focuser", "iou", "f1"))
        for seed, ca, foc, iou, f1 in rows:
            w.writerow((seed, ca, foc, f"{iou:.6f}", f"{f1:.6f}"))
    return path


def read_ablation(path) -> list[dict]:
    with Path(path).open(newline="") as fh:
        return list(csv.DictReader(fh))


# ------------------------------------------------------------------ sweep

def parse_ratio(ratio: str) -> tuple[float, float, float]:
    """'A:B' for alpha:beta with beta == gamma and alpha pinned to 1."""
    try:
        a, b = (Fraction(p.strip()) for p in ratio.split(":"))
    except ValueError as exc:
        raise ValueError(f"ratio must look like 'A:B', got {ratio!r}") from exc
    if a <= 0 or b < 0:
        raise ValueError(f"ratio terms must be positive, got {ratio!r}")
    w = float(b / a)
    return (1.0, w, w)


def sweep_loss_ratio(base: TrainConfig, ratios: Sequence[str] = DEFAULT_RATIOS,
                     out_dir=None) -> Path:
    if not ratios:
        raise ValueError("no ratios given")
    out = Path(out_dir or base.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    splits = load_splits(base)
    rows = []
    for r in ratios:
        alpha, beta, gamma = parse_ratio(r)
        tag = r.replace(":", "-")
        cfg = replace(base, alpha=alpha, beta=beta, gamma=gamma, out_dir=str(out / f"ratio_{tag}"),
                      save_images=False)
        res = train(cfg, splits)
        s = res.test
        rows.append((r, alpha, beta, gamma, s.iou, s.f1, s.recall, s.precision))
    path = out / "sweep.csv"
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(("ratio", "alpha", "beta", "gamma", "iou", "f1", "recall", "precision"))
        for r, a, b, g, *m in rows:
            w.writerow([r, repr(a), repr(b), repr(g)] + [f"{v:.6f}" for v in m])
    return path
