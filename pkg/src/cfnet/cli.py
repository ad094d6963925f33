"""Command line entry point: train, eval, ablate, sweep, synth."""
from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import fields, replace
from pathlib import Path

from .train import (DEFAULT_RATIOS, TrainConfig, ablate, evaluate, load_splits,
                    sweep_loss_ratio, train)

_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


def parse_bool(text: str) -> bool:
    t = text.strip().lower()
    if t in _TRUE:
        return True
    if t in _FALSE:
        return False
    raise ValueError(f"not a boolean: {text!r}")


def coerce(name: str, text: str):
    types = TrainConfig.field_types()
    if name not in types:
        raise KeyError(f"unknown config key {name!r}")
    kind = types[name]
    if name == "data" and text.strip().lower() in ("", "none"):
        return None
    if kind is bool:
        return parse_bool(text)
    return kind(text.strip())


def read_config_file(path) -> dict:
    """Flat ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected key=value, got {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key] = coerce(key, value)
    return out


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key=value config file")
    for f in fields(TrainConfig):
        p.add_argument("--" + f.name.replace("_", "-"), dest=f.name, default=None,
                       metavar=f.name.upper())


def build_config(ns: argparse.Namespace) -> TrainConfig:
    values = read_config_file(ns.config) if getattr(ns, "config", None) else {}
    for f in fields(TrainConfig):
        v = getattr(ns, f.name, None)
        if v is not None:
            values[f.name] = coerce(f.name, v)
    return TrainConfig(**values)


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cfnet", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train one model and test the best checkpoint")
    _add_config_flags(p)

    p = sub.add_parser("eval", help="evaluate a checkpoint on one split")
    _add_config_flags(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--split", default="test", choices=("train", "val", "test"))
    p.add_argument("--eval-out", default=None, help="output directory (default: next to checkpoint)")

    p = sub.add_parser("ablate", help="focuser x content-aware matrix")
    _add_config_flags(p)
    p.add_argument("--seeds", type=int, nargs="+", default=None)

    p = sub.add_parser("sweep", help="alpha:beta loss-ratio sweep")
    _add_config_flags(p)
    p.add_argument("--ratios", nargs="+", default=list(DEFAULT_RATIOS))

    p = sub.add_parser("synth", help="write a synthetic dataset as A/B/label PNGs")
    _add_config_flags(p)
    p.add_argument("--root", required=True)
    return parser


def main(argv=None) -> int:
    ns = make_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if ns.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = build_config(ns)
    except (KeyError, ValueError) as exc:
        print(f"cfnet: config error: {exc}", file=sys.stderr)
        return 2
    if ns.command == "train":
        res = train(cfg)
        print(f"test iou={res.test.iou:.4f} f1={res.test.f1:.4f} -> {res.out_dir}")
    elif ns.command == "eval":
        from .checkpoint import load
        ck = load(ns.checkpoint)
        if ns.config is None and all(getattr(ns, f.name) is None for f in fields(TrainConfig)):
            cfg = TrainConfig(**ck.meta["train_config"])
        samples = load_splits(cfg)[ns.split]
        out = ns.eval_out or str(Path(ns.checkpoint).parent / f"eval_{ns.split}")
        s = evaluate(ns.checkpoint, samples, out, ns.split, cfg.threshold)
        print(f"{ns.split} iou={s.iou:.4f} f1={s.f1:.4f} recall={s.recall:.4f} "
              f"precision={s.precision:.4f} -> {out}")
    elif ns.command == "ablate":
        print(ablate(cfg, ns.seeds))
    elif ns.command == "sweep":
        print(sweep_loss_ratio(cfg, ns.ratios))
    elif ns.command == "synth":
        from .data.io import save_dataset
        from .data.synth import synth_generate
        root = save_dataset(synth_generate(cfg.synth_config()), ns.root)
        print(root)
    return 0


if __name__ == "__main__":
    sys.exit(main())
