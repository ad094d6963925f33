"""AdamW with decoupled weight decay and the cosine annealing schedule."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import Tensor


class TrainingAborted(RuntimeError):
    """Non-finite values reached the optimizer."""


def cosine_anneal_lr(step: int, total_steps: int, lr0: float, lr_min: float = 0.0) -> float:
    if total_steps <= 0 or step >= total_steps:
        return lr_min
    step = max(step, 0)
    return lr_min + 0.5 * (lr0 - lr_min) * (1.0 + math.cos(math.pi * step / total_steps))


@dataclass
class OptimizerState:
    lr: float = 5e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.01
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


class AdamW:
    """AdamW over a fixed, named parameter list.

    The decay ``param -= lr * wd * param`` is applied before the Adam step.
    """

    def __init__(self, named_params, lr: float = 5e-4, betas=(0.9, 0.999), eps: float = 1e-8,
                 weight_decay: float = 0.01):
        self.params: list[tuple[str, Tensor]] = list(named_params)
        if lr < 0:
            raise ValueError("lr must be >= 0")
        self.state = OptimizerState(lr=lr, beta1=betas[0], beta2=betas[1], eps=eps,
                                    weight_decay=weight_decay)
        for name, p in self.params:
            self.state.m[name] = np.zeros_like(p.data)
            self.state.v[name] = np.zeros_like(p.data)

    @property
    def lr(self) -> float:
        return self.state.lr

    @lr.setter
    def lr(self, value: float) -> None:
        self.state.lr = value

    def zero_grad(self) -> None:
        for _, p in self.params:
            p.grad = None

    def step(self) -> None:
        adamw_step(self.state, dict(self.params),
                   {n: p.grad for n, p in self.params if p.grad is not None})


def adamw_step(state: OptimizerState, params: dict[str, Tensor],
               grads: dict[str, np.ndarray]) -> None:
    """One AdamW update in place; parameters absent from ``grads`` are skipped."""
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise TrainingAborted(f"non-finite gradient in parameter {name!r}")
    for name, p in params.items():
        if name not in state.m:
            state.m[name] = np.zeros_like(p.data)
            state.v[name] = np.zeros_like(p.data)
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.step
    c2 = 1.0 - b2 ** state.step
    for name, p in params.items():
        g = grads.get(name)
        if g is None:
            continue
        if g.shape != p.shape:
            raise ValueError(f"{name}: gradient shape {g.shape} != parameter {p.shape}")
        m, v = state.m[name], state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        data = p.data
        if state.weight_decay:
            data = data - state.lr * state.weight_decay * data
        update = state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
        p.data = (data - update).astype(p.dtype, copy=False)
