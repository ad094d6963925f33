"""Reverse-mode autodiff on numpy arrays."""
from . import ops
from .core import ContractError, ShapeError, Tape, Tensor, backward, no_grad
from .optim import AdamW, OptimizerState, TrainingAborted, adamw_step, cosine_anneal_lr

__all__ = [
    "AdamW", "ContractError", "OptimizerState", "ShapeError", "Tape", "Tensor",
    "TrainingAborted", "adamw_step", "backward", "cosine_anneal_lr", "no_grad", "ops",
]
