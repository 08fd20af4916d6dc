from . import autodiff
from .autodiff import NonScalarLoss, ShapeMismatch, Value, backward, grad_reverse
from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .optim import Adam, adam_step, decayed_lr
from .params import ParamSet, add_mlp, init_glorot, mlp

__all__ = [
    "autodiff",
    "Value",
    "ShapeMismatch",
    "NonScalarLoss",
    "backward",
    "grad_reverse",
    "ParamSet",
    "init_glorot",
    "add_mlp",
    "mlp",
    "Adam",
    "adam_step",
    "decayed_lr",
    "save_checkpoint",
    "load_checkpoint",
    "CheckpointError",
]
