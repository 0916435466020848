"""Tensor arithmetic, reverse-mode gradients and optimizers."""

from . import tensor as ops
from .checkpoint import dumps_params, load_params, loads_params, save_params
from .gradcheck import GradCheckResult, grad_check, grad_check_detail
from .init import glorot, zeros
from .optim import AdamState, MissingGrad, NonFinite, PlateauScheduler, adam_step, plateau_step
from .tensor import NotScalar, ShapeMismatch, Tape, Tensor

__all__ = [
    "AdamState",
    "GradCheckResult",
    "MissingGrad",
    "NonFinite",
    "NotScalar",
    "PlateauScheduler",
    "ShapeMismatch",
    "Tape",
    "Tensor",
    "adam_step",
    "dumps_params",
    "glorot",
    "grad_check",
    "grad_check_detail",
    "load_params",
    "loads_params",
    "ops",
    "plateau_step",
    "save_params",
    "zeros",
]
