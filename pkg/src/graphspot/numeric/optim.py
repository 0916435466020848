"""Adam and a reduce-on-plateau learning-rate schedule."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .tensor import Tensor


class MissingGrad(RuntimeError):
    pass


class NonFinite(ValueError):
    pass


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)


def adam_step(params: Sequence[Tensor], state: AdamState) -> Sequence[Tensor]:
    """One bias-corrected Adam update, in place; returns ``params``."""
    for i, p in enumerate(params):
        if p.grad is None:
            raise MissingGrad(f"parameter {p.name or i} has no gradient")
    if not state.m:
        state.m = [np.zeros_like(p.data) for p in params]
        state.v = [np.zeros_like(p.data) for p in params]
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1**state.step
    c2 = 1.0 - b2**state.step
    for p, m, v in zip(params, state.m, state.v):
        g = p.grad
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p.data -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return params


@dataclass
class PlateauScheduler:
    """Divide the learning rate by ``1/factor`` after ``patience`` epochs
    without a strict improvement; signal a stop once it drops below
    ``min_lr_stop``."""

    current_lr: float = 1e-3
    factor: float = 0.1
    patience: int = 10
    min_lr_stop: float = 1e-8
    best_metric: float = math.inf
    epochs_since_improvement: int = 0
    reductions: int = 0
    initial_lr: float | None = None

    def __post_init__(self):
        if self.initial_lr is None:
            self.initial_lr = self.current_lr


def plateau_step(scheduler: PlateauScheduler, val_loss: float) -> tuple[float, bool]:
    if not math.isfinite(val_loss):
        raise NonFinite(f"validation loss is {val_loss}")
    if val_loss < scheduler.best_metric:
        scheduler.best_metric = val_loss
        scheduler.epochs_since_improvement = 0
    else:
        scheduler.epochs_since_improvement += 1
        if scheduler.epochs_since_improvement >= scheduler.patience:
            scheduler.reductions += 1
            # recomputed from the start value so 1e-3 * 0.1**5 lands on 1e-8, not below it
            scheduler.current_lr = scheduler.initial_lr * scheduler.factor**scheduler.reductions
            scheduler.epochs_since_improvement = 0
    stop = scheduler.current_lr < scheduler.min_lr_stop * (1.0 - 1e-9)
    return scheduler.current_lr, stop
