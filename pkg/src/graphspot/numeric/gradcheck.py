"""Central finite-difference check of tape gradients."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .tensor import Tape, Tensor


def _rel(a, b):
    return np.abs(a - b) / np.maximum(1e-8, np.abs(a) + np.abs(b))


def _diff(f, x, flat, i, h) -> float:
    orig = flat[i]
    flat[i] = orig + h
    hi = f(x).item()
    flat[i] = orig - h
    lo = f(x).item()
    flat[i] = orig
    return (hi - lo) / (2.0 * h)


def _quotient(f, x, flat, i, eps, kink_tol, scale, rungs=4) -> tuple[float, bool]:
    q = _diff(f, x, flat, i, eps)
    if kink_tol is None:
        return q, False
    h = eps
    for rung in range(rungs - 1):
        h /= 10.0
        q_small = _diff(f, x, flat, i, h)
        # rounding in f alone moves a quotient by about ulp(f) / h
        noise = 64.0 * np.finfo(float).eps * scale / h
        if abs(q - q_small) <= kink_tol * (abs(q) + abs(q_small)) + noise:
            return q, rung > 0
        q = q_small
    return q, True


@dataclass(frozen=True)
class GradCheckResult:
    worst: float
    probed: int
    refined: int  # coordinates where the step at eps straddled a kink


def grad_check(
    f: Callable[[Tensor], Tensor],
    x: Tensor,
    eps: float = 1e-4,
    wrt: Sequence[Tensor] = (),
    max_coords: int | None = None,
    seed: int = 0,
) -> float:
    """Max elementwise relative error between tape and finite-difference gradients.

    ``f`` must be scalar-valued and smooth at ``x``: keep ReLU and max inputs
    away from their kinks, the finite difference straddles them otherwise.
    Extra tensors in ``wrt`` (e.g. parameters closed over by ``f``) are
    checked as well.  ``max_coords`` limits each tensor to that many
    randomly chosen coordinates, for models too large to probe fully.
    """
    return grad_check_detail(f, x, eps, wrt, max_coords, seed).worst


def grad_check_detail(
    f: Callable[[Tensor], Tensor],
    x: Tensor,
    eps: float = 1e-4,
    wrt: Sequence[Tensor] = (),
    max_coords: int | None = None,
    seed: int = 0,
    kink_tol: float | None = None,
) -> GradCheckResult:
    """Like :func:`grad_check`, optionally tolerant of ReLU kinks.

    With ``kink_tol`` set, every probed coordinate is also differenced at
    ``eps / 10``.  When the two quotients disagree by more than ``kink_tol``
    the step at ``eps`` crossed a non-smooth point.  The step then keeps
    shrinking tenfold (down to ``eps / 1000``) until two successive quotients
    agree, and the coordinate is counted in ``refined``.  A wrong tape
    gradient still fails, since it disagrees with every quotient alike.
    """
    rng = np.random.default_rng(seed)
    targets = [x, *wrt]
    saved = [(t.requires_grad, t.grad) for t in targets]
    for t in targets:
        t.requires_grad = True
        t.grad = None
    try:
        with Tape() as tape:
            out = f(x)
            tape.backward(out)
        scale = max(1.0, abs(out.item()))
        analytic = [np.zeros_like(t.data) if t.grad is None else t.grad.copy() for t in targets]
        worst, probed, refined = 0.0, 0, 0
        for t, g_ad in zip(targets, analytic):
            t.data = np.ascontiguousarray(t.data)  # so ``flat`` is a view, not a copy
            flat = t.data.reshape(-1)
            coords = np.arange(flat.size)
            if max_coords is not None and flat.size > max_coords:
                coords = np.sort(rng.choice(flat.size, max_coords, replace=False))
            ref = np.empty(len(coords))
            for j, i in enumerate(coords):
                ref[j], kinked = _quotient(f, x, flat, int(i), eps, kink_tol, scale)
                refined += kinked
            ga = g_ad.reshape(-1)[coords]
            err = _rel(ga, ref)
            probed += len(coords)
            if err.size:
                worst = max(worst, float(err.max()))
        return GradCheckResult(worst, probed, refined)
    finally:
        for t, (req, g) in zip(targets, saved):
            t.requires_grad = req
            t.grad = g
