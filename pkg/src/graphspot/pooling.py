"""Temporal pooling of frame embeddings: average, max, NetVLAD, NetRVLAD and
their temporally split "++" forms.

All functions take ``X`` shaped (..., N, D) with frames on axis -2, so a
whole batch of windows pools in one call.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .numeric import Tensor, ops
from .numeric.tensor import ShapeMismatch

BASE_METHODS = ("avg", "max", "netvlad", "netrvlad")
METHODS = BASE_METHODS + tuple(m + "++" for m in BASE_METHODS)
CENTER_SCALE = 0.1
ALPHA_INIT = 1.0


class EmptyWindow(ValueError):
    pass


def _check_frames(x: Tensor) -> None:
    if x.ndim < 2 or x.shape[-2] == 0:
        raise EmptyWindow(f"pooling needs at least one frame, got shape {x.shape}")


def avg_pool(x) -> Tensor:
    x = ops.as_tensor(x)
    _check_frames(x)
    return ops.mean(x, axis=-2)


def max_pool(x) -> Tensor:
    x = ops.as_tensor(x)
    _check_frames(x)
    return ops.max(x, axis=-2)


@dataclass
class NetVladParams:
    """Soft-assignment weights ``w`` (D, K), biases ``b`` (K,) and centers ``c`` (K, D).

    ``c`` is None for NetRVLAD.
    """

    w: Tensor
    b: Tensor
    c: Optional[Tensor]
    alpha_init: float = ALPHA_INIT

    @property
    def k(self) -> int:
        return self.w.shape[1]

    @property
    def dim(self) -> int:
        return self.w.shape[0]

    @classmethod
    def from_centers(cls, centers: np.ndarray, alpha: float, residual: bool = True, prefix: str = "pool") -> "NetVladParams":
        """Initialize with w_k = 2·alpha·c_k and b_k = -alpha·||c_k||²."""
        centers = np.asarray(centers, dtype=np.float64)
        w = Tensor(np.ascontiguousarray(2.0 * alpha * centers.T), requires_grad=True, name=f"{prefix}.w")
        b = Tensor(-alpha * (centers * centers).sum(axis=1), requires_grad=True, name=f"{prefix}.b")
        c = Tensor(centers.copy(), requires_grad=True, name=f"{prefix}.c") if residual else None
        return cls(w, b, c, alpha)

    @classmethod
    def create(cls, rng: np.random.Generator, k: int, dim: int, residual: bool = True,
               alpha: float = ALPHA_INIT, prefix: str = "pool") -> "NetVladParams":
        if k < 1:
            raise ValueError("cluster count must be at least 1")
        centers = rng.standard_normal((k, dim)) * CENTER_SCALE
        return cls.from_centers(centers, alpha, residual, prefix)

    def parameters(self) -> list[Tensor]:
        return [self.w, self.b] + ([self.c] if self.c is not None else [])


def soft_assign(x, w, b) -> Tensor:
    """softmax_k(w_k·x_i + b_k), shape (..., N, K)."""
    x, w, b = ops.as_tensor(x), ops.as_tensor(w), ops.as_tensor(b)
    if x.shape[-1] != w.shape[0] or b.shape != (w.shape[1],):
        raise ShapeMismatch("soft_assign", x.shape, w.shape, b.shape)
    return ops.softmax(ops.add(ops.matmul(x, w), b), axis=-1)


def _vlad_normalize(v: Tensor) -> Tensor:
    v = ops.l2_normalize(v, axis=-1)
    flat = ops.reshape(v, v.shape[:-2] + (v.shape[-2] * v.shape[-1],))
    return ops.l2_normalize(flat, axis=-1)


def netvlad(x, params: NetVladParams) -> Tensor:
    """Residuals to each center weighted by soft assignment, normalized per
    cluster, flattened cluster-major and normalized globally (length K·D)."""
    x = ops.as_tensor(x)
    _check_frames(x)
    a = soft_assign(x, params.w, params.b)
    v = ops.matmul(ops.swapaxes(a, -1, -2), x)  # (..., K, D)
    if params.c is not None:
        mass = ops.expand_dims(ops.sum(a, axis=-2), -1)  # (..., K, 1)
        v = ops.sub(v, ops.mul(mass, params.c))
    return _vlad_normalize(v)


def netrvlad(x, params: NetVladParams) -> Tensor:
    """NetVLAD without centers: soft-assigned sums of the raw features."""
    if params.c is not None:
        params = NetVladParams(params.w, params.b, None, params.alpha_init)
    return netvlad(x, params)


@dataclass(frozen=True)
class WindowSplit:
    before_s: float
    after_s: float
    k_before: int = 0
    k_after: int = 0

    @classmethod
    def even(cls, window_s: float, k: int = 0) -> "WindowSplit":
        return cls(window_s / 2, window_s / 2, k // 2, k // 2)

    def split_index(self, n_frames: int) -> int:
        """Frames [0, s) are the past; the center frame starts the future."""
        return int(np.floor(n_frames * self.before_s / (self.before_s + self.after_s)))


def _pool_base(x: Tensor, method: str, params: Optional[NetVladParams]) -> Tensor:
    if method == "avg":
        return avg_pool(x)
    if method == "max":
        return max_pool(x)
    if method == "netvlad":
        return netvlad(x, params)
    if method == "netrvlad":
        return netrvlad(x, params)
    raise ValueError(f"unknown pooling method {method!r}")


def pool_pp(x, split: WindowSplit, method: str, params_b=None, params_a=None) -> Tensor:
    """Pool past and future halves with separate parameters and concatenate."""
    x = ops.as_tensor(x)
    n = x.shape[-2] if x.ndim >= 2 else 0
    s = split.split_index(n)
    if s == 0 or s == n:
        raise EmptyWindow(f"window of {n} frames leaves an empty half")
    before = x[..., :s, :]
    after = x[..., s:, :]
    return ops.concatenate(
        [_pool_base(before, method, params_b), _pool_base(after, method, params_a)], axis=-1
    )


@dataclass
class Pooling:
    """A configured pooling layer: method tag plus whatever parameters it owns."""

    method: str
    dim: int
    k: int = 0
    split: Optional[WindowSplit] = None
    params: Optional[NetVladParams] = None
    params_before: Optional[NetVladParams] = None
    params_after: Optional[NetVladParams] = None

    @property
    def temporal(self) -> bool:
        return self.method.endswith("++")

    @property
    def base(self) -> str:
        return self.method.rstrip("+")

    @classmethod
    def create(cls, method: str, rng: np.random.Generator, dim: int, k: int, window_s: float) -> "Pooling":
        if method not in METHODS:
            raise ValueError(f"unknown pooling method {method!r}; choose from {METHODS}")
        layer = cls(method, dim, k)
        residual = layer.base == "netvlad"
        learned = layer.base in ("netvlad", "netrvlad")
        if layer.temporal:
            if learned and (k < 2 or k % 2):
                raise ValueError(f"{method} needs an even cluster count >= 2, got {k}")
            layer.split = WindowSplit.even(window_s, k)
            if learned:
                layer.params_before = NetVladParams.create(rng, k // 2, dim, residual, prefix="pool.before")
                layer.params_after = NetVladParams.create(rng, k // 2, dim, residual, prefix="pool.after")
        elif learned:
            layer.params = NetVladParams.create(rng, k, dim, residual, prefix="pool")
        return layer

    def output_length(self) -> int:
        if self.base in ("avg", "max"):
            return self.dim * (2 if self.temporal else 1)
        return self.dim * self.k

    def parameters(self) -> list[Tensor]:
        out = []
        for p in (self.params, self.params_before, self.params_after):
            if p is not None:
                out.extend(p.parameters())
        return out

    def __call__(self, x) -> Tensor:
        if self.temporal:
            return pool_pp(x, self.split, self.base, self.params_before, self.params_after)
        return _pool_base(ops.as_tensor(x), self.base, self.params)
