"""Two-layer GCN frame encoder with batch norm and mean readout (5 -> 64 -> 64 -> 32)."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .graphs import N_FEATURES, FrameGraph
from .numeric import Tensor, glorot, ops, zeros
from .numeric.tensor import ShapeMismatch

HIDDEN = (64, 64)
EMBED_DIM = 32
BN_EPS = 1e-5
BN_MOMENTUM = 0.1


class EmptyBatch(ValueError):
    pass


@dataclass
class BatchNormState:
    gamma: Tensor
    beta: Tensor
    running_mean: np.ndarray
    running_var: np.ndarray
    momentum: float = BN_MOMENTUM
    eps: float = BN_EPS

    @classmethod
    def create(cls, dim: int, prefix: str) -> "BatchNormState":
        gamma = Tensor(np.ones(dim), requires_grad=True, name=f"{prefix}.weight")
        beta = zeros(dim, name=f"{prefix}.bias")
        return cls(gamma, beta, np.zeros(dim), np.ones(dim))


def gcn_layer(h: Tensor, adjacency, w: Tensor, b: Tensor) -> Tensor:
    """Â·H·W + b for one graph (n, d) or a stack of graphs (B, n, d)."""
    h = ops.as_tensor(h)
    adjacency = ops.as_tensor(adjacency)
    if adjacency.shape[-1] != h.shape[-2] or adjacency.shape[-2] != adjacency.shape[-1]:
        raise ShapeMismatch("gcn_layer", adjacency.shape, h.shape)
    return ops.add(ops.matmul(ops.matmul(adjacency, h), w), b)


def batch_norm(h: Tensor, bn: BatchNormState, mode: str, axis=-2) -> Tensor:
    """Per-channel normalization over ``axis`` (the node axis by default).

    Train mode normalizes with the statistics of ``h`` and folds them into
    the running estimates; eval mode uses the running estimates and leaves
    the state untouched.
    """
    h = ops.as_tensor(h)
    if mode == "train":
        axes = (axis,) if isinstance(axis, int) else tuple(axis)
        axes = tuple(a % h.ndim for a in axes)
        count = int(np.prod([h.shape[a] for a in axes]))
        if count == 0:
            raise EmptyBatch("batch norm in train mode needs at least one node")
        z = ops.standardize(h, axis=axes if len(axes) > 1 else axes[0], eps=bn.eps)
        mu = h.data.mean(axis=axes, keepdims=True)
        var = ((h.data - mu) ** 2).mean(axis=axes, keepdims=True)
        if count > 1:
            var = var * count / (count - 1)
        channels = h.shape[-1]
        bn.running_mean = (1 - bn.momentum) * bn.running_mean + bn.momentum * mu.reshape(-1, channels).mean(0)
        bn.running_var = (1 - bn.momentum) * bn.running_var + bn.momentum * var.reshape(-1, channels).mean(0)
    elif mode == "eval":
        inv = 1.0 / np.sqrt(bn.running_var + bn.eps)
        z = ops.mul(ops.sub(h, bn.running_mean), inv)
    else:
        raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")
    return ops.add(ops.mul(z, bn.gamma), bn.beta)


def norm_relu(h: Tensor, bn: BatchNormState, mode: str, bias: Tensor, axis=-2) -> Tensor:
    """relu(batch_norm(h + bias)).

    In train mode the normalization cancels a per-channel shift exactly, so
    ``bias`` only enters the running mean and the fused kernel runs on ``h``.
    """
    if mode != "train":
        return ops.relu(batch_norm(ops.add(h, bias), bn, mode, axis))
    h = ops.as_tensor(h)
    axis = axis % h.ndim
    count = h.shape[axis]
    if count == 0:
        raise EmptyBatch("batch norm in train mode needs at least one node")
    mu = h.data.mean(axis=axis, keepdims=True)
    var = ((h.data - mu) ** 2).mean(axis=axis, keepdims=True)
    if count > 1:
        var = var * count / (count - 1)
    channels = h.shape[-1]
    batch_mu = mu.reshape(-1, channels).mean(0) + bias.data
    bn.running_mean = (1 - bn.momentum) * bn.running_mean + bn.momentum * batch_mu
    bn.running_var = (1 - bn.momentum) * bn.running_var + bn.momentum * var.reshape(-1, channels).mean(0)
    return ops.norm_affine_relu(h, bn.gamma, bn.beta, axis=axis, eps=bn.eps)


@dataclass
class GcnEncoder:
    w1: Tensor
    b1: Tensor
    w2: Tensor
    b2: Tensor
    w3: Tensor
    b3: Tensor
    bn1: BatchNormState
    bn2: BatchNormState
    bn_stats: str = "batch"  # "graph": per-graph node statistics; "batch": all nodes in the call

    @classmethod
    def create(cls, rng: np.random.Generator, bn_stats: str = "batch") -> "GcnEncoder":
        h1, h2 = HIDDEN
        return cls(
            w1=glorot(rng, N_FEATURES, h1, "gcn1.weight"),
            b1=zeros(h1, name="gcn1.bias"),
            w2=glorot(rng, h1, h2, "gcn2.weight"),
            b2=zeros(h2, name="gcn2.bias"),
            w3=glorot(rng, h2, EMBED_DIM, "lin.weight"),
            b3=zeros(EMBED_DIM, name="lin.bias"),
            bn1=BatchNormState.create(h1, "bn1"),
            bn2=BatchNormState.create(h2, "bn2"),
            bn_stats=bn_stats,
        )

    def parameters(self) -> list[Tensor]:
        return [
            self.w1, self.b1, self.bn1.gamma, self.bn1.beta,
            self.w2, self.b2, self.bn2.gamma, self.bn2.beta,
            self.w3, self.b3,
        ]

    def state(self) -> dict[str, np.ndarray]:
        out = {p.name: p.data for p in self.parameters()}
        for key, bn in (("bn1", self.bn1), ("bn2", self.bn2)):
            out[f"{key}.running_mean"] = bn.running_mean
            out[f"{key}.running_var"] = bn.running_var
        return out

    def load_state(self, state: dict[str, np.ndarray]) -> None:
        for p in self.parameters():
            p.data = np.array(state[p.name], dtype=np.float64)
        for key, bn in (("bn1", self.bn1), ("bn2", self.bn2)):
            bn.running_mean = np.array(state[f"{key}.running_mean"], dtype=np.float64)
            bn.running_var = np.array(state[f"{key}.running_var"], dtype=np.float64)

    def _norm_relu(self, hs: list[Tensor], bn: BatchNormState, bias: Tensor, mode: str) -> list[Tensor]:
        if mode == "eval" or self.bn_stats == "graph":
            return [norm_relu(h, bn, mode, bias) for h in hs]
        # "batch": pool statistics over every node of every graph in the call
        flat = [ops.reshape(h, (-1, h.shape[-1])) for h in hs]
        sizes = [f.shape[0] for f in flat]
        joined = norm_relu(ops.concatenate(flat, axis=0), bn, mode, bias, axis=0)
        out, start = [], 0
        for h, size in zip(hs, sizes):
            out.append(ops.reshape(joined[start:start + size], h.shape))
            start += size
        return out

    def encode_buckets(self, buckets: Sequence[tuple[np.ndarray, np.ndarray]], mode: str) -> list[Tensor]:
        """Embed stacks of equal-size graphs.

        Each bucket is ``(AX, A)`` with ``AX = Â·X`` precomputed, shapes
        (B, n, 5) and (B, n, n), n >= 1.  Returns one (B, 32) tensor per bucket.
        """
        h = [ops.matmul(ax, self.w1) for ax, _ in buckets]
        h = self._norm_relu(h, self.bn1, self.b1, mode)
        h = [ops.matmul(ops.matmul(a, z), self.w2) for z, (_, a) in zip(h, buckets)]
        h = self._norm_relu(h, self.bn2, self.b2, mode)
        # the linear map commutes with the node mean, so pool first
        return [ops.add(ops.matmul(ops.mean(z, axis=-2), self.w3), self.b3) for z in h]


@dataclass(frozen=True)
class FrameEmbedding:
    vector: Tensor
    empty_graph: bool = False


def encode_frame(graph: FrameGraph, encoder: GcnEncoder, mode: str = "eval") -> FrameEmbedding:
    """32-dim embedding of one graph; an empty graph maps to the zero vector."""
    if graph.n_nodes == 0:
        return FrameEmbedding(Tensor(np.zeros(EMBED_DIM)), empty_graph=True)
    a = graph.norm_adjacency
    h = gcn_layer(graph.features, a, encoder.w1, encoder.b1)
    h = ops.relu(batch_norm(h, encoder.bn1, mode))
    h = gcn_layer(h, a, encoder.w2, encoder.b2)
    h = ops.relu(batch_norm(h, encoder.bn2, mode))
    h = ops.add(ops.matmul(h, encoder.w3), encoder.b3)
    return FrameEmbedding(ops.mean(h, axis=0))
