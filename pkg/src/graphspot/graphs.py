"""Frame -> proximity graph: node features, edges and normalized adjacency."""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from . import kernels
from .data import EntityKind, TrackedFrame

EDGE_RADIUS_M = 25.0
N_FEATURES = 5


@dataclass(frozen=True, eq=False)
class FrameGraph:
    features: np.ndarray  # (n, 5): x_norm, y_norm, one-hot TeamA / TeamB / Ball
    edges: frozenset[tuple[int, int]]
    norm_adjacency: np.ndarray  # (n, n)

    @property
    def n_nodes(self) -> int:
        return self.features.shape[0]

    def to_json(self) -> str:
        """Debug dump for inspection."""
        return json.dumps(
            {
                "nodes": self.n_nodes,
                "edges": sorted(list(e) for e in self.edges),
                "features": self.features.tolist(),
            }
        )


def normalize_position(x_m, y_m, pitch_length_m: float, pitch_width_m: float):
    """Map meters to [-0.5, 0.5] by pitch size, clamping overshoot."""
    x = np.clip(np.asarray(x_m, dtype=np.float64) / pitch_length_m, -0.5, 0.5)
    y = np.clip(np.asarray(y_m, dtype=np.float64) / pitch_width_m, -0.5, 0.5)
    if x.ndim == 0:
        return float(x), float(y)
    return x, y


def node_features(kinds: np.ndarray, positions: np.ndarray, pitch_length_m: float, pitch_width_m: float) -> np.ndarray:
    """Feature rows for arrays of kinds (..., n) and positions (..., n, 2)."""
    kinds = np.asarray(kinds)
    feats = np.zeros(kinds.shape + (N_FEATURES,))
    x, y = normalize_position(positions[..., 0], positions[..., 1], pitch_length_m, pitch_width_m)
    feats[..., 0] = x
    feats[..., 1] = y
    for kind in EntityKind:
        feats[..., 2 + int(kind)] = kinds == kind
    return feats


def degree_normalize(adjacency: np.ndarray) -> np.ndarray:
    """D^-1/2 A D^-1/2 for a 0/1 adjacency that already carries self-loops."""
    a = np.asarray(adjacency, dtype=np.float64)
    inv = 1.0 / np.sqrt(a.sum(axis=-1))
    return a * inv[..., :, None] * inv[..., None, :]


def edge_set(positions: np.ndarray, radius: float = EDGE_RADIUS_M) -> frozenset[tuple[int, int]]:
    n = len(positions)
    diff = positions[:, None, :] - positions[None, :, :]
    close = (diff * diff).sum(-1) < radius * radius
    return frozenset((i, j) for i in range(n) for j in range(i + 1, n) if close[i, j])


def build_graph(
    frame: TrackedFrame,
    pitch_length_m: float,
    pitch_width_m: float,
    radius: float = EDGE_RADIUS_M,
) -> FrameGraph:
    pos = frame.positions
    n = len(pos)
    feats = node_features(frame.kinds, pos, pitch_length_m, pitch_width_m)
    if n == 0:
        return FrameGraph(feats.reshape(0, N_FEATURES), frozenset(), np.zeros((0, 0)))
    adj = kernels.norm_adjacency(pos[None], radius)[0]
    return FrameGraph(feats, edge_set(pos, radius), adj)
