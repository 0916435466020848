"""Precomputed graph inputs for every frame of a set of matches.

Frames are grouped by node count so each group encodes as one dense stack.
Layer-1 propagation ``Â·X`` has no learned part and is computed here once.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .data import TrackedMatch
from .encoder import EMBED_DIM, GcnEncoder
from .graphs import EDGE_RADIUS_M, node_features
from . import kernels
from .numeric import Tensor, ops


class FrameBank:
    def __init__(self, matches: Sequence[TrackedMatch], radius: float = EDGE_RADIUS_M):
        self.match_ids = [m.match_id for m in matches]
        self.offsets = np.zeros(len(matches) + 1, dtype=np.int64)
        sizes = [m.n_positions for m in matches]
        self.offsets[1:] = np.cumsum(sizes)
        total = int(self.offsets[-1])
        self.node_count = np.zeros(total, dtype=np.int64)
        self.slot = np.zeros(total, dtype=np.int64)
        grouped: dict[int, tuple[list, list]] = {}
        for m_i, match in enumerate(matches):
            base = int(self.offsets[m_i])
            for frame in match.frames:
                gid = base + frame.frame_index
                n = len(frame.entities)
                self.node_count[gid] = n
                if n == 0:
                    continue
                feats = node_features(frame.kinds, frame.positions, match.pitch_length_m, match.pitch_width_m)
                bucket = grouped.setdefault(n, ([], [], []))
                self.slot[gid] = len(bucket[0])
                bucket[0].append(feats)
                bucket[1].append(frame.positions)
                bucket[2].append(gid)
        self.buckets: dict[int, tuple[np.ndarray, np.ndarray]] = {}
        for n in sorted(grouped):
            feats, positions, _ = grouped[n]
            adj = kernels.norm_adjacency(np.stack(positions), radius)
            x = np.stack(feats)
            self.buckets[n] = (adj @ x, adj)

    def __len__(self) -> int:
        return int(self.offsets[-1])

    def global_ids(self, match_index: int, positions) -> np.ndarray:
        return self.offsets[match_index] + np.asarray(positions, dtype=np.int64)

    def embed(self, encoder: GcnEncoder, frame_ids, mode: str) -> Tensor:
        """Embeddings shaped ``frame_ids.shape + (32,)``; each distinct frame is encoded once."""
        frame_ids = np.asarray(frame_ids, dtype=np.int64)
        uniq, inverse = np.unique(frame_ids, return_inverse=True)
        counts = self.node_count[uniq]
        parts, inputs, order = [], [], []
        for n in sorted(set(counts.tolist()) - {0}):
            sel = np.nonzero(counts == n)[0]
            slots = self.slot[uniq[sel]]
            ax, adj = self.buckets[n]
            inputs.append((ax[slots], adj[slots]))
            order.append(sel)
        if inputs:
            parts.extend(encoder.encode_buckets(inputs, mode))
        empty = np.nonzero(counts == 0)[0]
        if len(empty):
            parts.append(Tensor(np.zeros((len(empty), EMBED_DIM))))
            order.append(empty)
        rows = np.empty(len(uniq), dtype=np.int64)
        rows[np.concatenate(order)] = np.arange(len(uniq))
        table = parts[0] if len(parts) == 1 else ops.concatenate(parts, axis=0)
        return ops.take(table, rows[inverse].reshape(frame_ids.shape), axis=0)
