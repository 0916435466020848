"""Pure-Python/numpy versions of the compiled kernels in ``_kernels.pyx``.

Both modules expose the same three functions with identical results; the
package picks the compiled one when it is importable.
"""

from __future__ import annotations

import numpy as np


def norm_adjacency(positions: np.ndarray, radius: float) -> np.ndarray:
    """Symmetric-normalized adjacency with self-loops for a stack of frames.

    ``positions`` is (frames, nodes, 2) in meters.  Nodes closer than
    ``radius`` (strictly) are connected.
    """
    pos = np.ascontiguousarray(positions, dtype=np.float64)
    n_frames, n, _ = pos.shape
    diff = pos[:, :, None, :] - pos[:, None, :, :]
    dist2 = (diff * diff).sum(axis=-1)
    adj = (dist2 < radius * radius).astype(np.float64)
    idx = np.arange(n)
    adj[:, idx, idx] = 1.0
    deg = adj.sum(axis=-1)
    inv = 1.0 / np.sqrt(deg)
    return adj * inv[:, :, None] * inv[:, None, :]


def nms_order(times: np.ndarray, confs: np.ndarray) -> np.ndarray:
    """Descending confidence, earlier time first on ties."""
    return np.lexsort((times, -confs))


def nms_1d(times: np.ndarray, confs: np.ndarray, window: float) -> np.ndarray:
    """Indices of greedy NMS survivors, in selection order.

    Points strictly closer than ``window`` to a kept point are dropped.
    """
    times = np.asarray(times, dtype=np.float64)
    confs = np.asarray(confs, dtype=np.float64)
    order = nms_order(times, confs)
    by_time = np.argsort(times, kind="stable")
    sorted_t = times[by_time]
    alive = np.ones(len(times), dtype=bool)
    keep = []
    for i in order:
        if not alive[i]:
            continue
        keep.append(i)
        t = times[i]
        lo = np.searchsorted(sorted_t, t - window, side="right")
        hi = np.searchsorted(sorted_t, t + window, side="left")
        alive[by_time[lo:hi]] = False
    return np.asarray(keep, dtype=np.int64)


def greedy_match(pred_times: np.ndarray, gt_times: np.ndarray, half_width: float) -> np.ndarray:
    """TP flags for predictions already sorted by descending confidence.

    Each prediction claims the nearest unmatched ground truth within
    ``half_width`` (inclusive), the earlier one on distance ties.
    """
    gt = np.asarray(gt_times, dtype=np.float64)
    used = np.zeros(len(gt), dtype=bool)
    flags = np.zeros(len(pred_times), dtype=np.int8)
    for p, t in enumerate(pred_times):
        best = -1
        best_d = np.inf
        for g in range(len(gt)):
            if used[g]:
                continue
            d = abs(t - gt[g])
            if d <= half_width and (d < best_d or (d == best_d and gt[g] < gt[best])):
                best, best_d = g, d
        if best >= 0:
            used[best] = True
            flags[p] = 1
    return flags
