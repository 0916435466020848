# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled versions of the loop-heavy kernels; see ``_kernels_py`` for the reference."""

import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, fabs, INFINITY

cnp.import_array()


def norm_adjacency(positions, double radius):
    cdef double[:, :, ::1] pos = np.ascontiguousarray(positions, dtype=np.float64)
    cdef Py_ssize_t n_frames = pos.shape[0], n = pos.shape[1]
    out_arr = np.zeros((n_frames, n, n), dtype=np.float64)
    cdef double[:, :, ::1] out = out_arr
    cdef double[::1] deg = np.empty(n, dtype=np.float64)
    cdef double r2 = radius * radius, dx, dy, w
    cdef Py_ssize_t f, i, j
    for f in range(n_frames):
        for i in range(n):
            deg[i] = 1.0
            out[f, i, i] = 1.0
        for i in range(n):
            for j in range(i + 1, n):
                dx = pos[f, i, 0] - pos[f, j, 0]
                dy = pos[f, i, 1] - pos[f, j, 1]
                if dx * dx + dy * dy < r2:
                    out[f, i, j] = 1.0
                    out[f, j, i] = 1.0
                    deg[i] += 1.0
                    deg[j] += 1.0
        for i in range(n):
            deg[i] = 1.0 / sqrt(deg[i])
        for i in range(n):
            for j in range(n):
                if out[f, i, j] != 0.0:
                    out[f, i, j] = deg[i] * deg[j]
    return out_arr


def nms_order(times, confs):
    return np.lexsort((np.asarray(times, dtype=np.float64), -np.asarray(confs, dtype=np.float64)))


def nms_1d(times, confs, double window):
    cdef double[::1] t = np.ascontiguousarray(times, dtype=np.float64)
    cdef Py_ssize_t[::1] order = nms_order(times, confs).astype(np.intp)
    cdef Py_ssize_t n = t.shape[0], k, i, j, n_keep = 0
    keep_arr = np.empty(n, dtype=np.int64)
    cdef long long[::1] keep = keep_arr
    cdef bint ok
    for k in range(n):
        i = order[k]
        ok = True
        for j in range(n_keep):
            if fabs(t[i] - t[keep[j]]) < window:
                ok = False
                break
        if ok:
            keep[n_keep] = i
            n_keep += 1
    return keep_arr[:n_keep].copy()


def greedy_match(pred_times, gt_times, double half_width):
    cdef double[::1] pt = np.ascontiguousarray(pred_times, dtype=np.float64)
    cdef double[::1] gt = np.ascontiguousarray(gt_times, dtype=np.float64)
    cdef Py_ssize_t n_p = pt.shape[0], n_g = gt.shape[0], p, g, best
    used_arr = np.zeros(n_g, dtype=np.uint8)
    cdef unsigned char[::1] used = used_arr
    flags_arr = np.zeros(n_p, dtype=np.int8)
    cdef signed char[::1] flags = flags_arr
    cdef double d, best_d
    for p in range(n_p):
        best = -1
        best_d = INFINITY
        for g in range(n_g):
            if used[g]:
                continue
            d = fabs(pt[p] - gt[g])
            if d <= half_width and (d < best_d or (d == best_d and gt[g] < gt[best])):
                best = g
                best_d = d
        if best >= 0:
            used[best] = 1
            flags[p] = 1
    return flags_arr
