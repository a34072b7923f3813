# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels.

Each function mirrors its twin in ``voxtok._kernels.numpy_backend``
expression for expression so the two backends produce bit-identical output
(the extension is compiled with -ffp-contract=off, so no fused multiply-add
creeps in).  Reductions accumulate in the same fixed order as the fallback's
``np.cumsum`` left fold.
"""

import numpy as np

from libc.math cimport floor, isfinite


def backproject(double[:, ::1] depth, double fx, double fy, double cx,
                double cy, double max_depth):
    cdef Py_ssize_t h = depth.shape[0]
    cdef Py_ssize_t w = depth.shape[1]
    points_arr = np.zeros((h, w, 3), dtype=np.float64)
    valid_arr = np.zeros((h, w), dtype=np.uint8)
    cdef double[:, :, ::1] points = points_arr
    cdef unsigned char[:, ::1] valid = valid_arr
    cdef Py_ssize_t r, c
    cdef double d, dt, xr, yr
    cdef bint ok
    for r in range(h):
        yr = (r - cy) / fy
        for c in range(w):
            d = depth[r, c]
            ok = isfinite(d) and d > 0.0 and d <= max_depth
            dt = d if ok else 0.0
            xr = (c - cx) / fx
            points[r, c, 0] = dt * xr
            points[r, c, 1] = dt * yr
            points[r, c, 2] = dt
            valid[r, c] = 1 if ok else 0
    return points_arr, valid_arr.view(np.bool_)


def transform_points(double[:, ::1] pts, double[:, ::1] rotation,
                     double[::1] translation):
    cdef Py_ssize_t n = pts.shape[0]
    out_arr = np.empty((n, 3), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef double r00 = rotation[0, 0], r01 = rotation[0, 1], r02 = rotation[0, 2]
    cdef double r10 = rotation[1, 0], r11 = rotation[1, 1], r12 = rotation[1, 2]
    cdef double r20 = rotation[2, 0], r21 = rotation[2, 1], r22 = rotation[2, 2]
    cdef double t0 = translation[0], t1 = translation[1], t2 = translation[2]
    cdef Py_ssize_t i
    cdef double x, y, z
    for i in range(n):
        x = pts[i, 0]
        y = pts[i, 1]
        z = pts[i, 2]
        out[i, 0] = r00 * x + r01 * y + r02 * z + t0
        out[i, 1] = r10 * x + r11 * y + r12 * z + t1
        out[i, 2] = r20 * x + r21 * y + r22 * z + t2
    return out_arr


def transform_pointmap(points, rotation, translation):
    h, w, _ = points.shape
    flat = transform_points(points.reshape(h * w, 3), rotation, translation)
    return flat.reshape(h, w, 3)


def patch_reduce_centroid(double[:, :, ::1] points, valid_in,
                          Py_ssize_t patch_h, Py_ssize_t patch_w):
    cdef const unsigned char[:, ::1] valid = valid_in.view(np.uint8)
    cdef Py_ssize_t h = points.shape[0]
    cdef Py_ssize_t w = points.shape[1]
    cdef Py_ssize_t gh = h // patch_h
    cdef Py_ssize_t gw = w // patch_w
    cdef Py_ssize_t n = gh * gw
    anchors_arr = np.zeros((n, 3), dtype=np.float64)
    counts_arr = np.zeros(n, dtype=np.int64)
    cdef double[:, ::1] anchors = anchors_arr
    cdef long long[::1] counts = counts_arr
    cdef Py_ssize_t pr, pc, dr, dc, r, c, idx
    cdef double sx, sy, sz, denom
    cdef long long cnt
    cdef bint ok
    for pr in range(gh):
        for pc in range(gw):
            idx = pr * gw + pc
            sx = 0.0
            sy = 0.0
            sz = 0.0
            cnt = 0
            for dr in range(patch_h):
                r = pr * patch_h + dr
                for dc in range(patch_w):
                    c = pc * patch_w + dc
                    ok = valid[r, c] != 0
                    sx = sx + (points[r, c, 0] if ok else 0.0)
                    sy = sy + (points[r, c, 1] if ok else 0.0)
                    sz = sz + (points[r, c, 2] if ok else 0.0)
                    if ok:
                        cnt = cnt + 1
            counts[idx] = cnt
            if cnt > 0:
                denom = <double> cnt
                anchors[idx, 0] = sx / denom
                anchors[idx, 1] = sy / denom
                anchors[idx, 2] = sz / denom
    return anchors_arr, counts_arr


def patch_center(double[:, :, ::1] points, valid_in, Py_ssize_t patch_h,
                 Py_ssize_t patch_w):
    cdef const unsigned char[:, ::1] valid = valid_in.view(np.uint8)
    cdef Py_ssize_t h = points.shape[0]
    cdef Py_ssize_t w = points.shape[1]
    cdef Py_ssize_t gh = h // patch_h
    cdef Py_ssize_t gw = w // patch_w
    cdef Py_ssize_t n = gh * gw
    anchors_arr = np.zeros((n, 3), dtype=np.float64)
    counts_arr = np.zeros(n, dtype=np.int64)
    cdef double[:, ::1] anchors = anchors_arr
    cdef long long[::1] counts = counts_arr
    cdef Py_ssize_t pr, pc, r, c, idx
    cdef bint ok
    for pr in range(gh):
        for pc in range(gw):
            idx = pr * gw + pc
            r = pr * patch_h + patch_h // 2
            c = pc * patch_w + patch_w // 2
            ok = valid[r, c] != 0
            if ok:
                anchors[idx, 0] = points[r, c, 0]
                anchors[idx, 1] = points[r, c, 1]
                anchors[idx, 2] = points[r, c, 2]
                counts[idx] = 1
    return anchors_arr, counts_arr


def quantize_anchors(double[:, ::1] anchors, double[::1] cell_sizes):
    cdef Py_ssize_t n = anchors.shape[0]
    out_arr = np.empty((n, 3), dtype=np.int64)
    cdef long long[:, ::1] out = out_arr
    cdef Py_ssize_t i, j
    for i in range(n):
        for j in range(3):
            out[i, j] = <long long> floor(anchors[i, j] / cell_sizes[i])
    return out_arr


def majority_vote(const unsigned char[:, ::1] bits, Py_ssize_t window):
    cdef Py_ssize_t t_total = bits.shape[0]
    cdef Py_ssize_t n = bits.shape[1]
    cdef Py_ssize_t half = window // 2
    out_arr = np.empty((t_total, n), dtype=np.uint8)
    cdef unsigned char[:, ::1] out = out_arr
    cdef Py_ssize_t t, i, lo, hi, k
    cdef long long ones, size, twice
    for t in range(t_total):
        lo = t - half
        if lo < 0:
            lo = 0
        hi = t + half
        if hi > t_total - 1:
            hi = t_total - 1
        size = hi - lo + 1
        for i in range(n):
            ones = 0
            for k in range(lo, hi + 1):
                ones = ones + bits[k, i]
            twice = 2 * ones
            if twice > size:
                out[t, i] = 1
            elif twice < size:
                out[t, i] = 0
            else:
                out[t, i] = bits[t, i]
    return out_arr
