"""Vectorized numpy implementations of the hot kernels.

Every function here has a compiled twin in ``voxtok._native``.  The two are
kept bit-identical on purpose:

* elementwise arithmetic uses the same expression shapes (same operation
  order, no fused multiply-add on the compiled side),
* reductions that feed downstream decisions accumulate in a fixed order.
  Patch sums add pixel contributions in row-major patch-interior order via
  ``np.cumsum``, which is a strict left fold, unlike ``np.sum`` whose
  pairwise algorithm changes the rounding for longer runs.

Validity masks are ``np.bool_`` arrays throughout.
"""

import numpy as np


def backproject(depth, fx, fy, cx, cy, max_depth):
    """Per-pixel pinhole back-projection of a depth image.

    Returns ``(points, valid)`` where ``points`` is (H, W, 3) float64 in the
    camera frame and ``valid`` marks pixels with finite positive depth not
    exceeding ``max_depth``.  Invalid pixels carry zeros.
    """
    h, w = depth.shape
    u = np.arange(w, dtype=np.float64)
    v = np.arange(h, dtype=np.float64)
    xr = (u - cx) / fx
    yr = (v - cy) / fy
    valid = np.isfinite(depth) & (depth > 0.0) & (depth <= max_depth)
    d = np.where(valid, depth, 0.0)
    points = np.zeros((h, w, 3), dtype=np.float64)
    points[:, :, 0] = d * xr[None, :]
    points[:, :, 1] = d * yr[:, None]
    points[:, :, 2] = d
    return points, valid


def transform_points(points, rotation, translation):
    """Apply a rigid transform to an (N, 3) array of points."""
    x = points[:, 0]
    y = points[:, 1]
    z = points[:, 2]
    r = rotation
    t = translation
    out = np.empty_like(points)
    out[:, 0] = r[0, 0] * x + r[0, 1] * y + r[0, 2] * z + t[0]
    out[:, 1] = r[1, 0] * x + r[1, 1] * y + r[1, 2] * z + t[1]
    out[:, 2] = r[2, 0] * x + r[2, 1] * y + r[2, 2] * z + t[2]
    return out


def transform_pointmap(points, rotation, translation):
    """Rigid transform over an (H, W, 3) point map (every pixel, valid or not)."""
    h, w, _ = points.shape
    flat = transform_points(points.reshape(h * w, 3), rotation, translation)
    return flat.reshape(h, w, 3)


def patch_reduce_centroid(points, valid, patch_h, patch_w):
    """Centroid of valid points in each non-overlapping patch.

    Returns ``(anchors, counts)``: (L, 3) float64 and (L,) int64, with L the
    number of patches in row-major patch order.  Patches without valid points
    get a zero anchor and count 0.  Within a patch, contributions accumulate
    in row-major pixel order.
    """
    h, w, _ = points.shape
    gh = h // patch_h
    gw = w // patch_w
    n = gh * gw
    area = patch_h * patch_w
    pm = (
        points.reshape(gh, patch_h, gw, patch_w, 3)
        .transpose(0, 2, 1, 3, 4)
        .reshape(n, area, 3)
    )
    vm = (
        valid.reshape(gh, patch_h, gw, patch_w)
        .transpose(0, 2, 1, 3)
        .reshape(n, area)
    )
    contrib = np.where(vm[:, :, None], pm, 0.0)
    sums = np.cumsum(contrib, axis=1)[:, -1, :]
    counts = vm.sum(axis=1, dtype=np.int64)
    anchors = np.zeros((n, 3), dtype=np.float64)
    np.divide(sums, counts[:, None].astype(np.float64), out=anchors,
              where=counts[:, None] > 0)
    return anchors, counts


def patch_center(points, valid, patch_h, patch_w):
    """Center-pixel anchor for each patch.

    The anchor is the point at the patch's center pixel
    (row ``patch_h // 2``, column ``patch_w // 2`` inside the patch); a patch
    whose center pixel is invalid yields count 0 even if other pixels are
    valid.
    """
    rc = patch_h // 2
    cc = patch_w // 2
    sub = points[rc::patch_h, cc::patch_w, :]
    m = valid[rc::patch_h, cc::patch_w]
    anchors = np.where(m[:, :, None], sub, 0.0).reshape(-1, 3)
    counts = m.astype(np.int64).reshape(-1)
    return np.ascontiguousarray(anchors), counts


def quantize_anchors(anchors, cell_sizes):
    """Floor-quantize (N, 3) anchors by per-anchor cell sizes to int64 indices."""
    return np.floor(anchors / cell_sizes[:, None]).astype(np.int64)


def majority_vote(bits, window):
    """Per-index majority vote over a centered temporal window.

    ``bits`` is (T, L) uint8; ``window`` is odd.  Edges truncate the window;
    a tied (even truncated) window resolves to the center frame's original
    bit.  Returns (T, L) uint8.
    """
    t_total, n = bits.shape
    half = window // 2
    csum = np.zeros((t_total + 1, n), dtype=np.int64)
    np.cumsum(bits, axis=0, dtype=np.int64, out=csum[1:])
    out = np.empty_like(bits)
    for t in range(t_total):
        lo = max(0, t - half)
        hi = min(t_total - 1, t + half)
        ones = csum[hi + 1] - csum[lo]
        size = hi - lo + 1
        twice = 2 * ones
        out[t] = np.where(twice > size, 1, np.where(twice < size, 0, bits[t]))
    return out
