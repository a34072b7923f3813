"""Hand-rolled reference computations used only by the tests.

Everything here is written with plain Python loops and math functions so a
test never exercises the library code it is checking.
"""

import math

import numpy as np


def naive_attention(queries, keys_values, wq, wk, wv, w_out):
    """Multi-head cross-attention computed element by element."""
    q = np.asarray(queries, dtype=np.float64)
    kv = np.asarray(keys_values, dtype=np.float64)
    n_heads = len(wq)
    head_dim = wq[0].shape[1]
    scale = 1.0 / math.sqrt(head_dim)
    contexts = []
    all_weights = []
    for h in range(n_heads):
        qh = _matmul(q, wq[h])
        kh = _matmul(kv, wk[h])
        vh = _matmul(kv, wv[h])
        weights = []
        ctx = []
        for i in range(len(qh)):
            logits = []
            for j in range(len(kh)):
                s = 0.0
                for d in range(head_dim):
                    s += qh[i][d] * kh[j][d]
                logits.append(s * scale)
            m = max(logits)
            exps = [math.exp(v - m) for v in logits]
            z = sum(exps)
            row = [e / z for e in exps]
            weights.append(row)
            ctx.append([sum(row[j] * vh[j][d] for j in range(len(kh)))
                        for d in range(head_dim)])
        contexts.append(ctx)
        all_weights.append(weights)
    concat = [[v for h in range(n_heads) for v in contexts[h][i]]
              for i in range(len(q))]
    out = _matmul(np.asarray(concat), np.asarray(w_out))
    return np.asarray(out), np.asarray(all_weights)


def _matmul(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    out = [[sum(float(a[i][k]) * float(b[k][j]) for k in range(a.shape[1]))
            for j in range(b.shape[1])]
           for i in range(a.shape[0])]
    return np.asarray(out)


def point_to_box_surface(p, lo, hi):
    """Distance from a point to the surface of an axis-aligned box.

    Inside the box this is the distance to the nearest face; outside it is
    the distance to the nearest boundary point.
    """
    inside = all(l <= x <= h for x, l, h in zip(p, lo, hi))
    if inside:
        return min(min(x - l, h - x) for x, l, h in zip(p, lo, hi))
    dx = [max(l - x, 0.0, x - h) for x, l, h in zip(p, lo, hi)]
    return math.sqrt(sum(d * d for d in dx))


def distance_to_scene_surfaces(scene, p, step):
    """Distance from a point to the nearest surface in the scene at a step."""
    best = point_to_box_surface(p, scene.room.lo, scene.room.hi)
    for mb in scene.obstacles:
        box = mb.box_at(step)
        best = min(best, point_to_box_surface(p, box.lo, box.hi))
    return best


def count_flips(mask_by_frame):
    """Total bit changes between consecutive frames of a mask dict."""
    fids = sorted(mask_by_frame)
    flips = 0
    for a, b in zip(fids, fids[1:]):
        xs = mask_by_frame[a].bits
        ys = mask_by_frame[b].bits
        for x, y in zip(xs, ys):
            if bool(x) != bool(y):
                flips += 1
    return flips
