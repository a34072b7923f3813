"""The compiled kernels and the numpy fallback must agree bit for bit."""

import numpy as np
import pytest

from voxtok._kernels import available_backends, get_backend

pytestmark = pytest.mark.skipif(
    "native" not in available_backends(),
    reason="compiled extension not built",
)


@pytest.fixture(scope="module")
def backends():
    return get_backend("numpy"), get_backend("native")


def _depth(rng, h=48, w=64):
    depth = rng.uniform(0.1, 12.0, size=(h, w))
    depth[rng.random((h, w)) < 0.1] = np.nan
    depth[rng.random((h, w)) < 0.05] = 0.0
    depth[rng.random((h, w)) < 0.05] = -1.0
    return depth


def test_backproject_parity(backends, rng):
    ref, nat = backends
    for max_depth in (np.inf, 6.0):
        depth = _depth(rng)
        a_pts, a_val = ref.backproject(depth, 30.0, 33.0, 31.5, 23.5, max_depth)
        b_pts, b_val = nat.backproject(depth, 30.0, 33.0, 31.5, 23.5, max_depth)
        np.testing.assert_array_equal(a_val, b_val)
        np.testing.assert_array_equal(a_pts, b_pts)
        assert b_val.dtype == np.bool_


def test_transform_parity(backends, rng):
    ref, nat = backends
    pts = rng.normal(size=(40, 8, 3)) * 5.0
    q, _ = np.linalg.qr(rng.normal(size=(3, 3)))
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    t = rng.normal(size=3)
    np.testing.assert_array_equal(ref.transform_pointmap(pts, q, t),
                                  nat.transform_pointmap(pts, q, t))
    flat = pts.reshape(-1, 3)
    np.testing.assert_array_equal(ref.transform_points(flat, q, t),
                                  nat.transform_points(flat, q, t))


def test_patch_reduce_parity(backends, rng):
    ref, nat = backends
    depth = _depth(rng, 32, 48)
    a_pts, a_val = ref.backproject(depth, 20.0, 21.0, 23.5, 15.5, np.inf)
    for ph, pw in ((8, 8), (16, 16), (4, 12)):
        a_anchor, a_count = ref.patch_reduce_centroid(a_pts, a_val, ph, pw)
        b_anchor, b_count = nat.patch_reduce_centroid(a_pts, a_val, ph, pw)
        np.testing.assert_array_equal(a_count, b_count)
        np.testing.assert_array_equal(a_anchor, b_anchor)
        a_c, a_n = ref.patch_center(a_pts, a_val, ph, pw)
        b_c, b_n = nat.patch_center(a_pts, a_val, ph, pw)
        np.testing.assert_array_equal(a_n, b_n)
        np.testing.assert_array_equal(a_c, b_c)


def test_quantize_parity(backends, rng):
    ref, nat = backends
    anchors = rng.uniform(-30, 30, size=(500, 3))
    sizes = rng.choice([0.125, 0.2, 0.25, 0.5], size=500)
    a = ref.quantize_anchors(anchors, sizes)
    b = nat.quantize_anchors(anchors, sizes)
    np.testing.assert_array_equal(a, b)
    assert b.dtype == np.int64


def test_majority_vote_parity(backends, rng):
    ref, nat = backends
    for window in (1, 3, 5, 9):
        bits = (rng.random((12, 33)) < 0.5).astype(np.uint8)
        a = ref.majority_vote(bits, window)
        b = nat.majority_vote(bits, window)
        np.testing.assert_array_equal(a, b)


def test_full_pipeline_parity_across_backends(rng):
    """End-to-end masks agree when forced onto the fallback in a subprocess."""
    import json
    import os
    import subprocess
    import sys
    import textwrap

    code = textwrap.dedent("""
        import json, sys
        import numpy as np
        from voxtok.harness import generate, preset
        from voxtok.pruning import prune_pipeline
        from voxtok import backend_name
        scene, path = preset("corridor", seed=13)
        traj = generate(scene, path, 8, width=32, height=32, patch_size=8,
                        feature_dim=8)
        masks = prune_pipeline(traj.frames, rho=0.3)
        out = {str(f): m.bits.astype(int).tolist() for f, m in masks.items()}
        print(json.dumps({"backend": backend_name, "masks": out}))
    """)
    results = {}
    for forced in ("0", "1"):
        env = dict(os.environ, VOXTOK_NO_NATIVE=forced)
        proc = subprocess.run([sys.executable, "-c", code], env=env,
                              capture_output=True, text=True, check=True)
        doc = json.loads(proc.stdout)
        results[doc["backend"]] = doc["masks"]
    assert set(results) == {"native", "numpy"}
    assert results["native"] == results["numpy"]
