import numpy as np
import pytest

import reference
from voxtok.errors import NonFinite, ShapeMismatch
from voxtok.fusion import AttentionWeights, align, cross_attend


def test_align_is_plain_projection(rng):
    geo = rng.normal(size=(7, 12))
    proj = rng.normal(size=(12, 5))
    np.testing.assert_array_equal(align(geo, proj), geo @ proj)
    with pytest.raises(ShapeMismatch):
        align(geo, rng.normal(size=(11, 5)))


def test_weights_shape_contract():
    w = AttentionWeights.seeded(16, num_heads=4, seed=0)
    assert w.num_heads == 4
    assert w.model_dim == 16
    assert w.head_dim == 4
    with pytest.raises(ShapeMismatch):
        AttentionWeights(w.wq[:, :, :3], w.wk, w.wv, w.w_out)
    bad_out = np.zeros((15, 16))
    with pytest.raises(ShapeMismatch):
        AttentionWeights(w.wq, w.wk, w.wv, bad_out)
    with pytest.raises(NonFinite):
        AttentionWeights(w.wq * np.inf, w.wk, w.wv, w.w_out)


def test_matches_naive_attention(rng):
    for seed in range(4):
        w = AttentionWeights.seeded(8, num_heads=2, seed=seed)
        q = rng.normal(size=(5, 8))
        kv = rng.normal(size=(9, 8))
        out, attn = cross_attend(q, kv, w, return_weights=True)
        ref_out, ref_attn = reference.naive_attention(q, kv, w.wq, w.wk,
                                                      w.wv, w.w_out)
        assert np.abs(out - ref_out).max() < 1e-10
        assert np.abs(attn - ref_attn).max() < 1e-10


def test_attention_rows_sum_to_one(rng):
    w = AttentionWeights.seeded(12, num_heads=3, seed=7)
    q = rng.normal(size=(6, 12)) * 40.0  # large logits stress the softmax
    kv = rng.normal(size=(11, 12)) * 40.0
    _, attn = cross_attend(q, kv, w, return_weights=True)
    assert np.abs(attn.sum(axis=2) - 1.0).max() < 1e-12


def test_single_key_attention_is_exact(rng):
    w = AttentionWeights.seeded(8, num_heads=2, seed=1)
    q = rng.normal(size=(4, 8))
    kv = rng.normal(size=(1, 8))
    out, attn = cross_attend(q, kv, w, return_weights=True)
    assert (attn == 1.0).all()
    vh = [kv @ w.wv[h] for h in range(2)]
    concat = np.concatenate([np.repeat(vh[h], 4, axis=0) for h in range(2)],
                            axis=1)
    np.testing.assert_array_equal(out, concat @ w.w_out)


def test_non_finite_inputs_rejected(rng):
    w = AttentionWeights.seeded(8, num_heads=2, seed=2)
    q = rng.normal(size=(3, 8))
    kv = rng.normal(size=(4, 8))
    q[0, 0] = np.nan
    with pytest.raises(NonFinite):
        cross_attend(q, kv, w)


def test_weight_bundle_roundtrip(tmp_path, rng):
    w = AttentionWeights.seeded(16, num_heads=4, seed=9)
    path = tmp_path / "weights.dgvb"
    w.save(path)
    back = AttentionWeights.load(path)
    for a, b in ((w.wq, back.wq), (w.wk, back.wk), (w.wv, back.wv),
                 (w.w_out, back.w_out)):
        np.testing.assert_array_equal(a, b)


def test_seeded_weights_are_reproducible():
    a = AttentionWeights.seeded(8, num_heads=2, seed=5)
    b = AttentionWeights.seeded(8, num_heads=2, seed=5)
    np.testing.assert_array_equal(a.wq, b.wq)
    c = AttentionWeights.seeded(8, num_heads=2, seed=6)
    assert not np.array_equal(a.wq, c.wq)
