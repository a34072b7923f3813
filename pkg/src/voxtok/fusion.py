"""Feature-space alignment and multi-head cross-attention (forward only).

``align`` maps geometry-token features into the visual token width with a
single linear projection.  ``cross_attend`` attends a query token matrix
over a key/value token matrix with scaled dot-product attention; softmax
rows are stabilized by subtracting the row maximum before exponentiation.
No residual path, layer norm, or positional encoding is applied.  All
computation is float64 and there are no trainable states here; weights are
plain arrays, loadable from the tensor bundle format in ``voxtok.logio``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from voxtok.errors import NonFinite, ShapeMismatch

DEFAULT_NUM_HEADS = 4


def _check_matrix(name: str, m: np.ndarray) -> np.ndarray:
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2 or m.shape[0] < 1 or m.shape[1] < 1:
        raise ShapeMismatch(f"{name} must be a non-empty 2-D matrix, got {m.shape}")
    return m


def align(geo_tokens: np.ndarray, projection: np.ndarray) -> np.ndarray:
    """Project (L, C_g) geometry features through a (C_g, C_v) linear map."""
    g = _check_matrix("geo_tokens", geo_tokens)
    p = _check_matrix("projection", projection)
    if g.shape[1] != p.shape[0]:
        raise ShapeMismatch(
            f"projection expects width {p.shape[0]}, tokens have {g.shape[1]}")
    return g @ p


@dataclass
class AttentionWeights:
    """Per-head projection weights.

    ``wq``, ``wk``, ``wv`` are (heads, model_dim, head_dim); ``w_out`` is
    (heads * head_dim, model_dim).  head_dim * heads must equal model_dim.
    """

    wq: np.ndarray
    wk: np.ndarray
    wv: np.ndarray
    w_out: np.ndarray

    def __post_init__(self):
        for name in ("wq", "wk", "wv"):
            arr = np.asarray(getattr(self, name), dtype=np.float64)
            if arr.ndim != 3:
                raise ShapeMismatch(f"{name} must be (heads, model, head), got {arr.shape}")
            setattr(self, name, arr)
        self.w_out = np.asarray(self.w_out, dtype=np.float64)
        h, model, head = self.wq.shape
        if self.wk.shape != (h, model, head) or self.wv.shape != (h, model, head):
            raise ShapeMismatch("wq/wk/wv shapes disagree")
        if head * h != model:
            raise ShapeMismatch(
                f"head_dim {head} x heads {h} must equal model_dim {model}")
        if self.w_out.shape != (h * head, model):
            raise ShapeMismatch(
                f"w_out must be ({h * head}, {model}), got {self.w_out.shape}")
        for name in ("wq", "wk", "wv", "w_out"):
            if not np.all(np.isfinite(getattr(self, name))):
                raise NonFinite(f"{name} contains non-finite values")

    @property
    def num_heads(self) -> int:
        return self.wq.shape[0]

    @property
    def model_dim(self) -> int:
        return self.wq.shape[1]

    @property
    def head_dim(self) -> int:
        return self.wq.shape[2]

    @classmethod
    def seeded(cls, model_dim: int, num_heads: int = DEFAULT_NUM_HEADS,
               seed: int = 0) -> "AttentionWeights":
        """Deterministic random weights for a given model width."""
        if model_dim % num_heads:
            raise ShapeMismatch(
                f"model_dim {model_dim} not divisible by {num_heads} heads")
        head_dim = model_dim // num_heads
        rng = np.random.default_rng(seed)
        scale = 1.0 / math.sqrt(model_dim)
        shape = (num_heads, model_dim, head_dim)
        return cls(
            rng.standard_normal(shape) * scale,
            rng.standard_normal(shape) * scale,
            rng.standard_normal(shape) * scale,
            rng.standard_normal((num_heads * head_dim, model_dim)) * scale,
        )

    def save(self, path) -> None:
        from voxtok.logio import write_tensors

        write_tensors(path, {"wq": self.wq, "wk": self.wk, "wv": self.wv,
                             "w_out": self.w_out})

    @classmethod
    def load(cls, path) -> "AttentionWeights":
        from voxtok.logio import read_tensors

        t = read_tensors(path)
        return cls(t["wq"], t["wk"], t["wv"], t["w_out"])


def cross_attend(queries: np.ndarray, keys_values: np.ndarray,
                 weights: AttentionWeights, return_weights: bool = False):
    """Multi-head scaled dot-product cross-attention.

    ``queries`` is (L_q, model_dim), ``keys_values`` is (L_kv, model_dim).
    Per head: softmax(Q Kt / sqrt(head_dim)) V, with the row max subtracted
    inside the softmax.  Head outputs are concatenated and passed through
    ``w_out``.  Returns the (L_q, model_dim) result, plus the
    (heads, L_q, L_kv) attention weights when ``return_weights`` is set.

    Raises NonFinite if any attention logit is non-finite after
    stabilization (e.g. inf or NaN inputs).
    """
    q = _check_matrix("queries", queries)
    kv = _check_matrix("keys_values", keys_values)
    if q.shape[1] != weights.model_dim or kv.shape[1] != weights.model_dim:
        raise ShapeMismatch(
            f"token width must be {weights.model_dim}, got {q.shape[1]} and "
            f"{kv.shape[1]}")
    h = weights.num_heads
    scale = 1.0 / math.sqrt(weights.head_dim)
    contexts = []
    attn_all = np.empty((h, q.shape[0], kv.shape[0]))
    for i in range(h):
        qh = q @ weights.wq[i]
        kh = kv @ weights.wk[i]
        vh = kv @ weights.wv[i]
        logits = (qh @ kh.T) * scale
        shifted = logits - logits.max(axis=1, keepdims=True)
        if not np.all(np.isfinite(shifted)):
            raise NonFinite("attention logits non-finite after stabilization")
        e = np.exp(shifted)
        attn = e / e.sum(axis=1, keepdims=True)
        attn_all[i] = attn
        contexts.append(attn @ vh)
    out = np.concatenate(contexts, axis=1) @ weights.w_out
    if return_weights:
        return out, attn_all
    return out
