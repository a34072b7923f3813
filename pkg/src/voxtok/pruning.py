"""Occupancy-aware token pruning.

The batch pipeline runs in five stages over a recorded trajectory:

1. anchor every token at the world centroid of its depth patch,
2. quantize anchors into adaptive-resolution voxel cells,
3. group all tokens (across frames) by shared cell and keep only the
   representatives chosen by the selection rule,
4. per frame, greedily re-add discarded tokens by importance until the kept
   fraction reaches the keep-ratio floor,
5. smooth the masks over a temporal window by per-index majority vote.

Anchorless tokens (patches without valid depth) are always preserved, are
marked protected, and never participate in voxel competition.  Smoothing can
set and clear bits, but never clears a protected bit and never drops a frame
below its completion floor.

Scoring runs on Python floats with fixed expression shapes, and the feature
norms accumulate in feature order, so results are reproducible bit for bit
against a naive re-implementation of the same rules.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

import numpy as np

from voxtok import geometry
from voxtok._kernels import backend
from voxtok.errors import (
    BadRatio,
    EmptyCell,
    LengthMismatch,
    NonMonotonicFrame,
    ShapeMismatch,
)
from voxtok.records import FrameObservation, TokenRecord
from voxtok.voxel import ResolutionPolicy, VoxelGrid, VoxelIndex, group, quantize_frame

RULE_LATEST = "latest"
RULE_PRIORITY = "priority"
RULE_MULTI = "multitoken"

DEFAULT_PRIORITY_WEIGHTS = (0.5, 0.5)


@dataclass(frozen=True)
class AnchorSettings:
    """How frame tokens are anchored.

    ``patch_size`` 0 infers a square patch tiling from the image shape and
    token count.  ``max_depth`` infinite means no range cutoff.
    """

    patch_size: int = 0
    mode: str = "centroid"
    max_depth: float = math.inf

    def __post_init__(self):
        if self.patch_size < 0:
            raise ValueError("patch_size must be >= 0")
        if self.mode not in ("centroid", "center"):
            raise ValueError(f"unknown anchor mode {self.mode!r}")
        if self.max_depth <= 0.0:
            raise ValueError("max_depth must be positive")


@dataclass(frozen=True)
class SelectionRule:
    """Per-voxel representative selection.

    ``latest`` keeps every token of the newest frame present in the cell.
    ``priority`` keeps the single token maximizing
    w_recency * normalized recency + w_proximity * normalized proximity,
    both normalized min-max within the cell (proximity is inverted range).
    ``multitoken`` keeps the top ``top_k`` tokens by the same priority score.
    Ties always resolve to the higher frame id, then the lower token index.
    """

    kind: str
    w_recency: float = 0.5
    w_proximity: float = 0.5
    top_k: int = 1

    def __post_init__(self):
        if self.kind not in (RULE_LATEST, RULE_PRIORITY, RULE_MULTI):
            raise ValueError(f"unknown selection rule {self.kind!r}")
        if self.w_recency < 0.0 or self.w_proximity < 0.0:
            raise ValueError("priority weights must be non-negative")
        if self.w_recency == 0.0 and self.w_proximity == 0.0:
            raise ValueError("priority weights cannot both be zero")
        if self.top_k < 1:
            raise ValueError("top_k must be >= 1")

    @classmethod
    def latest(cls) -> "SelectionRule":
        return cls(RULE_LATEST)

    @classmethod
    def priority(cls, w_recency: float = 0.5,
                 w_proximity: float = 0.5) -> "SelectionRule":
        return cls(RULE_PRIORITY, w_recency, w_proximity)

    @classmethod
    def multi_token(cls, top_k: int) -> "SelectionRule":
        wr, wp = DEFAULT_PRIORITY_WEIGHTS
        return cls(RULE_MULTI, wr, wp, top_k)


@dataclass(frozen=True)
class CompletionWeights:
    """Importance weights (feature, range, spread, recency); must sum to 1."""

    w_feature: float = 0.3
    w_range: float = 0.3
    w_spread: float = 0.2
    w_recency: float = 0.2

    def __post_init__(self):
        vals = (self.w_feature, self.w_range, self.w_spread, self.w_recency)
        if any(v < 0.0 for v in vals):
            raise ValueError("completion weights must be non-negative")
        if abs(sum(vals) - 1.0) > 1e-9:
            raise ValueError(f"completion weights must sum to 1, got {sum(vals)!r}")


@dataclass
class PruneMask:
    """Per-frame keep mask.  ``protected`` bits (anchorless or re-added by
    completion) are always true and immune to vote-clearing."""

    frame_id: int
    bits: np.ndarray
    protected: np.ndarray

    def __post_init__(self):
        b = np.asarray(self.bits, dtype=bool)
        p = np.asarray(self.protected, dtype=bool)
        if b.shape != p.shape or b.ndim != 1:
            raise LengthMismatch("mask and protected arrays must be equal 1-D")
        if np.any(p & ~b):
            raise ValueError("protected bits must be set in the mask")
        self.bits = b
        self.protected = p

    @property
    def kept(self) -> int:
        return int(self.bits.sum())

    def __len__(self) -> int:
        return self.bits.shape[0]

    def copy(self) -> "PruneMask":
        return PruneMask(self.frame_id, self.bits.copy(), self.protected.copy())


def ordered_feature_norms(features: np.ndarray) -> np.ndarray:
    """Row norms of an (L, C) feature matrix, accumulated in feature order.

    The left-fold accumulation keeps the result identical to a sequential
    sum-of-squares loop, independent of C.
    """
    f = np.asarray(features, dtype=np.float64)
    sq = f * f
    return np.sqrt(np.cumsum(sq, axis=1)[:, -1])


def tokenize_frame(frame: FrameObservation,
                   settings: AnchorSettings = AnchorSettings()) -> list[TokenRecord]:
    """Build the frame's TokenRecords with world anchors and ranges."""
    depth = frame.depth
    if settings.patch_size > 0:
        grid = geometry.TokenGrid(settings.patch_size, settings.patch_size)
    else:
        grid = geometry.TokenGrid.infer(depth.height, depth.width,
                                        frame.token_count)
    expected = grid.token_count(depth.height, depth.width)
    if expected != frame.token_count:
        raise ShapeMismatch(
            f"patch grid yields {expected} tokens but frame {frame.frame_id} "
            f"carries {frame.token_count}"
        )
    pm = geometry.backproject(depth, frame.intrinsics, settings.max_depth)
    ta = geometry.anchor_tokens(pm, frame.pose, grid, settings.mode)
    tokens = []
    for i in range(len(ta)):
        if ta.counts[i] > 0:
            tokens.append(TokenRecord(frame.frame_id, i, frame.features[i],
                                      ta.anchors[i].copy(), float(ta.ranges[i])))
        else:
            tokens.append(TokenRecord(frame.frame_id, i, frame.features[i]))
    return tokens


def median_range(tokens: Sequence[TokenRecord]) -> float:
    """Median range over the anchored tokens (0.0 if there are none).

    Even counts take the midpoint (a + b) / 2 of the two central values.
    """
    ranges = sorted(t.range for t in tokens if t.anchored)
    n = len(ranges)
    if n == 0:
        return 0.0
    m = n // 2
    if n % 2:
        return ranges[m]
    return (ranges[m - 1] + ranges[m]) / 2.0


def assign_cells(tokens: Sequence[TokenRecord], policy: ResolutionPolicy) -> None:
    """Quantize one frame's anchored tokens in place (fills ``token.cell``)."""
    anchored = [t for t in tokens if t.anchored]
    if not anchored:
        return
    med = median_range(anchored)
    anchors = np.stack([t.anchor for t in anchored])
    ranges = np.array([t.range for t in anchored], dtype=np.float64)
    indices, bands = quantize_frame(anchors, ranges, med, policy)
    for t, row, band in zip(anchored, indices, bands):
        t.cell = VoxelIndex(int(row[0]), int(row[1]), int(row[2]), int(band))


def _priority_scores(tokens: Sequence[TokenRecord], w_recency: float,
                     w_proximity: float) -> list[float]:
    min_f = min(t.frame_id for t in tokens)
    max_f = max(t.frame_id for t in tokens)
    min_r = min(t.range for t in tokens)
    max_r = max(t.range for t in tokens)
    scores = []
    for t in tokens:
        if max_f == min_f:
            recency = 1.0
        else:
            recency = (t.frame_id - min_f) / (max_f - min_f)
        if max_r == min_r:
            proximity = 1.0
        else:
            proximity = 1.0 - (t.range - min_r) / (max_r - min_r)
        scores.append(w_recency * recency + w_proximity * proximity)
    return scores


def select(cell_tokens: Sequence[TokenRecord],
           rule: SelectionRule) -> list[TokenRecord]:
    """Pick a cell's representative tokens under the selection rule.

    Returns the winners sorted by (frame_id, token_index).  Raises EmptyCell
    on an empty input.
    """
    if not cell_tokens:
        raise EmptyCell("selection rule applied to an empty cell")
    tokens = sorted(cell_tokens, key=TokenRecord.sort_key)
    if rule.kind == RULE_LATEST:
        newest = tokens[-1].frame_id
        return [t for t in tokens if t.frame_id == newest]
    scores = _priority_scores(tokens, rule.w_recency, rule.w_proximity)
    order = sorted(
        range(len(tokens)),
        key=lambda i: (-scores[i], -tokens[i].frame_id, tokens[i].token_index),
    )
    k = 1 if rule.kind == RULE_PRIORITY else rule.top_k
    return sorted((tokens[i] for i in order[:k]), key=TokenRecord.sort_key)


def apply_selection(
    grid: VoxelGrid,
    rule: SelectionRule,
    frame_sizes: Mapping[int, int],
    anchorless: Optional[Mapping[int, Sequence[int]]] = None,
) -> dict[int, PruneMask]:
    """Initial per-frame masks: selected representatives plus anchorless bits."""
    masks = {}
    for fid in frame_sizes:
        n = frame_sizes[fid]
        masks[fid] = PruneMask(fid, np.zeros(n, dtype=bool), np.zeros(n, dtype=bool))
    for cell_tokens in grid.cells.values():
        for t in select(cell_tokens, rule):
            masks[t.frame_id].bits[t.token_index] = True
    if anchorless:
        for fid, indices in anchorless.items():
            for i in indices:
                masks[fid].bits[i] = True
                masks[fid].protected[i] = True
    return masks


def _distance(a, b) -> float:
    dx = a[0] - b[0]
    dy = a[1] - b[1]
    dz = a[2] - b[2]
    return math.sqrt(dx * dx + dy * dy + dz * dz)


def importance(
    token: TokenRecord,
    kept_anchors: Sequence[np.ndarray],
    frame_window: tuple[int, int],
    range_window: tuple[float, float],
    weights: CompletionWeights,
    frame_max_norm: Optional[float] = None,
    spread_norm: Optional[float] = None,
) -> float:
    """Completion score in [0, 1] for a discarded token.

    Four components, each in [0, 1]:

    * feature magnitude: token norm / ``frame_max_norm``,
    * range: inverted min-max normalized range over ``range_window``,
    * spread: min distance to any kept anchor, normalized by
      ``spread_norm`` (the frame's max such distance over the candidate
      population); 1.0 when no anchors are kept yet,
    * recency: min-max normalized frame id over ``frame_window``.

    Any degenerate normalization window contributes 1.0.
    """
    norm = float(ordered_feature_norms(token.feature[None, :])[0])
    if frame_max_norm is None or frame_max_norm <= 0.0:
        fm = 1.0
    else:
        fm = norm / frame_max_norm
    min_r, max_r = range_window
    if max_r == min_r:
        ri = 1.0
    else:
        ri = 1.0 - (token.range - min_r) / (max_r - min_r)
    if not kept_anchors:
        sd = 1.0
    else:
        dmin = min(_distance(token.anchor, a) for a in kept_anchors)
        if spread_norm is None or spread_norm == 0.0:
            sd = 1.0
        else:
            sd = dmin / spread_norm
    min_f, max_f = frame_window
    if max_f == min_f:
        tr = 1.0
    else:
        tr = (token.frame_id - min_f) / (max_f - min_f)
    return (weights.w_feature * fm + weights.w_range * ri
            + weights.w_spread * sd + weights.w_recency * tr)


def completion_target(rho: float, token_count: int) -> int:
    """Minimum kept tokens for a frame: ceil(rho * L)."""
    return math.ceil(rho * token_count)


def complete(mask: PruneMask, frame_tokens: Sequence[TokenRecord], rho: float,
             weights: CompletionWeights = CompletionWeights()) -> PruneMask:
    """Greedily re-add discarded tokens until the kept floor is met.

    Never clears a bit.  Each added bit becomes protected.  The spread term
    (and its normalizer) is recomputed after every addition; the recency
    window is the frame's own id, so recency contributes a constant 1.0.
    Ties go to the lower token index.  Raises BadRatio unless 0 < rho <= 1.
    """
    if not 0.0 < rho <= 1.0:
        raise BadRatio(f"keep ratio must be in (0, 1], got {rho!r}")
    out = mask.copy()
    n = len(frame_tokens)
    if len(out) != n:
        raise LengthMismatch("mask length does not match frame token count")
    target = completion_target(rho, n)
    kept = out.kept
    if kept >= target:
        return out
    norms = ordered_feature_norms(np.stack([t.feature for t in frame_tokens]))
    frame_max_norm = float(norms.max()) if n else 0.0
    anchored_ranges = [t.range for t in frame_tokens if t.anchored]
    if anchored_ranges:
        range_window = (min(anchored_ranges), max(anchored_ranges))
    else:
        range_window = (0.0, 0.0)
    candidates = [t for t in frame_tokens
                  if t.anchored and not out.bits[t.token_index]]
    while kept < target and candidates:
        kept_anchors = [t.anchor for t in frame_tokens
                        if t.anchored and out.bits[t.token_index]]
        if kept_anchors:
            dmins = [min(_distance(t.anchor, a) for a in kept_anchors)
                     for t in candidates]
            spread_norm = max(dmins)
        else:
            dmins = [0.0] * len(candidates)
            spread_norm = 0.0
        best_pos = None
        best_score = None
        for pos, t in enumerate(candidates):
            if frame_max_norm <= 0.0:
                fm = 1.0
            else:
                fm = float(norms[t.token_index]) / frame_max_norm
            min_r, max_r = range_window
            if max_r == min_r:
                ri = 1.0
            else:
                ri = 1.0 - (t.range - min_r) / (max_r - min_r)
            if not kept_anchors:
                sd = 1.0
            elif spread_norm == 0.0:
                sd = 1.0
            else:
                sd = dmins[pos] / spread_norm
            score = (weights.w_feature * fm + weights.w_range * ri
                     + weights.w_spread * sd + weights.w_recency * 1.0)
            if best_score is None or score > best_score:
                best_score = score
                best_pos = pos
        chosen = candidates.pop(best_pos)
        out.bits[chosen.token_index] = True
        out.protected[chosen.token_index] = True
        kept += 1
    return out


def smooth(masks: Sequence[PruneMask], window: int = 3,
           floor_targets: Optional[Mapping[int, int]] = None) -> list[PruneMask]:
    """Temporal majority-vote smoothing of a mask sequence.

    Each output bit is the majority over the centered window of input bits
    (edges truncate; a tied truncated window keeps the center's original
    bit).  Vote outcomes that would set a bit are always applied.  Vote
    outcomes that would clear a bit are skipped for protected bits, and are
    applied in ascending token-index order only while the frame's kept count
    stays at or above its floor target (sets are counted first).

    Raises LengthMismatch if mask lengths differ, NonMonotonicFrame if the
    sequence is not ordered by frame id, ValueError for an even window.
    """
    if window < 1 or window % 2 == 0:
        raise ValueError(f"smoothing window must be odd and >= 1, got {window}")
    if not masks:
        return []
    n = len(masks[0])
    for m in masks:
        if len(m) != n:
            raise LengthMismatch(
                f"frame {m.frame_id} has {len(m)} tokens, expected {n}")
    ids = [m.frame_id for m in masks]
    if any(b <= a for a, b in zip(ids, ids[1:])):
        raise NonMonotonicFrame("masks must be ordered by increasing frame id")
    bits = np.stack([m.bits for m in masks]).astype(np.uint8)
    votes = backend.majority_vote(np.ascontiguousarray(bits), window)
    out = []
    for t, m in enumerate(masks):
        old = m.bits
        new = votes[t].astype(bool)
        new |= old & m.protected
        target = floor_targets.get(m.frame_id, 0) if floor_targets else 0
        if target > 0:
            sets = new & ~old
            clears = np.flatnonzero(old & ~new)
            count = int(old.sum()) + int(sets.sum())
            allowed = count - target
            if allowed < len(clears):
                denied = clears[max(allowed, 0):]
                new[denied] = True
        out.append(PruneMask(m.frame_id, new, m.protected.copy()))
    return out


@dataclass
class PipelineResult:
    """Batch pruning output with per-stage masks for inspection."""

    masks: dict[int, PruneMask]
    selection_masks: dict[int, PruneMask]
    completed_masks: dict[int, PruneMask]
    tokens: dict[int, list[TokenRecord]]
    grid: VoxelGrid
    floor_targets: dict[int, int] = field(default_factory=dict)

    def survivors(self) -> dict[int, list[TokenRecord]]:
        return {
            fid: [t for t in toks if self.masks[fid].bits[t.token_index]]
            for fid, toks in self.tokens.items()
        }


def prune_pipeline(
    frames: Sequence[FrameObservation],
    policy: ResolutionPolicy = ResolutionPolicy(),
    rule: SelectionRule = SelectionRule.latest(),
    rho: float = 0.1,
    weights: CompletionWeights = CompletionWeights(),
    *,
    smooth_window: int = 3,
    anchor_settings: AnchorSettings = AnchorSettings(),
    return_details: bool = False,
):
    """Run the full batch pruning pipeline over a trajectory.

    Frames must carry strictly increasing ids.  ``rho`` may be 0 to disable
    the completion stage entirely (``complete`` itself rejects 0).  Returns
    the final ``{frame_id: PruneMask}`` map, or a PipelineResult when
    ``return_details`` is set.
    """
    ids = [f.frame_id for f in frames]
    if any(b <= a for a, b in zip(ids, ids[1:])):
        raise NonMonotonicFrame("pipeline frames must have increasing ids")
    if not 0.0 <= rho <= 1.0:
        raise BadRatio(f"keep ratio must be in [0, 1], got {rho!r}")
    tokens: dict[int, list[TokenRecord]] = {}
    anchorless: dict[int, list[int]] = {}
    for frame in frames:
        toks = tokenize_frame(frame, anchor_settings)
        assign_cells(toks, policy)
        tokens[frame.frame_id] = toks
        anchorless[frame.frame_id] = [t.token_index for t in toks if not t.anchored]
    grid = group(t for fid in tokens for t in tokens[fid] if t.anchored)
    frame_sizes = {fid: len(toks) for fid, toks in tokens.items()}
    sel_masks = apply_selection(grid, rule, frame_sizes, anchorless)
    completed: dict[int, PruneMask] = {}
    targets: dict[int, int] = {}
    for fid, toks in tokens.items():
        if rho > 0.0:
            completed[fid] = complete(sel_masks[fid], toks, rho, weights)
            targets[fid] = completion_target(rho, len(toks))
        else:
            completed[fid] = sel_masks[fid].copy()
            targets[fid] = 0
    ordered = [completed[fid] for fid in sorted(completed)]
    final = smooth(ordered, smooth_window, floor_targets=targets)
    masks = {m.frame_id: m for m in final}
    if not return_details:
        return masks
    return PipelineResult(masks, sel_masks, completed, tokens, grid, targets)
