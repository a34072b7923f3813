"""Bounded sliding-window token memory.

The store keeps the N most recent frames active and untouched.  When a
frame ages out of the window it is folded into the historical side: its
anchored tokens are quantized and compete, per voxel cell, against the
representatives already stored there under the configured selection rule.
Losers are dropped, winners become the cell's representatives, so the
historical store grows with scene extent, not trajectory length.  Anchorless
tokens of the evicted frame bypass voxel competition but are capped per
frame at ceil(rho * frame tokens), lowest token index first.

``advance`` is the single writer; ``snapshot`` and ``budget_report`` read a
consistent state taken at call time.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass
from typing import Optional

from voxtok.errors import NonMonotonicFrame
from voxtok.pruning import (
    AnchorSettings,
    SelectionRule,
    assign_cells,
    select,
    tokenize_frame,
)
from voxtok.records import FrameObservation, TokenRecord
from voxtok.voxel import ResolutionPolicy, VoxelGrid

INSTRUCTION_SLOT = "<instruction>"


@dataclass
class LedgerEntry:
    """Accounting row for one observed frame (append and evict only)."""

    frame_id: int
    token_count: int
    retained: bool


class CacheLedger:
    """Append/evict accounting for the active window."""

    def __init__(self):
        self.entries: list[LedgerEntry] = []

    def append(self, frame_id: int, token_count: int) -> None:
        self.entries.append(LedgerEntry(frame_id, token_count, True))

    def mark_evicted(self, frame_id: int) -> None:
        for entry in reversed(self.entries):
            if entry.frame_id == frame_id:
                entry.retained = False
                return
        raise KeyError(f"frame {frame_id} not in ledger")

    def retained_entries(self) -> list[LedgerEntry]:
        return [e for e in self.entries if e.retained]

    def total_tokens(self) -> int:
        return sum(e.token_count for e in self.entries)

    def __len__(self) -> int:
        return len(self.entries)


@dataclass
class EvictionReport:
    """What happened when a frame aged out of the window."""

    frame_id: int
    token_count: int
    stored: int
    displaced: int


@dataclass
class Snapshot:
    """Deterministic model input order: instruction slot, then historical
    memory tokens (by frame id, token index), then active-frame tokens."""

    instruction_slot: str
    memory_tokens: list[TokenRecord]
    active_tokens: list[TokenRecord]


@dataclass
class BudgetReport:
    active_tokens: int
    memory_tokens: int
    occupied_voxels: int
    reduction_ratio: float


class MemoryStore:
    """Sliding-window active frames plus a voxel-deduplicated history."""

    def __init__(
        self,
        window_size: int = 8,
        policy: ResolutionPolicy = ResolutionPolicy(),
        rule: SelectionRule = SelectionRule.latest(),
        rho: float = 0.1,
        anchor_settings: AnchorSettings = AnchorSettings(),
        dedup_against_active: bool = False,
    ):
        if window_size < 1:
            raise ValueError("window size must be >= 1")
        if not 0.0 <= rho <= 1.0:
            raise ValueError("rho must be in [0, 1]")
        self.window_size = window_size
        self.policy = policy
        self.rule = rule
        self.rho = rho
        self.anchor_settings = anchor_settings
        self.dedup_against_active = dedup_against_active
        self.active: deque[tuple[FrameObservation, list[TokenRecord]]] = deque()
        self.pruned: dict[int, list[TokenRecord]] = {}
        self.grid = VoxelGrid()
        self.ledger = CacheLedger()

    @property
    def last_frame_id(self) -> Optional[int]:
        if self.active:
            return self.active[-1][0].frame_id
        if self.pruned:
            return max(self.pruned)
        return None

    def advance(self, frame: FrameObservation) -> Optional[EvictionReport]:
        """Ingest the next frame; evict and fold the oldest when over N.

        The frame id must be exactly last + 1 (any id is accepted for the
        first frame).  Returns the eviction report, or None while the window
        is still filling.
        """
        last = self.last_frame_id
        if last is not None and frame.frame_id != last + 1:
            raise NonMonotonicFrame(
                f"expected frame {last + 1}, got {frame.frame_id}")
        tokens = tokenize_frame(frame, self.anchor_settings)
        assign_cells(tokens, self.policy)
        self.active.append((frame, tokens))
        self.ledger.append(frame.frame_id, len(tokens))
        if len(self.active) <= self.window_size:
            return None
        old_frame, old_tokens = self.active.popleft()
        self.ledger.mark_evicted(old_frame.frame_id)
        return self._fold(old_frame.frame_id, old_tokens)

    def _fold(self, frame_id: int, tokens: list[TokenRecord]) -> EvictionReport:
        anchored = [t for t in tokens if t.anchored]
        by_cell: dict = {}
        for t in anchored:
            by_cell.setdefault(t.cell, []).append(t)
        active_ids = None
        if self.dedup_against_active:
            active_ids = set()
            for _, atoks in self.active:
                for t in atoks:
                    if t.anchored:
                        active_ids.add(id(t))
        survivors = []
        displaced = 0
        for cell, incoming in by_cell.items():
            existing = self.grid.cells.get(cell, [])
            competitors = existing + incoming
            if self.dedup_against_active:
                for _, atoks in self.active:
                    competitors = competitors + [
                        t for t in atoks if t.anchored and t.cell == cell]
            winners = select(competitors, self.rule)
            if active_ids is not None:
                stored = [t for t in winners if id(t) not in active_ids]
            else:
                stored = winners
            for t in existing:
                if t not in stored:
                    displaced += 1
                    self.pruned[t.frame_id].remove(t)
            self.grid.replace_cell(cell, stored)
            survivors.extend(t for t in stored
                             if t.frame_id == frame_id and t not in existing)
        anchorless = [t for t in tokens if not t.anchored]
        cap = math.ceil(self.rho * len(tokens))
        kept_anchorless = anchorless[:cap]
        entry = sorted(survivors + kept_anchorless, key=TokenRecord.sort_key)
        self.pruned[frame_id] = entry
        return EvictionReport(frame_id, len(tokens), len(entry), displaced)

    def snapshot(self) -> Snapshot:
        memory = []
        for fid in sorted(self.pruned):
            memory.extend(self.pruned[fid])
        active = []
        for _, tokens in self.active:
            active.extend(tokens)
        return Snapshot(INSTRUCTION_SLOT, memory, active)

    def budget_report(self) -> BudgetReport:
        active_tokens = sum(len(toks) for _, toks in self.active)
        memory_tokens = sum(len(v) for v in self.pruned.values())
        total = self.ledger.total_tokens()
        retained = active_tokens + memory_tokens
        ratio = retained / total if total > 0 else 1.0
        return BudgetReport(active_tokens, memory_tokens, self.grid.occupied(),
                            ratio)
