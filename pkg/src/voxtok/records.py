"""Shared data records: per-frame observations and per-token entries."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Optional

import numpy as np

from voxtok.errors import ShapeMismatch
from voxtok.geometry import DepthMap, Intrinsics, Pose

if TYPE_CHECKING:
    from voxtok.voxel import VoxelIndex


@dataclass
class FrameObservation:
    """One input frame: depth image, intrinsics, pose, and token features.

    ``features`` is (L, C) float32 with one row per token in row-major patch
    order.  The patch tiling itself is configured (or inferred) downstream.
    """

    frame_id: int
    depth: DepthMap
    intrinsics: Intrinsics
    pose: Pose
    features: np.ndarray

    def __post_init__(self):
        if self.frame_id < 0:
            raise ValueError("frame id must be non-negative")
        f = np.ascontiguousarray(self.features, dtype=np.float32)
        if f.ndim != 2 or f.shape[0] < 1 or f.shape[1] < 1:
            raise ShapeMismatch(f"features must be (L, C) with L, C >= 1, got {f.shape}")
        self.features = f

    @property
    def token_count(self) -> int:
        return self.features.shape[0]

    @property
    def feature_dim(self) -> int:
        return self.features.shape[1]


@dataclass(eq=False)
class TokenRecord:
    """One token with its provenance and (optional) world anchor.

    ``anchor`` is None for anchorless tokens (no valid depth in the token's
    patch); such tokens are always preserved and never enter a voxel cell.
    ``cell`` is filled in once the token has been quantized.  Records compare
    by identity, never by value.
    """

    frame_id: int
    token_index: int
    feature: np.ndarray
    anchor: Optional[np.ndarray] = None
    range: Optional[float] = None
    cell: Optional["VoxelIndex"] = field(default=None, repr=False)

    @property
    def anchored(self) -> bool:
        return self.anchor is not None

    def sort_key(self) -> tuple[int, int]:
        return (self.frame_id, self.token_index)
