"""Adaptive-resolution voxel hashing for world-anchored tokens.

Cell size adapts at two multiplicative levels: a per-frame factor driven by
the frame's median token range, and a per-token range band (near / mid /
far).  Cells are keyed by a flat integer index plus the band tag, so tokens
quantized at different band resolutions never land in the same cell.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, NamedTuple

import numpy as np

from voxtok._kernels import backend
from voxtok.errors import ShapeMismatch
from voxtok.records import TokenRecord

FRAME_SCALE_OFF = "off"
FRAME_SCALE_MEDIAN = "median-depth-proportional"


@dataclass(frozen=True)
class ResolutionPolicy:
    """Parameters controlling the effective voxel size.

    ``base_size`` is the base edge length in meters.  ``band_edges`` split
    token range into bands: range < edges[0] is band 0 (near),
    edges[0] <= range < edges[1] is band 1, range >= edges[1] is band 2.
    ``band_scales`` multiply the base size per band.  With
    ``frame_scale_mode = "median-depth-proportional"`` the base size is also
    scaled by (frame median range / reference_depth).
    """

    base_size: float = 0.25
    frame_scale_mode: str = FRAME_SCALE_OFF
    band_edges: tuple[float, float] = (1.5, 4.0)
    band_scales: tuple[float, float, float] = (0.5, 1.0, 2.0)
    reference_depth: float = 2.0

    def __post_init__(self):
        if self.base_size <= 0.0 or not math.isfinite(self.base_size):
            raise ValueError("base_size must be positive and finite")
        if self.frame_scale_mode not in (FRAME_SCALE_OFF, FRAME_SCALE_MEDIAN):
            raise ValueError(f"unknown frame scale mode {self.frame_scale_mode!r}")
        if len(self.band_edges) != 2 or not self.band_edges[0] < self.band_edges[1]:
            raise ValueError("band_edges must be two increasing values")
        if len(self.band_scales) != 3:
            raise ValueError("band_scales must have one entry per band")
        if not all(s > 0.0 for s in self.band_scales):
            raise ValueError("band scales must be positive")
        if not (self.band_scales[0] < self.band_scales[1] < self.band_scales[2]):
            raise ValueError("band scales must increase with range")
        if self.reference_depth <= 0.0:
            raise ValueError("reference_depth must be positive")

    def frame_factor(self, frame_median_depth: float) -> float:
        if self.frame_scale_mode == FRAME_SCALE_OFF:
            return 1.0
        return frame_median_depth / self.reference_depth


class VoxelIndex(NamedTuple):
    """Quantized cell coordinates plus the band tag that set the cell size."""

    ix: int
    iy: int
    iz: int
    band: int


def range_band(rng: float, edges: tuple[float, float]) -> int:
    """Band index for a token range (0 near, 1 mid, 2 far)."""
    if rng < edges[0]:
        return 0
    if rng < edges[1]:
        return 1
    return 2


def effective_size(rng: float, frame_median_depth: float,
                   policy: ResolutionPolicy) -> float:
    """Effective voxel edge length for one token, in meters.

    base_size * frame_factor * band_scale, evaluated left to right.
    """
    band = range_band(rng, policy.band_edges)
    return (policy.base_size * policy.frame_factor(frame_median_depth)) \
        * policy.band_scales[band]


def quantize(anchor, cell_size: float, band: int = 0) -> VoxelIndex:
    """Floor-quantize a world anchor into its voxel cell.

    ``index_i = floor(anchor_i / cell_size)`` per component, so negative
    coordinates round toward minus infinity.
    """
    if cell_size <= 0.0:
        raise ValueError("cell size must be positive")
    return VoxelIndex(
        math.floor(anchor[0] / cell_size),
        math.floor(anchor[1] / cell_size),
        math.floor(anchor[2] / cell_size),
        band,
    )


def quantize_frame(anchors: np.ndarray, ranges: np.ndarray,
                   frame_median_depth: float,
                   policy: ResolutionPolicy) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized quantization of one frame's anchored tokens.

    Returns ``(indices, bands)`` with indices (N, 3) int64.  Matches the
    scalar ``quantize`` / ``effective_size`` path bit for bit.
    """
    bands = np.digitize(ranges, np.asarray(policy.band_edges))
    scales = np.asarray(policy.band_scales)[bands]
    sizes = (policy.base_size * policy.frame_factor(frame_median_depth)) * scales
    anchors = np.ascontiguousarray(anchors, dtype=np.float64)
    indices = backend.quantize_anchors(anchors, sizes)
    return indices, bands


class VoxelGrid:
    """Mapping from VoxelIndex to the tokens currently occupying the cell.

    Cell token lists are kept sorted by (frame_id, token_index) and are
    never empty.
    """

    def __init__(self):
        self.cells: dict[VoxelIndex, list[TokenRecord]] = {}

    def __len__(self) -> int:
        return len(self.cells)

    def __contains__(self, index: VoxelIndex) -> bool:
        return index in self.cells

    def add(self, token: TokenRecord) -> None:
        if token.cell is None:
            raise ValueError("token has no voxel cell assigned")
        self.cells.setdefault(token.cell, []).append(token)

    def replace_cell(self, index: VoxelIndex, tokens: list[TokenRecord]) -> None:
        """Install the new occupants of a cell; an empty list frees it."""
        if tokens:
            self.cells[index] = sorted(tokens, key=TokenRecord.sort_key)
        else:
            self.cells.pop(index, None)

    def occupied(self) -> int:
        return len(self.cells)

    def token_count(self) -> int:
        return sum(len(v) for v in self.cells.values())

    def tokens(self) -> Iterable[TokenRecord]:
        for index in self.cells:
            yield from self.cells[index]


def group(tokens: Iterable[TokenRecord]) -> VoxelGrid:
    """Group quantized tokens into a VoxelGrid.

    Every token must already carry anchor and cell; cell membership
    partitions the input, and each cell's list is ordered by
    (frame_id, token_index).
    """
    grid = VoxelGrid()
    for token in tokens:
        if token.anchor is None:
            raise ShapeMismatch("anchorless tokens cannot be grouped into voxels")
        grid.add(token)
    for index in grid.cells:
        grid.cells[index].sort(key=TokenRecord.sort_key)
    return grid
