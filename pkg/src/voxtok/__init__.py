"""Token memory for embodied agents: anchor, voxelize, prune, stream.

Depth frames become patch tokens anchored in world space; anchors are
quantized into adaptive-resolution voxels; a selection rule keeps one (or
a few) representatives per voxel; per-frame completion and temporal
smoothing stabilize the keep masks; a sliding-window store folds evicted
frames into a bounded cross-frame memory.  Hot kernels run in a compiled
extension when available, with a bit-identical numpy fallback.
"""

from voxtok._kernels import BACKEND_NAME as backend_name
from voxtok._kernels import available_backends
from voxtok.config import PipelineConfig
from voxtok.errors import (
    BadRatio,
    ConfigError,
    EmptyCell,
    InvariantViolation,
    LengthMismatch,
    LogFormatError,
    NonFinite,
    NonMonotonicFrame,
    PoseInvalid,
    ScaleExceeded,
    ShapeMismatch,
    VoxtokError,
    WaypointOutOfBounds,
)
from voxtok.fusion import AttentionWeights, align, cross_attend
from voxtok.geometry import (
    DepthMap,
    Intrinsics,
    PointMap,
    Pose,
    TokenAnchors,
    TokenGrid,
    anchor_tokens,
    backproject,
    project,
    to_world,
    world_pointmap,
)
from voxtok.memory import (
    INSTRUCTION_SLOT,
    BudgetReport,
    CacheLedger,
    EvictionReport,
    MemoryStore,
    Snapshot,
)
from voxtok.pruning import (
    AnchorSettings,
    CompletionWeights,
    PipelineResult,
    PruneMask,
    SelectionRule,
    complete,
    completion_target,
    importance,
    median_range,
    prune_pipeline,
    select,
    smooth,
    tokenize_frame,
)
from voxtok.records import FrameObservation, TokenRecord
from voxtok.voxel import (
    ResolutionPolicy,
    VoxelGrid,
    VoxelIndex,
    effective_size,
    group,
    quantize,
    range_band,
)

__version__ = "0.1.0"

__all__ = [
    "AnchorSettings",
    "AttentionWeights",
    "BadRatio",
    "BudgetReport",
    "CacheLedger",
    "CompletionWeights",
    "ConfigError",
    "DepthMap",
    "EmptyCell",
    "EvictionReport",
    "FrameObservation",
    "INSTRUCTION_SLOT",
    "Intrinsics",
    "InvariantViolation",
    "LengthMismatch",
    "LogFormatError",
    "MemoryStore",
    "NonFinite",
    "NonMonotonicFrame",
    "PipelineConfig",
    "PipelineResult",
    "PointMap",
    "Pose",
    "PoseInvalid",
    "PruneMask",
    "ResolutionPolicy",
    "ScaleExceeded",
    "SelectionRule",
    "ShapeMismatch",
    "Snapshot",
    "TokenAnchors",
    "TokenGrid",
    "TokenRecord",
    "VoxelGrid",
    "VoxelIndex",
    "VoxtokError",
    "WaypointOutOfBounds",
    "align",
    "anchor_tokens",
    "available_backends",
    "backend_name",
    "backproject",
    "complete",
    "completion_target",
    "cross_attend",
    "effective_size",
    "group",
    "importance",
    "median_range",
    "project",
    "prune_pipeline",
    "quantize",
    "range_band",
    "select",
    "smooth",
    "to_world",
    "tokenize_frame",
    "world_pointmap",
]
