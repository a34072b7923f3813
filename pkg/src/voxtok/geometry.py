"""Pinhole depth back-projection and camera-to-world anchoring.

Conventions used throughout the package:

* a pixel ``(u, v)`` means (column, row), addressed at integer pixel
  coordinates with no half-pixel offset;
* camera axes are +z forward, +x right, +y down;
* a pose maps camera coordinates into the world frame:
  ``x_world = R @ x_cam + t``.

Back-projection of pixel ``(u, v)`` with depth ``d`` is

    p_cam = d * ((u - cx) / fx, (v - cy) / fy, 1)

so the stored depth is distance along the camera z axis, not ray length.
A depth sample is valid iff it is finite, strictly positive, and within the
optional maximum-depth cutoff (no cutoff by default).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from voxtok._kernels import backend
from voxtok.errors import PoseInvalid, ShapeMismatch

ORTHONORMAL_TOL = 1e-6


@dataclass(frozen=True)
class Intrinsics:
    """Pinhole intrinsics (focal lengths and principal point, in pixels)."""

    fx: float
    fy: float
    cx: float
    cy: float

    def __post_init__(self):
        for name in ("fx", "fy", "cx", "cy"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"intrinsics field {name} must be finite")
        if self.fx <= 0.0 or self.fy <= 0.0:
            raise ValueError("focal lengths must be positive")


@dataclass
class DepthMap:
    """A (H, W) float64 depth image in meters."""

    values: np.ndarray

    def __post_init__(self):
        v = np.ascontiguousarray(self.values, dtype=np.float64)
        if v.ndim != 2 or v.shape[0] < 1 or v.shape[1] < 1:
            raise ShapeMismatch(f"depth map must be 2-D, got shape {v.shape}")
        self.values = v

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]


@dataclass
class Pose:
    """Rigid camera-to-world transform: rotation (3, 3) and translation (3,)."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        r = np.ascontiguousarray(self.rotation, dtype=np.float64)
        t = np.ascontiguousarray(self.translation, dtype=np.float64)
        if r.shape != (3, 3) or t.shape != (3,):
            raise ShapeMismatch(
                f"pose needs (3, 3) rotation and (3,) translation, got "
                f"{r.shape} and {t.shape}"
            )
        self.rotation = r
        self.translation = t

    def validate(self, tol: float = ORTHONORMAL_TOL) -> None:
        """Raise PoseInvalid unless the rotation is orthonormal with det +1.

        Both the orthonormality residual ``max|R^T R - I|`` and the
        determinant deviation ``|det R - 1|`` must be within ``tol``.
        """
        r = self.rotation
        if not np.all(np.isfinite(r)) or not np.all(np.isfinite(self.translation)):
            raise PoseInvalid("pose contains non-finite values")
        residual = np.abs(r.T @ r - np.eye(3)).max()
        if residual > tol:
            raise PoseInvalid(
                f"rotation not orthonormal: residual {residual:.3e} > {tol:.1e}"
            )
        det = float(np.linalg.det(r))
        if abs(det - 1.0) > tol:
            raise PoseInvalid(f"rotation determinant {det!r} is not +1")

    @classmethod
    def identity(cls) -> "Pose":
        return cls(np.eye(3), np.zeros(3))


@dataclass
class PointMap:
    """Per-pixel 3-D points in the camera frame with a validity mask."""

    points: np.ndarray
    valid: np.ndarray

    def __post_init__(self):
        if self.points.ndim != 3 or self.points.shape[2] != 3:
            raise ShapeMismatch(f"point map must be (H, W, 3), got {self.points.shape}")
        if self.valid.shape != self.points.shape[:2]:
            raise ShapeMismatch("validity mask shape does not match point map")

    @property
    def height(self) -> int:
        return self.points.shape[0]

    @property
    def width(self) -> int:
        return self.points.shape[1]

    @property
    def valid_count(self) -> int:
        return int(self.valid.sum())


@dataclass(frozen=True)
class TokenGrid:
    """Non-overlapping patch tiling that maps tokens onto pixel patches.

    Token ``i`` covers the patch at (row ``i // cols``, column ``i % cols``)
    of the patch grid, in row-major patch order.
    """

    patch_h: int
    patch_w: int

    def __post_init__(self):
        if self.patch_h < 1 or self.patch_w < 1:
            raise ValueError("patch dimensions must be >= 1")

    def shape_for(self, height: int, width: int) -> tuple[int, int]:
        """Patch-grid (rows, cols) for an image, or ShapeMismatch if the
        patches do not tile it exactly."""
        if height % self.patch_h or width % self.patch_w:
            raise ShapeMismatch(
                f"{self.patch_h}x{self.patch_w} patches do not tile a "
                f"{height}x{width} image"
            )
        return height // self.patch_h, width // self.patch_w

    def token_count(self, height: int, width: int) -> int:
        rows, cols = self.shape_for(height, width)
        return rows * cols

    @classmethod
    def infer(cls, height: int, width: int, token_count: int) -> "TokenGrid":
        """Infer a square patch size from image shape and token count."""
        if token_count < 1:
            raise ShapeMismatch("token count must be >= 1")
        area = height * width
        if area % token_count:
            raise ShapeMismatch(
                f"cannot tile {height}x{width} into {token_count} equal patches"
            )
        side = math.isqrt(area // token_count)
        grid = cls(side, side)
        if (
            side * side != area // token_count
            or height % side
            or width % side
            or grid.token_count(height, width) != token_count
        ):
            raise ShapeMismatch(
                f"no square patch tiles {height}x{width} into {token_count} tokens"
            )
        return grid


def backproject(depth: DepthMap, intrinsics: Intrinsics,
                max_depth: float = math.inf) -> PointMap:
    """Back-project a depth map into a camera-frame PointMap.

    Point depth is linear in the depth sample: scaling a valid depth by `s`
    scales the point by exactly `s` (same rounding path).
    """
    points, valid = backend.backproject(
        depth.values, intrinsics.fx, intrinsics.fy, intrinsics.cx,
        intrinsics.cy, max_depth,
    )
    return PointMap(points, valid)


def to_world(pointmap: PointMap, pose: Pose) -> tuple[np.ndarray, np.ndarray]:
    """Transform valid points to the world frame.

    Returns ``(points, pixels)`` where ``points`` is (N, 3) float64 and
    ``pixels`` holds the flat row-major pixel index of each point, in
    row-major pixel order.
    """
    pose.validate()
    world = backend.transform_pointmap(pointmap.points, pose.rotation,
                                       pose.translation)
    flat_valid = pointmap.valid.reshape(-1)
    pixels = np.flatnonzero(flat_valid)
    return world.reshape(-1, 3)[pixels], pixels


def world_pointmap(pointmap: PointMap, pose: Pose) -> np.ndarray:
    """World-frame (H, W, 3) array covering every pixel (invalid included)."""
    pose.validate()
    return backend.transform_pointmap(pointmap.points, pose.rotation,
                                      pose.translation)


@dataclass
class TokenAnchors:
    """Per-token anchoring result in row-major patch order.

    ``counts[i] == 0`` marks an anchorless token (no valid depth in its
    patch); its anchor and range entries are meaningless.  Anchorless tokens
    are never discarded downstream and take no part in voxel pruning.
    """

    anchors: np.ndarray
    counts: np.ndarray
    ranges: np.ndarray

    @property
    def anchored(self) -> np.ndarray:
        return self.counts > 0

    def __len__(self) -> int:
        return self.counts.shape[0]


def anchor_tokens(pointmap: PointMap, pose: Pose, grid: TokenGrid,
                  mode: str = "centroid") -> TokenAnchors:
    """Anchor each token at a world-frame point derived from its patch.

    ``mode="centroid"`` uses the centroid of the patch's valid world points;
    ``mode="center"`` uses the world point at the patch's center pixel.  The
    per-token range is the Euclidean distance from the camera position to
    the anchor.
    """
    grid.shape_for(pointmap.height, pointmap.width)
    world = world_pointmap(pointmap, pose)
    if mode == "centroid":
        anchors, counts = backend.patch_reduce_centroid(
            world, pointmap.valid, grid.patch_h, grid.patch_w)
    elif mode == "center":
        anchors, counts = backend.patch_center(
            world, pointmap.valid, grid.patch_h, grid.patch_w)
    else:
        raise ValueError(f"unknown anchor mode {mode!r}")
    t = pose.translation
    dx = anchors[:, 0] - t[0]
    dy = anchors[:, 1] - t[1]
    dz = anchors[:, 2] - t[2]
    ranges = np.sqrt(dx * dx + dy * dy + dz * dz)
    ranges[counts == 0] = 0.0
    return TokenAnchors(anchors, counts, ranges)


def project(points: np.ndarray, intrinsics: Intrinsics) -> np.ndarray:
    """Project camera-frame points back to pixel coordinates (u, v).

    Inverse of back-projection for points with positive z; used by the
    round-trip checks.
    """
    z = points[:, 2]
    u = intrinsics.fx * (points[:, 0] / z) + intrinsics.cx
    v = intrinsics.fy * (points[:, 1] / z) + intrinsics.cy
    return np.stack([u, v], axis=1)
