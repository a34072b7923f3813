import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from voxtok.geometry import DepthMap, Intrinsics, Pose
from voxtok.records import FrameObservation


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def make_frame(frame_id=0, height=16, width=16, patch=8, dims=8, depth=None,
               pose=None, seed=0):
    """A small hand-controllable frame (4 tokens by default)."""
    if depth is None:
        depth = np.full((height, width), 2.0)
    if pose is None:
        pose = Pose.identity()
    intr = Intrinsics(20.0, 20.0, (width - 1) / 2.0, (height - 1) / 2.0)
    n = (height // patch) * (width // patch)
    features = np.random.default_rng(seed).random((n, dims), dtype=np.float32)
    return FrameObservation(frame_id, DepthMap(np.asarray(depth, dtype=float)),
                            intr, pose, features)
