"""Binary trajectory logs, run manifests, and tensor bundles.

Frame records ("DGVT", version 1, little-endian):

    magic 'DGVT' | u32 version | u64 frameId | u32 width | u32 height
    f64 fx, fy, cx, cy
    f64 x12  rotation (row-major), then translation
    f32 x (height*width)  depth, row-major
    u32 L | u32 C
    f32 x (L*C)  token features, row-major

A log file is a plain concatenation of records.  A manifest is a text file
naming one log per line (relative paths resolve against the manifest's
directory, ``#`` starts a comment); the concatenated frames must carry
strictly increasing ids.

Tensor bundles ("DGVB", version 1) hold named float64 arrays:

    magic 'DGVB' | u32 version | u32 count
    per tensor: u32 nameLen | name (utf-8) | u32 ndim | u64 x ndim dims
                f64 x prod(dims) data, row-major

All structural problems raise LogFormatError.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from voxtok.errors import LogFormatError, PoseInvalid
from voxtok.geometry import DepthMap, Intrinsics, Pose
from voxtok.records import FrameObservation

FRAME_MAGIC = b"DGVT"
BUNDLE_MAGIC = b"DGVB"
FORMAT_VERSION = 1

_HEAD = struct.Struct("<4sIQII")
_INTR = struct.Struct("<4d")
_POSE = struct.Struct("<12d")
_FEAT_HEAD = struct.Struct("<II")


def encode_frame(frame: FrameObservation) -> bytes:
    """Serialize one frame observation to a DGVT record."""
    depth = frame.depth.values
    h, w = depth.shape
    intr = frame.intrinsics
    pose = frame.pose
    parts = [
        _HEAD.pack(FRAME_MAGIC, FORMAT_VERSION, frame.frame_id, w, h),
        _INTR.pack(intr.fx, intr.fy, intr.cx, intr.cy),
        _POSE.pack(*(float(v) for v in pose.rotation.reshape(-1)),
                   *(float(v) for v in pose.translation)),
        np.ascontiguousarray(depth, dtype="<f4").tobytes(),
        _FEAT_HEAD.pack(frame.token_count, frame.feature_dim),
        np.ascontiguousarray(frame.features, dtype="<f4").tobytes(),
    ]
    return b"".join(parts)


def _take(fh, n: int, what: str) -> bytes:
    data = fh.read(n)
    if len(data) != n:
        raise LogFormatError(f"truncated record: expected {n} bytes of {what}, "
                             f"got {len(data)}")
    return data


def read_frame(fh) -> FrameObservation | None:
    """Read the next DGVT record, or None at a clean end of file."""
    head = fh.read(_HEAD.size)
    if not head:
        return None
    if len(head) != _HEAD.size:
        raise LogFormatError("truncated record header")
    magic, version, frame_id, w, h = _HEAD.unpack(head)
    if magic != FRAME_MAGIC:
        raise LogFormatError(f"bad magic {magic!r}, expected {FRAME_MAGIC!r}")
    if version != FORMAT_VERSION:
        raise LogFormatError(f"unsupported record version {version}")
    if w == 0 or h == 0:
        raise LogFormatError(f"degenerate image size {w}x{h}")
    fx, fy, cx, cy = _INTR.unpack(_take(fh, _INTR.size, "intrinsics"))
    pose_vals = _POSE.unpack(_take(fh, _POSE.size, "pose"))
    depth_raw = _take(fh, h * w * 4, "depth")
    depth = np.frombuffer(depth_raw, dtype="<f4").reshape(h, w).astype(np.float64)
    n_tokens, n_dims = _FEAT_HEAD.unpack(_take(fh, _FEAT_HEAD.size, "token header"))
    if n_tokens == 0 or n_dims == 0:
        raise LogFormatError(f"degenerate token block {n_tokens}x{n_dims}")
    feat_raw = _take(fh, n_tokens * n_dims * 4, "features")
    features = np.frombuffer(feat_raw, dtype="<f4").reshape(n_tokens, n_dims).copy()
    rotation = np.array(pose_vals[:9], dtype=np.float64).reshape(3, 3)
    translation = np.array(pose_vals[9:], dtype=np.float64)
    try:
        intrinsics = Intrinsics(fx, fy, cx, cy)
        pose = Pose(rotation, translation)
        pose.validate()
        return FrameObservation(frame_id, DepthMap(depth), intrinsics, pose,
                                features)
    except (PoseInvalid, ValueError) as exc:
        raise LogFormatError(f"frame {frame_id}: {exc}") from exc


def decode_frame(data: bytes) -> FrameObservation:
    import io

    fh = io.BytesIO(data)
    frame = read_frame(fh)
    if frame is None:
        raise LogFormatError("empty record")
    if fh.read(1):
        raise LogFormatError("trailing bytes after record")
    return frame


def write_log(path, frames) -> None:
    with open(path, "wb") as fh:
        for frame in frames:
            fh.write(encode_frame(frame))


def read_log(path) -> list[FrameObservation]:
    frames = []
    try:
        with open(path, "rb") as fh:
            while True:
                frame = read_frame(fh)
                if frame is None:
                    return frames
                frames.append(frame)
    except OSError as exc:
        raise LogFormatError(f"cannot read log {path}: {exc}") from exc


# ---------------------------------------------------------------------------
# manifests

def read_manifest(path) -> list[Path]:
    base = Path(path).parent
    entries = []
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise LogFormatError(f"cannot read manifest {path}: {exc}") from exc
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        p = Path(line)
        entries.append(p if p.is_absolute() else base / p)
    if not entries:
        raise LogFormatError(f"manifest {path} lists no logs")
    return entries


def write_manifest(path, log_paths) -> None:
    base = Path(path).parent
    lines = []
    for p in log_paths:
        p = Path(p)
        try:
            lines.append(str(p.relative_to(base)))
        except ValueError:
            lines.append(str(p))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def load_manifest(path) -> list[FrameObservation]:
    """All frames named by the manifest, checked for increasing ids."""
    frames = []
    for log_path in read_manifest(path):
        frames.extend(read_log(log_path))
    if not frames:
        raise LogFormatError(f"manifest {path} yields no frames")
    last = None
    for frame in frames:
        if last is not None and frame.frame_id <= last:
            raise LogFormatError(
                f"frame ids must increase strictly: {last} then {frame.frame_id}")
        last = frame.frame_id
    return frames


# ---------------------------------------------------------------------------
# tensor bundles

_BUNDLE_HEAD = struct.Struct("<4sII")
_U32 = struct.Struct("<I")


def write_tensors(path, tensors: dict) -> None:
    parts = [_BUNDLE_HEAD.pack(BUNDLE_MAGIC, FORMAT_VERSION, len(tensors))]
    for name, array in tensors.items():
        arr = np.ascontiguousarray(array, dtype="<f8")
        raw_name = name.encode("utf-8")
        parts.append(_U32.pack(len(raw_name)))
        parts.append(raw_name)
        parts.append(_U32.pack(arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        parts.append(arr.tobytes())
    with open(path, "wb") as fh:
        fh.write(b"".join(parts))


def read_tensors(path) -> dict:
    try:
        with open(path, "rb") as fh:
            head = _take(fh, _BUNDLE_HEAD.size, "bundle header")
            magic, version, count = _BUNDLE_HEAD.unpack(head)
            if magic != BUNDLE_MAGIC:
                raise LogFormatError(
                    f"bad magic {magic!r}, expected {BUNDLE_MAGIC!r}")
            if version != FORMAT_VERSION:
                raise LogFormatError(f"unsupported bundle version {version}")
            out = {}
            for _ in range(count):
                (name_len,) = _U32.unpack(_take(fh, 4, "tensor name length"))
                name = _take(fh, name_len, "tensor name").decode("utf-8")
                (ndim,) = _U32.unpack(_take(fh, 4, "tensor rank"))
                if ndim == 0 or ndim > 8:
                    raise LogFormatError(f"tensor {name!r}: bad rank {ndim}")
                dims = struct.unpack(f"<{ndim}Q", _take(fh, 8 * ndim, "dims"))
                n = 1
                for d in dims:
                    n *= d
                raw = _take(fh, 8 * n, f"tensor {name!r} data")
                out[name] = np.frombuffer(raw, dtype="<f8").reshape(dims).copy()
            if fh.read(1):
                raise LogFormatError("trailing bytes after tensor bundle")
            return out
    except OSError as exc:
        raise LogFormatError(f"cannot read bundle {path}: {exc}") from exc
