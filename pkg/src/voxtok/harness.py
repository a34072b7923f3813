"""Synthetic trajectory generation and a reference pruning enumerator.

Scenes are axis-aligned rooms with axis-aligned obstacle boxes (optionally
moving along a ping-pong schedule).  Depth is exact ray-box intersection
distance along the camera z axis, so generated depth maps reproject onto
scene surfaces to machine precision.  Token features are seeded hashes of
(scene seed, frame, token, surface), so regeneration is bit-identical.

``oracle_prune`` re-derives the full batch pruning result with naive Python
loops: per-pixel back-projection, linear-scan cell grouping, exhaustive
per-cell scoring, explicit per-position majority votes.  It deliberately
shares no code with ``voxtok.pruning`` (only data types), which makes it a
meaningful equivalence check for the optimized pipeline.  It refuses inputs
beyond desk scale (50 frames / 10^4 tokens).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from voxtok.config import PipelineConfig
from voxtok.errors import ScaleExceeded, ShapeMismatch, WaypointOutOfBounds
from voxtok.geometry import DepthMap, Intrinsics, Pose
from voxtok.pruning import PruneMask
from voxtok.records import FrameObservation

MAX_ORACLE_FRAMES = 50
MAX_ORACLE_TOKENS = 10_000

WALL_SURFACES = 6  # +x, -x, +y, -y, +z, -z


@dataclass(frozen=True)
class Box:
    """Axis-aligned box given by its low and high corners (meters)."""

    lo: tuple[float, float, float]
    hi: tuple[float, float, float]

    def __post_init__(self):
        if not all(l < h for l, h in zip(self.lo, self.hi)):
            raise ValueError(f"box must have positive extent: {self.lo} {self.hi}")

    def contains(self, p, margin: float = 0.0) -> bool:
        return all(l + margin <= x <= h - margin
                   for x, l, h in zip(p, self.lo, self.hi))

    def translated(self, offset) -> "Box":
        return Box(tuple(l + o for l, o in zip(self.lo, offset)),
                   tuple(h + o for h, o in zip(self.hi, offset)))


@dataclass(frozen=True)
class MovingBox:
    """Obstacle box with optional ping-pong motion.

    With ``period`` p > 0 the box is displaced by ``velocity`` times the
    triangle sequence 0, 1, ..., p, p-1, ..., 1, 0, ... at each frame step;
    period 0 keeps it static.
    """

    box: Box
    velocity: tuple[float, float, float] = (0.0, 0.0, 0.0)
    period: int = 0

    def box_at(self, step: int) -> Box:
        if self.period <= 0:
            return self.box
        phase = step % (2 * self.period)
        m = phase if phase <= self.period else 2 * self.period - phase
        return self.box.translated(tuple(v * m for v in self.velocity))


@dataclass(frozen=True)
class SyntheticScene:
    """A room, its obstacles, and the seed driving token features."""

    room: Box
    obstacles: tuple[MovingBox, ...] = ()
    seed: int = 0

    def __post_init__(self):
        if self.seed < 0:
            raise ValueError("seed must be non-negative")
        for ob in self.obstacles:
            if not all(
                rl <= bl and bh <= rh
                for bl, bh, rl, rh in zip(ob.box.lo, ob.box.hi,
                                          self.room.lo, self.room.hi)
            ):
                raise ValueError("obstacle base box must lie inside the room")


@dataclass(frozen=True)
class Waypoint:
    x: float
    y: float
    z: float
    yaw: float


@dataclass
class SyntheticTrajectory:
    scene: SyntheticScene
    frames: list[FrameObservation]
    patch_size: int

    def __len__(self) -> int:
        return len(self.frames)


def yaw_rotation(yaw: float) -> np.ndarray:
    """Camera-to-world rotation for a level camera heading along ``yaw``.

    Forward (+z cam) maps to (cos yaw, sin yaw, 0); down (+y cam) maps to
    world -z, so world z is up.
    """
    c = math.cos(yaw)
    s = math.sin(yaw)
    return np.array([
        [s, 0.0, c],
        [-c, 0.0, s],
        [0.0, -1.0, 0.0],
    ])


def _wrap_angle(d: float) -> float:
    return (d + math.pi) % (2.0 * math.pi) - math.pi


def _interp_poses(path: list[Waypoint], frames_per_segment: int):
    if frames_per_segment < 1:
        raise ValueError("frames_per_segment must be >= 1")
    if len(path) == 1:
        wp = path[0]
        return [((wp.x, wp.y, wp.z), wp.yaw)] * frames_per_segment
    if frames_per_segment < 2:
        raise ValueError("multi-waypoint paths need frames_per_segment >= 2")
    poses = []
    for s in range(len(path) - 1):
        a, b = path[s], path[s + 1]
        dyaw = _wrap_angle(b.yaw - a.yaw)
        for j in range(frames_per_segment):
            if s > 0 and j == 0:
                continue
            f = j / (frames_per_segment - 1)
            pos = (a.x + f * (b.x - a.x), a.y + f * (b.y - a.y),
                   a.z + f * (b.z - a.z))
            poses.append((pos, a.yaw + f * dyaw))
    return poses


def _raycast(scene: SyntheticScene, rotation: np.ndarray, origin: np.ndarray,
             intr: Intrinsics, height: int, width: int, step: int):
    """Exact depth (along camera z) and hit-surface id for every pixel."""
    xr = (np.arange(width, dtype=np.float64) - intr.cx) / intr.fx
    yr = (np.arange(height, dtype=np.float64) - intr.cy) / intr.fy
    dirs = np.empty((height, width, 3))
    dirs[:, :, 0] = xr[None, :]
    dirs[:, :, 1] = yr[:, None]
    dirs[:, :, 2] = 1.0
    wd = dirs @ rotation.T
    lo = np.asarray(scene.room.lo)
    hi = np.asarray(scene.room.hi)
    with np.errstate(divide="ignore", invalid="ignore"):
        t_pos = (hi - origin) / wd
        t_neg = (lo - origin) / wd
        exit_t = np.where(wd > 0, t_pos, np.where(wd < 0, t_neg, np.inf))
    axis = np.argmin(exit_t, axis=2)
    depth = np.take_along_axis(exit_t, axis[:, :, None], axis=2)[:, :, 0]
    axis_dir = np.take_along_axis(wd, axis[:, :, None], axis=2)[:, :, 0]
    surf = 2 * axis + (axis_dir < 0)
    for k, mb in enumerate(scene.obstacles):
        box = mb.box_at(step)
        blo = np.asarray(box.lo)
        bhi = np.asarray(box.hi)
        with np.errstate(divide="ignore", invalid="ignore"):
            t1 = (blo - origin) / wd
            t2 = (bhi - origin) / wd
        tn = np.minimum(t1, t2).max(axis=2)
        tf = np.maximum(t1, t2).min(axis=2)
        closer = (tn <= tf) & (tn > 0) & (tn < depth)
        depth = np.where(closer, tn, depth)
        surf = np.where(closer, WALL_SURFACES + k, surf)
    return depth, surf.astype(np.int64)


def generate(
    scene: SyntheticScene,
    path: list[Waypoint],
    frames_per_segment: int,
    *,
    width: int = 32,
    height: int = 32,
    patch_size: int = 8,
    feature_dim: int = 32,
    intrinsics: Intrinsics | None = None,
    start_frame_id: int = 0,
) -> SyntheticTrajectory:
    """Render a seeded trajectory through the scene.

    Camera positions interpolate linearly between waypoints (the first
    segment contributes ``frames_per_segment`` frames including both
    endpoints, later segments skip their shared start), yaw follows the
    shortest arc.  Every waypoint must lie in free space.
    """
    if height % patch_size or width % patch_size:
        raise ShapeMismatch(
            f"patch size {patch_size} does not tile {height}x{width}")
    for wp in path:
        p = (wp.x, wp.y, wp.z)
        if not scene.room.contains(p, margin=1e-6):
            raise WaypointOutOfBounds(f"waypoint {p} outside the room")
        for ob in scene.obstacles:
            if ob.box.contains(p):
                raise WaypointOutOfBounds(f"waypoint {p} inside an obstacle")
    if intrinsics is None:
        intrinsics = Intrinsics(0.6 * width, 0.6 * width,
                                (width - 1) / 2.0, (height - 1) / 2.0)
    gh = height // patch_size
    gw = width // patch_size
    frames = []
    for step, (pos, yaw) in enumerate(_interp_poses(path, frames_per_segment)):
        rotation = yaw_rotation(yaw)
        origin = np.asarray(pos, dtype=np.float64)
        depth, surf = _raycast(scene, rotation, origin, intrinsics,
                               height, width, step)
        frame_id = start_frame_id + step
        features = np.empty((gh * gw, feature_dim), dtype=np.float32)
        for pr in range(gh):
            for pc in range(gw):
                idx = pr * gw + pc
                s = int(surf[pr * patch_size + patch_size // 2,
                             pc * patch_size + patch_size // 2])
                rng = np.random.default_rng(
                    np.random.SeedSequence([scene.seed, frame_id, idx, s]))
                features[idx] = rng.random(feature_dim, dtype=np.float32)
        frames.append(FrameObservation(
            frame_id, DepthMap(depth), intrinsics,
            Pose(rotation, origin), features))
    return SyntheticTrajectory(scene, frames, patch_size)


# ---------------------------------------------------------------------------
# scene presets

def preset(name: str, seed: int = 0):
    """Named (scene, path) presets: 'corridor', 'loop', 'dynamic'."""
    if name == "corridor":
        scene = SyntheticScene(
            room=Box((0.0, -2.0, 0.0), (12.0, 2.0, 3.0)),
            obstacles=(
                MovingBox(Box((4.0, -1.6, 0.0), (5.0, -0.6, 1.8))),
                MovingBox(Box((7.5, 0.4, 0.0), (8.5, 1.4, 2.2))),
            ),
            seed=seed,
        )
        path = [Waypoint(1.0, 0.0, 1.5, 0.0), Waypoint(10.5, 0.0, 1.5, 0.0)]
        return scene, path
    if name == "loop":
        scene = SyntheticScene(
            room=Box((0.0, 0.0, 0.0), (8.0, 8.0, 3.0)),
            obstacles=(
                MovingBox(Box((3.4, 3.4, 0.0), (4.6, 4.6, 2.4))),
            ),
            seed=seed,
        )
        half = math.pi / 2.0
        # waypoint yaws stay wrapped so repeated laps reuse identical
        # angles and poses repeat bit for bit
        path = [
            Waypoint(1.5, 1.5, 1.4, 0.0),
            Waypoint(6.5, 1.5, 1.4, half),
            Waypoint(6.5, 6.5, 1.4, math.pi),
            Waypoint(1.5, 6.5, 1.4, -half),
            Waypoint(1.5, 1.5, 1.4, 0.0),
        ]
        return scene, path
    if name == "dynamic":
        scene = SyntheticScene(
            room=Box((0.0, -3.0, 0.0), (10.0, 3.0, 3.0)),
            obstacles=(
                MovingBox(Box((5.0, -2.5, 0.0), (6.0, -1.5, 2.0)),
                          velocity=(0.0, 0.45, 0.0), period=8),
                MovingBox(Box((7.8, 1.2, 0.0), (8.6, 2.0, 1.6))),
            ),
            seed=seed,
        )
        path = [Waypoint(0.8, 0.0, 1.5, 0.0), Waypoint(8.0, 0.0, 1.5, 0.0)]
        return scene, path
    raise ValueError(f"unknown preset {name!r}")


def loop_path(laps: int) -> list[Waypoint]:
    """The loop preset's waypoint cycle repeated ``laps`` times."""
    _, cycle = preset("loop")
    path = list(cycle)
    for _ in range(laps - 1):
        path.extend(cycle[1:])
    return path


# ---------------------------------------------------------------------------
# reference enumerator

def oracle_prune(trajectory, config: PipelineConfig) -> dict[int, PruneMask]:
    """Re-run the whole batch pruning pipeline by naive enumeration.

    Accepts a SyntheticTrajectory or a plain frame list.  Raises
    ScaleExceeded beyond 50 frames or 10^4 total tokens.
    """
    frames = trajectory.frames if hasattr(trajectory, "frames") else list(trajectory)
    if len(frames) > MAX_ORACLE_FRAMES:
        raise ScaleExceeded(f"{len(frames)} frames exceeds {MAX_ORACLE_FRAMES}")
    total = sum(f.token_count for f in frames)
    if total > MAX_ORACLE_TOKENS:
        raise ScaleExceeded(f"{total} tokens exceeds {MAX_ORACLE_TOKENS}")

    cfg = config
    all_tokens: dict[int, list[_OracleToken]] = {}
    for frame in frames:
        all_tokens[frame.frame_id] = _oracle_tokenize(frame, cfg)

    # quantize per frame
    for fid, toks in all_tokens.items():
        anchored = [t for t in toks if t.anchor is not None]
        if not anchored:
            continue
        ranges = sorted(t.rng for t in anchored)
        n = len(ranges)
        if n % 2:
            med = ranges[n // 2]
        else:
            med = (ranges[n // 2 - 1] + ranges[n // 2]) / 2.0
        if cfg.frame_scale_mode == "median-depth-proportional":
            ff = med / cfg.reference_depth
        else:
            ff = 1.0
        e0, e1 = cfg.band_edges
        for t in anchored:
            if t.rng < e0:
                band = 0
            elif t.rng < e1:
                band = 1
            else:
                band = 2
            size = (cfg.base_size * ff) * cfg.band_scales[band]
            t.cell = (
                math.floor(t.anchor[0] / size),
                math.floor(t.anchor[1] / size),
                math.floor(t.anchor[2] / size),
                band,
            )

    # linear-scan grouping over all anchored tokens
    cell_keys: list[tuple] = []
    cell_members: list[list[_OracleToken]] = []
    for fid in sorted(all_tokens):
        for t in all_tokens[fid]:
            if t.anchor is None:
                continue
            for j, key in enumerate(cell_keys):
                if key == t.cell:
                    cell_members[j].append(t)
                    break
            else:
                cell_keys.append(t.cell)
                cell_members.append([t])

    # per-cell selection
    bits = {fid: [False] * len(toks) for fid, toks in all_tokens.items()}
    protected = {fid: [False] * len(toks) for fid, toks in all_tokens.items()}
    for members in cell_members:
        for t in _oracle_select(members, cfg):
            bits[t.frame_id][t.index] = True
    for fid, toks in all_tokens.items():
        for t in toks:
            if t.anchor is None:
                bits[fid][t.index] = True
                protected[fid][t.index] = True

    # per-frame completion
    targets = {}
    for fid in sorted(all_tokens):
        toks = all_tokens[fid]
        n = len(toks)
        if cfg.rho > 0.0:
            targets[fid] = math.ceil(cfg.rho * n)
            _oracle_complete(toks, bits[fid], protected[fid], targets[fid], cfg)
        else:
            targets[fid] = 0

    # temporal majority vote with protection and floor
    order = sorted(all_tokens)
    t_total = len(order)
    half = cfg.smooth_window // 2
    final = {fid: list(bits[fid]) for fid in order}
    if t_total > 0:
        n = len(bits[order[0]])
        for ti, fid in enumerate(order):
            lo = max(0, ti - half)
            hi = min(t_total - 1, ti + half)
            size = hi - lo + 1
            new = []
            for i in range(n):
                ones = sum(1 for k in range(lo, hi + 1) if bits[order[k]][i])
                if 2 * ones > size:
                    vote = True
                elif 2 * ones < size:
                    vote = False
                else:
                    vote = bits[fid][i]
                if bits[fid][i] and not vote and protected[fid][i]:
                    vote = True
                new.append(vote)
            target = targets[fid]
            if target > 0:
                sets = sum(1 for i in range(n) if new[i] and not bits[fid][i])
                clears = [i for i in range(n) if bits[fid][i] and not new[i]]
                count = sum(bits[fid]) + sets
                allowed = count - target
                if allowed < len(clears):
                    for i in clears[max(allowed, 0):]:
                        new[i] = True
            final[fid] = new

    return {
        fid: PruneMask(fid, np.array(final[fid], dtype=bool),
                       np.array(protected[fid], dtype=bool))
        for fid in order
    }


@dataclass
class _OracleToken:
    frame_id: int
    index: int
    feature: list[float]
    anchor: tuple[float, float, float] | None = None
    rng: float = 0.0
    cell: tuple | None = field(default=None, repr=False)


def _oracle_tokenize(frame: FrameObservation, cfg: PipelineConfig):
    depth = frame.depth.values
    h, w = depth.shape
    n = frame.token_count
    if cfg.patch_size > 0:
        p = cfg.patch_size
    else:
        area = h * w
        p = math.isqrt(area // n)
        if p * p * n != area or h % p or w % p:
            raise ShapeMismatch("no square patch tiling")
    gh = h // p
    gw = w // p
    if gh * gw != n:
        raise ShapeMismatch("patch grid does not match token count")
    intr = frame.intrinsics
    rot = frame.pose.rotation
    trans = frame.pose.translation
    r00, r01, r02 = float(rot[0, 0]), float(rot[0, 1]), float(rot[0, 2])
    r10, r11, r12 = float(rot[1, 0]), float(rot[1, 1]), float(rot[1, 2])
    r20, r21, r22 = float(rot[2, 0]), float(rot[2, 1]), float(rot[2, 2])
    t0, t1, t2 = float(trans[0]), float(trans[1]), float(trans[2])
    max_depth = cfg.max_depth if cfg.max_depth > 0 else math.inf
    center = (p // 2, p // 2)
    out = []
    for pr in range(gh):
        for pc in range(gw):
            idx = pr * gw + pc
            sx = sy = sz = 0.0
            cnt = 0
            center_pt = None
            for dr in range(p):
                r = pr * p + dr
                for dc in range(p):
                    c = pc * p + dc
                    d = float(depth[r, c])
                    ok = math.isfinite(d) and d > 0.0 and d <= max_depth
                    if not ok:
                        continue
                    x = d * ((c - intr.cx) / intr.fx)
                    y = d * ((r - intr.cy) / intr.fy)
                    z = d
                    wx = r00 * x + r01 * y + r02 * z + t0
                    wy = r10 * x + r11 * y + r12 * z + t1
                    wz = r20 * x + r21 * y + r22 * z + t2
                    if cfg.anchor_mode == "centroid":
                        sx = sx + wx
                        sy = sy + wy
                        sz = sz + wz
                        cnt += 1
                    elif (dr, dc) == center:
                        center_pt = (wx, wy, wz)
                        cnt = 1
            feature = [float(v) for v in frame.features[idx]]
            if cfg.anchor_mode == "centroid" and cnt > 0:
                anchor = (sx / cnt, sy / cnt, sz / cnt)
            elif cfg.anchor_mode == "center" and center_pt is not None:
                anchor = center_pt
            else:
                anchor = None
            if anchor is None:
                out.append(_OracleToken(frame.frame_id, idx, feature))
            else:
                dx = anchor[0] - t0
                dy = anchor[1] - t1
                dz = anchor[2] - t2
                rng = math.sqrt(dx * dx + dy * dy + dz * dz)
                out.append(_OracleToken(frame.frame_id, idx, feature, anchor, rng))
    return out


def _oracle_select(members, cfg: PipelineConfig):
    members = sorted(members, key=lambda t: (t.frame_id, t.index))
    if cfg.rule == "latest":
        newest = max(t.frame_id for t in members)
        return [t for t in members if t.frame_id == newest]
    wr, wp = cfg.priority_weights
    min_f = min(t.frame_id for t in members)
    max_f = max(t.frame_id for t in members)
    min_r = min(t.rng for t in members)
    max_r = max(t.rng for t in members)
    scored = []
    for t in members:
        recency = 1.0 if max_f == min_f else (t.frame_id - min_f) / (max_f - min_f)
        prox = 1.0 if max_r == min_r else 1.0 - (t.rng - min_r) / (max_r - min_r)
        scored.append((wr * recency + wp * prox, t))
    order = sorted(range(len(members)),
                   key=lambda i: (-scored[i][0], -members[i].frame_id,
                                  members[i].index))
    k = 1 if cfg.rule == "priority" else cfg.top_k
    return [members[i] for i in order[:k]]


def _oracle_complete(tokens, bits, protected, target, cfg: PipelineConfig):
    kept = sum(bits)
    if kept >= target:
        return
    norms = []
    for t in tokens:
        s = 0.0
        for v in t.feature:
            s = s + v * v
        norms.append(math.sqrt(s))
    max_norm = max(norms) if norms else 0.0
    anchored_ranges = [t.rng for t in tokens if t.anchor is not None]
    if anchored_ranges:
        min_r, max_r = min(anchored_ranges), max(anchored_ranges)
    else:
        min_r, max_r = 0.0, 0.0
    wf, wr, ws, wrec = cfg.completion_weights
    candidates = [t for t in tokens if t.anchor is not None and not bits[t.index]]
    while kept < target and candidates:
        kept_anchors = [t.anchor for t in tokens
                        if t.anchor is not None and bits[t.index]]
        dmins = []
        for t in candidates:
            if kept_anchors:
                best = None
                for a in kept_anchors:
                    dx = t.anchor[0] - a[0]
                    dy = t.anchor[1] - a[1]
                    dz = t.anchor[2] - a[2]
                    d = math.sqrt(dx * dx + dy * dy + dz * dz)
                    if best is None or d < best:
                        best = d
                dmins.append(best)
            else:
                dmins.append(0.0)
        spread_norm = max(dmins) if kept_anchors else 0.0
        best_pos = None
        best_score = None
        for pos, t in enumerate(candidates):
            fm = 1.0 if max_norm <= 0.0 else norms[t.index] / max_norm
            ri = 1.0 if max_r == min_r else 1.0 - (t.rng - min_r) / (max_r - min_r)
            if not kept_anchors or spread_norm == 0.0:
                sd = 1.0
            else:
                sd = dmins[pos] / spread_norm
            score = wf * fm + wr * ri + ws * sd + wrec * 1.0
            if best_score is None or score > best_score:
                best_score = score
                best_pos = pos
        chosen = candidates.pop(best_pos)
        bits[chosen.index] = True
        protected[chosen.index] = True
        kept += 1
