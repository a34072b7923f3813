"""Command-line front end.

Subcommands:

* ``gen``     render a synthetic trajectory to frame logs plus a manifest
* ``prune``   run the batch pruning pipeline over a manifest
* ``stream``  feed a manifest through the sliding-window memory
* ``export``  write kept anchors / occupied voxels as ASCII PLY

Exit codes: 0 success, 2 configuration problems, 3 malformed logs or
sessions, 4 violated run invariants (the violated invariant is named on
stderr).  ``DGV_LOG_LEVEL`` (error, warn, info, debug) controls stderr
logging verbosity.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import math
import os
import sys
from pathlib import Path

import numpy as np

from voxtok import harness, logio, session
from voxtok.config import PipelineConfig
from voxtok.errors import (
    ConfigError,
    InvariantViolation,
    LogFormatError,
    NonMonotonicFrame,
    ScaleExceeded,
    VoxtokError,
)
from voxtok.pruning import prune_pipeline

log = logging.getLogger("voxtok")

_LOG_LEVELS = {
    "error": logging.ERROR,
    "warn": logging.WARNING,
    "info": logging.INFO,
    "debug": logging.DEBUG,
}


def _setup_logging() -> None:
    name = os.environ.get("DGV_LOG_LEVEL", "warn").lower()
    if name not in _LOG_LEVELS:
        raise ConfigError(
            f"DGV_LOG_LEVEL must be one of {sorted(_LOG_LEVELS)}, got {name!r}")
    logging.basicConfig(level=_LOG_LEVELS[name],
                        format="voxtok %(levelname)s: %(message)s",
                        stream=sys.stderr)


def _load_config(args) -> PipelineConfig:
    cfg = (PipelineConfig.from_file(args.config)
           if getattr(args, "config", None) else PipelineConfig())
    overrides = {}
    if getattr(args, "rule", None) is not None:
        overrides["rule"] = args.rule
    if getattr(args, "rho", None) is not None:
        overrides["rho"] = args.rho
    if getattr(args, "window", None) is not None:
        if args.command == "stream":
            overrides["window_size"] = args.window
        else:
            overrides["smooth_window"] = args.window
    if overrides:
        cfg = dataclasses.replace(cfg, **overrides)
    return cfg


def _outdir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


# ---------------------------------------------------------------------------
# gen

def cmd_gen(args) -> int:
    scene, path = harness.preset(args.preset, args.seed)
    if args.preset == "loop" and args.laps > 1:
        path = harness.loop_path(args.laps)
    nseg = len(path) - 1
    if nseg > 0:
        fps = max(2, 1 + math.ceil((args.frames - 1) / nseg))
    else:
        fps = args.frames
    traj = harness.generate(
        scene, path, fps,
        width=args.width, height=args.height,
        patch_size=args.patch, feature_dim=args.dims,
    )
    frames = traj.frames[:args.frames]
    if len(frames) < args.frames:
        raise ConfigError(
            f"preset path yields only {len(frames)} frames, need {args.frames}")
    out = _outdir(args)
    chunk = max(1, args.chunk)
    paths = []
    for start in range(0, len(frames), chunk):
        p = out / f"frames_{start // chunk:04d}.dgvt"
        logio.write_log(p, frames[start:start + chunk])
        paths.append(p)
    logio.write_manifest(out / "manifest.txt", paths)
    log.info("wrote %d frames in %d logs under %s", len(frames), len(paths), out)
    print(out / "manifest.txt")
    return 0


# ---------------------------------------------------------------------------
# prune

def _mask_line(fid: int, bits: np.ndarray) -> str:
    return f"{fid} " + "".join("1" if b else "0" for b in bits)


def _check_invariants(result, cfg: PipelineConfig) -> None:
    for cell, toks in result.grid.cells.items():
        sel = result.selection_masks
        if not any(sel[t.frame_id].bits[t.token_index] for t in toks):
            raise InvariantViolation(
                f"voxel-occupancy: cell {tuple(cell)} retained no token")
    if cfg.rho > 0.0:
        for fid, mask in result.masks.items():
            target = result.floor_targets[fid]
            if mask.kept < target:
                raise InvariantViolation(
                    f"keep-floor: frame {fid} kept {mask.kept} of "
                    f"{len(mask)} tokens, floor is {target}")


def _flip_count(masks: dict) -> int:
    fids = sorted(masks)
    return sum(
        int(np.count_nonzero(masks[a].bits != masks[b].bits))
        for a, b in zip(fids, fids[1:])
    )


def _run_batch(frames, cfg: PipelineConfig):
    return prune_pipeline(
        frames,
        policy=cfg.resolution_policy(),
        rule=cfg.selection_rule(),
        rho=cfg.rho,
        weights=cfg.completion(),
        smooth_window=cfg.smooth_window,
        anchor_settings=cfg.anchor_settings(),
        return_details=True,
    )


def cmd_prune(args) -> int:
    cfg = _load_config(args)
    frames = logio.load_manifest(args.manifest)
    log.info("loaded %d frames from %s", len(frames), args.manifest)
    result = _run_batch(frames, cfg)
    if args.oracle_check:
        reference = harness.oracle_prune(frames, cfg)
        for fid in sorted(result.masks):
            got = result.masks[fid]
            want = reference[fid]
            if (not np.array_equal(got.bits, want.bits)
                    or not np.array_equal(got.protected, want.protected)):
                raise InvariantViolation(
                    f"oracle-equivalence: frame {fid} masks differ")
        log.info("oracle check passed on %d frames", len(frames))
    out = _outdir(args)
    with open(out / "masks.txt", "w", encoding="utf-8") as fh:
        for fid in sorted(result.masks):
            fh.write(_mask_line(fid, result.masks[fid].bits) + "\n")
    with open(out / "survivors.txt", "w", encoding="utf-8") as fh:
        for fid, toks in sorted(result.survivors().items()):
            for t in toks:
                if t.cell is not None:
                    cell = f"{t.cell.ix} {t.cell.iy} {t.cell.iz} {t.cell.band}"
                else:
                    cell = "- - - -"
                fh.write(f"{fid} {t.token_index} {cell}\n")
    total = sum(len(m) for m in result.masks.values())
    kept = sum(m.kept for m in result.masks.values())
    anchorless = sum(len(toks) - sum(1 for t in toks if t.anchored)
                     for toks in result.tokens.values())
    protected = sum(int(m.protected.sum()) for m in result.masks.values())
    lines = [
        "[run]",
        f"frames = {len(result.masks)}",
        f"tokensTotal = {total}",
        f"tokensKept = {kept}",
        f"keepFraction = {kept / total!r}" if total else "keepFraction = 1.0",
        f"anchorlessTokens = {anchorless}",
        f"protectedTokens = {protected}",
        f"occupiedVoxels = {result.grid.occupied()}",
        f"flipsBeforeSmoothing = {_flip_count(result.completed_masks)}",
        f"flipsAfterSmoothing = {_flip_count(result.masks)}",
        "",
        "[config]",
        *cfg.to_lines(),
    ]
    (out / "metrics.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")
    _check_invariants(result, cfg)
    log.info("pruned %d frames: kept %d of %d tokens", len(frames), kept, total)
    print(out / "metrics.txt")
    return 0


# ---------------------------------------------------------------------------
# stream

def cmd_stream(args) -> int:
    if args.resume:
        store, cfg = session.load_session(args.resume)
        if args.config:
            log.warning("--config ignored: resuming with the saved session config")
    else:
        cfg = _load_config(args)
        store = cfg.memory_store()
    frames = logio.load_manifest(args.manifest)
    last = store.last_frame_id
    if last is not None:
        frames = [f for f in frames if f.frame_id > last]
        log.info("resuming after frame %d: %d frames left", last, len(frames))
    out = _outdir(args)
    evictions = 0
    displaced = 0
    with open(out / "budget.jsonl", "a" if args.resume else "w",
              encoding="utf-8") as fh:
        for frame in frames:
            report = store.advance(frame)
            bud = store.budget_report()
            row = {
                "frameId": frame.frame_id,
                "activeTokens": bud.active_tokens,
                "memoryTokens": bud.memory_tokens,
                "occupiedVoxels": bud.occupied_voxels,
                "reductionRatio": bud.reduction_ratio,
                "stored": report.stored if report else 0,
                "displaced": report.displaced if report else 0,
            }
            if report:
                evictions += 1
                displaced += report.displaced
            fh.write(json.dumps(row, separators=(",", ":")) + "\n")
    session.save_session(out / "session.json", store, cfg)
    bud = store.budget_report()
    lines = [
        "[run]",
        f"frames = {len(store.ledger)}",
        f"activeTokens = {bud.active_tokens}",
        f"memoryTokens = {bud.memory_tokens}",
        f"occupiedVoxels = {bud.occupied_voxels}",
        f"reductionRatio = {bud.reduction_ratio!r}",
        f"evictions = {evictions}",
        f"displacedTokens = {displaced}",
        "",
        "[config]",
        *cfg.to_lines(),
    ]
    (out / "metrics.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")
    log.info("stream done: %d memory tokens over %d voxels",
             bud.memory_tokens, bud.occupied_voxels)
    print(out / "session.json")
    return 0


# ---------------------------------------------------------------------------
# export

def _write_ply(path, names, formats, rows) -> None:
    header = ["ply", "format ascii 1.0", f"element vertex {len(rows)}"]
    header += [f"property {f} {n}" for n, f in zip(names, formats)]
    header.append("end_header")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(header) + "\n")
        for row in rows:
            fh.write(" ".join(repr(v) if isinstance(v, float) else str(v)
                              for v in row) + "\n")


def cmd_export(args) -> int:
    cfg = _load_config(args)
    frames = logio.load_manifest(args.manifest)
    result = _run_batch(frames, cfg)
    out = _outdir(args)
    written = []
    if args.what in ("anchors", "both"):
        rows = []
        for fid in sorted(result.masks):
            for t in result.survivors()[fid]:
                if t.anchored:
                    rows.append((float(t.anchor[0]), float(t.anchor[1]),
                                 float(t.anchor[2]), fid, t.token_index))
        _write_ply(out / "anchors.ply",
                   ("x", "y", "z", "frame_id", "token_index"),
                   ("double", "double", "double", "uint", "uint"), rows)
        written.append(out / "anchors.ply")
    if args.what in ("voxels", "both"):
        policy = cfg.resolution_policy()
        rows = []
        for cell in sorted(result.grid.cells):
            # centers assume frame_factor 1 (exact under frameScaleMode off)
            size = policy.base_size * policy.band_scales[cell.band]
            rows.append(((cell.ix + 0.5) * size, (cell.iy + 0.5) * size,
                         (cell.iz + 0.5) * size, cell.band))
        _write_ply(out / "voxels.ply", ("x", "y", "z", "band"),
                   ("double", "double", "double", "uint"), rows)
        written.append(out / "voxels.ply")
    for p in written:
        print(p)
    return 0


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="voxtok",
        description="Voxel-deduplicated token memory for streaming depth logs.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="render a synthetic trajectory to logs")
    g.add_argument("--preset", choices=("corridor", "loop", "dynamic"),
                   default="corridor")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--frames", type=int, default=24)
    g.add_argument("--laps", type=int, default=1,
                   help="repeat the loop preset's cycle this many times")
    g.add_argument("--width", type=int, default=32)
    g.add_argument("--height", type=int, default=32)
    g.add_argument("--patch", type=int, default=8)
    g.add_argument("--dims", type=int, default=32)
    g.add_argument("--chunk", type=int, default=16,
                   help="frames per log file")
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_gen)

    p = sub.add_parser("prune", help="batch-prune a recorded trajectory")
    p.add_argument("--manifest", required=True)
    p.add_argument("--config")
    p.add_argument("--rule", choices=("latest", "priority", "multitoken"))
    p.add_argument("--rho", type=float)
    p.add_argument("--window", type=int, help="temporal smoothing window")
    p.add_argument("--oracle-check", action="store_true",
                   help="verify against the naive reference enumerator")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_prune)

    s = sub.add_parser("stream", help="run the sliding-window token memory")
    s.add_argument("--manifest", required=True)
    s.add_argument("--config")
    s.add_argument("--rule", choices=("latest", "priority", "multitoken"))
    s.add_argument("--rho", type=float)
    s.add_argument("--window", type=int, help="active window size")
    s.add_argument("--resume", help="continue from a saved session.json")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_stream)

    e = sub.add_parser("export", help="write kept anchors / voxels as PLY")
    e.add_argument("--manifest", required=True)
    e.add_argument("--config")
    e.add_argument("--rule", choices=("latest", "priority", "multitoken"))
    e.add_argument("--rho", type=float)
    e.add_argument("--window", type=int, help="temporal smoothing window")
    e.add_argument("--what", choices=("anchors", "voxels", "both"),
                   default="both")
    e.add_argument("--out", required=True)
    e.set_defaults(func=cmd_export)
    return parser


def main(argv=None) -> int:
    try:
        _setup_logging()
        args = build_parser().parse_args(argv)
        return args.func(args)
    except ConfigError as exc:
        print(f"voxtok: config error: {exc}", file=sys.stderr)
        return 2
    except ScaleExceeded as exc:
        print(f"voxtok: config error: {exc}", file=sys.stderr)
        return 2
    except (LogFormatError, NonMonotonicFrame) as exc:
        print(f"voxtok: malformed input: {exc}", file=sys.stderr)
        return 3
    except InvariantViolation as exc:
        print(f"voxtok: invariant violated: {exc}", file=sys.stderr)
        return 4
    except VoxtokError as exc:
        print(f"voxtok: config error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
