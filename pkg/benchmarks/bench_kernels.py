"""Timing comparison of the compiled kernels against the numpy fallback.

Per-kernel timings call both backends directly on identical inputs (and
assert the outputs match bit for bit while at it).  The end-to-end row
times MemoryStore.advance with whichever backend the process imported;
``--both`` re-runs that row in a subprocess with VOXTOK_NO_NATIVE=1 so the
fallback number comes from a clean import.

Usage:
    python3 benchmarks/bench_kernels.py [--width 224 --height 224
        --patch 16 --dims 256 --frames 40 --repeat 5] [--both]
"""

import argparse
import os
import subprocess
import sys
import time

import numpy as np

from voxtok import MemoryStore, backend_name
from voxtok._kernels import available_backends, get_backend
from voxtok.harness import generate, preset


def _time(fn, repeat):
    best = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        dt = time.perf_counter() - t0
        if best is None or dt < best:
            best = dt
    return best


def bench_kernels(args):
    rng = np.random.default_rng(0)
    h, w, p = args.height, args.width, args.patch
    depth = rng.uniform(0.5, 8.0, size=(h, w))
    depth[rng.random((h, w)) < 0.05] = np.nan
    fx = fy = 0.6 * w
    cx, cy = (w - 1) / 2.0, (h - 1) / 2.0
    rot = np.eye(3)
    trans = np.array([1.0, 2.0, 0.5])
    masks = (rng.random((args.frames, (h // p) * (w // p))) < 0.5).astype(np.uint8)

    backends = {name: get_backend(name) for name in available_backends()}
    ref = backends["numpy"]
    pts, valid = ref.backproject(depth, fx, fy, cx, cy, np.inf)
    wpts = ref.transform_pointmap(pts, rot, trans)
    anchors, _ = ref.patch_reduce_centroid(wpts, valid, p, p)
    sizes = np.full(len(anchors), 0.25)

    cases = {
        "backproject": lambda b: b.backproject(depth, fx, fy, cx, cy, np.inf),
        "transform_pointmap": lambda b: b.transform_pointmap(pts, rot, trans),
        "patch_reduce_centroid":
            lambda b: b.patch_reduce_centroid(wpts, valid, p, p),
        "quantize_anchors": lambda b: b.quantize_anchors(anchors, sizes),
        "majority_vote": lambda b: b.majority_vote(masks, 3),
    }
    names = list(backends)
    print(f"kernel timings ({h}x{w}, patch {p}, best of {args.repeat}):")
    header = f"{'kernel':24s}" + "".join(f"{n:>12s}" for n in names)
    if len(names) == 2:
        header += f"{'speedup':>10s}"
    print(header)
    for label, call in cases.items():
        times = []
        outs = []
        for name in names:
            b = backends[name]
            outs.append(call(b))
            times.append(_time(lambda b=b: call(b), args.repeat))
        if len(outs) == 2:
            a, c = outs
            a = a if isinstance(a, tuple) else (a,)
            c = c if isinstance(c, tuple) else (c,)
            for x, y in zip(a, c):
                assert np.array_equal(np.asarray(x), np.asarray(y),
                                      equal_nan=True), f"{label} outputs differ"
        row = f"{label:24s}" + "".join(f"{t * 1e3:10.3f}ms" for t in times)
        if len(times) == 2:
            row += f"{times[0] / times[1]:9.2f}x"
        print(row)


def bench_stream(args):
    scene, path = preset("corridor", seed=0)
    traj = generate(scene, path, args.frames, width=args.width,
                    height=args.height, patch_size=args.patch,
                    feature_dim=args.dims)
    def run():
        store = MemoryStore(window_size=8)
        for frame in traj.frames:
            store.advance(frame)
    best = _time(run, max(2, args.repeat // 2))
    fps = len(traj.frames) / best
    print(f"stream advance [{backend_name}]: {len(traj.frames)} frames "
          f"({args.height}x{args.width}, {args.dims} dims) in {best * 1e3:.1f}ms "
          f"= {fps:.0f} frames/s")


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--width", type=int, default=224)
    ap.add_argument("--height", type=int, default=224)
    ap.add_argument("--patch", type=int, default=16)
    ap.add_argument("--dims", type=int, default=256)
    ap.add_argument("--frames", type=int, default=40)
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--both", action="store_true",
                    help="also time the stream loop with the numpy fallback")
    ap.add_argument("--stream-only", action="store_true", help=argparse.SUPPRESS)
    args = ap.parse_args()
    if not args.stream_only:
        bench_kernels(args)
    bench_stream(args)
    if args.both and not args.stream_only:
        sys.stdout.flush()
        env = dict(os.environ, VOXTOK_NO_NATIVE="1")
        cmd = [sys.executable, __file__, "--stream-only",
               "--width", str(args.width), "--height", str(args.height),
               "--patch", str(args.patch), "--dims", str(args.dims),
               "--frames", str(args.frames), "--repeat", str(args.repeat)]
        subprocess.run(cmd, env=env, check=True)


if __name__ == "__main__":
    main()
