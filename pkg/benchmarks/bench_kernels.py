"""Benchmark the numba kernels against the pure-numpy fallbacks.

Generates a long synthetic reading stream over the packaged fixtures and
times hit-testing plus fixation detection through both implementations.

    python3 benchmarks/bench_kernels.py --samples 2000000 --repeats 5
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from gazectx import kernels
from gazectx.simharness import ScanpathParams, Scanpath, generate_scanpath, load_fixtures, packaged_fixtures_dir


def build_stream(n_samples: int) -> tuple:
    fx = load_fixtures(packaged_fixtures_dir())
    ws = fx.workspace
    parts = []
    t0 = 0.0
    seed = 0
    total = 0
    while total < n_samples:
        for w in ws.windows:
            sp = generate_scanpath(ws, w.id, ScanpathParams(seed=seed), t0_ms=t0)
            parts.append(sp)
            t0 = float(sp.t_ms[-1]) + 30.0
            total += len(sp)
        seed += 1
    stream = parts[0]
    for part in parts[1:]:
        stream = Scanpath.concat(stream, part)
    remap = np.array([ws.index.window_index[wid] for wid in stream.windows], dtype=np.int64)
    return ws, remap[stream.win_idx], stream


def timed(fn, repeats: int) -> float:
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--samples", type=int, default=2_000_000)
    parser.add_argument("--repeats", type=int, default=5)
    args = parser.parse_args()

    ws, win, stream = build_stream(args.samples)
    n = len(stream)
    print(f"stream: {n} samples over {len(ws.words)} words")

    kernels.warmup()
    hit_nb = kernels.hit_test_batch_numba(ws.index, win, stream.x, stream.y)
    hit_np = kernels.hit_test_batch_numpy(ws.index, win, stream.x, stream.y)
    assert np.array_equal(hit_nb, hit_np), "kernel outputs disagree"

    t_hit_nb = timed(lambda: kernels.hit_test_batch_numba(ws.index, win, stream.x, stream.y), args.repeats)
    t_hit_np = timed(lambda: kernels.hit_test_batch_numpy(ws.index, win, stream.x, stream.y), args.repeats)

    det_args = (stream.t_ms, hit_nb, len(ws.words), 120.0, 50.0, 25.0)
    out_nb = kernels.detect_fixations_batch_numba(*det_args)
    out_np = kernels.detect_fixations_batch_numpy(*det_args)
    assert all(np.array_equal(a, b) for a, b in zip(out_nb, out_np)), "kernel outputs disagree"
    print(f"fixations detected: {len(out_nb[0])}")

    t_det_nb = timed(lambda: kernels.detect_fixations_batch_numba(*det_args), args.repeats)
    t_det_np = timed(lambda: kernels.detect_fixations_batch_numpy(*det_args), args.repeats)

    def row(name: str, t_nb: float, t_np: float) -> None:
        print(
            f"{name:<18} numba {t_nb * 1e3:8.1f} ms ({n / t_nb / 1e6:6.1f} M/s)   "
            f"numpy {t_np * 1e3:8.1f} ms ({n / t_np / 1e6:6.1f} M/s)   "
            f"speedup x{t_np / t_nb:.1f}"
        )

    row("hit_test_batch", t_hit_nb, t_hit_np)
    row("detect_fixations", t_det_nb, t_det_np)


if __name__ == "__main__":
    main()
