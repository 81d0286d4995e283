"""Batch gaze-processing kernels.

The simulation harness pushes millions of samples per experiment run, far
too many for the per-sample Python path.  Both stages are offered in two
implementations with identical semantics:

* a numba @njit loop (default), and
* a pure-numpy vectorized fallback.

Set GAZECTX_KERNELS=numpy (or =numba) to force one; the default prefers
numba when it imports.  benchmarks/bench_kernels.py compares the two.

Semantics mirror fixation.FixationDetector exactly: dwell accrues between
consecutive samples on the same word when their spacing is within
max_sample_interval_ms; an episode restarts after the word was last seen
more than gap_tolerance_ms ago; one emission per episode, at the first
sample whose accumulated dwell strictly exceeds the threshold.
"""

from __future__ import annotations

import os

import numpy as np

from .workspace import SpatialIndex

__all__ = [
    "kernel_backend",
    "hit_test_batch",
    "detect_fixations_batch",
    "hit_test_batch_numpy",
    "detect_fixations_batch_numpy",
    "hit_test_batch_numba",
    "detect_fixations_batch_numba",
]

_ENV_FLAG = "GAZECTX_KERNELS"

try:
    import numba

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a hard dep, but stay usable
    _HAVE_NUMBA = False


def kernel_backend() -> str:
    """Resolved backend name, 'numba' or 'numpy'."""
    choice = os.environ.get(_ENV_FLAG, "").strip().lower()
    if choice == "numpy":
        return "numpy"
    if choice == "numba":
        if not _HAVE_NUMBA:
            raise RuntimeError(f"{_ENV_FLAG}=numba but numba is not importable")
        return "numba"
    if choice:
        raise RuntimeError(f"{_ENV_FLAG} must be 'numba' or 'numpy', got {choice!r}")
    return "numba" if _HAVE_NUMBA else "numpy"


# --------------------------------------------------------------------------
# hit test
# --------------------------------------------------------------------------


def hit_test_batch(
    index: SpatialIndex, win_idx: np.ndarray, xs: np.ndarray, ys: np.ndarray
) -> np.ndarray:
    """Map each (window, x, y) sample to a global word index, -1 for misses.

    win_idx entries of -1 denote off-workspace samples.
    """
    if kernel_backend() == "numba":
        return hit_test_batch_numba(index, win_idx, xs, ys)
    return hit_test_batch_numpy(index, win_idx, xs, ys)


def hit_test_batch_numpy(
    index: SpatialIndex, win_idx: np.ndarray, xs: np.ndarray, ys: np.ndarray
) -> np.ndarray:
    n = len(win_idx)
    out = np.full(n, -1, dtype=np.int64)
    valid = win_idx >= 0
    valid &= (xs >= 0) & (ys >= 0)
    cx = np.zeros(n, dtype=np.int64)
    cy = np.zeros(n, dtype=np.int64)
    np.floor_divide(xs, index.cell_px, out=cx, where=valid, casting="unsafe")
    np.floor_divide(ys, index.cell_px, out=cy, where=valid, casting="unsafe")
    wi = np.where(valid, win_idx, 0)
    valid &= (cx < index.nx[wi]) & (cy < index.ny[wi])
    cells = np.where(valid, index.grid_off[wi] + cy * index.nx[wi] + cx, 0)
    cand = index.padded_candidates()[cells]  # (n, K)
    real = cand >= 0
    g = np.where(real, cand, 0)
    inside = (
        real
        & valid[:, None]
        & (index.wx[g] <= xs[:, None])
        & (xs[:, None] < index.wx[g] + index.ww[g])
        & (index.wy[g] <= ys[:, None])
        & (ys[:, None] < index.wy[g] + index.wh[g])
    )
    hit_any = inside.any(axis=1)
    first = inside.argmax(axis=1)
    out[hit_any] = cand[np.flatnonzero(hit_any), first[hit_any]]
    return out


def detect_fixations_batch(
    t_ms: np.ndarray,
    word_gid: np.ndarray,
    n_words: int,
    dwell_threshold_ms: float = 120.0,
    gap_tolerance_ms: float = 50.0,
    max_sample_interval_ms: float = 25.0,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Run fixation detection over a whole sample stream at once.

    word_gid holds the global word index per sample (-1 for misses), as
    produced by hit_test_batch.  Returns (emit_idx, emit_word, start_ms):
    the sample index of each emission in stream order, the word emitted,
    and the episode start time.
    """
    t_ms = np.ascontiguousarray(t_ms, dtype=np.float64)
    word_gid = np.ascontiguousarray(word_gid, dtype=np.int64)
    if kernel_backend() == "numba":
        return detect_fixations_batch_numba(
            t_ms, word_gid, n_words, dwell_threshold_ms, gap_tolerance_ms, max_sample_interval_ms
        )
    return detect_fixations_batch_numpy(
        t_ms, word_gid, n_words, dwell_threshold_ms, gap_tolerance_ms, max_sample_interval_ms
    )


def detect_fixations_batch_numpy(
    t_ms: np.ndarray,
    word_gid: np.ndarray,
    n_words: int,
    dwell_threshold_ms: float,
    gap_tolerance_ms: float,
    max_sample_interval_ms: float,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    n = len(t_ms)
    empty = (
        np.empty(0, dtype=np.int64),
        np.empty(0, dtype=np.int64),
        np.empty(0, dtype=np.float64),
    )
    if n == 0:
        return empty

    # Dwell credit earned at each sample from its immediate predecessor.
    credit = np.zeros(n)
    dt = t_ms[1:] - t_ms[:-1]
    same = (word_gid[1:] == word_gid[:-1]) & (word_gid[1:] >= 0)
    credit[1:] = np.where(same & (dt <= max_sample_interval_ms), dt, 0.0)

    on = np.flatnonzero(word_gid >= 0)
    if on.size == 0:
        return empty
    # Group on-word samples by word; stable sort keeps time order in groups.
    order = on[np.argsort(word_gid[on], kind="stable")]
    w_sorted = word_gid[order]
    t_sorted = t_ms[order]
    c_sorted = credit[order]

    first_of_word = np.empty(order.size, dtype=bool)
    first_of_word[0] = True
    first_of_word[1:] = w_sorted[1:] != w_sorted[:-1]
    gap = np.empty(order.size)
    gap[0] = np.inf
    gap[1:] = t_sorted[1:] - t_sorted[:-1]
    new_episode = first_of_word | (gap > gap_tolerance_ms)
    episode_id = np.cumsum(new_episode) - 1

    # Segmented cumulative dwell: subtract the running sum at episode start.
    cs = np.cumsum(c_sorted)
    start_pos = np.flatnonzero(new_episode)
    base = (cs - c_sorted)[start_pos]
    dwell = cs - base[episode_id]
    # An episode's first sample never carries credit from a foreign gap:
    # credit requires the immediate predecessor on the same word within
    # max_sample_interval <= gap_tolerance, which contradicts a restart.
    crossed = dwell > dwell_threshold_ms
    cross_pos = np.flatnonzero(crossed)
    if cross_pos.size == 0:
        return empty
    eps, first_idx = np.unique(episode_id[cross_pos], return_index=True)
    emit_pos = cross_pos[first_idx]

    emit_idx = order[emit_pos]
    emit_word = w_sorted[emit_pos]
    starts = t_sorted[start_pos][eps]
    # Restore stream order.
    chrono = np.argsort(emit_idx, kind="stable")
    return emit_idx[chrono], emit_word[chrono], starts[chrono]


if _HAVE_NUMBA:

    @numba.njit(cache=True)
    def _hit_test_loop(
        win_idx, xs, ys, cell_px, nx, ny, grid_off, cell_start, cell_words, wx, wy, ww, wh
    ):  # pragma: no cover - exercised via wrapper
        n = win_idx.shape[0]
        out = np.full(n, -1, dtype=np.int64)
        for i in range(n):
            w = win_idx[i]
            if w < 0:
                continue
            x = xs[i]
            y = ys[i]
            if x < 0 or y < 0:
                continue
            cx = int(x // cell_px)
            cy = int(y // cell_px)
            if cx >= nx[w] or cy >= ny[w]:
                continue
            c = grid_off[w] + cy * nx[w] + cx
            for k in range(cell_start[c], cell_start[c + 1]):
                g = cell_words[k]
                if wx[g] <= x < wx[g] + ww[g] and wy[g] <= y < wy[g] + wh[g]:
                    out[i] = g
                    break
        return out

    @numba.njit(cache=True)
    def _detect_loop(
        t_ms, word_gid, n_words, threshold, gap_tol, max_interval
    ):  # pragma: no cover - exercised via wrapper
        n = t_ms.shape[0]
        last_on = np.full(n_words, -np.inf)
        dwell = np.zeros(n_words)
        start = np.zeros(n_words)
        emitted = np.zeros(n_words, dtype=np.bool_)
        emit_idx = np.empty(n, dtype=np.int64)
        emit_word = np.empty(n, dtype=np.int64)
        emit_start = np.empty(n, dtype=np.float64)
        m = 0
        prev_word = np.int64(-1)
        prev_t = 0.0
        for i in range(n):
            g = word_gid[i]
            t = t_ms[i]
            if g >= 0:
                if t - last_on[g] > gap_tol:
                    start[g] = t
                    dwell[g] = 0.0
                    emitted[g] = False
                else:
                    if g == prev_word and i > 0 and t - prev_t <= max_interval:
                        dwell[g] += t - prev_t
                    if not emitted[g] and dwell[g] > threshold:
                        emitted[g] = True
                        emit_idx[m] = i
                        emit_word[m] = g
                        emit_start[m] = start[g]
                        m += 1
                last_on[g] = t
            prev_word = g
            prev_t = t
        return emit_idx[:m], emit_word[:m], emit_start[:m]

    def hit_test_batch_numba(
        index: SpatialIndex, win_idx: np.ndarray, xs: np.ndarray, ys: np.ndarray
    ) -> np.ndarray:
        return _hit_test_loop(
            np.ascontiguousarray(win_idx, dtype=np.int64),
            np.ascontiguousarray(xs, dtype=np.float64),
            np.ascontiguousarray(ys, dtype=np.float64),
            float(index.cell_px),
            index.nx,
            index.ny,
            index.grid_off,
            index.cell_start,
            index.cell_words,
            index.wx,
            index.wy,
            index.ww,
            index.wh,
        )

    def detect_fixations_batch_numba(
        t_ms: np.ndarray,
        word_gid: np.ndarray,
        n_words: int,
        dwell_threshold_ms: float,
        gap_tolerance_ms: float,
        max_sample_interval_ms: float,
    ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return _detect_loop(
            np.ascontiguousarray(t_ms, dtype=np.float64),
            np.ascontiguousarray(word_gid, dtype=np.int64),
            n_words,
            float(dwell_threshold_ms),
            float(gap_tolerance_ms),
            float(max_sample_interval_ms),
        )

    def warmup() -> None:
        """Trigger JIT compilation so timing runs measure steady state."""
        t = np.array([0.0, 10.0, 200.0])
        g = np.array([0, 0, -1], dtype=np.int64)
        _detect_loop(t, g, 1, 120.0, 50.0, 25.0)

else:  # pragma: no cover

    def hit_test_batch_numba(index, win_idx, xs, ys):
        raise RuntimeError("numba is not available")

    def detect_fixations_batch_numba(t_ms, word_gid, n_words, *args):
        raise RuntimeError("numba is not available")

    def warmup() -> None:
        pass
