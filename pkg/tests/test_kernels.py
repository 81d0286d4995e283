"""Batch kernels: numba and numpy paths against the online detector."""

from __future__ import annotations

import numpy as np
import pytest

from gazectx import kernels
from gazectx.fixation import DetectorConfig, FixationDetector, GazeSample, WindowPoint
from gazectx.kernels import (
    detect_fixations_batch,
    detect_fixations_batch_numba,
    detect_fixations_batch_numpy,
    hit_test_batch,
    hit_test_batch_numba,
    hit_test_batch_numpy,
    kernel_backend,
)

from conftest import single_window_workspace

DETECT_ARGS = (120.0, 50.0, 25.0)


# --------------------------------------------------------------------------
# backend selection
# --------------------------------------------------------------------------


def test_backend_defaults_to_numba(monkeypatch):
    monkeypatch.delenv("GAZECTX_KERNELS", raising=False)
    assert kernel_backend() == "numba"


def test_backend_env_override(monkeypatch):
    monkeypatch.setenv("GAZECTX_KERNELS", "numpy")
    assert kernel_backend() == "numpy"
    monkeypatch.setenv("GAZECTX_KERNELS", " NumBa ")
    assert kernel_backend() == "numba"


def test_backend_rejects_unknown_value(monkeypatch):
    monkeypatch.setenv("GAZECTX_KERNELS", "fortran")
    with pytest.raises(RuntimeError, match="GAZECTX_KERNELS"):
        kernel_backend()


def test_dispatch_follows_env(monkeypatch, fixtures):
    ws = fixtures.workspace
    win_idx = np.array([0, 1, -1], dtype=np.int64)
    xs = np.array([30.0, 25.0, 0.0])
    ys = np.array([25.0, 25.0, 0.0])
    monkeypatch.setenv("GAZECTX_KERNELS", "numpy")
    via_numpy = hit_test_batch(ws.index, win_idx, xs, ys)
    monkeypatch.setenv("GAZECTX_KERNELS", "numba")
    via_numba = hit_test_batch(ws.index, win_idx, xs, ys)
    np.testing.assert_array_equal(via_numpy, via_numba)


def test_warmup_runs():
    kernels.warmup()


# --------------------------------------------------------------------------
# hit test equivalence
# --------------------------------------------------------------------------


def random_points(ws, rng, n):
    """Random sample coordinates: mostly on words, some margin, some off."""
    nwin = len(ws.windows)
    win_idx = rng.integers(0, nwin, size=n).astype(np.int64)
    win_idx[rng.random(n) < 0.05] = -1
    xs = np.empty(n)
    ys = np.empty(n)
    words = ws.words
    for i in range(n):
        r = rng.random()
        if r < 0.7 and words:
            b = words[rng.integers(0, len(words))]
            win_idx[i] = ws.index.window_index[b.window_id]
            xs[i] = b.x + rng.uniform(0, b.w)
            ys[i] = b.y + rng.uniform(0, b.h)
        else:
            w = ws.windows[win_idx[i]] if win_idx[i] >= 0 else ws.windows[0]
            xs[i] = rng.uniform(-5, w.width_px + 5)
            ys[i] = rng.uniform(-5, w.height_px + 5)
    return win_idx, xs, ys


def test_hit_test_paths_agree_with_brute_force(fixtures):
    ws = fixtures.workspace
    rng = np.random.default_rng(11)
    win_idx, xs, ys = random_points(ws, rng, 3000)
    got_nb = hit_test_batch_numba(ws.index, win_idx, xs, ys)
    got_np = hit_test_batch_numpy(ws.index, win_idx, xs, ys)
    np.testing.assert_array_equal(got_nb, got_np)
    for i in range(len(win_idx)):
        expected = -1
        if win_idx[i] >= 0:
            wid = ws.windows[win_idx[i]].id
            for g, b in enumerate(ws.words):
                if b.window_id == wid and b.contains(xs[i], ys[i]):
                    expected = g
                    break
        assert got_nb[i] == expected, f"sample {i}"


def test_hit_test_boundaries():
    ws = single_window_workspace("alpha beta")
    a = ws.words[0]
    win_idx = np.zeros(6, dtype=np.int64)
    xs = np.array([a.x, a.x + a.w - 1e-9, a.x + a.w, a.x - 1e-9, -3.0, 1e9])
    ys = np.array([a.y, a.y + a.h - 1e-9, float(a.y), float(a.y), 5.0, 5.0])
    for fn in (hit_test_batch_numba, hit_test_batch_numpy):
        np.testing.assert_array_equal(fn(ws.index, win_idx, xs, ys), [0, 0, -1, -1, -1, -1])


def test_hit_test_empty_batch(fixtures):
    ws = fixtures.workspace
    e_i = np.empty(0, dtype=np.int64)
    e_f = np.empty(0)
    assert hit_test_batch_numba(ws.index, e_i, e_f, e_f).size == 0
    assert hit_test_batch_numpy(ws.index, e_i, e_f, e_f).size == 0


# --------------------------------------------------------------------------
# fixation detection equivalence
# --------------------------------------------------------------------------


def random_stream(ws, rng, n):
    """Timestamps with dropouts plus word indices with misses and revisits."""
    dt = rng.choice([5.0, 8.0, 10.0, 20.0, 25.0, 26.0, 40.0, 51.0, 80.0], size=n,
                    p=[0.2, 0.2, 0.25, 0.1, 0.05, 0.05, 0.05, 0.05, 0.05])
    t = np.cumsum(dt)
    n_words = len(ws.words)
    # biased random walk so dwells actually build up
    gids = np.empty(n, dtype=np.int64)
    g = rng.integers(0, n_words)
    for i in range(n):
        r = rng.random()
        if r < 0.55:
            pass  # stay
        elif r < 0.75:
            g = rng.integers(0, n_words)  # jump anywhere
        elif r < 0.9:
            g = (g + 1) % n_words  # neighbour
        gids[i] = g if rng.random() > 0.12 else -1  # occasional miss
    return t, gids


def online_reference(ws, t, gids):
    det = FixationDetector(ws, DetectorConfig(*DETECT_ARGS))
    out = []
    for i in range(len(t)):
        g = int(gids[i])
        if g >= 0:
            b = ws.words[g]
            target = WindowPoint(b.window_id, b.x + 0.5, b.y + 0.5)
        else:
            target = None
        for f in det.ingest(GazeSample(float(t[i]), target)):
            key = (f.window_id, f.order_index)
            gid = next(
                j for j, w in enumerate(ws.words)
                if (w.window_id, w.order_index) == key
            )
            out.append((float(t[i]), gid, f.start_ms))
    return out


@pytest.mark.parametrize("seed", range(12))
def test_detect_paths_match_online_detector(fixtures, seed):
    ws = fixtures.workspace
    rng = np.random.default_rng(seed)
    t, gids = random_stream(ws, rng, 1500)
    expected = online_reference(ws, t, gids)
    for fn in (detect_fixations_batch_numba, detect_fixations_batch_numpy):
        idx, word, start = fn(t, gids, len(ws.words), *DETECT_ARGS)
        got = [(float(t[idx[k]]), int(word[k]), float(start[k])) for k in range(len(idx))]
        assert got == expected, fn.__name__


def scenario_cases():
    # (t, gid) streams with known emissions, from the online detector tests
    ramp = [(float(k * 10), 0) for k in range(14)]
    bridged = (
        [(float(k * 10), 0) for k in range(9)]
        + [(90.0, -1), (100.0, -1), (110.0, -1)]
        + [(111.0 + 10 * k, 0) for k in range(6)]
    )
    sparse = [(float(k * 40), 0) for k in range(40)]
    alternate = [(float(k * 10), k % 2) for k in range(200)]
    return [
        (ramp, [(130.0, 0, 0.0)]),
        (bridged, [(161.0, 0, 0.0)]),
        (sparse, []),
        (alternate, []),
    ]


@pytest.mark.parametrize("stream,expected", scenario_cases())
def test_detect_hand_traced_scenarios(stream, expected):
    t = np.array([s[0] for s in stream])
    g = np.array([s[1] for s in stream], dtype=np.int64)
    for fn in (detect_fixations_batch_numba, detect_fixations_batch_numpy):
        idx, word, start = fn(t, g, 2, *DETECT_ARGS)
        got = [(float(t[idx[k]]), int(word[k]), float(start[k])) for k in range(len(idx))]
        assert got == expected, fn.__name__


def test_detect_empty_and_all_miss():
    for fn in (detect_fixations_batch_numba, detect_fixations_batch_numpy):
        idx, word, start = fn(np.empty(0), np.empty(0, dtype=np.int64), 5, *DETECT_ARGS)
        assert idx.size == word.size == start.size == 0
        t = np.arange(0.0, 500.0, 10.0)
        idx, word, start = fn(t, np.full(t.size, -1, dtype=np.int64), 5, *DETECT_ARGS)
        assert idx.size == 0


def test_detect_dispatch_follows_env(monkeypatch):
    t = np.array([float(k * 10) for k in range(14)])
    g = np.zeros(14, dtype=np.int64)
    monkeypatch.setenv("GAZECTX_KERNELS", "numpy")
    a = detect_fixations_batch(t, g, 1, *DETECT_ARGS)
    monkeypatch.setenv("GAZECTX_KERNELS", "numba")
    b = detect_fixations_batch(t, g, 1, *DETECT_ARGS)
    for x, y in zip(a, b):
        np.testing.assert_array_equal(x, y)
    assert list(a[0]) == [13]
