"""Simulation harness: scanpaths, replay files, fixtures, experiment runs."""

from __future__ import annotations

import json

import numpy as np
import pytest

from gazectx.config import EngineConfig
from gazectx.prompting import ConditionMode
from gazectx.simharness import (
    CONDITION_ORDER,
    MAX_ATTEMPTS,
    FixtureError,
    ReplayError,
    Scanpath,
    ScanpathParams,
    attempt_text,
    generate_scanpath,
    load_fixtures,
    packaged_fixtures_dir,
    read_replay,
    replay_events,
    report_to_json,
    run_experiment,
    run_many,
    write_replay,
)
from gazectx.workspace import hit_test_word


# --------------------------------------------------------------------------
# scanpath generation
# --------------------------------------------------------------------------


def test_scanpath_is_deterministic(fixtures):
    a = generate_scanpath(fixtures.workspace, "w1", ScanpathParams(seed=5))
    b = generate_scanpath(fixtures.workspace, "w1", ScanpathParams(seed=5))
    c = generate_scanpath(fixtures.workspace, "w1", ScanpathParams(seed=6))
    assert a == b
    assert a != c


def test_scanpath_samples_are_well_formed(fixtures):
    ws = fixtures.workspace
    sp = generate_scanpath(ws, "w2", ScanpathParams(seed=1))
    assert sp.windows == ("w2",)
    assert len(sp) > 1000
    assert np.all(np.diff(sp.t_ms) > 0)
    # every sample lands on a word box of the window it targets
    for s in sp.iter_samples():
        assert s.target.window_id == "w2"
    gaps = np.diff(sp.t_ms)
    period = 1000.0 / 120.0
    assert np.isclose(gaps.min(), period)
    # inter-fixation hops are larger than the sampling period
    assert gaps.max() > period


def test_scanpath_visits_most_words_in_order(fixtures):
    ws = fixtures.workspace
    params = ScanpathParams(seed=3)
    sp = generate_scanpath(ws, "w1", params)
    seen = []
    for i in range(len(sp)):
        box = hit_test_word(ws, "w1", float(sp.x[i]), float(sp.y[i]))
        assert box is not None  # gaze points sit inside boxes, never between
        if not seen or seen[-1] != box.order_index:
            seen.append(box.order_index)
    n_words = len(ws.window_words("w1"))
    distinct = set(seen)
    # skip probability 0.1 leaves about 90% coverage
    assert len(distinct) > 0.8 * n_words
    # backward hops are rare regressions, each at most 5 words back
    drops = [j for j in range(1, len(seen)) if seen[j] < seen[j - 1]]
    assert len(drops) < 0.15 * len(seen)
    assert all(seen[j - 1] - seen[j] <= 5 for j in drops)


def test_scanpath_word_range_and_t0(fixtures):
    ws = fixtures.workspace
    params = ScanpathParams(seed=2, skip_probability=0.0, regression_probability=0.0)
    sp = generate_scanpath(ws, "w1", params, start_index=10, stop_index=15, t0_ms=5000.0)
    assert sp.t_ms[0] == 5000.0
    boxes = ws.window_words("w1")
    hit_orders = {
        hit_test_word(ws, "w1", float(sp.x[i]), float(sp.y[i])).order_index
        for i in range(len(sp))
    }
    assert hit_orders == {b.order_index for b in boxes[10:15]}


def test_scanpath_fixation_dwells_exceed_detector_threshold(fixtures):
    # min fixation 130 ms vs threshold 120: every visited word should emit
    ws = fixtures.workspace
    params = ScanpathParams(seed=9, skip_probability=0.0, regression_probability=0.0)
    sp = generate_scanpath(ws, "w3", params, start_index=0, stop_index=40)
    events = [e for e in replay_events(ws, sp) if e["type"] == "fixation"]
    assert len(events) == 40
    assert [e["order_index"] for e in events] == list(range(40))


def test_scanpath_empty_range(fixtures):
    sp = generate_scanpath(fixtures.workspace, "w1", ScanpathParams(), start_index=5, stop_index=5)
    assert len(sp) == 0
    assert sp == Scanpath.empty()


def test_scanpath_bad_range_rejected(fixtures):
    with pytest.raises(ValueError):
        generate_scanpath(fixtures.workspace, "w1", ScanpathParams(), start_index=10, stop_index=5)
    with pytest.raises(ValueError):
        generate_scanpath(fixtures.workspace, "w1", ScanpathParams(), start_index=0, stop_index=10**6)


def test_shared_rng_threads_determinism(fixtures):
    ws = fixtures.workspace
    params = ScanpathParams(seed=4)
    rng1 = np.random.default_rng(4)
    a1 = generate_scanpath(ws, "w1", params, stop_index=20, rng=rng1)
    a2 = generate_scanpath(ws, "w1", params, start_index=20, stop_index=40,
                           t0_ms=float(a1.t_ms[-1]) + 30.0, rng=rng1)
    rng2 = np.random.default_rng(4)
    b1 = generate_scanpath(ws, "w1", params, stop_index=20, rng=rng2)
    b2 = generate_scanpath(ws, "w1", params, start_index=20, stop_index=40,
                           t0_ms=float(b1.t_ms[-1]) + 30.0, rng=rng2)
    assert a1 == b1 and a2 == b2
    joined = Scanpath.concat(a1, a2)
    assert len(joined) == len(a1) + len(a2)
    assert np.all(np.diff(joined.t_ms) > 0)


def test_concat_rejects_time_overlap():
    a = Scanpath(("w1",), np.zeros(2, dtype=np.int64), np.array([0.0, 10.0]),
                 np.array([30.0, 30.0]), np.array([25.0, 25.0]))
    b = Scanpath(("w2",), np.zeros(1, dtype=np.int64), np.array([10.0]),
                 np.array([30.0]), np.array([25.0]))
    with pytest.raises(ValueError):
        Scanpath.concat(a, b)


def test_concat_remaps_window_tables():
    a = Scanpath(("w1",), np.zeros(1, dtype=np.int64), np.array([0.0]),
                 np.array([30.0]), np.array([25.0]))
    b = Scanpath(("w2", "w1"), np.array([0, 1], dtype=np.int64), np.array([10.0, 20.0]),
                 np.array([30.0, 40.0]), np.array([25.0, 25.0]))
    joined = Scanpath.concat(a, b)
    assert joined.windows == ("w1", "w2")
    assert list(joined.win_idx) == [0, 1, 0]


def test_params_validation():
    with pytest.raises(ValueError):
        ScanpathParams(skip_probability=1.0)
    with pytest.raises(ValueError):
        ScanpathParams(min_fixation_ms=0.0)
    with pytest.raises(ValueError):
        ScanpathParams(sample_rate_hz=0.0)


# --------------------------------------------------------------------------
# replay files
# --------------------------------------------------------------------------


def test_replay_round_trip(tmp_path, fixtures):
    sp = generate_scanpath(fixtures.workspace, "w1", ScanpathParams(seed=7), stop_index=30)
    path = tmp_path / "trace.jsonl"
    write_replay(path, sp)
    again = read_replay(path)
    assert again == sp
    # rewriting the parsed stream is byte-identical
    path2 = tmp_path / "trace2.jsonl"
    write_replay(path2, again)
    assert path.read_bytes() == path2.read_bytes()


def test_replay_lines_are_protocol_messages(tmp_path, fixtures):
    sp = generate_scanpath(fixtures.workspace, "w2", ScanpathParams(seed=8), stop_index=5)
    path = tmp_path / "trace.jsonl"
    write_replay(path, sp)
    for line in path.read_text().splitlines():
        obj = json.loads(line)
        assert obj["type"] == "gaze2d"
        assert set(obj) == {"type", "t_ms", "window", "x", "y"}


@pytest.mark.parametrize(
    "lines,fragment",
    [
        (["not json"], "line 1"),
        (['{"type":"fixation"}'], "line 1"),
        (['{"type":"gaze2d","t_ms":0,"x":1,"y":1}'], "line 1"),
        (['{"type":"gaze2d","t_ms":0,"window":7,"x":1,"y":1}'], "line 1"),
        (
            [
                '{"type":"gaze2d","t_ms":5,"window":"w1","x":1,"y":1}',
                '{"type":"gaze2d","t_ms":5,"window":"w1","x":1,"y":1}',
            ],
            "line 2",
        ),
    ],
)
def test_replay_errors_carry_line_numbers(tmp_path, lines, fragment):
    path = tmp_path / "bad.jsonl"
    path.write_text("\n".join(lines) + "\n")
    with pytest.raises(ReplayError, match=fragment):
        read_replay(path)


def test_replay_skips_blank_lines(tmp_path):
    path = tmp_path / "gappy.jsonl"
    path.write_text(
        '{"type":"gaze2d","t_ms":0,"window":"w1","x":1,"y":1}\n'
        "\n"
        '{"type":"gaze2d","t_ms":10,"window":"w1","x":1,"y":1}\n'
    )
    assert len(read_replay(path)) == 2


def test_replay_events_match_live_session(fixtures):
    # the batch path powering replay must agree with the online session
    from gazectx.fixation import FixationDetector
    from gazectx.memory import SaliencyBuffer

    ws = fixtures.workspace
    sp = generate_scanpath(ws, "w1", ScanpathParams(seed=12), stop_index=60)
    batch = list(replay_events(ws, sp))

    det = FixationDetector(ws)
    buffer = SaliencyBuffer()
    online = []
    for s in sp.iter_samples():
        for fx in det.ingest(s):
            buffer.append(fx.window_id, fx.text, fx.order_index, fx.emit_ms)
            online.append(
                {
                    "type": "fixation",
                    "window": fx.window_id,
                    "text": fx.text,
                    "order_index": fx.order_index,
                    "t_ms": fx.emit_ms,
                }
            )
            online.append(
                {
                    "type": "buffer",
                    "count": len(buffer),
                    "words": [{"window": e.window_id, "text": e.text} for e in buffer.entries],
                }
            )
    assert batch == online


# --------------------------------------------------------------------------
# fixtures
# --------------------------------------------------------------------------


def test_packaged_fixtures_shape(fixtures):
    ws = fixtures.workspace
    assert [w.id for w in ws.windows] == ["w1", "w2", "w3"]
    for w in ws.windows:
        n = len(ws.window_words(w.id))
        assert 270 <= n <= 400, f"{w.id} has {n} words"
    assert len(fixtures.questions) == 6
    ids = [q.spec.question_id for q in fixtures.questions]
    assert len(set(ids)) == 6
    per_window = {}
    for q in fixtures.questions:
        per_window.setdefault(q.window_id, []).append(q)
    assert {len(v) for v in per_window.values()} == {2}


def test_packaged_spans_are_located_verbatim(fixtures):
    from gazectx.agent import normalize

    ws = fixtures.workspace
    for lq in fixtures.questions:
        boxes = ws.window_words(lq.window_id)
        got = " ".join(normalize(b.text) for b in boxes[lq.span_start : lq.span_end + 1])
        assert got == normalize(lq.spec.answer_span)


def test_packaged_late_questions_end_at_final_word(fixtures):
    # each window's second question must sit at the very end of the text,
    # so reading up to it pushes the early span out of the 250-word buffer
    ws = fixtures.workspace
    by_window: dict[str, list] = {}
    for lq in fixtures.questions:
        by_window.setdefault(lq.window_id, []).append(lq)
    for wid, qs in by_window.items():
        early, late = sorted(qs, key=lambda q: q.span_start)
        assert late.span_end == len(ws.window_words(wid)) - 1
        # enough words between the early span and the late query that the
        # buffer (250) always evicts the early span before the late read
        assert late.span_end - early.span_end > 250 + 30


def test_load_fixtures_rejects_missing_manifest(tmp_path):
    with pytest.raises(FixtureError, match="manifest"):
        load_fixtures(tmp_path)


def test_load_fixtures_rejects_referral_phrases(tmp_path, fixtures):
    src = packaged_fixtures_dir()
    for name in ("fixtures.json", "oracle_spec.json", "sealed_box.txt",
                 "machine_limits.txt", "level_count.txt"):
        (tmp_path / name).write_bytes((src / name).read_bytes())
    text = (tmp_path / "sealed_box.txt").read_text()
    (tmp_path / "sealed_box.txt").write_text(text + " as seen in this article today")
    with pytest.raises(FixtureError, match="referral"):
        load_fixtures(tmp_path)


def test_load_fixtures_rejects_ambiguous_span(tmp_path):
    src = packaged_fixtures_dir()
    for name in ("fixtures.json", "oracle_spec.json", "sealed_box.txt",
                 "machine_limits.txt", "level_count.txt"):
        (tmp_path / name).write_bytes((src / name).read_bytes())
    spec = json.loads((tmp_path / "oracle_spec.json").read_text())
    spec["questions"][0]["answer_span"] = "not words from any fixture text"
    (tmp_path / "oracle_spec.json").write_text(json.dumps(spec))
    with pytest.raises(FixtureError, match="0 times"):
        load_fixtures(tmp_path)


# --------------------------------------------------------------------------
# the experiment
# --------------------------------------------------------------------------


def test_attempt_ladder_text():
    q = next(iter(load_fixtures(packaged_fixtures_dir()).oracle_spec.questions))
    assert attempt_text(q, 1) == q.question
    assert attempt_text(q, 2).endswith(", as described in this article?")
    assert attempt_text(q, 2).startswith(q.question.rstrip("?"))
    assert attempt_text(q, 3) == f"Regarding {q.entity_key}: {q.question}"
    assert attempt_text(q, 4) == attempt_text(q, 3)
    assert attempt_text(q, 5) == attempt_text(q, 3)


def test_run_experiment_cell_shape(fixtures):
    report = run_experiment(fixtures, seed=0)
    assert report["seed"] == 0
    assert len(report["cells"]) == len(CONDITION_ORDER) * 6
    for cell in report["cells"]:
        assert cell["success"] is True
        assert 1 <= cell["attempts_used"] <= MAX_ATTEMPTS
    assert set(report["mean_attempts"]) == {"baseline", "full_context", "eye_tracking"}


def test_run_experiment_condition_behaviour(fixtures):
    report = run_experiment(fixtures, seed=0)
    by_condition: dict[str, list[dict]] = {}
    for cell in report["cells"]:
        by_condition.setdefault(cell["condition"], []).append(cell)

    for cell in by_condition["baseline"]:
        assert cell["attempts_used"] == 3
        assert cell["context_word_count"] == 0
        assert not cell["answer_span_in_context"]
    for cell in by_condition["full_context"]:
        assert cell["attempts_used"] == 2
        assert cell["context_word_count"] > 250
        assert cell["answer_span_in_context"]
    for cell in by_condition["eye_tracking"]:
        assert cell["attempts_used"] == 1
        assert 0 < cell["context_word_count"] <= 250
        assert cell["answer_span_in_context"]


def test_run_experiment_is_deterministic(fixtures):
    a = report_to_json(run_experiment(fixtures, seed=17))
    b = report_to_json(run_experiment(fixtures, seed=17))
    assert a == b
    c = report_to_json(run_experiment(fixtures, seed=18))
    assert a != c


def test_run_experiment_covers_the_full_grid(fixtures):
    report = run_experiment(fixtures, seed=3)
    by_q = {}
    for cell in report["cells"]:
        by_q.setdefault(cell["question_id"], []).append(cell["condition"])
    assert len(by_q) == 6
    for conditions in by_q.values():
        assert sorted(conditions) == sorted(m.value for m in CONDITION_ORDER)


def test_run_many_summary(fixtures):
    out = run_many(fixtures, 3)
    summary = out["summary"]
    assert summary["seeds"] == 3
    assert len(out["runs"]) == 3
    assert summary["strict_ordering_fraction"] == 1.0
    assert summary["mean_attempts"]["eye_tracking"] < summary["mean_attempts"]["full_context"]
    assert summary["mean_attempts"]["full_context"] < summary["mean_attempts"]["baseline"]
    assert summary["eye_tracking"]["span_recall_fraction"] == 1.0
    assert summary["eye_tracking"]["max_context_words"] <= 250
    assert summary["full_context"]["min_context_words"] > 250
    with pytest.raises(ValueError):
        run_many(fixtures, 0)


def test_report_json_is_canonical(fixtures):
    report = run_experiment(fixtures, seed=1)
    blob = report_to_json(report)
    assert json.loads(blob) == report
    shuffled = json.loads(blob)
    assert report_to_json(shuffled) == blob
