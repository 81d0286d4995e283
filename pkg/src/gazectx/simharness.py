"""Deterministic simulation harness.

Generates synthetic reading scanpaths over fixture texts, feeds them
through the batch kernels, and replays the scripted question ladder under
all three context-selection modes to measure attempts-to-success.  Every
random draw flows from one numpy Generator, so a seed fully determines
the byte content of replays and reports.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator

import numpy as np

from .agent import OracleSpec, QuestionSpec, RuleOracle, normalize, split_rendered_context
from .config import EngineConfig
from .fixation import GazeSample, WindowPoint
from .kernels import detect_fixations_batch, hit_test_batch
from .memory import SaliencyBuffer
from .prompting import ChatTurn, ConditionMode, Role, build_prompt, context_word_count, record_turn
from .workspace import Workspace, place_windows, typeset_text

__all__ = [
    "ScanpathParams",
    "Scanpath",
    "ReplayError",
    "FixtureError",
    "LocatedQuestion",
    "Fixtures",
    "generate_scanpath",
    "write_replay",
    "read_replay",
    "replay_events",
    "load_fixtures",
    "packaged_fixtures_dir",
    "attempt_text",
    "run_experiment",
    "run_many",
    "report_to_json",
]


class ReplayError(ValueError):
    pass


class FixtureError(ValueError):
    pass


@dataclass(frozen=True)
class ScanpathParams:
    """Reading-behaviour knobs; defaults model a casual skim."""

    seed: int = 0
    mean_fixation_ms: float = 225.0
    fixation_sd_ms: float = 50.0
    min_fixation_ms: float = 130.0
    skip_probability: float = 0.1
    regression_probability: float = 0.05
    sample_rate_hz: float = 120.0
    inter_fixation_gap_ms: float = 30.0

    def __post_init__(self) -> None:
        if not 0 <= self.skip_probability < 1:
            raise ValueError("skip_probability must be in [0, 1)")
        if not 0 <= self.regression_probability < 1:
            raise ValueError("regression_probability must be in [0, 1)")
        if self.min_fixation_ms <= 0 or self.mean_fixation_ms <= 0:
            raise ValueError("fixation durations must be positive")
        if self.sample_rate_hz <= 0 or self.inter_fixation_gap_ms <= 0:
            raise ValueError("sample_rate_hz and inter_fixation_gap_ms must be positive")


@dataclass
class Scanpath:
    """Array-backed gaze2d sample stream (columnar for the kernels)."""

    windows: tuple[str, ...]
    win_idx: np.ndarray  # int64 index into windows
    t_ms: np.ndarray  # float64, strictly increasing
    x: np.ndarray
    y: np.ndarray

    def __len__(self) -> int:
        return len(self.t_ms)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Scanpath):
            return NotImplemented
        return (
            self.windows == other.windows
            and np.array_equal(self.win_idx, other.win_idx)
            and np.array_equal(self.t_ms, other.t_ms)
            and np.array_equal(self.x, other.x)
            and np.array_equal(self.y, other.y)
        )

    def iter_samples(self) -> Iterator[GazeSample]:
        for i in range(len(self.t_ms)):
            yield GazeSample(
                t_ms=float(self.t_ms[i]),
                target=WindowPoint(
                    self.windows[self.win_idx[i]], float(self.x[i]), float(self.y[i])
                ),
            )

    @staticmethod
    def empty() -> Scanpath:
        z = np.empty(0)
        return Scanpath((), np.empty(0, dtype=np.int64), z.copy(), z.copy(), z.copy())

    @staticmethod
    def concat(a: Scanpath, b: Scanpath) -> Scanpath:
        if len(a) == 0:
            return b
        if len(b) == 0:
            return a
        if b.t_ms[0] <= a.t_ms[-1]:
            raise ValueError("concatenated scanpaths must keep time strictly increasing")
        table = list(a.windows)
        remap = np.empty(len(b.windows), dtype=np.int64)
        for i, wid in enumerate(b.windows):
            if wid not in table:
                table.append(wid)
            remap[i] = table.index(wid)
        return Scanpath(
            windows=tuple(table),
            win_idx=np.concatenate([a.win_idx, remap[b.win_idx]]),
            t_ms=np.concatenate([a.t_ms, b.t_ms]),
            x=np.concatenate([a.x, b.x]),
            y=np.concatenate([a.y, b.y]),
        )


def generate_scanpath(
    ws: Workspace,
    window_id: str,
    params: ScanpathParams,
    start_index: int = 0,
    stop_index: int | None = None,
    t0_ms: float = 0.0,
    rng: np.random.Generator | None = None,
) -> Scanpath:
    """Simulate reading words [start_index, stop_index) of one window.

    Each visited word receives one fixation of truncated-normal duration,
    sampled at sample_rate_hz; words are skipped with skip_probability and
    occasionally revisited a few words back (a regression).  Passing an
    explicit rng threads determinism across consecutive segments.
    """
    words = ws.window_words(window_id)
    stop = len(words) if stop_index is None else stop_index
    if not 0 <= start_index <= stop <= len(words):
        raise ValueError(f"bad word range [{start_index}, {stop}) for window {window_id!r}")
    if rng is None:
        rng = np.random.default_rng(params.seed)

    visits: list[int] = []
    for i in range(start_index, stop):
        if rng.random() < params.skip_probability:
            continue
        visits.append(i)
        if i > start_index and rng.random() < params.regression_probability:
            visits.append(int(rng.integers(max(start_index, i - 5), i)))
    if not visits:
        return Scanpath.empty()

    v = np.asarray(visits, dtype=np.int64)
    dwell = np.maximum(
        rng.normal(params.mean_fixation_ms, params.fixation_sd_ms, len(v)),
        params.min_fixation_ms,
    )
    period = 1000.0 / params.sample_rate_hz
    n_samples = (dwell // period).astype(np.int64) + 1
    span_ms = (n_samples - 1) * period
    starts = t0_ms + np.concatenate(
        [[0.0], np.cumsum(span_ms[:-1] + params.inter_fixation_gap_ms)]
    )

    bx = np.array([words[k].x for k in v], dtype=np.float64)
    by = np.array([words[k].y for k in v], dtype=np.float64)
    bw = np.array([words[k].w for k in v], dtype=np.float64)
    bh = np.array([words[k].h for k in v], dtype=np.float64)
    # One gaze point per visit, kept away from box edges.
    px = bx + (rng.random(len(v)) * 0.8 + 0.1) * bw
    py = by + (rng.random(len(v)) * 0.8 + 0.1) * bh

    total = int(n_samples.sum())
    rep = np.repeat(np.arange(len(v)), n_samples)
    local = np.arange(total) - np.repeat(np.cumsum(n_samples) - n_samples, n_samples)
    t = np.repeat(starts, n_samples) + local * period
    return Scanpath(
        windows=(window_id,),
        win_idx=np.zeros(total, dtype=np.int64),
        t_ms=t,
        x=px[rep],
        y=py[rep],
    )


# --------------------------------------------------------------------------
# replay files: one gaze2d message per line
# --------------------------------------------------------------------------


def write_replay(path: str | Path, sp: Scanpath) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for i in range(len(sp)):
            fh.write(
                json.dumps(
                    {
                        "type": "gaze2d",
                        "t_ms": float(sp.t_ms[i]),
                        "window": sp.windows[sp.win_idx[i]],
                        "x": float(sp.x[i]),
                        "y": float(sp.y[i]),
                    },
                    ensure_ascii=False,
                    separators=(",", ":"),
                )
                + "\n"
            )


def read_replay(path: str | Path) -> Scanpath:
    table: list[str] = []
    win_idx: list[int] = []
    ts: list[float] = []
    xs: list[float] = []
    ys: list[float] = []
    with open(path, "r", encoding="utf-8") as fh:
        for n, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as e:
                raise ReplayError(f"line {n}: not valid JSON ({e.msg})") from None
            if not isinstance(obj, dict) or obj.get("type") != "gaze2d":
                raise ReplayError(f"line {n}: expected a gaze2d message")
            try:
                t = float(obj["t_ms"])
                wid = obj["window"]
                x = float(obj["x"])
                y = float(obj["y"])
            except (KeyError, TypeError, ValueError):
                raise ReplayError(f"line {n}: gaze2d needs t_ms, window, x, y") from None
            if not isinstance(wid, str):
                raise ReplayError(f"line {n}: window must be a string")
            if ts and t <= ts[-1]:
                raise ReplayError(f"line {n}: t_ms must be strictly increasing")
            if wid not in table:
                table.append(wid)
            win_idx.append(table.index(wid))
            ts.append(t)
            xs.append(x)
            ys.append(y)
    return Scanpath(
        windows=tuple(table),
        win_idx=np.asarray(win_idx, dtype=np.int64),
        t_ms=np.asarray(ts, dtype=np.float64),
        x=np.asarray(xs, dtype=np.float64),
        y=np.asarray(ys, dtype=np.float64),
    )


def _global_word_stream(ws: Workspace, sp: Scanpath) -> np.ndarray:
    remap = np.empty(max(len(sp.windows), 1), dtype=np.int64)
    for i, wid in enumerate(sp.windows):
        ws.window(wid)  # raises UnknownWindowError for foreign replays
        remap[i] = ws.index.window_index[wid]
    win = remap[sp.win_idx] if len(sp) else np.empty(0, dtype=np.int64)
    return hit_test_batch(ws.index, win, sp.x, sp.y)


def replay_events(
    ws: Workspace, sp: Scanpath, config: EngineConfig | None = None
) -> Iterator[dict]:
    """Run a scanpath through detection + buffering, yielding the protocol
    events a live session would emit for it."""
    cfg = config or EngineConfig()
    gid = _global_word_stream(ws, sp)
    emit_idx, emit_word, _starts = detect_fixations_batch(
        sp.t_ms,
        gid,
        len(ws.words),
        cfg.dwell_threshold_ms,
        cfg.gap_tolerance_ms,
        cfg.max_sample_interval_ms,
    )
    buffer = SaliencyBuffer(cfg.buffer_capacity_words)
    for k in range(len(emit_idx)):
        box = ws.words[int(emit_word[k])]
        t = float(sp.t_ms[int(emit_idx[k])])
        buffer.append(box.window_id, box.text, box.order_index, t)
        yield {
            "type": "fixation",
            "window": box.window_id,
            "text": box.text,
            "order_index": box.order_index,
            "t_ms": t,
        }
        yield {
            "type": "buffer",
            "count": len(buffer),
            "words": [{"window": e.window_id, "text": e.text} for e in buffer.entries],
        }


# --------------------------------------------------------------------------
# fixtures
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class LocatedQuestion:
    spec: QuestionSpec
    window_id: str
    span_start: int  # order_index of the first span word
    span_end: int  # order_index of the last span word, inclusive


@dataclass(frozen=True)
class Fixtures:
    workspace: Workspace
    oracle_spec: OracleSpec
    questions: tuple[LocatedQuestion, ...]


def packaged_fixtures_dir() -> Path:
    from importlib.resources import files

    return Path(str(files("gazectx") / "fixtures"))


_FORBIDDEN_IN_TEXTS = ("in this article", "in the context", "from the context")


def _find_span(tokens: list[str], span_tokens: list[str]) -> list[int]:
    hits = []
    n, m = len(tokens), len(span_tokens)
    for i in range(n - m + 1):
        if tokens[i : i + m] == span_tokens:
            hits.append(i)
    return hits


def load_fixtures(directory: str | Path) -> Fixtures:
    """Build the workspace and question set from a fixtures directory.

    Layout: fixtures.json (arc + typesetting parameters and the text
    files per window), oracle_spec.json (scripted questions), and the
    referenced .txt files.
    """
    directory = Path(directory)
    manifest_path = directory / "fixtures.json"
    try:
        manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise FixtureError(f"missing manifest {manifest_path}") from None
    except json.JSONDecodeError as e:
        raise FixtureError(f"malformed manifest: {e}") from None

    layout = manifest.get("layout", {})
    typeset = manifest.get("typeset", {})
    texts = manifest.get("texts")
    if not isinstance(texts, list) or not texts:
        raise FixtureError("manifest must list at least one text")

    windows = place_windows(
        len(texts),
        span_deg=float(layout.get("span_deg", 120.0)),
        distance_m=float(layout.get("distance_m", 1.0)),
        width_px=int(layout.get("width_px", 700)),
        height_px=int(layout.get("height_px", 1200)),
    )
    words = []
    for i, entry in enumerate(texts):
        wid = entry.get("window")
        if wid != windows[i].id:
            raise FixtureError(
                f"text {i} is bound to window {wid!r}, expected {windows[i].id!r}"
            )
        text_path = directory / entry["file"]
        try:
            raw = text_path.read_text(encoding="utf-8")
        except FileNotFoundError:
            raise FixtureError(f"missing text file {text_path}") from None
        lowered = raw.lower()
        for phrase in _FORBIDDEN_IN_TEXTS:
            if phrase in lowered:
                raise FixtureError(
                    f"text {entry['file']} contains the referral phrase {phrase!r}"
                )
        words.extend(
            typeset_text(
                windows[i],
                raw,
                cell_w=int(typeset.get("cell_w", 10)),
                cell_h=int(typeset.get("cell_h", 18)),
                margin_px=int(typeset.get("margin_px", 20)),
                line_gap_px=int(typeset.get("line_gap_px", 6)),
            )
        )
    ws = Workspace(tuple(windows), tuple(words))

    spec_path = directory / "oracle_spec.json"
    try:
        oracle_spec = OracleSpec.from_json(spec_path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise FixtureError(f"missing oracle spec {spec_path}") from None
    except (json.JSONDecodeError, KeyError, TypeError) as e:
        raise FixtureError(f"malformed oracle spec: {e}") from None

    located = []
    for q in oracle_spec.questions:
        span_tokens = normalize(q.answer_span).split()
        if not span_tokens:
            raise FixtureError(f"question {q.question_id}: empty answer span")
        matches: list[tuple[str, int]] = []
        for w in ws.windows:
            boxes = ws.window_words(w.id)
            tokens = [normalize(b.text) for b in boxes]
            if any(not t for t in tokens):
                raise FixtureError(f"window {w.id}: token normalizes to nothing")
            for start in _find_span(tokens, span_tokens):
                matches.append((w.id, start))
        if len(matches) != 1:
            raise FixtureError(
                f"question {q.question_id}: answer span occurs {len(matches)} times, need exactly 1"
            )
        wid, start = matches[0]
        located.append(
            LocatedQuestion(
                spec=q,
                window_id=wid,
                span_start=start,
                span_end=start + len(span_tokens) - 1,
            )
        )
    return Fixtures(workspace=ws, oracle_spec=oracle_spec, questions=tuple(located))


# --------------------------------------------------------------------------
# the attempts-to-success experiment
# --------------------------------------------------------------------------

CONDITION_ORDER = (
    ConditionMode.BASELINE,
    ConditionMode.FULL_CONTEXT,
    ConditionMode.EYE_TRACKING,
)
MAX_ATTEMPTS = 5


def attempt_text(q: QuestionSpec, attempt: int) -> str:
    """The scripted rephrasing ladder a frustrated user walks through.

    Attempt 2 points the agent at the supplied context; attempt 3 names
    the entity outright; later attempts repeat attempt 3.
    """
    if attempt <= 1:
        return q.question
    if attempt == 2:
        return f"{q.question.rstrip('?')}, as described in this article?"
    return f"Regarding {q.entity_key}: {q.question}"


def _read_for_question(
    fixtures: Fixtures,
    lq: LocatedQuestion,
    params: ScanpathParams,
    rng: np.random.Generator,
) -> Scanpath:
    """Skim from the top of the window, then read the answer sentence
    attentively (no skips, no regressions) so the gaze trace actually
    covers what the question is about."""
    ws = fixtures.workspace
    prefix = generate_scanpath(
        ws, lq.window_id, params, start_index=0, stop_index=lq.span_start, rng=rng
    )
    t0 = float(prefix.t_ms[-1]) + params.inter_fixation_gap_ms if len(prefix) else 0.0
    attentive = dataclasses.replace(params, skip_probability=0.0, regression_probability=0.0)
    span_part = generate_scanpath(
        ws,
        lq.window_id,
        attentive,
        start_index=lq.span_start,
        stop_index=lq.span_end + 1,
        t0_ms=t0,
        rng=rng,
    )
    return Scanpath.concat(prefix, span_part)


def _run_cell(
    fixtures: Fixtures,
    oracle: RuleOracle,
    lq: LocatedQuestion,
    mode: ConditionMode,
    params: ScanpathParams,
    config: EngineConfig,
    rng: np.random.Generator,
) -> dict:
    ws = fixtures.workspace
    sp = _read_for_question(fixtures, lq, params, rng)
    gid = _global_word_stream(ws, sp)
    emit_idx, emit_word, _ = detect_fixations_batch(
        sp.t_ms,
        gid,
        len(ws.words),
        config.dwell_threshold_ms,
        config.gap_tolerance_ms,
        config.max_sample_interval_ms,
    )
    buffer = SaliencyBuffer(config.buffer_capacity_words)
    for k in range(len(emit_idx)):
        box = ws.words[int(emit_word[k])]
        buffer.append(box.window_id, box.text, box.order_index, float(sp.t_ms[int(emit_idx[k])]))

    history: tuple[ChatTurn, ...] = ()
    attempts_used = MAX_ATTEMPTS
    success = False
    first_context_words = 0
    span_in_context = False
    nspan = normalize(lq.spec.answer_span)
    for attempt in range(1, MAX_ATTEMPTS + 1):
        query = attempt_text(lq.spec, attempt)
        snapshot = buffer.snapshot()
        bundle = build_prompt(query, mode, snapshot, ws, history)
        if attempt == 1:
            first_context_words = context_word_count(mode, snapshot, ws)
            rendered = split_rendered_context(bundle.new_user_message)
            span_in_context = rendered is not None and nspan in normalize(rendered)
        reply = oracle.complete(bundle)
        history = record_turn(history, ChatTurn(Role.USER, bundle.new_user_message, float(attempt)))
        history = record_turn(history, ChatTurn(Role.ASSISTANT, reply.text, float(attempt)))
        buffer.clear()  # the engine clears after every reply
        if reply.text == lq.spec.answer_span:
            attempts_used = attempt
            success = True
            break
    return {
        "condition": mode.value,
        "question_id": lq.spec.question_id,
        "attempts_used": attempts_used,
        "success": success,
        "context_word_count": first_context_words,
        "answer_span_in_context": span_in_context,
    }


def run_experiment(
    fixtures: Fixtures,
    seed: int,
    params: ScanpathParams | None = None,
    config: EngineConfig | None = None,
) -> dict:
    """One full pass: every question under every condition, one seed."""
    params = params or ScanpathParams()
    config = config or EngineConfig()
    oracle = RuleOracle(fixtures.oracle_spec)
    children = np.random.SeedSequence(seed).spawn(
        len(CONDITION_ORDER) * len(fixtures.questions)
    )
    cells = []
    k = 0
    for mode in CONDITION_ORDER:
        for lq in fixtures.questions:
            rng = np.random.default_rng(children[k])
            k += 1
            cells.append(_run_cell(fixtures, oracle, lq, mode, params, config, rng))

    mean_attempts = {}
    success_per_attempt = {}
    for mode in CONDITION_ORDER:
        rows = [c for c in cells if c["condition"] == mode.value]
        mean_attempts[mode.value] = sum(r["attempts_used"] for r in rows) / len(rows)
        hist = [0] * MAX_ATTEMPTS
        failures = 0
        for r in rows:
            if r["success"]:
                hist[r["attempts_used"] - 1] += 1
            else:
                failures += 1
        success_per_attempt[mode.value] = {"by_attempt": hist, "failures": failures}
    return {
        "seed": seed,
        "params": dataclasses.asdict(params),
        "engine": dataclasses.asdict(config),
        "cells": cells,
        "mean_attempts": mean_attempts,
        "success_per_attempt": success_per_attempt,
    }


def run_many(
    fixtures: Fixtures,
    n_seeds: int,
    params: ScanpathParams | None = None,
    config: EngineConfig | None = None,
) -> dict:
    """Aggregate run_experiment over seeds 0..n_seeds-1."""
    if n_seeds <= 0:
        raise ValueError("n_seeds must be positive")
    runs = [run_experiment(fixtures, seed, params, config) for seed in range(n_seeds)]

    def _mean(values) -> float:
        values = list(values)
        return sum(values) / len(values)

    strict = 0
    for run in runs:
        m = run["mean_attempts"]
        if m["eye_tracking"] < m["full_context"] < m["baseline"]:
            strict += 1
    et_cells = [c for run in runs for c in run["cells"] if c["condition"] == "eye_tracking"]
    fc_cells = [c for run in runs for c in run["cells"] if c["condition"] == "full_context"]
    summary = {
        "seeds": n_seeds,
        "mean_attempts": {
            mode.value: _mean(run["mean_attempts"][mode.value] for run in runs)
            for mode in CONDITION_ORDER
        },
        "strict_ordering_fraction": strict / n_seeds,
        "eye_tracking": {
            "span_recall_fraction": _mean(
                1.0 if c["answer_span_in_context"] else 0.0 for c in et_cells
            ),
            "max_context_words": max(c["context_word_count"] for c in et_cells),
        },
        "full_context": {
            "min_context_words": min(c["context_word_count"] for c in fc_cells),
        },
    }
    return {"summary": summary, "runs": runs}


def report_to_json(report: dict) -> str:
    """Canonical JSON: key-sorted, compact, so equal runs are equal bytes."""
    return json.dumps(report, sort_keys=True, separators=(",", ":"), ensure_ascii=False)
