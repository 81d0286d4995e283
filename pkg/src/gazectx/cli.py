"""Command line entry point.

Subcommands: serve (run the session service), simulate (write a synthetic
gaze replay), replay (run a replay through detection), experiment (the
attempts-to-success study), inspect (summarize a workspace or replay).

Exit codes: 2 for usage errors (argparse), 1 for file system problems,
3 for invalid content or runtime failures.
"""

from __future__ import annotations

import argparse
import asyncio
import json
import logging
import os
import signal
import sys
from pathlib import Path

from .agent import AgentError, HttpAgent, OracleSpec, RuleOracle
from .config import ConfigError, EngineConfig
from .service import EngineServer
from .simharness import (
    FixtureError,
    ReplayError,
    ScanpathParams,
    generate_scanpath,
    load_fixtures,
    packaged_fixtures_dir,
    read_replay,
    replay_events,
    report_to_json,
    run_many,
    write_replay,
)
from .workspace import WorkspaceError, load_workspace, workspace_to_dict

log = logging.getLogger(__name__)


def _parse_bind(value: str) -> tuple[str, int]:
    host, sep, port = value.rpartition(":")
    if not sep or not host:
        raise ValueError(f"bind address must look like host:port, got {value!r}")
    return host, int(port)


def _load_config(path: str | None) -> EngineConfig:
    return EngineConfig.from_file(path) if path else EngineConfig()


def _fixtures_dir(arg: str | None) -> Path:
    return Path(arg) if arg else packaged_fixtures_dir()


# --------------------------------------------------------------------------
# subcommands
# --------------------------------------------------------------------------


def _cmd_serve(args: argparse.Namespace) -> int:
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(name)s %(message)s")
    config = _load_config(args.config)
    if args.backend == "oracle":
        spec_path = (
            Path(args.oracle_spec)
            if args.oracle_spec
            else packaged_fixtures_dir() / "oracle_spec.json"
        )
        backend = RuleOracle(OracleSpec.from_json(spec_path.read_text(encoding="utf-8")))
    else:
        backend = HttpAgent.from_env(os.environ)
    host, port = _parse_bind(args.bind)
    ws_host = ws_port = None
    if args.ws_bind:
        ws_host, ws_port = _parse_bind(args.ws_bind)

    async def _run() -> None:
        server = EngineServer(
            backend, config, host=host, port=port, ws_host=ws_host, ws_port=ws_port
        )
        stop = asyncio.Event()
        loop = asyncio.get_running_loop()
        for sig in (signal.SIGINT, signal.SIGTERM):
            loop.add_signal_handler(sig, stop.set)
        await server.serve_forever(stop)

    asyncio.run(_run())
    return 0


def _cmd_simulate(args: argparse.Namespace) -> int:
    config = _load_config(args.config)
    fixtures = load_fixtures(_fixtures_dir(args.fixtures))
    params = ScanpathParams(seed=args.seed, sample_rate_hz=config.sample_rate_hz)
    sp = generate_scanpath(
        fixtures.workspace,
        args.window,
        params,
        start_index=args.start,
        stop_index=args.stop,
    )
    write_replay(args.out, sp)
    print(f"wrote {len(sp)} samples covering window {args.window!r} to {args.out}")
    return 0


def _cmd_replay(args: argparse.Namespace) -> int:
    config = _load_config(args.config)
    if args.workspace:
        ws = load_workspace(Path(args.workspace).read_text(encoding="utf-8"))
    else:
        ws = load_fixtures(_fixtures_dir(args.fixtures)).workspace
    sp = read_replay(args.replay)
    fixations = 0
    last_count = 0
    for event in replay_events(ws, sp, config):
        if args.json:
            print(json.dumps(event, ensure_ascii=False, separators=(",", ":")))
        elif event["type"] == "fixation":
            print(
                f"fixation t={event['t_ms']:.1f}ms window={event['window']} "
                f"word={event['text']!r} order={event['order_index']}"
            )
        if event["type"] == "fixation":
            fixations += 1
        else:
            last_count = event["count"]
    if not args.json:
        print(f"{len(sp)} samples -> {fixations} fixations, buffer holds {last_count} words")
    return 0


def _cmd_experiment(args: argparse.Namespace) -> int:
    config = _load_config(args.config)
    fixtures = load_fixtures(_fixtures_dir(args.fixtures))
    report = run_many(fixtures, args.seeds, config=config)
    payload = report_to_json(report)
    summary = report["summary"]
    if args.out == "-":
        print(payload)
    else:
        Path(args.out).write_text(payload, encoding="utf-8")
        means = summary["mean_attempts"]
        print(
            "mean attempts  baseline={baseline:.2f}  full_context={full_context:.2f}  "
            "eye_tracking={eye_tracking:.2f}".format(**means)
        )
        print(
            f"strict ordering in {summary['strict_ordering_fraction']:.0%} of "
            f"{summary['seeds']} seeds; report written to {args.out}"
        )
    return 0


def _cmd_inspect(args: argparse.Namespace) -> int:
    if args.path is None:
        ws = load_fixtures(_fixtures_dir(args.fixtures)).workspace
        doc = workspace_to_dict(ws)
        if args.json:
            print(json.dumps(doc, ensure_ascii=False, separators=(",", ":")))
        else:
            _print_workspace_summary(doc)
        return 0

    text = Path(args.path).read_text(encoding="utf-8")
    stripped = text.lstrip()
    if stripped.startswith("{") and '"version"' in stripped.split("\n", 1)[0]:
        doc = workspace_to_dict(load_workspace(text))
        if args.json:
            print(json.dumps(doc, ensure_ascii=False, separators=(",", ":")))
        else:
            _print_workspace_summary(doc)
        return 0
    sp = read_replay(args.path)
    if args.json:
        duration = float(sp.t_ms[-1] - sp.t_ms[0]) if len(sp) else 0.0
        print(
            json.dumps(
                {"samples": len(sp), "windows": list(sp.windows), "duration_ms": duration},
                separators=(",", ":"),
            )
        )
    else:
        duration = (sp.t_ms[-1] - sp.t_ms[0]) / 1000.0 if len(sp) else 0.0
        print(
            f"replay: {len(sp)} samples, {duration:.1f}s, "
            f"windows {', '.join(sp.windows) if sp.windows else '(none)'}"
        )
    return 0


def _print_workspace_summary(doc: dict) -> None:
    words = doc["words"]
    print(f"workspace: {len(doc['windows'])} windows, {len(words)} words")
    for w in doc["windows"]:
        count = sum(1 for b in words if b["window_id"] == w["id"])
        print(
            f"  {w['id']}: azimuth {w['center_azimuth_deg']:+.1f} deg, "
            f"{w['width_px']}x{w['height_px']} px, {w['width_m']:.4f}x{w['height_m']:.4f} m, "
            f"{count} words"
        )


# --------------------------------------------------------------------------
# parser
# --------------------------------------------------------------------------


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gazectx",
        description="Gaze-driven contextual memory engine",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("serve", help="run the session service")
    p.add_argument("--bind", default="127.0.0.1:8765", help="TCP ndjson listener (host:port)")
    p.add_argument("--ws-bind", default=None, help="optional WebSocket listener (host:port)")
    p.add_argument("--backend", choices=("oracle", "http"), default="oracle")
    p.add_argument("--oracle-spec", default=None, help="question spec JSON for the oracle backend")
    p.add_argument("--config", default=None, help="engine config JSON")
    p.set_defaults(func=_cmd_serve)

    p = sub.add_parser("simulate", help="write a synthetic gaze replay")
    p.add_argument("--fixtures", default=None, help="fixtures directory (default: packaged)")
    p.add_argument("--window", default="w1")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--start", type=int, default=0, help="first word index to read")
    p.add_argument("--stop", type=int, default=None, help="stop before this word index")
    p.add_argument("--out", required=True)
    p.add_argument("--config", default=None)
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("replay", help="run a replay file through the engine")
    p.add_argument("replay", help="replay .jsonl file")
    p.add_argument("--fixtures", default=None, help="fixtures directory (default: packaged)")
    p.add_argument("--workspace", default=None, help="explicit workspace JSON instead of fixtures")
    p.add_argument("--json", action="store_true", help="emit protocol events as JSON lines")
    p.add_argument("--config", default=None)
    p.set_defaults(func=_cmd_replay)

    p = sub.add_parser("experiment", help="run the attempts-to-success study")
    p.add_argument("--fixtures", default=None, help="fixtures directory (default: packaged)")
    p.add_argument("--seeds", type=int, default=100)
    p.add_argument("--out", default="report.json", help="report path, or - for stdout")
    p.add_argument("--config", default=None)
    p.set_defaults(func=_cmd_experiment)

    p = sub.add_parser("inspect", help="summarize a workspace or replay file")
    p.add_argument("path", nargs="?", default=None, help="workspace .json or replay .jsonl")
    p.add_argument("--fixtures", default=None, help="inspect the built fixtures workspace")
    p.add_argument("--json", action="store_true", help="machine-readable output")
    p.set_defaults(func=_cmd_inspect)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except KeyboardInterrupt:
        return 130
    except (FileNotFoundError, IsADirectoryError, PermissionError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except (
        WorkspaceError,
        ReplayError,
        FixtureError,
        ConfigError,
        AgentError,
        ValueError,
        OSError,
    ) as e:
        print(f"error: {e}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
