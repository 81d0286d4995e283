"""Session service: newline-delimited JSON over TCP, plus WebSocket.

Each connection is one isolated session.  The client must send hello and
then a workspace before anything else; after that it may stream gaze
samples, switch modes, clear the buffer, and issue queries.  Exactly one
query may be in flight per session; gaze keeps flowing while the backend
thinks.  Protocol reference lives in the README.
"""

from __future__ import annotations

import asyncio
import json
import logging
import time

import websockets

from .agent import AgentBackend, AgentError
from .config import EngineConfig
from .fixation import (
    DetectorConfig,
    FixationDetector,
    GazeSample,
    NonMonotonicTimestampError,
    Ray,
    WindowPoint,
)
from .memory import SaliencyBuffer
from .prompting import ChatTurn, ConditionMode, Role, build_prompt, record_turn
from .workspace import UnknownWindowError, Workspace, WorkspaceError, workspace_from_dict

__all__ = ["Session", "EngineServer", "PROTOCOL_VERSION"]

log = logging.getLogger(__name__)

PROTOCOL_VERSION = 1

# A workspace document with a few thousand words runs to hundreds of KB on
# one line, far past asyncio's 64 KB default readline limit.
MAX_MESSAGE_BYTES = 16 * 1024 * 1024

_CLOSE = object()  # outbox sentinel


def _is_number(v) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def _is_vec3(v) -> bool:
    return isinstance(v, list) and len(v) == 3 and all(_is_number(c) for c in v)


class Session:
    """Protocol state machine for one client, transport-agnostic.

    handle() consumes parsed messages; every outbound message is placed on
    self.outbox in emission order, ending with a sentinel once closed.
    """

    def __init__(self, backend: AgentBackend, config: EngineConfig | None = None):
        self.outbox: asyncio.Queue = asyncio.Queue()
        self._backend = backend
        self._cfg = config or EngineConfig()
        self._state = "hello"  # hello -> workspace -> ready
        self._ws: Workspace | None = None
        self._detector: FixationDetector | None = None
        self._buffer = SaliencyBuffer(self._cfg.buffer_capacity_words)
        self._history: tuple[ChatTurn, ...] = ()
        self._mode = ConditionMode.EYE_TRACKING
        self._query_task: asyncio.Task | None = None

    # ---- outbound helpers ------------------------------------------------

    async def _emit(self, obj: dict) -> None:
        await self.outbox.put(obj)

    async def _error(self, code: str, message: str) -> None:
        await self._emit({"type": "error", "code": code, "message": message})

    async def _ack(self, of: str) -> None:
        await self._emit({"type": "ack", "of": of})

    async def _emit_buffer(self) -> None:
        entries = self._buffer.entries
        await self._emit(
            {
                "type": "buffer",
                "count": len(entries),
                "words": [{"window": e.window_id, "text": e.text} for e in entries],
            }
        )

    # ---- inbound ---------------------------------------------------------

    async def handle_line(self, line: str) -> None:
        try:
            obj = json.loads(line)
        except json.JSONDecodeError:
            await self._error("malformed", "message is not valid JSON")
            return
        if not isinstance(obj, dict) or not isinstance(obj.get("type"), str):
            await self._error("malformed", "message must be an object with a string 'type'")
            return
        await self.handle(obj)

    async def handle(self, obj: dict) -> None:
        mtype = obj["type"]
        handler = getattr(self, f"_on_{mtype}", None)
        if handler is None:
            await self._error("unknown_type", f"unknown message type {mtype!r}")
            return
        await handler(obj)

    async def _on_hello(self, obj: dict) -> None:
        if self._state != "hello":
            await self._error("protocol_order", "hello is only valid as the first message")
            return
        if obj.get("protocol") != PROTOCOL_VERSION:
            await self._error(
                "protocol_version", f"this server speaks protocol {PROTOCOL_VERSION}"
            )
            return
        self._state = "workspace"
        await self._ack("hello")

    async def _on_workspace(self, obj: dict) -> None:
        if self._state == "hello":
            await self._error("protocol_order", "hello must precede workspace")
            return
        if self._state == "ready":
            await self._error("protocol_order", "workspace is already registered")
            return
        try:
            ws = workspace_from_dict(obj.get("workspace"))
        except WorkspaceError as e:
            await self._error("bad_workspace", str(e))
            return
        self._ws = ws
        self._detector = FixationDetector(
            ws,
            DetectorConfig(
                dwell_threshold_ms=self._cfg.dwell_threshold_ms,
                gap_tolerance_ms=self._cfg.gap_tolerance_ms,
                max_sample_interval_ms=self._cfg.max_sample_interval_ms,
            ),
        )
        self._state = "ready"
        await self._ack("workspace")

    async def _require_ready(self, what: str) -> bool:
        if self._state != "ready":
            await self._error("protocol_order", f"{what} requires hello and workspace first")
            return False
        return True

    async def _ingest(self, sample: GazeSample) -> None:
        try:
            fixations = self._detector.ingest(sample)
        except UnknownWindowError as e:
            await self._error("unknown_window", str(e))
            return
        except NonMonotonicTimestampError as e:
            await self._error("non_monotonic", str(e))
            return
        for fx in fixations:
            self._buffer.append(fx.window_id, fx.text, fx.order_index, fx.emit_ms)
            await self._emit(
                {
                    "type": "fixation",
                    "window": fx.window_id,
                    "text": fx.text,
                    "order_index": fx.order_index,
                    "t_ms": fx.emit_ms,
                }
            )
            await self._emit_buffer()

    async def _on_gaze(self, obj: dict) -> None:
        if not await self._require_ready("gaze"):
            return
        if not (_is_number(obj.get("t_ms")) and _is_vec3(obj.get("origin")) and _is_vec3(obj.get("dir"))):
            await self._error("malformed", "gaze needs numeric t_ms, origin[3] and dir[3]")
            return
        await self._ingest(
            GazeSample(
                t_ms=float(obj["t_ms"]),
                target=Ray(origin=tuple(obj["origin"]), direction=tuple(obj["dir"])),
            )
        )

    async def _on_gaze2d(self, obj: dict) -> None:
        if not await self._require_ready("gaze2d"):
            return
        if not (
            _is_number(obj.get("t_ms"))
            and isinstance(obj.get("window"), str)
            and _is_number(obj.get("x"))
            and _is_number(obj.get("y"))
        ):
            await self._error("malformed", "gaze2d needs numeric t_ms, x, y and a window id")
            return
        await self._ingest(
            GazeSample(
                t_ms=float(obj["t_ms"]),
                target=WindowPoint(obj["window"], float(obj["x"]), float(obj["y"])),
            )
        )

    async def _on_mode(self, obj: dict) -> None:
        if not await self._require_ready("mode"):
            return
        try:
            self._mode = ConditionMode(obj.get("mode"))
        except ValueError:
            await self._error("malformed", f"unknown mode {obj.get('mode')!r}")
            return
        await self._ack("mode")

    async def _on_clear(self, obj: dict) -> None:
        if not await self._require_ready("clear"):
            return
        self._buffer.clear()
        await self._ack("clear")
        await self._emit_buffer()

    async def _on_query(self, obj: dict) -> None:
        if not await self._require_ready("query"):
            return
        text = obj.get("text")
        if not isinstance(text, str) or not text:
            await self._error("malformed", "query needs a non-empty text")
            return
        if self._query_task is not None and not self._query_task.done():
            await self._error("query_in_flight", "a query is already being answered")
            return
        bundle = build_prompt(text, self._mode, self._buffer.snapshot(), self._ws, self._history)
        self._query_task = asyncio.create_task(self._run_query(bundle))

    async def _run_query(self, bundle) -> None:
        started = time.perf_counter()
        try:
            reply = await asyncio.to_thread(self._backend.complete, bundle)
        except AgentError as e:
            await self._error("backend_error", str(e))
            return
        except Exception as e:  # defensive: a broken backend must not kill the session
            log.exception("backend raised unexpectedly")
            await self._error("backend_error", f"unexpected backend failure: {e}")
            return
        latency_ms = (time.perf_counter() - started) * 1000.0
        now_ms = time.time() * 1000.0
        self._history = record_turn(self._history, ChatTurn(Role.USER, bundle.new_user_message, now_ms))
        self._history = record_turn(self._history, ChatTurn(Role.ASSISTANT, reply.text, now_ms))
        await self._emit({"type": "reply", "text": reply.text, "latency_ms": round(latency_ms, 3)})
        self._buffer.clear()
        await self._emit_buffer()

    # ---- lifecycle -------------------------------------------------------

    async def drain(self) -> None:
        """Wait for the in-flight query, if any, then close the outbox."""
        if self._query_task is not None:
            try:
                await self._query_task
            except asyncio.CancelledError:
                pass
        await self.outbox.put(_CLOSE)


class EngineServer:
    """Hosts sessions over TCP (ndjson) and optionally WebSocket."""

    def __init__(
        self,
        backend: AgentBackend,
        config: EngineConfig | None = None,
        host: str = "127.0.0.1",
        port: int = 8765,
        ws_host: str | None = None,
        ws_port: int | None = None,
        drain_timeout_s: float = 10.0,
    ):
        self._backend = backend
        self._cfg = config or EngineConfig()
        self._host, self._port = host, port
        self._ws_host, self._ws_port = ws_host, ws_port
        self._drain_timeout_s = drain_timeout_s
        self._tcp_server: asyncio.AbstractServer | None = None
        self._ws_server = None
        # session -> (pump task, close callable); used to flush on shutdown
        self._conns: dict[Session, tuple[asyncio.Task, object]] = {}
        self.tcp_address: tuple[str, int] | None = None
        self.ws_address: tuple[str, int] | None = None

    async def start(self) -> None:
        self._tcp_server = await asyncio.start_server(
            self._serve_tcp, self._host, self._port, limit=MAX_MESSAGE_BYTES
        )
        sock = self._tcp_server.sockets[0].getsockname()
        self.tcp_address = (sock[0], sock[1])
        log.info("listening on tcp://%s:%d", *self.tcp_address)
        if self._ws_port is not None:
            self._ws_server = await websockets.serve(
                self._serve_ws, self._ws_host or self._host, self._ws_port
            )
            ws_sock = next(iter(self._ws_server.sockets)).getsockname()
            self.ws_address = (ws_sock[0], ws_sock[1])
            log.info("listening on ws://%s:%d", *self.ws_address)

    async def stop(self) -> None:
        """Stop accepting, let in-flight queries finish and flush, close."""
        if self._tcp_server is not None:
            self._tcp_server.close()
            await self._tcp_server.wait_closed()
        if self._ws_server is not None:
            self._ws_server.close(close_connections=False)

        async def _finish(session: Session, pump_task: asyncio.Task) -> None:
            await session.drain()
            await pump_task

        pending = [
            asyncio.ensure_future(_finish(s, pump)) for s, (pump, _) in list(self._conns.items())
        ]
        if pending:
            _, unfinished = await asyncio.wait(pending, timeout=self._drain_timeout_s)
            for task in unfinished:
                task.cancel()
        for _, close in list(self._conns.values()):
            close()
        if self._ws_server is not None:
            await self._ws_server.wait_closed()

    async def serve_forever(self, stop_event: asyncio.Event) -> None:
        await self.start()
        await stop_event.wait()
        await self.stop()

    async def _serve_tcp(self, reader: asyncio.StreamReader, writer: asyncio.StreamWriter) -> None:
        session = Session(self._backend, self._cfg)

        async def pump() -> None:
            while True:
                obj = await session.outbox.get()
                if obj is _CLOSE:
                    break
                try:
                    writer.write(json.dumps(obj, ensure_ascii=False).encode() + b"\n")
                    await writer.drain()
                except (ConnectionError, OSError):
                    break

        pump_task = asyncio.create_task(pump())
        self._conns[session] = (pump_task, writer.close)
        try:
            while True:
                line = await reader.readline()
                if not line:
                    break
                await session.handle_line(line.decode("utf-8", errors="replace"))
        except (ConnectionError, OSError):
            pass
        finally:
            await session.drain()
            await pump_task
            self._conns.pop(session, None)
            writer.close()
            try:
                await writer.wait_closed()
            except (ConnectionError, OSError):
                pass

    async def _serve_ws(self, websocket) -> None:
        session = Session(self._backend, self._cfg)

        async def pump() -> None:
            while True:
                obj = await session.outbox.get()
                if obj is _CLOSE:
                    break
                try:
                    await websocket.send(json.dumps(obj, ensure_ascii=False))
                except websockets.ConnectionClosed:
                    break

        pump_task = asyncio.create_task(pump())
        self._conns[session] = (pump_task, lambda: asyncio.ensure_future(websocket.close()))
        try:
            async for message in websocket:
                if isinstance(message, bytes):
                    message = message.decode("utf-8", errors="replace")
                await session.handle_line(message)
        except websockets.ConnectionClosed:
            pass
        finally:
            await session.drain()
            await pump_task
            self._conns.pop(session, None)
