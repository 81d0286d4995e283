/** Wire types and a transport-agnostic client for the engine session protocol. */

export type Mode = "baseline" | "full_context" | "eye_tracking";

export interface WindowDoc {
  id: string;
  center_azimuth_deg: number;
  distance_m: number;
  width_px: number;
  height_px: number;
  width_m: number;
  height_m: number;
}

export interface WordDoc {
  window_id: string;
  text: string;
  x: number;
  y: number;
  w: number;
  h: number;
  order_index: number;
}

export interface WorkspaceDoc {
  version: number;
  windows: WindowDoc[];
  words: WordDoc[];
}

export interface FixationEvent {
  type: "fixation";
  window: string;
  text: string;
  order_index: number;
  t_ms: number;
}

export interface BufferEvent {
  type: "buffer";
  count: number;
  words: { window: string; text: string }[];
}

export interface ReplyEvent {
  type: "reply";
  text: string;
  latency_ms: number;
}

export interface AckEvent {
  type: "ack";
  of: string;
}

export interface ErrorEvent {
  type: "error";
  code: string;
  message: string;
}

export type EngineEvent = FixationEvent | BufferEvent | ReplyEvent | AckEvent | ErrorEvent;

/** Minimal duplex surface shared by browser WebSocket and the ws package. */
export interface Transport {
  send(data: string): void;
  close(): void;
  set onmessage(handler: ((data: string) => void) | null);
  set onclose(handler: (() => void) | null);
}

interface SocketLike {
  send(data: string): void;
  close(): void;
  onmessage: ((ev: { data: unknown }) => void) | null;
  onclose: (() => void) | null;
}

/**
 * Wrap a WebSocket-shaped object as a Transport. Kept loosely typed on
 * purpose: the browser socket and the ws package disagree on the exact
 * event types but share this surface.
 */
export function wsTransport(socket: {
  send(data: string): void;
  close(): void;
  onmessage: unknown;
  onclose: unknown;
}): Transport {
  const s = socket as SocketLike;
  return {
    send: (data) => s.send(data),
    close: () => s.close(),
    set onmessage(handler: ((data: string) => void) | null) {
      s.onmessage = handler === null ? null : (ev) => handler(String(ev.data));
    },
    set onclose(handler: (() => void) | null) {
      s.onclose = handler;
    },
  };
}

interface Pending {
  kind: string; // "ack:<of>" or "reply"
  resolve: (ev: EngineEvent) => void;
  reject: (err: Error) => void;
}

/** Error codes the engine ties to a specific outstanding request. */
const REQUEST_ERRORS = new Set([
  "protocol_order",
  "protocol_version",
  "malformed",
  "unknown_type",
  "bad_workspace",
  "query_in_flight",
  "backend_error",
]);

export class EngineError extends Error {
  constructor(
    public readonly code: string,
    message: string,
  ) {
    super(`${code}: ${message}`);
    this.name = "EngineError";
  }
}

/**
 * One engine session: hello/workspace handshake, gaze streaming, queries.
 *
 * Request-shaped messages (hello, workspace, mode, clear, query) return
 * promises settled by the matching ack/reply or by a request-level error
 * event. Fixation/buffer events and gaze-level errors are delivered
 * through onEvent.
 */
export class SessionClient {
  onEvent: ((ev: EngineEvent) => void) | null = null;
  private pending: Pending[] = [];
  private closed = false;

  constructor(private readonly transport: Transport) {
    transport.onmessage = (data) => this.dispatch(data);
    transport.onclose = () => this.failAll(new Error("connection closed"));
  }

  /** Handshake: protocol hello, then the workspace document. */
  async start(workspace: WorkspaceDoc): Promise<void> {
    await this.request({ type: "hello", protocol: 1 }, "ack:hello");
    await this.request({ type: "workspace", workspace }, "ack:workspace");
  }

  /** Fire-and-forget: gaze samples are not acked. */
  sendGaze(tMs: number, window: string, x: number, y: number): void {
    this.send({ type: "gaze2d", t_ms: tMs, window, x, y });
  }

  async setMode(mode: Mode): Promise<void> {
    await this.request({ type: "mode", mode }, "ack:mode");
  }

  async clearBuffer(): Promise<void> {
    await this.request({ type: "clear" }, "ack:clear");
  }

  async query(text: string): Promise<ReplyEvent> {
    return (await this.request({ type: "query", text }, "reply")) as ReplyEvent;
  }

  close(): void {
    this.closed = true;
    this.transport.close();
  }

  private send(msg: object): void {
    if (this.closed) throw new Error("session is closed");
    this.transport.send(JSON.stringify(msg));
  }

  private request(msg: object, kind: string): Promise<EngineEvent> {
    return new Promise((resolve, reject) => {
      this.pending.push({ kind, resolve, reject });
      try {
        this.send(msg);
      } catch (err) {
        this.pending.pop();
        reject(err);
      }
    });
  }

  private dispatch(data: string): void {
    let ev: EngineEvent;
    try {
      ev = JSON.parse(data) as EngineEvent;
    } catch {
      return; // not ours; the engine only speaks JSON
    }
    if (ev.type === "ack" || ev.type === "reply") {
      const kind = ev.type === "ack" ? `ack:${ev.of}` : "reply";
      const i = this.pending.findIndex((p) => p.kind === kind);
      if (i >= 0) {
        const [p] = this.pending.splice(i, 1);
        p!.resolve(ev);
      }
    } else if (ev.type === "error" && REQUEST_ERRORS.has(ev.code) && this.pending.length > 0) {
      const p = this.pending.shift();
      p!.reject(new EngineError(ev.code, ev.message));
    }
    this.onEvent?.(ev);
  }

  private failAll(err: Error): void {
    const stalled = this.pending;
    this.pending = [];
    for (const p of stalled) p.reject(err);
  }
}
