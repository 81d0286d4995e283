/**
 * End-to-end: drive a real engine service over WebSocket exactly the way
 * the browser app does, against the packaged workspace and its scripted
 * grading backend.
 */

import { spawn, type ChildProcess } from "node:child_process";
import { readFileSync } from "node:fs";
import { join } from "node:path";
import { fileURLToPath } from "node:url";
import { afterAll, beforeAll, describe, expect, it } from "vitest";
import WebSocket from "ws";

import { bufferPanelLines } from "../src/layout.js";
import { renderPrompt } from "../src/prompt.js";
import {
  SessionClient,
  wsTransport,
  type BufferEvent,
  type EngineEvent,
  type FixationEvent,
  type WordDoc,
  type WorkspaceDoc,
} from "../src/protocol.js";

const HERE = fileURLToPath(new URL(".", import.meta.url));
const REPO = join(HERE, "..", "..");
const WORKSPACE = JSON.parse(
  readFileSync(join(HERE, "..", "public", "workspace.json"), "utf8"),
) as WorkspaceDoc;

interface Question {
  question_id: string;
  question: string;
  answer_span: string;
  entity_key: string;
}

const SPEC = JSON.parse(
  readFileSync(join(REPO, "src", "gazectx", "fixtures", "oracle_spec.json"), "utf8"),
) as { questions: Question[] };

/** Same normalization the engine applies when grading and locating spans. */
function normalize(text: string): string {
  return text
    .toLowerCase()
    .replace(/[^\p{L}\p{N}_\s]+/gu, "")
    .replace(/\s+/g, " ")
    .trim();
}

function locateSpan(ws: WorkspaceDoc, span: string): { window: string; boxes: WordDoc[] } {
  const target = normalize(span).split(" ");
  const hits: { window: string; boxes: WordDoc[] }[] = [];
  for (const win of ws.windows) {
    const boxes = ws.words
      .filter((b) => b.window_id === win.id)
      .sort((a, b) => a.order_index - b.order_index);
    const tokens = boxes.map((b) => normalize(b.text));
    for (let i = 0; i + target.length <= tokens.length; i++) {
      if (target.every((t, k) => tokens[i + k] === t)) {
        hits.push({ window: win.id, boxes: boxes.slice(i, i + target.length) });
      }
    }
  }
  expect(hits).toHaveLength(1);
  return hits[0]!;
}

class EventLog {
  events: EngineEvent[] = [];
  private waiters: { pred: (ev: EngineEvent) => boolean; resolve: (ev: EngineEvent) => void }[] =
    [];

  push(ev: EngineEvent): void {
    this.events.push(ev);
    const i = this.waiters.findIndex((w) => w.pred(ev));
    if (i >= 0) {
      const [w] = this.waiters.splice(i, 1);
      w!.resolve(ev);
    }
  }

  next(pred: (ev: EngineEvent) => boolean, timeoutMs = 10_000): Promise<EngineEvent> {
    const seen = this.events.find(pred);
    if (seen !== undefined) return Promise.resolve(seen);
    return new Promise((resolve, reject) => {
      const timer = setTimeout(() => reject(new Error("timed out waiting for event")), timeoutMs);
      this.waiters.push({
        pred,
        resolve: (ev) => {
          clearTimeout(timer);
          resolve(ev);
        },
      });
    });
  }
}

let server: ChildProcess;
let wsUrl: string;

async function openSession(): Promise<{ client: SessionClient; log: EventLog }> {
  const socket = new WebSocket(wsUrl);
  await new Promise<void>((resolve, reject) => {
    socket.onopen = () => resolve();
    socket.onerror = (err) => reject(new Error(`cannot reach ${wsUrl}: ${String(err)}`));
  });
  const client = new SessionClient(wsTransport(socket));
  const log = new EventLog();
  client.onEvent = (ev) => log.push(ev);
  await client.start(WORKSPACE);
  return { client, log };
}

beforeAll(async () => {
  server = spawn(
    "python3",
    ["-m", "gazectx", "serve", "--bind", "127.0.0.1:0", "--ws-bind", "127.0.0.1:0", "--backend", "oracle"],
    { cwd: REPO, stdio: ["ignore", "ignore", "pipe"] },
  );
  wsUrl = await new Promise<string>((resolve, reject) => {
    let buf = "";
    const timer = setTimeout(() => reject(new Error(`service never came up:\n${buf}`)), 15_000);
    server.stderr!.on("data", (chunk: Buffer) => {
      buf += chunk.toString();
      const m = buf.match(/listening on (ws:\/\/[\d.]+:\d+)/);
      if (m !== null) {
        clearTimeout(timer);
        resolve(m[1]!);
      }
    });
    server.on("exit", (code) => reject(new Error(`service exited early (${code}):\n${buf}`)));
  });
}, 20_000);

afterAll(async () => {
  if (server.exitCode === null) {
    server.kill("SIGTERM");
    await new Promise((resolve) => server.on("exit", resolve));
  }
});

describe("browser client against a live engine", () => {
  it(
    "gazing the answer sentence wins on the first attempt",
    async () => {
      const q = SPEC.questions[0]!;
      const span = locateSpan(WORKSPACE, q.answer_span);
      const { client, log } = await openSession();

      // dwell ~130 ms on each word of the answer sentence, like a reader would
      let t = 0;
      for (const box of span.boxes) {
        for (let k = 0; k < 14; k++) {
          client.sendGaze(t + 10 * k, span.window, box.x + box.w / 2, box.y + box.h / 2);
        }
        const fixation = (await log.next(
          (ev) => ev.type === "fixation" && ev.order_index === box.order_index,
        )) as FixationEvent;
        expect(fixation.window).toBe(span.window);
        expect(fixation.text).toBe(box.text);
        t += 140;
      }

      const full = (await log.next(
        (ev) => ev.type === "buffer" && ev.count === span.boxes.length,
      )) as BufferEvent;
      // the buffer panel shows the sentence verbatim, in gaze order
      expect(full.words.map((w) => w.text)).toEqual(span.boxes.map((b) => b.text));
      expect(bufferPanelLines(full)).toEqual([
        `${span.window}: ${span.boxes.map((b) => b.text).join(" ")}`,
      ]);

      const reply = await client.query(q.question);
      expect(reply.text).toBe(q.answer_span);
      expect(reply.latency_ms).toBeGreaterThanOrEqual(0);

      const cleared = (await log.next((ev) => ev.type === "buffer" && ev.count === 0)) as BufferEvent;
      expect(cleared.words).toEqual([]);
      client.close();
    },
    30_000,
  );

  it(
    "mode switching is acked and changes what the client would send",
    async () => {
      const q = SPEC.questions[0]!;
      const { client } = await openSession();

      await client.setMode("full_context");
      const local = renderPrompt(q.question, "full_context", [], WORKSPACE);
      expect(local).toContain("w1: ");
      expect(local).toContain("w2: ");
      expect(local).not.toBe(renderPrompt(q.question, "baseline", [], WORKSPACE));

      // with every window inlined, the grader wants an explicit referral
      const verbatim = await client.query(q.question);
      expect(verbatim.text).not.toBe(q.answer_span);
      const referred = await client.query(
        `${q.question.replace(/\?$/, "")}, as described in this article?`,
      );
      expect(referred.text).toBe(q.answer_span);
      client.close();
    },
    30_000,
  );

  it(
    "a fresh session has no attention data and answers from nothing",
    async () => {
      const q = SPEC.questions[0]!;
      const { client } = await openSession();
      const reply = await client.query(q.question);
      expect(reply.text).not.toBe(q.answer_span);
      client.close();
    },
    30_000,
  );
});
