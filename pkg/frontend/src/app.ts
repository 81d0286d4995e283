/** Browser wiring: pointer-as-gaze demo against a running engine service. */

import { GazeThrottle, bufferPanelLines, layoutPanels } from "./layout.js";
import { renderPrompt, type BufferWord } from "./prompt.js";
import {
  SessionClient,
  wsTransport,
  type EngineEvent,
  type Mode,
  type WorkspaceDoc,
} from "./protocol.js";

const $ = <T extends HTMLElement>(id: string): T => {
  const el = document.getElementById(id);
  if (el === null) throw new Error(`missing element #${id}`);
  return el as T;
};

interface UiState {
  client: SessionClient | null;
  ws: WorkspaceDoc | null;
  mode: Mode;
  buffer: BufferWord[];
  boxes: Map<string, HTMLElement>; // "window/order_index" -> element
}

const state: UiState = { client: null, ws: null, mode: "eye_tracking", buffer: [], boxes: new Map() };

function setStatus(text: string, bad = false): void {
  const el = $("status");
  el.textContent = text;
  el.classList.toggle("bad", bad);
}

function refreshPreview(): void {
  if (state.ws === null) return;
  const query = ($<HTMLInputElement>("query")).value || "(your question)";
  $("preview").textContent = renderPrompt(query, state.mode, state.buffer, state.ws);
}

function renderWorkspace(ws: WorkspaceDoc): void {
  const root = $("panels");
  root.textContent = "";
  state.boxes.clear();
  const panels = layoutPanels(ws.windows, root.clientWidth || 1200);
  for (const panel of panels) {
    const div = document.createElement("div");
    div.className = "panel";
    div.style.left = `${panel.left}px`;
    div.style.width = `${panel.width}px`;
    div.style.height = `${panel.height}px`;
    div.dataset["window"] = panel.id;

    const label = document.createElement("div");
    label.className = "panel-label";
    label.textContent = panel.id;
    div.appendChild(label);

    for (const b of ws.words.filter((w) => w.window_id === panel.id)) {
      const box = document.createElement("span");
      box.className = "word";
      box.textContent = b.text;
      box.style.left = `${b.x * panel.scale}px`;
      box.style.top = `${b.y * panel.scale}px`;
      box.style.width = `${b.w * panel.scale}px`;
      box.style.height = `${b.h * panel.scale}px`;
      box.style.fontSize = `${12 * panel.scale}px`;
      div.appendChild(box);
      state.boxes.set(`${panel.id}/${b.order_index}`, box);
    }

    const throttle = new GazeThrottle(16);
    div.addEventListener("pointermove", (ev) => {
      if (state.client === null) return;
      const rect = div.getBoundingClientRect();
      const sample = throttle.offer(
        performance.now(),
        panel.id,
        (ev.clientX - rect.left) / panel.scale,
        (ev.clientY - rect.top) / panel.scale,
      );
      if (sample !== null) {
        state.client.sendGaze(sample.tMs, sample.window, sample.x, sample.y);
      }
    });
    root.appendChild(div);
  }
  root.style.height = `${Math.max(...panels.map((p) => p.height), 0)}px`;
}

function onEngineEvent(ev: EngineEvent): void {
  if (ev.type === "fixation") {
    const box = state.boxes.get(`${ev.window}/${ev.order_index}`);
    if (box !== undefined) box.classList.add("fixated");
  } else if (ev.type === "buffer") {
    state.buffer = ev.words;
    $("buffer-count").textContent = String(ev.count);
    $("buffer-words").textContent = bufferPanelLines(ev).join("\n");
    if (ev.count === 0) {
      for (const box of state.boxes.values()) box.classList.remove("fixated");
    }
    refreshPreview();
  } else if (ev.type === "error") {
    setStatus(`engine error ${ev.code}: ${ev.message}`, true);
  }
}

function appendChat(role: string, text: string): void {
  const log = $("chat");
  const line = document.createElement("div");
  line.className = `turn ${role}`;
  line.textContent = `${role}: ${text}`;
  log.appendChild(line);
  log.scrollTop = log.scrollHeight;
}

async function connect(): Promise<void> {
  const url = ($<HTMLInputElement>("endpoint")).value;
  const res = await fetch("public/workspace.json");
  const ws = (await res.json()) as WorkspaceDoc;
  state.ws = ws;
  renderWorkspace(ws);

  const socket = new WebSocket(url);
  await new Promise<void>((resolve, reject) => {
    socket.onopen = () => resolve();
    socket.onerror = () => reject(new Error(`cannot reach ${url}`));
  });
  const client = new SessionClient(wsTransport(socket));
  client.onEvent = onEngineEvent;
  await client.start(ws);
  await client.setMode(state.mode);
  state.client = client;
  setStatus(`connected to ${url}`);
  refreshPreview();
}

function wire(): void {
  $("connect").addEventListener("click", () => {
    connect().catch((err: Error) => setStatus(err.message, true));
  });
  $<HTMLSelectElement>("mode").addEventListener("change", (ev) => {
    state.mode = (ev.target as HTMLSelectElement).value as Mode;
    refreshPreview();
    state.client?.setMode(state.mode).catch((err: Error) => setStatus(err.message, true));
  });
  $("clear").addEventListener("click", () => {
    state.client?.clearBuffer().catch((err: Error) => setStatus(err.message, true));
  });
  $<HTMLInputElement>("query").addEventListener("input", refreshPreview);
  $<HTMLFormElement>("ask").addEventListener("submit", (ev) => {
    ev.preventDefault();
    const input = $<HTMLInputElement>("query");
    const text = input.value.trim();
    if (text === "" || state.client === null) return;
    appendChat("user", text);
    input.value = "";
    state.client
      .query(text)
      .then((reply) => {
        appendChat("assistant", `${reply.text} (${reply.latency_ms.toFixed(0)} ms)`);
      })
      .catch((err: Error) => setStatus(err.message, true));
  });
}

wire();
setStatus("not connected");
