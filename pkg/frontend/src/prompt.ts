/**
 * Client-side mirror of the engine's prompt templates, used for the live
 * prompt preview. Byte-for-byte identical to the engine rendering; the
 * test suite checks both against the same golden files.
 */

import type { Mode, WorkspaceDoc } from "./protocol.js";

export const ATTENTION_PREAMBLE =
  "Below is a dataset representing my visual attention it contains the text " +
  "i have been reading from the windows I have been observing. " +
  "Please use this information to inform your response to my request.";

export const REPLY_CONSTRAINT =
  "Respond with 6 sentences max, keep it under 400 characters maximum.";

export interface BufferWord {
  window: string;
  text: string;
}

type Section = [windowId: string, words: string[]];

function sectionsFor(mode: Mode, buffer: BufferWord[], ws: WorkspaceDoc): Section[] {
  if (mode === "full_context") {
    const out: Section[] = [];
    for (const win of ws.windows) {
      const words = ws.words
        .filter((b) => b.window_id === win.id)
        .sort((a, b) => a.order_index - b.order_index)
        .map((b) => b.text);
      if (words.length > 0) out.push([win.id, words]);
    }
    return out;
  }
  if (mode === "eye_tracking") {
    const grouped = new Map<string, string[]>();
    for (const w of buffer) {
      const bucket = grouped.get(w.window);
      if (bucket === undefined) grouped.set(w.window, [w.text]);
      else bucket.push(w.text);
    }
    return [...grouped.entries()].filter(([, words]) => words.length > 0);
  }
  return [];
}

/** Render the user message for one query under the given mode. */
export function renderPrompt(
  query: string,
  mode: Mode,
  buffer: BufferWord[],
  ws: WorkspaceDoc,
): string {
  if (query.length === 0) throw new Error("query must be non-empty");
  const sections = sectionsFor(mode, buffer, ws);
  if (sections.length === 0) return `${query}\n${REPLY_CONSTRAINT}`;
  const body = sections.map(([wid, words]) => `${wid}: ${words.join(" ")}`).join(", ");
  return `${query}\n${ATTENTION_PREAMBLE} ${body}. ${REPLY_CONSTRAINT}`;
}

/** How many context words the rendered prompt would carry. */
export function contextWordCount(mode: Mode, buffer: BufferWord[], ws: WorkspaceDoc): number {
  return sectionsFor(mode, buffer, ws).reduce((n, [, words]) => n + words.length, 0);
}
