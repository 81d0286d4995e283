/** Pure presentation math, kept DOM-free so it is unit-testable in node. */

import type { BufferEvent, WindowDoc } from "./protocol.js";

export interface PanelLayout {
  id: string;
  left: number;
  top: number;
  width: number;
  height: number;
  scale: number;
}

/**
 * Place windows side by side in azimuth order, uniformly scaled to fit
 * the viewport width.
 */
export function layoutPanels(
  windows: WindowDoc[],
  viewportWidth: number,
  gapPx = 16,
): PanelLayout[] {
  if (windows.length === 0) return [];
  const ordered = [...windows].sort((a, b) => a.center_azimuth_deg - b.center_azimuth_deg);
  const totalPx = ordered.reduce((n, w) => n + w.width_px, 0);
  const avail = viewportWidth - gapPx * (ordered.length - 1);
  const scale = Math.min(1, avail / totalPx);
  const panels: PanelLayout[] = [];
  let left = 0;
  for (const w of ordered) {
    panels.push({
      id: w.id,
      left,
      top: 0,
      width: w.width_px * scale,
      height: w.height_px * scale,
      scale,
    });
    left += w.width_px * scale + gapPx;
  }
  return panels;
}

/** One display line per window, in buffer (gaze) order. */
export function bufferPanelLines(ev: BufferEvent): string[] {
  const grouped = new Map<string, string[]>();
  for (const w of ev.words) {
    const bucket = grouped.get(w.window);
    if (bucket === undefined) grouped.set(w.window, [w.text]);
    else bucket.push(w.text);
  }
  return [...grouped.entries()].map(([wid, words]) => `${wid}: ${words.join(" ")}`);
}

export interface GazeSample2d {
  tMs: number;
  window: string;
  x: number;
  y: number;
}

/**
 * Rate-limit pointer movement into a monotonic gaze stream. Samples
 * closer than minIntervalMs to the last accepted one (or non-increasing
 * in time) are dropped.
 */
export class GazeThrottle {
  private lastMs = -Infinity;

  constructor(private readonly minIntervalMs = 16) {
    if (minIntervalMs <= 0) throw new Error("minIntervalMs must be positive");
  }

  offer(tMs: number, window: string, x: number, y: number): GazeSample2d | null {
    if (tMs <= this.lastMs || tMs - this.lastMs < this.minIntervalMs) return null;
    this.lastMs = tMs;
    return { tMs, window, x, y };
  }
}
