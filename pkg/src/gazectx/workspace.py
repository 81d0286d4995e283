"""Multi-window workspace model.

Windows are flat planes arranged on an arc around the viewer, each tangent
to the viewing circle at its center azimuth.  Words live on windows as
axis-aligned pixel boxes.  This module owns the coordinate conventions:

* Head frame: +x right, +y up, -z forward.  Azimuth 0 is straight ahead,
  positive azimuths to the right.
* Window pixels: origin at the top-left corner, +x right, +y down.
  A point (x, y) is inside a box when box.x <= x < box.x + box.w and
  box.y <= y < box.y + box.h (half-open so adjacent boxes never both claim
  a point).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "WorkspaceError",
    "WorkspaceParseError",
    "WorkspaceValidationError",
    "TypesetError",
    "UnknownWindowError",
    "WindowSpec",
    "WordBox",
    "Workspace",
    "place_windows",
    "typeset_text",
    "gaze_to_window_point",
    "window_point_to_ray",
    "hit_test_word",
    "load_workspace",
    "workspace_from_dict",
    "workspace_to_dict",
    "serialize_workspace",
]


class WorkspaceError(ValueError):
    """Base class for workspace construction and lookup failures."""


class WorkspaceParseError(WorkspaceError):
    """The byte stream is not valid JSON."""


class WorkspaceValidationError(WorkspaceError):
    """The document parsed but violates a workspace invariant."""


class TypesetError(WorkspaceError):
    """Text cannot be laid out inside the window's pixel extent."""


class UnknownWindowError(WorkspaceError):
    """A window id was referenced that the workspace does not define."""


@dataclass(frozen=True)
class WindowSpec:
    """One flat window on the arc.

    width_m / height_m are the physical extent of the plane; the pixel
    grid maps onto it uniformly.
    """

    id: str
    center_azimuth_deg: float
    width_m: float
    height_m: float
    distance_m: float = 1.0
    width_px: int = 700
    height_px: int = 1200

    def __post_init__(self) -> None:
        if not self.id:
            raise WorkspaceValidationError("window id must be non-empty")
        for name in ("width_m", "height_m", "distance_m"):
            if not getattr(self, name) > 0:
                raise WorkspaceValidationError(f"window {self.id!r}: {name} must be positive")
        for name in ("width_px", "height_px"):
            if getattr(self, name) <= 0:
                raise WorkspaceValidationError(f"window {self.id!r}: {name} must be positive")


@dataclass(frozen=True)
class WordBox:
    """A single word's axis-aligned pixel box on one window."""

    window_id: str
    text: str
    x: int
    y: int
    w: int
    h: int
    order_index: int

    def contains(self, px: float, py: float) -> bool:
        return self.x <= px < self.x + self.w and self.y <= py < self.y + self.h


# --------------------------------------------------------------------------
# spatial index
# --------------------------------------------------------------------------

_CELL_PX = 64


class SpatialIndex:
    """Uniform per-window grid over word boxes.

    Flattened into numpy arrays so the batch kernels can consume it
    directly: cells for window w start at grid_off[w], laid out row-major
    (ny[w] rows of nx[w] cells).  cell_start/cell_words form a CSR listing
    of the word indices overlapping each cell.
    """

    def __init__(self, windows: tuple[WindowSpec, ...], words: tuple[WordBox, ...]):
        self.cell_px = _CELL_PX
        self.window_index = {w.id: i for i, w in enumerate(windows)}
        nwin = len(windows)
        self.nx = np.zeros(nwin, dtype=np.int64)
        self.ny = np.zeros(nwin, dtype=np.int64)
        self.grid_off = np.zeros(nwin + 1, dtype=np.int64)
        for i, w in enumerate(windows):
            self.nx[i] = -(-w.width_px // self.cell_px)
            self.ny[i] = -(-w.height_px // self.cell_px)
            self.grid_off[i + 1] = self.grid_off[i] + self.nx[i] * self.ny[i]
        total_cells = int(self.grid_off[nwin])

        n = len(words)
        self.word_window = np.empty(n, dtype=np.int64)
        self.wx = np.empty(n, dtype=np.int64)
        self.wy = np.empty(n, dtype=np.int64)
        self.ww = np.empty(n, dtype=np.int64)
        self.wh = np.empty(n, dtype=np.int64)
        for g, b in enumerate(words):
            self.word_window[g] = self.window_index[b.window_id]
            self.wx[g], self.wy[g], self.ww[g], self.wh[g] = b.x, b.y, b.w, b.h

        # Counting sort of (word, cell) pairs into CSR form.
        pairs: list[tuple[int, int]] = []
        for g in range(n):
            wi = int(self.word_window[g])
            cx0 = int(self.wx[g]) // self.cell_px
            cx1 = int(self.wx[g] + self.ww[g] - 1) // self.cell_px
            cy0 = int(self.wy[g]) // self.cell_px
            cy1 = int(self.wy[g] + self.wh[g] - 1) // self.cell_px
            for cy in range(cy0, cy1 + 1):
                for cx in range(cx0, cx1 + 1):
                    pairs.append((int(self.grid_off[wi] + cy * self.nx[wi] + cx), g))
        self.cell_start = np.zeros(total_cells + 1, dtype=np.int64)
        for c, _ in pairs:
            self.cell_start[c + 1] += 1
        np.cumsum(self.cell_start, out=self.cell_start)
        self.cell_words = np.empty(len(pairs), dtype=np.int64)
        cursor = self.cell_start[:-1].copy()
        for c, g in sorted(pairs):
            self.cell_words[cursor[c]] = g
            cursor[c] += 1

        self._padded: np.ndarray | None = None

    def padded_candidates(self) -> np.ndarray:
        """(total_cells, K) matrix of word indices per cell, -1 padded.

        Only the vectorized numpy kernel needs this; built on first use.
        """
        if self._padded is None:
            counts = np.diff(self.cell_start)
            k = max(1, int(counts.max())) if counts.size else 1
            padded = np.full((len(counts), k), -1, dtype=np.int64)
            for c in range(len(counts)):
                lo, hi = self.cell_start[c], self.cell_start[c + 1]
                padded[c, : hi - lo] = self.cell_words[lo:hi]
            self._padded = padded
        return self._padded

    def query(self, window_idx: int, x: float, y: float) -> int:
        """Word index at (x, y) on the given window, or -1."""
        if x < 0 or y < 0:
            return -1
        cx = int(x) // self.cell_px
        cy = int(y) // self.cell_px
        if cx >= self.nx[window_idx] or cy >= self.ny[window_idx]:
            return -1
        c = int(self.grid_off[window_idx] + cy * self.nx[window_idx] + cx)
        for k in range(self.cell_start[c], self.cell_start[c + 1]):
            g = int(self.cell_words[k])
            if self.wx[g] <= x < self.wx[g] + self.ww[g] and self.wy[g] <= y < self.wy[g] + self.wh[g]:
                return g
        return -1


class _WindowGeometry:
    """Precomputed plane frames for ray casting, one row per window."""

    def __init__(self, windows: tuple[WindowSpec, ...]):
        n = len(windows)
        self.center = np.empty((n, 3))
        self.u = np.empty((n, 3))  # screen right
        self.normal = np.empty((n, 3))  # faces the viewer
        self.width_m = np.empty(n)
        self.height_m = np.empty(n)
        for i, w in enumerate(windows):
            th = math.radians(w.center_azimuth_deg)
            s, c = math.sin(th), math.cos(th)
            self.center[i] = (w.distance_m * s, 0.0, -w.distance_m * c)
            self.u[i] = (c, 0.0, s)
            self.normal[i] = (-s, 0.0, c)
            self.width_m[i] = w.width_m
            self.height_m[i] = w.height_m


# --------------------------------------------------------------------------
# workspace
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Workspace:
    """Immutable set of windows plus the words typeset onto them."""

    windows: tuple[WindowSpec, ...]
    words: tuple[WordBox, ...]
    index: SpatialIndex = field(init=False, repr=False, compare=False)
    geometry: _WindowGeometry = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "windows", tuple(self.windows))
        object.__setattr__(self, "words", tuple(self.words))
        _validate(self.windows, self.words)
        object.__setattr__(self, "index", SpatialIndex(self.windows, self.words))
        object.__setattr__(self, "geometry", _WindowGeometry(self.windows))
        _check_overlaps(self.index, self.words)

    def window(self, window_id: str) -> WindowSpec:
        try:
            return self.windows[self.index.window_index[window_id]]
        except KeyError:
            raise UnknownWindowError(f"unknown window id {window_id!r}") from None

    def window_words(self, window_id: str) -> list[WordBox]:
        """Words on one window, sorted by order_index (reading order)."""
        self.window(window_id)
        return sorted(
            (b for b in self.words if b.window_id == window_id),
            key=lambda b: b.order_index,
        )


def _validate(windows: tuple[WindowSpec, ...], words: tuple[WordBox, ...]) -> None:
    seen: set[str] = set()
    for w in windows:
        if w.id in seen:
            raise WorkspaceValidationError(f"duplicate window id {w.id!r}")
        seen.add(w.id)
    by_window: dict[str, set[int]] = {w.id: set() for w in windows}
    specs = {w.id: w for w in windows}
    for b in words:
        if b.window_id not in specs:
            raise WorkspaceValidationError(
                f"word {b.text!r} references unknown window {b.window_id!r}"
            )
        if not b.text or any(ch.isspace() for ch in b.text):
            raise WorkspaceValidationError(
                f"word box text must be a single non-empty token, got {b.text!r}"
            )
        if b.w <= 0 or b.h <= 0:
            raise WorkspaceValidationError(f"word {b.text!r}: box must have positive size")
        spec = specs[b.window_id]
        if b.x < 0 or b.y < 0 or b.x + b.w > spec.width_px or b.y + b.h > spec.height_px:
            raise WorkspaceValidationError(
                f"word {b.text!r} extends outside window {b.window_id!r}"
            )
        if b.order_index in by_window[b.window_id]:
            raise WorkspaceValidationError(
                f"duplicate order_index {b.order_index} in window {b.window_id!r}"
            )
        by_window[b.window_id].add(b.order_index)


def _check_overlaps(index: SpatialIndex, words: tuple[WordBox, ...]) -> None:
    # Boxes sharing no grid cell cannot overlap, so pairwise checks stay local.
    for c in range(len(index.cell_start) - 1):
        lo, hi = int(index.cell_start[c]), int(index.cell_start[c + 1])
        for i in range(lo, hi):
            for j in range(i + 1, hi):
                a, b = words[index.cell_words[i]], words[index.cell_words[j]]
                if (
                    a.x < b.x + b.w
                    and b.x < a.x + a.w
                    and a.y < b.y + b.h
                    and b.y < a.y + a.h
                ):
                    raise WorkspaceValidationError(
                        f"overlapping boxes {a.text!r} and {b.text!r} in window {a.window_id!r}"
                    )


# --------------------------------------------------------------------------
# arc placement and typesetting
# --------------------------------------------------------------------------


def place_windows(
    n: int,
    span_deg: float = 120.0,
    distance_m: float = 1.0,
    width_px: int = 700,
    height_px: int = 1200,
) -> list[WindowSpec]:
    """Evenly divide an arc of span_deg among n tangent windows.

    Each window subtends span_deg / n of azimuth; its physical width is the
    chord-tangent width 2 * d * tan(half angle), so neighbouring windows
    meet exactly at their shared arc boundary.
    """
    if n <= 0:
        raise WorkspaceValidationError("need at least one window")
    if not (0 < span_deg <= 360):
        raise WorkspaceValidationError("span_deg must be in (0, 360]")
    step = span_deg / n
    width_m = 2.0 * distance_m * math.tan(math.radians(step / 2.0))
    height_m = width_m * (height_px / width_px)
    out = []
    for i in range(n):
        az = -span_deg / 2.0 + (i + 0.5) * step
        out.append(
            WindowSpec(
                id=f"w{i + 1}",
                center_azimuth_deg=az,
                width_m=width_m,
                height_m=height_m,
                distance_m=distance_m,
                width_px=width_px,
                height_px=height_px,
            )
        )
    return out


def typeset_text(
    window: WindowSpec,
    text: str,
    cell_w: int = 10,
    cell_h: int = 18,
    margin_px: int = 20,
    line_gap_px: int = 6,
) -> list[WordBox]:
    """Lay whitespace-separated tokens onto the window as monospace boxes.

    Boxes are cell_w per character wide and cell_h tall, separated by one
    cell of whitespace, wrapped at the right margin.
    """
    tokens = text.split()
    boxes: list[WordBox] = []
    x = margin_px
    y = margin_px
    limit_x = window.width_px - margin_px
    limit_y = window.height_px - margin_px
    for i, tok in enumerate(tokens):
        w = len(tok) * cell_w
        if margin_px + w > limit_x:
            raise TypesetError(f"word {tok!r} is wider than window {window.id!r}")
        if x + w > limit_x:
            x = margin_px
            y += cell_h + line_gap_px
        if y + cell_h > limit_y:
            raise TypesetError(
                f"text overflows window {window.id!r} after {i} of {len(tokens)} words"
            )
        boxes.append(WordBox(window.id, tok, x, y, w, cell_h, i))
        x += w + cell_w
    return boxes


# --------------------------------------------------------------------------
# ray casting and hit-testing
# --------------------------------------------------------------------------

_EPS = 1e-12


def gaze_to_window_point(
    origin: tuple[float, float, float],
    direction: tuple[float, float, float],
    ws: Workspace,
) -> tuple[str, float, float] | None:
    """Project a gaze ray onto the nearest window it pierces.

    Returns (window_id, x_px, y_px) or None when the ray misses every
    window.  Intersections behind the origin do not count.
    """
    geo = ws.geometry
    o = np.asarray(origin, dtype=float)
    d = np.asarray(direction, dtype=float)
    norm = float(np.linalg.norm(d))
    if norm < _EPS:
        return None
    d = d / norm
    best: tuple[float, str, float, float] | None = None
    for i, w in enumerate(ws.windows):
        denom = float(np.dot(d, geo.normal[i]))
        if abs(denom) < _EPS:
            continue
        t = float(np.dot(geo.center[i] - o, geo.normal[i])) / denom
        if t <= _EPS:
            continue
        p = o + t * d
        rel = p - geo.center[i]
        a = float(np.dot(rel, geo.u[i]))
        b = -float(rel[1])  # v axis is screen-down = -y
        x_px = (a / geo.width_m[i] + 0.5) * w.width_px
        y_px = (b / geo.height_m[i] + 0.5) * w.height_px
        if 0.0 <= x_px < w.width_px and 0.0 <= y_px < w.height_px:
            if best is None or t < best[0]:
                best = (t, w.id, x_px, y_px)
    if best is None:
        return None
    return best[1], float(best[2]), float(best[3])


def window_point_to_ray(
    ws: Workspace, window_id: str, x_px: float, y_px: float
) -> tuple[tuple[float, float, float], tuple[float, float, float]]:
    """Inverse of gaze_to_window_point for an origin at the head center."""
    spec = ws.window(window_id)
    i = ws.index.window_index[window_id]
    geo = ws.geometry
    a = (x_px / spec.width_px - 0.5) * geo.width_m[i]
    b = (y_px / spec.height_px - 0.5) * geo.height_m[i]
    p = geo.center[i] + a * geo.u[i] + b * np.array([0.0, -1.0, 0.0])
    n = float(np.linalg.norm(p))
    d = p / n
    return (0.0, 0.0, 0.0), (float(d[0]), float(d[1]), float(d[2]))


def hit_test_word(ws: Workspace, window_id: str, x_px: float, y_px: float) -> WordBox | None:
    """Word box containing the pixel point, or None over whitespace."""
    try:
        wi = ws.index.window_index[window_id]
    except KeyError:
        raise UnknownWindowError(f"unknown window id {window_id!r}") from None
    g = ws.index.query(wi, x_px, y_px)
    return None if g < 0 else ws.words[g]


# --------------------------------------------------------------------------
# serialization
# --------------------------------------------------------------------------

_WINDOW_FIELDS = {
    "id": str,
    "center_azimuth_deg": float,
    "distance_m": float,
    "width_px": int,
    "height_px": int,
    "width_m": float,
    "height_m": float,
}
_WORD_FIELDS = {
    "window_id": str,
    "text": str,
    "x": int,
    "y": int,
    "w": int,
    "h": int,
    "order_index": int,
}


def _coerce(obj: dict, fields: dict[str, type], what: str) -> dict:
    if not isinstance(obj, dict):
        raise WorkspaceValidationError(f"{what} must be an object")
    unknown = set(obj) - set(fields)
    if unknown:
        raise WorkspaceValidationError(f"{what} has unknown field {sorted(unknown)[0]!r}")
    out = {}
    for name, typ in fields.items():
        if name not in obj:
            raise WorkspaceValidationError(f"{what} is missing field {name!r}")
        v = obj[name]
        if typ is int:
            # bool is an int subclass; JSON true/false are not pixel counts
            if not isinstance(v, int) or isinstance(v, bool):
                raise WorkspaceValidationError(f"{what}.{name} must be an integer")
        elif typ is float:
            if not isinstance(v, (int, float)) or isinstance(v, bool):
                raise WorkspaceValidationError(f"{what}.{name} must be a number")
            v = float(v)
        elif typ is str:
            if not isinstance(v, str):
                raise WorkspaceValidationError(f"{what}.{name} must be a string")
        out[name] = v
    return out


def workspace_from_dict(doc: dict) -> Workspace:
    if not isinstance(doc, dict):
        raise WorkspaceValidationError("workspace document must be an object")
    unknown = set(doc) - {"version", "windows", "words"}
    if unknown:
        raise WorkspaceValidationError(f"unknown top-level field {sorted(unknown)[0]!r}")
    if doc.get("version") != 1:
        raise WorkspaceValidationError("unsupported workspace version")
    windows_raw = doc.get("windows")
    words_raw = doc.get("words")
    if not isinstance(windows_raw, list) or not isinstance(words_raw, list):
        raise WorkspaceValidationError("windows and words must be arrays")
    windows = tuple(WindowSpec(**_coerce(w, _WINDOW_FIELDS, "window")) for w in windows_raw)
    words = tuple(WordBox(**_coerce(b, _WORD_FIELDS, "word")) for b in words_raw)
    return Workspace(windows, words)


def load_workspace(data: bytes | str) -> Workspace:
    """Parse and validate a workspace JSON document."""
    try:
        doc = json.loads(data)
    except json.JSONDecodeError as e:
        raise WorkspaceParseError(f"malformed workspace JSON: {e}") from None
    return workspace_from_dict(doc)


def workspace_to_dict(ws: Workspace) -> dict:
    return {
        "version": 1,
        "windows": [
            {
                "id": w.id,
                "center_azimuth_deg": w.center_azimuth_deg,
                "distance_m": w.distance_m,
                "width_px": w.width_px,
                "height_px": w.height_px,
                "width_m": w.width_m,
                "height_m": w.height_m,
            }
            for w in ws.windows
        ],
        "words": [
            {
                "window_id": b.window_id,
                "text": b.text,
                "x": b.x,
                "y": b.y,
                "w": b.w,
                "h": b.h,
                "order_index": b.order_index,
            }
            for b in ws.words
        ],
    }


def serialize_workspace(ws: Workspace) -> str:
    return json.dumps(workspace_to_dict(ws), ensure_ascii=False, separators=(",", ":"))
