"""Synthetic chart tasks with pixel-exact tool supervision.

Two generators produce self-grading documents:

* read-value — a scatter or polyline chart with 3-7 labeled points and a
  question asking for the x-value, y-value, or full (x, y) coordinates of
  one labeled point. Every point's data coordinates, pixel coordinates, and
  marker style are recorded; supervision is the projection line(s) from the
  queried point to the corresponding axis (a vertical line at its pixel
  column for x questions, a horizontal line at its pixel row for y
  questions, both for pair questions) plus a zoom box around the point.
* compare-count — a scatter chart of 8-20 points in which only the
  reference point is visibly labeled, and a question counting how many
  other points satisfy a strict comparison against it: larger/smaller on
  one axis, on both axes in the same direction, or mixed directions.
  Supervision is a zoom box around the reference, threshold line(s) at its
  pixel coordinate, and a point primitive for every qualifying point; the
  answer equals the qualifying count recomputed from stored coordinates.

Every chart records the affine data-to-pixel transform so stored pixel
coordinates can be re-derived exactly, and label boxes are placed with a
small offset so they never occlude a marker or another label.

A fraction of documents is augmented by a random quarter-turn rotation or
axis flip; those additionally carry the orientation target that restores
the upright view, and their box/line supervision is remapped into the
augmented pixel grid (`meta` keeps describing the upright source chart).
Generation is fully deterministic in (seed, counts): manifest rows and PNG
bytes are reproducible byte-for-byte.
"""

from __future__ import annotations

import hashlib
import json
import random
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable

from . import font, raster
from .png import encode_png
from .raster import BBox, Image, PALETTE
from .rewards import (
    DrawGT,
    GroundTruth,
    RotFlipGT,
    ZoomGT,
    ground_truth_to_json,
)
from .toolbox import (
    TOOL_FLIP,
    TOOL_ROTATE,
    EpisodeState,
    Primitive,
    ToolCall,
    apply_tool,
    _crop_frame,
)

__all__ = [
    "TASK_READ_VALUE",
    "TASK_COMPARE_COUNT",
    "AUGMENTATIONS",
    "SynthConfig",
    "Doc",
    "gen_read_value",
    "gen_compare_count",
    "gen_dataset",
    "choose_augmentation",
    "augment_doc",
    "rescale_doc",
    "fit_long_edge",
    "select_highres_and_downscale",
    "doc_to_row",
    "write_dataset",
    "load_manifest",
]

TASK_READ_VALUE = "read_value"
TASK_COMPARE_COUNT = "compare_count"

AUGMENTATIONS = ("rotate90", "rotate180", "rotate270", "hflip", "vflip")

_AUG_CALLS = {
    "rotate90": ToolCall(TOOL_ROTATE, {"angle": 90}),
    "rotate180": ToolCall(TOOL_ROTATE, {"angle": 180}),
    "rotate270": ToolCall(TOOL_ROTATE, {"angle": 270}),
    "hflip": ToolCall(TOOL_FLIP, {"direction": "horizontal"}),
    "vflip": ToolCall(TOOL_FLIP, {"direction": "vertical"}),
}

_CHART_KINDS = ("scatter", "polyline")
_LABEL_ALPHABETS = ("letters", "numbers", "alnum")
_MARKER_SHAPES = ("circle", "X", "star")
_MARKER_COLORS = ("red", "blue", "green", "orange", "purple", "cyan", "magenta")
_SWARM_COLORS = ("blue", "green", "orange", "purple", "cyan", "magenta")
_RELATIONS = ("x>", "x<", "y>", "y<", "both", "mixed")
_MIN_POINT_DIST = 12.0
_LABEL_OFFSET = 8
_LAYOUT_ATTEMPTS = 40
_INK = PALETTE["black"]


@dataclass(frozen=True)
class SynthConfig:
    seed: int = 0
    n_read_value: int = 32
    n_compare_count: int = 32
    aug_prob: float = 0.7
    read_value_max_edge: int = 768
    compare_count_max_edge: int = 512

    def __post_init__(self):
        if not (0.0 <= self.aug_prob <= 1.0):
            raise ValueError("aug_prob must lie in [0, 1]")
        if self.n_read_value < 0 or self.n_compare_count < 0:
            raise ValueError("document counts must be non-negative")
        if self.read_value_max_edge < 128 or self.compare_count_max_edge < 128:
            raise ValueError("max edges below 128 leave no room to render")


@dataclass(frozen=True)
class Doc:
    """One generated document: image plus everything needed to grade it.

    `answer`/`norm_range` are scalars except for (x, y) pair questions,
    where both are 2-tuples (per-axis target and per-axis span).
    """

    doc_id: str
    task: str
    image: Image
    question: str
    answer: float | tuple[float, float]
    norm_range: float | tuple[float, float]
    supervision: tuple[GroundTruth, ...]
    augmentation: str | None = None
    meta: dict = field(default_factory=dict)

    @property
    def width(self) -> int:
        return self.image.width

    @property
    def height(self) -> int:
        return self.image.height


def _sub_rng(seed: int, *parts) -> random.Random:
    """Independent stream per (seed, tag...) so counts don't perturb peers."""
    tag = ":".join(str(p) for p in parts)
    digest = hashlib.sha256(f"{seed}:{tag}".encode()).digest()
    return random.Random(int.from_bytes(digest[:8], "big"))


def _axis_range(rng: random.Random) -> tuple[int, int]:
    """Integer [lo, hi] within [0, 100] spanning at least 10."""
    lo = rng.randint(0, 60)
    hi = rng.randint(lo + 10, 100)
    return lo, hi


def _tick_values(lo: int, hi: int, count: int = 5) -> list[int]:
    span = hi - lo
    vals = sorted({lo + round(i * span / (count - 1)) for i in range(count)})
    return vals


def _paint_y_ticks(
    arr, lo: int, hi: int, axis_col: int, top: int, bottom: int
) -> None:
    for v in _tick_values(lo, hi):
        row = round(bottom - (v - lo) / (hi - lo) * (bottom - top))
        arr[row, max(0, axis_col - 4) : axis_col] = _INK.as_array()
        label = str(v)
        tw = font.text_width(label)
        font.paint_text(arr, axis_col - 6 - tw, row - font.GLYPH_H // 2, label, _INK)


def _paint_x_ticks(
    arr, lo: int, hi: int, axis_row: int, left: int, right: int
) -> None:
    for v in _tick_values(lo, hi):
        col = round(left + (v - lo) / (hi - lo) * (right - left))
        arr[axis_row + 1 : min(arr.shape[0], axis_row + 5), col] = _INK.as_array()
        label = str(v)
        tw = font.text_width(label)
        font.paint_text(arr, col - tw // 2, axis_row + 6, label, _INK)


# --- chart machinery ---------------------------------------------------------


@dataclass(frozen=True)
class _Affine:
    """Data-to-pixel map: px = ax + bx*x, py = ay + by*y (by < 0: data y up)."""

    ax: float
    bx: float
    ay: float
    by: float

    def to_px(self, x: float, y: float) -> tuple[float, float]:
        return self.ax + self.bx * x, self.ay + self.by * y

    def to_json(self) -> dict:
        return {"x": [self.ax, self.bx], "y": [self.ay, self.by]}


def _chart_affine(
    xlo: int,
    xhi: int,
    ylo: int,
    yhi: int,
    plot_left: int,
    plot_right: int,
    plot_top: int,
    axis_row: int,
) -> _Affine:
    bx = (plot_right - 1 - plot_left) / (xhi - xlo)
    by = (plot_top - axis_row) / (yhi - ylo)
    return _Affine(plot_left - bx * xlo, bx, axis_row - by * ylo, by)


@dataclass(frozen=True)
class _ChartPoint:
    label: str
    x: int
    y: int
    px: float
    py: float
    shape: str
    color: str
    size: int

    def meta_entry(self) -> dict:
        return {
            "label": self.label,
            "data": [self.x, self.y],
            "px": [self.px, self.py],
            "marker": [self.shape, self.color, self.size],
        }


def _point_labels(rng: random.Random, n: int) -> tuple[str, list[str]]:
    """n distinct labels from one of the label alphabets."""
    alphabet = rng.choice(_LABEL_ALPHABETS)
    letters = [chr(ord("A") + i) for i in range(26)]
    if alphabet == "letters":
        pool = letters
    elif alphabet == "numbers":
        pool = [str(i) for i in range(1, 40)]
    else:
        pool = [f"{ch}{d}" for ch in letters[:12] for d in (1, 2, 3)]
    return alphabet, rng.sample(pool, n)


def _sample_coords(
    rng: random.Random,
    n: int,
    xlo: int,
    xhi: int,
    ylo: int,
    yhi: int,
    affine: _Affine,
    ref_distinct: bool,
) -> list[tuple[int, int, float, float]]:
    """n integer data points whose markers sit >= _MIN_POINT_DIST apart in
    pixel space; with ref_distinct, later points never tie the first point
    on either data axis, keeping strict comparisons unambiguous."""
    pts: list[tuple[int, int, float, float]] = []
    attempts = 0
    while len(pts) < n:
        attempts += 1
        if attempts > 20000:  # practically unreachable at these densities
            raise RuntimeError("could not place chart points")
        x, y = rng.randint(xlo, xhi), rng.randint(ylo, yhi)
        px, py = affine.to_px(x, y)
        if any(
            (px - qx) ** 2 + (py - qy) ** 2 < _MIN_POINT_DIST**2
            for _, _, qx, qy in pts
        ):
            continue
        if ref_distinct and pts and (x == pts[0][0] or y == pts[0][1]):
            continue
        pts.append((x, y, px, py))
    return pts


def _overlaps(a, b) -> bool:
    return a[0] < b[2] and b[0] < a[2] and a[1] < b[3] and b[1] < a[3]


def _label_rects(
    targets: list[tuple[float, float, str]],
    markers: list[tuple[float, float, int]],
    w: int,
    h: int,
) -> list[tuple[int, int, int, int]] | None:
    """Greedy offset placement for label boxes: inside the image, clear of
    every marker, and mutually disjoint. None when some label cannot be
    placed (the caller resamples the point layout)."""
    rects: list[tuple[int, int, int, int]] = []
    for px, py, text in targets:
        tw, th = font.text_width(text), font.GLYPH_H
        candidates = (
            (_LABEL_OFFSET, -_LABEL_OFFSET - th),
            (_LABEL_OFFSET, _LABEL_OFFSET),
            (-_LABEL_OFFSET - tw, -_LABEL_OFFSET - th),
            (-_LABEL_OFFSET - tw, _LABEL_OFFSET),
        )
        placed = None
        for dx, dy in candidates:
            left, top = round(px + dx), round(py + dy)
            rect = (left, top, left + tw, top + th)
            grown = (left - 2, top - 2, left + tw + 2, top + th + 2)
            if not (0 <= left and rect[2] <= w and 0 <= top and rect[3] <= h):
                continue
            if any(
                _overlaps(grown, (qx - s - 2, qy - s - 2, qx + s + 2, qy + s + 2))
                for qx, qy, s in markers
            ):
                continue
            if any(_overlaps(grown, r) for r in rects):
                continue
            placed = rect
            break
        if placed is None:
            return None
        rects.append(placed)
    return rects


def _paint_segment(arr, x0: float, y0: float, x1: float, y1: float, color) -> None:
    steps = int(max(abs(x1 - x0), abs(y1 - y0))) * 2 + 2
    h, w = arr.shape[:2]
    rgb = color.as_array()
    for t in range(steps + 1):
        f = t / steps
        col = round(x0 + (x1 - x0) * f)
        row = round(y0 + (y1 - y0) * f)
        if 0 <= row < h and 0 <= col < w:
            arr[row, col] = rgb


def _paint_chart_base(
    width: int,
    height: int,
    xlo: int,
    xhi: int,
    ylo: int,
    yhi: int,
    plot_left: int,
    plot_right: int,
    plot_top: int,
    axis_row: int,
) -> Image:
    img = Image.blank(width, height)
    arr = img.pixels
    arr[plot_top : axis_row + 1, plot_left - 1] = _INK.as_array()
    arr[axis_row, plot_left - 1 : plot_right] = _INK.as_array()
    _paint_y_ticks(arr, ylo, yhi, plot_left - 1, plot_top, axis_row)
    _paint_x_ticks(arr, xlo, xhi, axis_row, plot_left, plot_right - 1)
    return img


# --- read-value -------------------------------------------------------------


def gen_read_value(seed: int, index: int, max_edge: int = 768) -> Doc:
    rng = _sub_rng(seed, TASK_READ_VALUE, index)
    width = rng.randint(420, min(640, max_edge))
    height = rng.randint(300, min(480, max_edge))

    left, right, top, bottom = 46, 14, 16, 30
    plot_left, plot_right = left, width - right
    plot_top, axis_row = top, height - bottom

    xlo, xhi = _axis_range(rng)
    ylo, yhi = _axis_range(rng)
    affine = _chart_affine(
        xlo, xhi, ylo, yhi, plot_left, plot_right, plot_top, axis_row
    )

    kind = rng.choice(_CHART_KINDS)
    n_points = rng.randint(3, 7)
    alphabet, labels = _point_labels(rng, n_points)
    # marker radius tops out at 4 so every label offset clears its own marker
    styles = [
        (rng.choice(_MARKER_SHAPES), rng.choice(_MARKER_COLORS), rng.randint(3, 4))
        for _ in range(n_points)
    ]

    for _ in range(_LAYOUT_ATTEMPTS):
        coords = _sample_coords(
            rng, n_points, xlo, xhi, ylo, yhi, affine, ref_distinct=False
        )
        markers = [(px, py, styles[i][2]) for i, (_, _, px, py) in enumerate(coords)]
        targets = [(px, py, labels[i]) for i, (_, _, px, py) in enumerate(coords)]
        rects = _label_rects(targets, markers, width, height)
        if rects is not None:
            break
    else:  # pragma: no cover - not reached at these densities
        raise RuntimeError("could not lay out chart labels")

    pts = [
        _ChartPoint(labels[i], x, y, px, py, *styles[i])
        for i, (x, y, px, py) in enumerate(coords)
    ]

    img = _paint_chart_base(
        width, height, xlo, xhi, ylo, yhi, plot_left, plot_right, plot_top, axis_row
    )
    arr = img.pixels
    if kind == "polyline":
        chain = sorted(pts, key=lambda p: (p.px, p.py))
        for a, b in zip(chain, chain[1:]):
            _paint_segment(arr, a.px, a.py, b.px, b.py, _INK)
    for p in pts:
        raster.paint_marker(arr, p.px, p.py, p.shape, p.size, PALETTE[p.color])
    for (rect_left, rect_top, _, _), (_, _, text) in zip(rects, targets):
        font.paint_text(arr, rect_left, rect_top, text, _INK)

    q = pts[rng.randrange(n_points)]
    question_kind = rng.choice(("x", "y", "xy"))
    lines: list[Primitive]
    if question_kind == "x":
        question = f"What is the x-value of point {q.label}?"
        answer: float | tuple[float, float] = float(q.x)
        norm_range: float | tuple[float, float] = float(xhi - xlo)
        asked_axis = [xlo, xhi]
        lines = [Primitive.x_line(q.px)]
    elif question_kind == "y":
        question = f"What is the y-value of point {q.label}?"
        answer = float(q.y)
        norm_range = float(yhi - ylo)
        asked_axis = [ylo, yhi]
        lines = [Primitive.y_line(q.py)]
    else:
        question = f"What are the (x, y) values of point {q.label}?"
        answer = (float(q.x), float(q.y))
        norm_range = (float(xhi - xlo), float(yhi - ylo))
        asked_axis = [xlo, xhi]
        lines = [Primitive.x_line(q.px), Primitive.y_line(q.py)]

    zoom = BBox(q.px - 26.0, q.py - 26.0, q.px + 26.0, q.py + 26.0).clamped(
        width, height
    )
    return Doc(
        doc_id=f"rv{index:04d}",
        task=TASK_READ_VALUE,
        image=img,
        question=question,
        answer=answer,
        norm_range=norm_range,
        supervision=(ZoomGT((zoom,)), DrawGT(tuple(lines))),
        meta={
            "kind": kind,
            "alphabet": alphabet,
            "axis_x": [xlo, xhi],
            "axis_y": [ylo, yhi],
            "axis": asked_axis,
            "affine": affine.to_json(),
            "points": [p.meta_entry() for p in pts],
            "queried": q.label,
            "question_kind": question_kind,
            "seed": [seed, index],
        },
    )


# --- compare-count ----------------------------------------------------------


def _relation_ops(rng: random.Random, relation: str) -> dict[str, str | None]:
    """Per-axis strict comparison operators for one relation kind."""
    if relation in ("both", "mixed"):
        first = rng.choice((">", "<"))
        second = first if relation == "both" else ("<" if first == ">" else ">")
        return {"x": first, "y": second}
    axis, op = relation[0], relation[1]
    return {"x": op if axis == "x" else None, "y": op if axis == "y" else None}


def _satisfies(p: _ChartPoint, ref: _ChartPoint, ops: dict) -> bool:
    for axis, op in ops.items():
        if op is None:
            continue
        a, b = (p.x, ref.x) if axis == "x" else (p.y, ref.y)
        if not (a > b if op == ">" else a < b):
            return False
    return True


def _count_question(ref_label: str, relation: str, ops: dict) -> str:
    if relation in ("both", "mixed"):
        wx = "greater" if ops["x"] == ">" else "less"
        wy = "greater" if ops["y"] == ">" else "less"
        return (
            f"How many points have x {wx} than {ref_label} "
            f"and y {wy} than {ref_label}?"
        )
    axis = "x" if ops["x"] else "y"
    word = "larger" if ops[axis] == ">" else "smaller"
    return f"How many points have a {word} {axis}-value than point {ref_label}?"


def gen_compare_count(seed: int, index: int, max_edge: int = 512) -> Doc:
    rng = _sub_rng(seed, TASK_COMPARE_COUNT, index)
    width = rng.randint(340, max_edge)
    height = rng.randint(300, max_edge)

    left, right, top, bottom = 40, 12, 14, 26
    plot_left, plot_right = left, width - right
    plot_top, axis_row = top, height - bottom

    xlo, xhi = _axis_range(rng)
    ylo, yhi = _axis_range(rng)
    affine = _chart_affine(
        xlo, xhi, ylo, yhi, plot_left, plot_right, plot_top, axis_row
    )

    n_points = rng.randint(8, 20)
    alphabet, labels = _point_labels(rng, n_points)
    swarm_color = rng.choice(_SWARM_COLORS)

    for _ in range(_LAYOUT_ATTEMPTS):
        coords = _sample_coords(
            rng, n_points, xlo, xhi, ylo, yhi, affine, ref_distinct=True
        )
        markers = [
            (px, py, 4 if i == 0 else 3) for i, (_, _, px, py) in enumerate(coords)
        ]
        ref_px, ref_py = coords[0][2], coords[0][3]
        rects = _label_rects([(ref_px, ref_py, labels[0])], markers, width, height)
        if rects is not None:
            break
    else:  # pragma: no cover - not reached at these densities
        raise RuntimeError("could not lay out chart labels")

    pts = [
        _ChartPoint(
            labels[i],
            x,
            y,
            px,
            py,
            "circle",
            "red" if i == 0 else swarm_color,
            4 if i == 0 else 3,
        )
        for i, (x, y, px, py) in enumerate(coords)
    ]
    ref = pts[0]

    img = _paint_chart_base(
        width, height, xlo, xhi, ylo, yhi, plot_left, plot_right, plot_top, axis_row
    )
    arr = img.pixels
    for p in pts[1:]:
        raster.paint_marker(arr, p.px, p.py, p.shape, p.size, PALETTE[p.color])
    raster.paint_marker(arr, ref.px, ref.py, ref.shape, ref.size, PALETTE[ref.color])
    font.paint_text(arr, rects[0][0], rects[0][1], ref.label, _INK)

    relation = rng.choice(_RELATIONS)
    ops = _relation_ops(rng, relation)
    qualifiers = [p for p in pts[1:] if _satisfies(p, ref, ops)]

    # threshold line(s) through the reference first, then one point primitive
    # per qualifying point
    prims: list[Primitive] = []
    if ops["x"]:
        prims.append(Primitive.x_line(ref.px))
    if ops["y"]:
        prims.append(Primitive.y_line(ref.py))
    prims.extend(Primitive.point(p.px, p.py) for p in qualifiers)

    zoom = BBox(ref.px - 28.0, ref.py - 28.0, ref.px + 28.0, ref.py + 28.0).clamped(
        width, height
    )
    return Doc(
        doc_id=f"cc{index:04d}",
        task=TASK_COMPARE_COUNT,
        image=img,
        question=_count_question(ref.label, relation, ops),
        answer=float(len(qualifiers)),
        norm_range=float(n_points),
        supervision=(ZoomGT((zoom,)), DrawGT(tuple(prims))),
        meta={
            "n_points": n_points,
            "alphabet": alphabet,
            "axis_x": [xlo, xhi],
            "axis_y": [ylo, yhi],
            "affine": affine.to_json(),
            "points": [p.meta_entry() for p in pts],
            "ref": ref.label,
            "relation": relation,
            "ops": ops,
            "qualifying": [p.label for p in qualifiers],
            "seed": [seed, index],
        },
    )


# --- augmentation -----------------------------------------------------------


def _map_gt(gt: GroundTruth, inv) -> GroundTruth:
    from .rewards import map_primitive

    if isinstance(gt, ZoomGT):
        return ZoomGT(tuple(inv.map_box(b) for b in gt.boxes))
    if isinstance(gt, DrawGT):
        return DrawGT(tuple(map_primitive(inv, p) for p in gt.primitives))
    return gt


def augment_doc(doc: Doc, name: str) -> Doc:
    """Apply a named quarter-turn/flip, remap supervision into the new pixel
    grid, and attach the orientation target that restores the original."""
    if name not in _AUG_CALLS:
        raise ValueError(f"unknown augmentation: {name!r}")
    state = apply_tool(EpisodeState.from_image(doc.image), _AUG_CALLS[name])
    entry = state.last
    assert entry.image is not None
    inv = entry.frame.inverse()
    supervision = tuple(_map_gt(gt, inv) for gt in doc.supervision)
    supervision += (RotFlipGT(entry.orientation.inverse()),)
    return replace(
        doc, image=entry.image, supervision=supervision, augmentation=name
    )


def choose_augmentation(seed: int, doc_id: str, aug_prob: float) -> str | None:
    """The (deterministic) augmentation decision for one document: None with
    probability 1 - aug_prob, otherwise uniform over AUGMENTATIONS."""
    rng = _sub_rng(seed, "aug", doc_id)
    if rng.random() < aug_prob:
        return rng.choice(AUGMENTATIONS)
    return None


def gen_dataset(cfg: SynthConfig) -> list[Doc]:
    docs: list[Doc] = []
    for i in range(cfg.n_read_value):
        docs.append(gen_read_value(cfg.seed, i, cfg.read_value_max_edge))
    for i in range(cfg.n_compare_count):
        docs.append(gen_compare_count(cfg.seed, i, cfg.compare_count_max_edge))
    out: list[Doc] = []
    for doc in docs:
        name = choose_augmentation(cfg.seed, doc.doc_id, cfg.aug_prob)
        out.append(augment_doc(doc, name) if name else doc)
    return out


# --- rescaling --------------------------------------------------------------


def rescale_doc(doc: Doc, out_w: int, out_h: int) -> Doc:
    """Resize the image and remap box/line supervision; orientation targets
    are scale-invariant and pass through."""
    frame = _crop_frame(0, 0, doc.width, doc.height, out_w, out_h)
    inv = frame.inverse()
    return replace(
        doc,
        image=raster.resize(doc.image, out_w, out_h),
        supervision=tuple(_map_gt(gt, inv) for gt in doc.supervision),
    )


def fit_long_edge(doc: Doc, fit: int) -> Doc:
    if doc.image.long_edge <= fit:
        return doc
    out_w, out_h = raster._scaled_dims(doc.width, doc.height, fit)
    return rescale_doc(doc, out_w, out_h)


def select_highres_and_downscale(
    docs: Iterable[Doc], threshold: int = 1024, fit: int = 512
) -> list[Doc]:
    """Keep only documents whose long edge exceeds `threshold`, downscaled so
    their long edge equals `fit`."""
    return [fit_long_edge(d, fit) for d in docs if d.image.long_edge > threshold]


# --- persistence ------------------------------------------------------------


def doc_to_row(doc: Doc, image_relpath: str) -> dict:
    return {
        "id": doc.doc_id,
        "task": doc.task,
        "image": image_relpath,
        "width": doc.width,
        "height": doc.height,
        "question": doc.question,
        "answer": list(doc.answer) if isinstance(doc.answer, tuple) else doc.answer,
        "norm_range": (
            list(doc.norm_range)
            if isinstance(doc.norm_range, tuple)
            else doc.norm_range
        ),
        "supervision": [ground_truth_to_json(gt) for gt in doc.supervision],
        "augmentation": doc.augmentation,
        "meta": doc.meta,
    }


def write_dataset(docs: Iterable[Doc], outdir: str | Path) -> Path:
    """Write images/<id>.png plus manifest.jsonl; returns the manifest path."""
    outdir = Path(outdir)
    (outdir / "images").mkdir(parents=True, exist_ok=True)
    manifest = outdir / "manifest.jsonl"
    with open(manifest, "w", encoding="utf-8") as fh:
        for doc in docs:
            rel = f"images/{doc.doc_id}.png"
            (outdir / rel).write_bytes(encode_png(doc.image))
            fh.write(
                json.dumps(doc_to_row(doc, rel), sort_keys=True, separators=(",", ":"))
            )
            fh.write("\n")
    return manifest


def load_manifest(path: str | Path) -> list[dict]:
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                rows.append(json.loads(line))
    return rows
