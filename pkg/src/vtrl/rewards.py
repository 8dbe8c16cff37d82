"""Reward functions for tool-supervised visual reasoning.

Stage 1 scores every intermediate state a tool call produces (box overlap for
zooms, exact orientation for rotations/flips, matched-primitive similarity
for drawing) and aggregates a trajectory as

    R_final = 0.5 * (max_t R_t  +  R_{t_answer}) + R_format

Stage 2 scores only the terminal answer (normalized numeric distance for
chart tasks, a binary judge otherwise) plus the same format term. The
weighted-F1 box overlap discounts false positives so that generous zoom
crops that still contain a target are not over-punished.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence, Union

import numpy as np
from scipy.optimize import linear_sum_assignment

from .raster import BBox
from .toolbox import (
    DRAW_TOOLS,
    TOOL_ZOOM,
    EpisodeState,
    FrameMap,
    Orientation,
    Primitive,
)

__all__ = [
    "RewardConfig",
    "ZoomGT",
    "RotFlipGT",
    "DrawGT",
    "GroundTruth",
    "parse_ground_truth",
    "ground_truth_to_json",
    "modf1",
    "zoom_reward",
    "orientation_reward",
    "primitive_similarity",
    "map_primitive",
    "hungarian_match",
    "draw_reward",
    "draw_reward_discrete",
    "Stage1Result",
    "stage1_aggregate",
    "s_norm",
    "answer_reward",
    "stage2_final",
    "tool_conditioned_reward",
    "levenshtein",
    "anls",
    "StateScores",
    "score_states",
]

TOLERANCE_DIVISOR = 4.0
DISCRETE_DRAW_WINDOW = 10.0
_MATCH_EPS = 1e-9


@dataclass(frozen=True)
class RewardConfig:
    """Knobs for the reward family. Defaults reproduce the reference setup."""

    w_fp: float = 0.1
    w_fn: float = 1.0
    zoom_binarize: bool = False
    zoom_threshold: float = 0.5
    w_fmt: float = 0.5

    def __post_init__(self):
        if self.w_fp <= 0 or self.w_fn <= 0:
            raise ValueError("mismatch weights must be positive")
        if not (0.0 < self.zoom_threshold <= 1.0):
            raise ValueError("zoom_threshold must be in (0, 1]")
        if self.w_fmt < 0:
            raise ValueError("w_fmt must be non-negative")

    def to_json_dict(self) -> dict:
        return {
            "w_fp": self.w_fp,
            "w_fn": self.w_fn,
            "zoom_binarize": self.zoom_binarize,
            "zoom_threshold": self.zoom_threshold,
            "w_fmt": self.w_fmt,
        }

    @classmethod
    def from_json_dict(cls, obj: Mapping) -> "RewardConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(obj) - known
        if unknown:
            raise ValueError(f"unknown reward config keys: {sorted(unknown)}")
        return cls(**dict(obj))


DEFAULT_CONFIG = RewardConfig()


# --- ground truth records -----------------------------------------------------


@dataclass(frozen=True)
class ZoomGT:
    boxes: tuple[BBox, ...]

    def __post_init__(self):
        if not self.boxes:
            raise ValueError("zoom ground truth needs at least one box")
        for b in self.boxes:
            if b.area() <= 0 or not all(
                math.isfinite(v) for v in (b.x1, b.y1, b.x2, b.y2)
            ):
                raise ValueError(f"degenerate ground-truth box: {b}")


@dataclass(frozen=True)
class RotFlipGT:
    target: Orientation

    def __post_init__(self):
        if self.target.non_axis_aligned:
            raise ValueError("orientation target must be axis-aligned")


@dataclass(frozen=True)
class DrawGT:
    primitives: tuple[Primitive, ...]

    def __post_init__(self):
        if not self.primitives:
            raise ValueError("draw ground truth needs at least one primitive")
        for p in self.primitives:
            coords = (p.x, p.y) if p.kind == "point" else (p.coord,)
            if any(c is None or not math.isfinite(c) or c < 0 for c in coords):
                raise ValueError(f"ground-truth primitive has bad coords: {p}")


GroundTruth = Union[ZoomGT, RotFlipGT, DrawGT]


def parse_ground_truth(obj: Mapping) -> GroundTruth:
    kind = obj.get("kind")
    if kind == "zoom":
        return ZoomGT(tuple(BBox.from_seq(b) for b in obj["boxes"]))
    if kind == "rotflip":
        return RotFlipGT(Orientation.from_json_dict(obj["target"]))
    if kind == "draw":
        return DrawGT(tuple(Primitive.from_json_dict(p) for p in obj["primitives"]))
    raise ValueError(f"unknown ground-truth kind: {kind!r}")


def ground_truth_to_json(gt: GroundTruth) -> dict:
    if isinstance(gt, ZoomGT):
        return {"kind": "zoom", "boxes": [[b.x1, b.y1, b.x2, b.y2] for b in gt.boxes]}
    if isinstance(gt, RotFlipGT):
        return {"kind": "rotflip", "target": gt.target.to_json_dict()}
    return {"kind": "draw", "primitives": [p.to_json_dict() for p in gt.primitives]}


# --- box overlap ----------------------------------------------------------------


def modf1(
    pred: BBox, gt: BBox, w_fp: float = 0.1, w_fn: float = 1.0
) -> float:
    """Weighted pixel-F1 between two half-open boxes.

        2*TP / (2*TP + w_fp*FP + w_fn*FN)

    TP/FP/FN are areas; a down-weighted w_fp tolerates crops larger than the
    target. Returns 0 when the boxes do not overlap.
    """
    tp = pred.intersect(gt).area()
    if tp <= 0.0:
        return 0.0
    fp = pred.area() - tp
    fn = gt.area() - tp
    return 2.0 * tp / (2.0 * tp + w_fp * fp + w_fn * fn)


def zoom_reward(
    box: BBox, gt_boxes: Sequence[BBox], cfg: RewardConfig = DEFAULT_CONFIG
) -> float:
    """Best weighted overlap against any ground-truth box, optionally
    binarized at cfg.zoom_threshold."""
    best = max((modf1(box, g, cfg.w_fp, cfg.w_fn) for g in gt_boxes), default=0.0)
    if cfg.zoom_binarize:
        return 1.0 if best >= cfg.zoom_threshold else 0.0
    return best


# --- orientation ------------------------------------------------------------------


def orientation_reward(state_orientation: Orientation, target: Orientation) -> float:
    """1 exactly when the tracked orientation equals the target element."""
    return 1.0 if state_orientation == target else 0.0


# --- draw primitives ---------------------------------------------------------------


def primitive_similarity(
    pred: Primitive, gt: Primitive, width: float, height: float
) -> float:
    """max(0, 1 - d/T) with per-kind tolerance: T = W/4 for vertical lines,
    H/4 for horizontal lines, hypot(W/4, H/4) for points. Cross-kind pairs
    score 0."""
    if pred.kind != gt.kind:
        return 0.0
    if pred.kind == "x_line":
        d = abs(pred.coord - gt.coord)
        tol = width / TOLERANCE_DIVISOR
    elif pred.kind == "y_line":
        d = abs(pred.coord - gt.coord)
        tol = height / TOLERANCE_DIVISOR
    else:
        d = math.hypot(pred.x - gt.x, pred.y - gt.y)  # type: ignore[operator]
        tol = math.hypot(width / TOLERANCE_DIVISOR, height / TOLERANCE_DIVISOR)
    if tol <= 0:
        return 0.0
    return max(0.0, 1.0 - d / tol)


def map_primitive(frame: FrameMap, p: Primitive) -> Primitive:
    """Map a primitive through an axis-aligned frame (pixel-center convention)."""
    if p.kind == "point":
        x, y = frame.map_point_px(p.x, p.y)  # type: ignore[arg-type]
        return Primitive.point(x, y)
    kind, c = frame.map_line_px(p.kind, p.coord)
    return Primitive.x_line(c) if kind == "x_line" else Primitive.y_line(c)


def _best_total(sim: np.ndarray) -> float:
    if sim.size == 0:
        return 0.0
    rows, cols = linear_sum_assignment(sim, maximize=True)
    return float(sim[rows, cols].sum())


def hungarian_match(
    preds: Sequence[Primitive],
    gts: Sequence[Primitive],
    width: float,
    height: float,
) -> tuple[float, tuple[tuple[int, int, float], ...]]:
    """Maximum-similarity one-to-one matching.

    Returns (S_TP, matching) where matching lists (pred index, gt index,
    similarity) for matched pairs with positive similarity, and is the
    lexicographically smallest such optimal matching by (pred, gt).
    """
    n, m = len(preds), len(gts)
    if n == 0 or m == 0:
        return 0.0, ()
    sim = np.array(
        [[primitive_similarity(p, g, width, height) for g in gts] for p in preds],
        dtype=np.float64,
    )
    remaining = _best_total(sim)
    total = remaining
    used = [False] * m
    matching: list[tuple[int, int, float]] = []
    for i in range(n):
        if remaining <= _MATCH_EPS:
            break
        free = [j for j in range(m) if not used[j]]
        rest_rows = np.arange(i + 1, n)
        chosen = None
        for j in free:
            if sim[i, j] <= 0.0:
                continue
            rest_cols = [k for k in free if k != j]
            achievable = sim[i, j] + _best_total(sim[np.ix_(rest_rows, rest_cols)])
            if achievable >= remaining - _MATCH_EPS:
                chosen = j
                break
        if chosen is not None:
            matching.append((i, chosen, float(sim[i, chosen])))
            used[chosen] = True
            remaining -= float(sim[i, chosen])
    return total, tuple(matching)


def draw_reward(
    preds: Sequence[Primitive],
    gts: Sequence[Primitive],
    width: float,
    height: float,
) -> tuple[float, float, tuple[tuple[int, int, float], ...]]:
    """Similarity-weighted set F1: 2*S_TP / (|preds| + |gts|).

    Returns (reward, S_TP, matching audit). Empty predictions score 0.
    """
    denom = len(preds) + len(gts)
    if denom == 0:
        return 0.0, 0.0, ()
    s_tp, matching = hungarian_match(preds, gts, width, height)
    return 2.0 * s_tp / denom, s_tp, matching


def draw_reward_discrete(
    preds: Sequence[Primitive],
    gts: Sequence[Primitive],
    window: float = DISCRETE_DRAW_WINDOW,
) -> float:
    """Discrete baseline: a pair is credited iff same-kind distance < window
    (absolute pixels), aggregated exactly like draw_reward."""
    denom = len(preds) + len(gts)
    if denom == 0 or not preds or not gts:
        return 0.0
    sim = np.zeros((len(preds), len(gts)), dtype=np.float64)
    for i, p in enumerate(preds):
        for j, g in enumerate(gts):
            if p.kind != g.kind:
                continue
            if p.kind == "point":
                d = math.hypot(p.x - g.x, p.y - g.y)  # type: ignore[operator]
            else:
                d = abs(p.coord - g.coord)
            sim[i, j] = 1.0 if d < window else 0.0
    return 2.0 * _best_total(sim) / denom


# --- aggregation -----------------------------------------------------------------


@dataclass(frozen=True)
class Stage1Result:
    r_global: float
    r_answer: float
    r_final: float


def stage1_aggregate(
    per_state: Union[Sequence[float], Mapping[int, float]],
    t_answer: Union[int, Mapping[str, int], None],
    fmt: float,
) -> Stage1Result:
    """Combine per-state rewards: R_global = max over states, R_answer = the
    reward at the answer's referenced state (mean over elements for
    element-indexed answers; 0 for missing/invalid references), and
    R_final = 0.5 * (R_global + R_answer) + fmt.

    A plain sequence is read as states 1..len (index 0 is the original image
    and holds no call-produced reward).
    """
    if isinstance(per_state, Mapping):
        table = {int(k): float(v) for k, v in per_state.items()}
    else:
        table = {i + 1: float(v) for i, v in enumerate(per_state)}
    r_global = max(table.values(), default=0.0)
    if t_answer is None:
        r_answer = 0.0
    elif isinstance(t_answer, Mapping):
        r_answer = (
            sum(table.get(int(v), 0.0) for v in t_answer.values()) / len(t_answer)
            if t_answer
            else 0.0
        )
    else:
        r_answer = table.get(int(t_answer), 0.0)
    return Stage1Result(r_global, r_answer, 0.5 * (r_global + r_answer) + fmt)


def s_norm(value: float, target: float, norm_range: float) -> float:
    """max(0, 1 - |value - target| / norm_range)."""
    if norm_range <= 0 or not math.isfinite(norm_range):
        raise ValueError("norm_range must be positive and finite")
    return max(0.0, 1.0 - abs(float(value) - float(target)) / norm_range)


_NUMBER_RE = re.compile(r"-?\d+(?:\.\d+)?(?:[eE][-+]?\d+)?")

# Tasks scored by normalized numeric distance rather than a judge.
NUMERIC_TASKS = ("read_value", "compare_count")


def _numbers_in(text: str) -> list[float]:
    return [float(m.group(0)) for m in _NUMBER_RE.finditer(text)]


def answer_reward(
    answer,
    target,
    task: str,
    norm_range=None,
    judge: Callable[[str, str, str], bool] | None = None,
    question: str = "",
) -> float:
    """Terminal answer reward.

    Chart tasks (`read_value`, `compare_count`) use normalized numeric
    distance; pair targets average the two per-axis scores. Everything else
    is a binary judge call (exact match when no judge is supplied).
    Non-numeric answers to numeric tasks score 0.
    """
    if answer is None:
        return 0.0
    raw = answer.raw_text.strip()
    if task in NUMERIC_TASKS:
        if isinstance(target, (list, tuple)):
            if not isinstance(norm_range, (list, tuple)) or len(norm_range) != len(
                target
            ):
                raise ValueError("pair target needs a matching norm_range pair")
            nums = _numbers_in(raw)
            if len(nums) < len(target):
                return 0.0
            parts = [
                s_norm(nums[i], float(target[i]), float(norm_range[i]))
                for i in range(len(target))
            ]
            return sum(parts) / len(parts)
        value = answer.as_number
        if value is None:
            return 0.0
        if norm_range is None:
            raise ValueError("numeric task needs a norm_range")
        return s_norm(value, float(target), float(norm_range))
    if judge is None:
        from .judge import ExactMatchJudge

        judge = ExactMatchJudge()
    return 1.0 if judge(question, raw, str(target)) else 0.0


def stage2_final(r_answer: float, fmt: float) -> float:
    return float(r_answer) + float(fmt)


def tool_conditioned_reward(r_answer: float, tool_count: int) -> float:
    """1 only when the answer is good (> 0.5, strict) AND tools were used."""
    return 1.0 if (r_answer > 0.5 and tool_count > 0) else 0.0


# --- string answers ------------------------------------------------------------


def levenshtein(a: str, b: str) -> int:
    """Classic edit distance, O(len(a) * len(b)) with a rolling row."""
    if a == b:
        return 0
    if not a:
        return len(b)
    if not b:
        return len(a)
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, start=1):
        cur = [i]
        for j, cb in enumerate(b, start=1):
            cur.append(
                min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (ca != cb))
            )
        prev = cur
    return prev[len(b)]


def anls(
    pred: str, gts: Union[str, Sequence[str]], threshold: float = 0.5
) -> float:
    """Average-normalized-Levenshtein-style score against the best reference:
    strings are lowercased and trimmed, similarity is 1 - d/max(len), and
    scores below `threshold` collapse to 0."""
    if isinstance(gts, str):
        gts = [gts]
    p = pred.lower().strip()
    best = 0.0
    for g in gts:
        ref = g.lower().strip()
        longest = max(len(p), len(ref))
        sim = 1.0 if longest == 0 else 1.0 - levenshtein(p, ref) / longest
        best = max(best, sim)
    return best if best >= threshold else 0.0


# --- per-state scoring over an episode -------------------------------------------


@dataclass(frozen=True)
class StateScores:
    per_state: dict[int, float]
    s_tp: float | None = None
    matching: tuple[tuple[int, int, float], ...] | None = None
    violations: tuple[str, ...] = ()


def score_states(
    state: EpisodeState, gt: GroundTruth, cfg: RewardConfig = DEFAULT_CONFIG
) -> StateScores:
    """Per-state tool rewards keyed by lineage index.

    Orientation targets are scored at every lineage index (the original
    image has a well-defined orientation); zoom and draw targets only at
    indices produced by a call of the matching kind. For draw tasks the
    S_TP/matching audit comes from the best-scoring state.
    """
    per: dict[int, float] = {}
    violations: list[str] = []

    if isinstance(gt, RotFlipGT):
        for k, entry in enumerate(state.lineage):
            per[k] = orientation_reward(entry.orientation, gt.target)
        return StateScores(per, violations=tuple(violations))

    if isinstance(gt, ZoomGT):
        for k, entry in enumerate(state.lineage[1:], start=1):
            call = entry.call
            if call is None or call.name != TOOL_ZOOM:
                continue
            target_entry = state.lineage[entry.target_index]
            if not (target_entry.frame.valid and target_entry.frame.axis_aligned):
                violations.append(f"unmappable_zoom_box:{k}")
                per[k] = 0.0
                continue
            box = target_entry.frame.map_box(BBox.from_seq(call.args["bbox_2d"]))
            per[k] = zoom_reward(box, gt.boxes, cfg)
        return StateScores(per, violations=tuple(violations))

    # draw supervision
    best_key: int | None = None
    best_audit: tuple[float, tuple[tuple[int, int, float], ...]] = (0.0, ())
    for k, entry in enumerate(state.lineage[1:], start=1):
        call = entry.call
        if call is None or call.name not in DRAW_TOOLS:
            continue
        inv = entry.frame.inverse()
        if not (entry.frame.valid and entry.frame.axis_aligned and inv.valid):
            violations.append(f"unmappable_draw_frame:{k}")
            per[k] = 0.0
            continue
        local_gts = [map_primitive(inv, p) for p in gt.primitives]
        r, s_tp, matching = draw_reward(
            entry.primitives, local_gts, entry.width, entry.height
        )
        per[k] = r
        if best_key is None or r > per[best_key]:
            best_key = k
            best_audit = (s_tp, matching)
    return StateScores(
        per,
        s_tp=best_audit[0] if best_key is not None else None,
        matching=best_audit[1] if best_key is not None else None,
        violations=tuple(violations),
    )
