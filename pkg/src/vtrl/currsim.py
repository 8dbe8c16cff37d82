"""Desk-scale curriculum laboratory: GRPO on a toy tool-use policy.

A linear-softmax policy picks from a finite action menu — zoom to one of
four candidate boxes (ground truth plus distractors), quarter-turn
rotations, flips, ruler lines at four candidate offsets, two marker
placements, and two answer moves — on the synthetic chart tasks. Every
episode is materialized as a real trace and scored through the real
scoring pipeline, so a logged trajectory re-scores to exactly the reward
the policy trained on.

Training modes:

* toolsrl          — stage 1 on tool-supervised rewards, then stage 2 on
                     answer accuracy (the two-stage curriculum).
* accuracy_only    — answer accuracy from scratch for the full 2x budget.
* tool_conditioned — binary answer-correct AND used-a-tool bonus, 2x budget.
* global_only / answer_only — stage-1 ablations keeping a single term.
* combined         — tool-supervised and answer rewards summed in one
                     stage, 2x budget.

The answer model captures the trade-off that makes supervised tool
learning matter: reading the untouched overview is approximately right, a
view that was grounded by the exact zoom or ruler line is exactly right,
and a view reworked by off-target tool calls loses the referent and forces
an uninformed guess. Answering directly is therefore a safe local optimum,
and only correct tool use beats it.

Episodes are a pure function of (task instance, action sequence): even the
"blind guess" an uninformed answer produces is a hash of the episode's
identity, so a deterministic policy yields identical trajectories and every
logged trace re-scores to its stored reward.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .raster import BBox
from .rewards import (
    DrawGT,
    GroundTruth,
    RotFlipGT,
    ZoomGT,
    ground_truth_to_json,
    map_primitive,
    modf1,
    score_states,
)
from .scoring import score_obj
from .stats import TOOL_SHORT
from .synth import Doc, SynthConfig, gen_dataset
from .toolbox import (
    TOOL_FLIP,
    TOOL_HLINE,
    TOOL_MARK,
    TOOL_NAMES,
    TOOL_ROTATE,
    TOOL_VLINE,
    TOOL_ZOOM,
    EpisodeState,
    Orientation,
    Primitive,
    ToolCall,
    apply_tool,
)

__all__ = [
    "MODES",
    "ACTIONS",
    "N_ACTIONS",
    "GrpoConfig",
    "TaskInstance",
    "ToyEnv",
    "Rollout",
    "PolicyParams",
    "init_policy",
    "param_mask",
    "policy_probs",
    "rollout_group",
    "grpo_advantages",
    "surrogate_loss",
    "surrogate_grad",
    "grpo_update",
    "annealed_eps",
    "run_curriculum",
    "METRIC_COLUMNS",
    "write_metrics_csv",
    "read_metrics_csv",
    "summarize_final",
]

MODES = (
    "toolsrl",
    "accuracy_only",
    "tool_conditioned",
    "global_only",
    "answer_only",
    "combined",
)

# A state "grounds" the answer only when some tool action scored at least
# this much against its supervision target — in practice the exact
# ground-truth zoom or ruler line, not a near miss.
_EVIDENCE_THRESHOLD = 0.95

# Reading the untouched overview is approximately right: the estimate lands
# within this fraction of the value range on either side of the truth.
_OVERVIEW_NOISE = 0.08

_TOOL_SHORT = TOOL_SHORT  # shared stems keep the two CSV schemas aligned

METRIC_COLUMNS = (
    "step",
    "mode",
    "seed",
    "mean_reward",
    "mean_tool_calls",
    "accuracy",
    "frac_zoom",
    "frac_rotate",
    "frac_flip",
    "frac_hline",
    "frac_vline",
    "frac_mark",
)


@dataclass(frozen=True)
class GrpoConfig:
    group_size: int = 16
    clip_eps: float = 0.2
    lr: float = 2.0
    kl_coef: float = 0.0
    steps_per_stage: int = 200
    std_floor: float = 1e-6
    max_turns: int = 6
    pool_docs: int = 6
    seed: int = 0
    # Behavior-policy mixing: actions are sampled from
    # (1−ε)·softmax + ε·uniform-over-answer-moves, with importance ratios
    # computed under the same law. The floor keeps the answer choice
    # learnable across the stage switch (stage 1 is indifferent between
    # answer texts, so the answer head can otherwise lock arbitrarily);
    # the curriculum driver anneals ε linearly to 0 by 75% of the run so
    # late-run metrics reflect the pure policy. 0 disables exploration.
    explore_eps: float = 0.05

    def __post_init__(self):
        if self.group_size < 2:
            raise ValueError("group_size must be at least 2")
        if not (0.0 < self.clip_eps < 1.0):
            raise ValueError("clip_eps must lie in (0, 1)")
        if self.kl_coef != 0.0:
            raise ValueError("KL regularization is not part of this method")
        if not (1 <= self.max_turns <= 10):
            raise ValueError("max_turns must lie in [1, 10]")
        if self.std_floor <= 0:
            raise ValueError("std_floor must be positive")
        if not (0.0 <= self.explore_eps < 0.5):
            raise ValueError("explore_eps must lie in [0, 0.5)")

    def to_json_dict(self) -> dict:
        return {f: getattr(self, f) for f in self.__dataclass_fields__}

    @classmethod
    def from_json_dict(cls, obj) -> "GrpoConfig":
        unknown = set(obj) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown grpo config keys: {sorted(unknown)}")
        return cls(**dict(obj))


# --- task instances ----------------------------------------------------------


@dataclass(frozen=True)
class TaskInstance:
    doc_id: str
    kind: str  # supervision kind scored in stage 1: zoom | rotflip | draw
    task: str  # dataset task, used for stage-2 answer scoring
    width: int
    height: int
    gt: GroundTruth
    zoom_box: BBox  # primary zoom target (image coords)
    zoom_candidates: tuple[BBox, ...]  # GT box first, then graded distractors
    ruler: Primitive  # primary draw target (image coords)
    target_orientation: Orientation | None
    answer_target: float
    answer_lo: float  # plausible answer interval, for blind guesses
    answer_hi: float
    norm_range: float
    numeric: bool  # eligible for stage-2 answer scoring

    @property
    def gt_json(self) -> dict:
        return ground_truth_to_json(self.gt)


def _answer_interval(doc: Doc) -> tuple[float, float]:
    if doc.task == "read_value":
        lo, hi = doc.meta["axis"]
        return float(lo), float(hi)
    return 0.0, float(doc.meta["n_points"] - 1)


def _instances_from_doc(doc: Doc) -> list[TaskInstance]:
    if isinstance(doc.answer, tuple):
        return []  # the toy answer head predicts one scalar, not (x, y) pairs
    zoom = next(s for s in doc.supervision if isinstance(s, ZoomGT))
    draw = next(s for s in doc.supervision if isinstance(s, DrawGT))
    rotflip = next((s for s in doc.supervision if isinstance(s, RotFlipGT)), None)
    lo, hi = _answer_interval(doc)
    common = dict(
        doc_id=doc.doc_id,
        task=doc.task,
        width=doc.width,
        height=doc.height,
        zoom_box=zoom.boxes[0],
        zoom_candidates=build_zoom_candidates(
            zoom.boxes[0], doc.width, doc.height, zoom.boxes
        ),
        ruler=draw.primitives[0],
        target_orientation=rotflip.target if rotflip else None,
        answer_target=float(doc.answer),
        answer_lo=lo,
        answer_hi=hi,
        norm_range=float(doc.norm_range),
    )
    # the toy action menu places exactly one line, so its draw sub-task is
    # the primary ruler alone even when the document's full ground truth
    # also lists qualifying points
    out = [
        TaskInstance(kind="zoom", gt=zoom, numeric=True, **common),
        TaskInstance(
            kind="draw", gt=DrawGT((draw.primitives[0],)), numeric=True, **common
        ),
    ]
    if rotflip is not None:
        out.append(TaskInstance(kind="rotflip", gt=rotflip, numeric=False, **common))
    return out


# --- action menu ---------------------------------------------------------------

_KIND_INDEX = {"zoom": 0, "rotflip": 1, "draw": 2}
_LAST_KINDS = ("none", "zoom", "rotate", "flip", "line", "mark")

# (action name, category); candidate boxes/coordinates come from the task's
# ground truth plus graded distractors, so both success and failure are
# reachable from the uniform initialization.
ACTIONS: tuple[tuple[str, str], ...] = (
    ("answer_estimate", "answer"),  # read the value off the current view
    ("answer_mid", "answer"),  # hedge on the middle of the range
    ("answer_low", "answer"),  # hedge low
    ("answer_high", "answer"),  # hedge high
    ("zoom_a", "zoom"),  # the ground-truth box
    ("zoom_b", "zoom"),  # half-diagonal shift, partial overlap
    ("zoom_c", "zoom"),  # 3/4-shifted both axes, sliver overlap
    ("zoom_d", "zoom"),  # far corner
    ("zoom_e", "zoom"),  # 3/4 shift right
    ("zoom_f", "zoom"),  # 3/4 shift down
    ("zoom_g", "zoom"),  # 1.5 widths right, disjoint
    ("zoom_h", "zoom"),  # tight center patch
    ("rot90", "rotate"),
    ("rot180", "rotate"),
    ("rot270", "rotate"),
    ("flip_h", "flip"),
    ("flip_v", "flip"),
    ("line_a", "line"),  # on the ground-truth coordinate
    ("line_b", "line"),  # off by T/2
    ("line_c", "line"),  # off by T
    ("line_d", "line"),  # off by 2T
    ("line_e", "line"),  # off by 3T/4
    ("line_f", "line"),  # off by 5T/4
    ("line_g", "line"),  # off by 3T
    ("line_h", "line"),  # off by T/2, the other direction
    ("mark_box", "mark"),  # zoom-target center
    ("mark_mid", "mark"),  # canvas center
    ("mark_corner", "mark"),  # near the origin
    ("mark_third", "mark"),  # one third across
)
N_ACTIONS = len(ACTIONS)
_ANSWER_ACTIONS = tuple(
    i for i, (_, cat) in enumerate(ACTIONS) if cat == "answer"
)
_GRADE = "abcdefgh"
_LINE_OFFSETS = (0.0, 0.5, 1.0, 2.0, 0.75, 1.25, 3.0, -0.5)  # units of T


def feature_dim(max_turns: int) -> int:
    return 3 + (max_turns + 1) + 1 + len(_LAST_KINDS)


def _features(
    inst: TaskInstance, turn: int, oriented: bool, last_kind: str, max_turns: int
) -> np.ndarray:
    phi = np.zeros(feature_dim(max_turns))
    phi[_KIND_INDEX[inst.kind]] = 1.0
    phi[3 + min(turn, max_turns)] = 1.0
    phi[3 + max_turns + 1] = 1.0 if oriented else 0.0
    phi[3 + max_turns + 2 + _LAST_KINDS.index(last_kind)] = 1.0
    return phi


# Distractor boxes must stay clearly below the ground-truth grade so the
# group-relative ordering decisively favors the exact box; shifts flip
# direction rather than shrink (clamping can accidentally create a
# near-contained, high-scoring box), and anything still above the cap is
# repaired to a far-away patch.
_DISTRACTOR_GRADE_CAP = 0.45


def build_zoom_candidates(
    box: BBox, width: int, height: int, gt_boxes: Sequence[BBox]
) -> tuple[BBox, ...]:
    W, H = float(width), float(height)
    w, h = box.x2 - box.x1, box.y2 - box.y1

    def fit_shift(dx: float, dy: float) -> BBox:
        tx = dx if (box.x1 + dx >= 0 and box.x2 + dx <= W) else -dx
        if not (box.x1 + tx >= 0 and box.x2 + tx <= W):
            tx = 0.0
        ty = dy if (box.y1 + dy >= 0 and box.y2 + dy <= H) else -dy
        if not (box.y1 + ty >= 0 and box.y2 + ty <= H):
            ty = 0.0
        return BBox(box.x1 + tx, box.y1 + ty, box.x2 + tx, box.y2 + ty)

    def grade(cand: BBox) -> float:
        return max(modf1(cand, g) for g in gt_boxes)

    side_w, side_h = max(4.0, W / 8.0), max(4.0, H / 8.0)
    patches = [
        BBox(0.0, 0.0, side_w, side_h),
        BBox(W - side_w, H - side_h, W, H),
        BBox(W - side_w, 0.0, W, side_h),
        BBox(0.0, H - side_h, side_w, H),
        BBox(W / 2 - side_w, H / 2 - side_h, W / 2 + side_w, H / 2 + side_h),
    ]
    out = [box]
    for dx, dy in (
        (0.5 * w, 0.5 * h),
        (0.75 * w, 0.75 * h),
        (1.5 * w, 1.5 * h),
        (0.75 * w, 0.0),
        (0.0, 0.75 * h),
        (1.5 * w, 0.0),
        (0.0, 1.5 * h),
    ):
        cand = fit_shift(dx, dy)
        if grade(cand) > _DISTRACTOR_GRADE_CAP:
            cand = min(patches, key=grade)
        out.append(cand)
    return tuple(out)


def _pseudo_uniform(*parts) -> float:
    """Deterministic stand-in for an uninformed model guess: uniform in
    [0, 1) as a function of the episode's identity."""
    digest = hashlib.sha256(":".join(str(p) for p in parts).encode()).digest()
    return int.from_bytes(digest[:8], "big") / 2.0**64


# --- policy --------------------------------------------------------------------


# Initial log-odds bonus for reading an answer straight off the current
# view. An untuned policy answers with whatever it can read; hedging on a
# fixed guess or reaching for a tool is not its default behavior, so tool
# use has to earn its place through reward. ln(N−1) puts roughly half the
# initial mass on answer_estimate.
_ESTIMATE_PRIOR = math.log(N_ACTIONS - 1)


def param_mask(max_turns: int) -> np.ndarray:
    """Structured-policy mask. Answer logits depend only on dialogue
    position — the turn and the preceding action family — never on the
    task kind or the orientation flag. Those blocks are shared between the
    answer-immediately decision and the answer-after-tools decision, so
    without the mask the penalties that teach the policy not to answer
    prematurely would bleed into the choice among answers made after tool
    use and could flip it onto a fixed hedge."""
    mask = np.ones((N_ACTIONS, feature_dim(max_turns)))
    for a in _ANSWER_ACTIONS:
        mask[a, :3] = 0.0  # task-kind block
        mask[a, 3 + max_turns + 1] = 0.0  # orientation flag
    return mask


def init_policy(max_turns: int) -> np.ndarray:
    """Starting weights: zeros, except a prior toward answering from the
    visible view (placed on the turn block, of which exactly one feature
    is active at any step). Consistent with param_mask."""
    theta = np.zeros((N_ACTIONS, feature_dim(max_turns)))
    estimate = ACTIONS.index(("answer_estimate", "answer"))
    theta[estimate, 3 : 3 + max_turns + 1] = _ESTIMATE_PRIOR
    return theta


def policy_probs(theta: np.ndarray, phi: np.ndarray) -> np.ndarray:
    logits = theta @ phi
    logits = logits - logits.max()
    e = np.exp(logits)
    return e / e.sum()


@dataclass
class PolicyParams:
    """Linear-softmax policy over the discrete action menu. Each action's
    logit is a dot product of its weight row with the step features (task
    kind, turn index, orientation flag, preceding action family)."""

    weights: np.ndarray  # (N_ACTIONS, feature_dim(max_turns))
    max_turns: int

    @classmethod
    def initial(cls, max_turns: int) -> "PolicyParams":
        return cls(weights=init_policy(max_turns), max_turns=max_turns)

    def probs(self, phi: np.ndarray) -> np.ndarray:
        return policy_probs(self.weights, phi)


def _weights_of(policy: "np.ndarray | PolicyParams") -> np.ndarray:
    return policy.weights if isinstance(policy, PolicyParams) else policy


def _support_probs(probs: np.ndarray, forced_answer: bool) -> np.ndarray:
    """Softmax restricted to the available menu. At the horizon the menu
    collapses to the answer moves (renormalized over that support)."""
    if not forced_answer:
        return probs
    mask = np.zeros_like(probs)
    for i in _ANSWER_ACTIONS:
        mask[i] = probs[i]
    return mask / mask.sum()


def _behavior_probs(support: np.ndarray, explore_eps: float) -> np.ndarray:
    """Sampling distribution actually used at a step: the support softmax
    mixed with a uniform floor over the answer moves (which are in the menu
    at every turn). Importance ratios must be computed under this same law.
    The floor keeps the answer choice learnable even after the policy has
    become near-deterministic; tool probabilities stay purely on-policy."""
    if explore_eps == 0.0:
        return support
    uniform = np.zeros_like(support)
    uniform[list(_ANSWER_ACTIONS)] = 1.0 / len(_ANSWER_ACTIONS)
    return (1.0 - explore_eps) * support + explore_eps * uniform


# --- environment ---------------------------------------------------------------


@dataclass
class Rollout:
    instance: TaskInstance
    features: list[np.ndarray]
    actions: list[int]
    old_probs: list[float]
    forced: list[bool]  # step sampled from the answer-only menu (horizon)
    explore_eps: float  # ε the behavior policy mixed in when sampling
    trace: str
    request: dict
    reward: float
    tool_names: list[str]
    answer_quality: float


def _trace_text(turns: list[tuple[str, dict | None, str | None]]) -> str:
    parts = []
    for think, payload, answer in turns:
        if payload is not None:
            body = json.dumps(payload, sort_keys=True, separators=(",", ":"))
            parts.append(f"<think>{think}</think><tool_call>{body}</tool_call>")
        else:
            parts.append(f"<think>{think}</think><answer>{answer}</answer>")
    return "\n".join(parts)


class ToyEnv:
    """Finite-horizon tool-use episodes over a synthetic task pool."""

    def __init__(self, cfg: GrpoConfig):
        self.cfg = cfg
        # oversample read-value docs: pair-answer ones yield no instances,
        # and the pool should still hold pool_docs scalar ones of each task
        docs = gen_dataset(
            SynthConfig(
                seed=100_000 + cfg.seed,
                n_read_value=3 * cfg.pool_docs,
                n_compare_count=cfg.pool_docs,
                aug_prob=0.5,
                read_value_max_edge=480,
                compare_count_max_edge=400,
            )
        )
        self.pool: list[TaskInstance] = []
        kept_read_value = 0
        for doc in docs:
            instances = _instances_from_doc(doc)
            if doc.task == "read_value":
                if not instances or kept_read_value >= cfg.pool_docs:
                    continue
                kept_read_value += 1
            self.pool.extend(instances)
        self.numeric_pool = [i for i in self.pool if i.numeric]

    def instance_for_step(self, phase: str, step: int) -> TaskInstance:
        pool = self.pool if phase in ("stage1", "global_only", "answer_only") else self.numeric_pool
        return pool[step % len(pool)]

    # -- episode construction --

    def _tool_call(
        self, inst: TaskInstance, state: EpisodeState, action: int
    ) -> ToolCall:
        name, category = ACTIONS[action]
        if category == "zoom":
            box = inst.zoom_candidates[_GRADE.index(name[-1])]
            return ToolCall(
                TOOL_ZOOM,
                {"bbox_2d": (box.x1, box.y1, box.x2, box.y2)},
                target_image=0,
            )
        if category == "rotate":
            return ToolCall(TOOL_ROTATE, {"angle": int(name[3:])})
        if category == "flip":
            direction = "horizontal" if name == "flip_h" else "vertical"
            return ToolCall(TOOL_FLIP, {"direction": direction})
        if category == "line":
            last = state.last
            inv = last.frame.inverse()
            local = map_primitive(inv, inst.ruler) if inv.valid else inst.ruler
            offset = _LINE_OFFSETS[_GRADE.index(name[-1])]
            if local.kind == "x_line":
                coord = local.coord + offset * (last.width / 4.0)
                return ToolCall(TOOL_VLINE, {"width_location": coord})
            coord = local.coord + offset * (last.height / 4.0)
            return ToolCall(TOOL_HLINE, {"height_location": coord})
        if name == "mark_box":
            cx = (inst.zoom_box.x1 + inst.zoom_box.x2) / 2.0
            cy = (inst.zoom_box.y1 + inst.zoom_box.y2) / 2.0
            return ToolCall(TOOL_MARK, {"point_2d": ((cx, cy),)}, target_image=0)
        last = state.last
        if name == "mark_corner":
            return ToolCall(TOOL_MARK, {"point_2d": ((2.0, 2.0),)})
        if name == "mark_third":
            return ToolCall(
                TOOL_MARK, {"point_2d": ((last.width / 3.0, last.height / 3.0),)}
            )
        return ToolCall(
            TOOL_MARK, {"point_2d": ((last.width / 2.0, last.height / 2.0),)}
        )

    def _has_evidence(self, inst: TaskInstance, state: EpisodeState) -> bool:
        """The value can be read off only from the view the answer is
        produced from — the final state — and only when that state meets
        its supervision target (exact zoom footprint or clean ruler line).
        Grounding earlier and then reworking the view loses the referent."""
        sc = score_states(state, inst.gt)
        if inst.kind == "rotflip":
            return any(v >= 1.0 for v in sc.per_state.values())
        last = len(state.lineage) - 1
        return sc.per_state.get(last, 0.0) >= _EVIDENCE_THRESHOLD

    @staticmethod
    def _overview_intact(state: EpisodeState) -> bool:
        """True when the final view still shows the whole original canvas
        the right way up. Lines and marks merely annotate; a crop replaces
        the view and a net rotation/flip leaves it unreadable."""
        entry = state.last
        if not entry.orientation.is_identity or not entry.frame.valid:
            return False
        first = state.lineage[0]
        fp = entry.frame.map_box(BBox(0.0, 0.0, entry.width, entry.height))
        return (
            abs(fp.x1) < 1e-6
            and abs(fp.y1) < 1e-6
            and abs(fp.x2 - first.width) < 1e-6
            and abs(fp.y2 - first.height) < 1e-6
        )

    def _answer_text(
        self,
        inst: TaskInstance,
        state: EpisodeState,
        action_name: str,
        actions: Sequence[int],
    ) -> str:
        if inst.kind == "rotflip":
            if action_name == "answer_estimate":
                for k, entry in enumerate(state.lineage):
                    if entry.orientation == inst.target_orientation:
                        return str(k)
                return "0"
            # Hedged answers name a plausible early state index.
            return {"answer_mid": "0", "answer_low": "1", "answer_high": "2"}[
                action_name
            ]
        span = inst.answer_hi - inst.answer_lo
        if action_name == "answer_mid":
            return f"{inst.answer_lo + 0.5 * span:.4f}"
        if action_name == "answer_low":
            return f"{inst.answer_lo + 0.25 * span:.4f}"
        if action_name == "answer_high":
            return f"{inst.answer_lo + 0.75 * span:.4f}"
        if self._has_evidence(inst, state):
            # A grounding view (exact zoom or ruler line) reads the value off.
            return f"{inst.answer_target:.4f}"
        u = _pseudo_uniform(inst.doc_id, inst.kind, *actions)
        if self._overview_intact(state):
            # Whole chart still visible: approximately right.
            guess = inst.answer_target + (2.0 * u - 1.0) * _OVERVIEW_NOISE * span
            return f"{guess:.4f}"
        # The view was cropped or reoriented without ever grounding the
        # quantity: the referent is lost and the answer is an uninformed guess.
        guess = inst.answer_lo + u * span
        return f"{guess:.4f}"

    def _request(self, inst: TaskInstance, stage: int, trace: str) -> dict:
        req = {
            "id": "sim",
            "stage": stage,
            "trace": trace,
            "image": {"width": inst.width, "height": inst.height},
            "max_turns": self.cfg.max_turns,
        }
        if stage == 1:
            req["task"] = inst.kind
            req["ground_truth"] = inst.gt_json
        else:
            req["task"] = inst.task
            req["target_answer"] = inst.answer_target
            req["norm_range"] = inst.norm_range
        return req

    def _reward(self, inst: TaskInstance, phase: str, trace: str) -> tuple[float, dict, float]:
        """Returns (reward, request used, answer quality for metrics)."""
        if phase in ("stage1", "global_only", "answer_only"):
            req = self._request(inst, 1, trace)
            bd = self._score(req)
            quality = (
                bd["answer_tool"]
                if not inst.numeric
                else self._numeric_quality(inst, trace)
            )
            if phase == "stage1":
                return bd["final"], req, quality
            if phase == "global_only":
                return bd["global_tool"] + bd["format"], req, quality
            return bd["answer_tool"] + bd["format"], req, quality
        if phase == "combined":
            req1 = self._request(inst, 1, trace)
            bd1 = self._score(req1)
            req2 = self._request(inst, 2, trace)
            bd2 = self._score(req2)
            return bd1["final"] + bd2["answer"], req2, bd2["answer"]
        req = self._request(inst, 2, trace)
        bd = self._score(req)
        if phase == "tool_conditioned":
            return bd["tool_conditioned"] + bd["format"], req, bd["answer"]
        return bd["final"], req, bd["answer"]  # stage2 / accuracy_only

    def reward_for_trace(self, inst: TaskInstance, phase: str, trace: str) -> float:
        """Recompute the training reward for a logged trace. Episodes are
        pure functions of their trace, so replaying a stored rollout must
        reproduce its stored reward exactly."""
        return self._reward(inst, phase, trace)[0]

    @staticmethod
    def _score(req: dict) -> dict:
        resp = score_obj(req)
        if not resp.ok:
            raise RuntimeError(f"simulator produced unscorable trace: {resp.error}")
        return dict(resp.breakdown)

    def _numeric_quality(self, inst: TaskInstance, trace: str) -> float:
        bd = self._score(self._request(inst, 2, trace))
        return bd["answer"]

    def rollout(
        self,
        theta: "np.ndarray | PolicyParams",
        inst: TaskInstance,
        phase: str,
        rng: np.random.Generator,
        explore_eps: float | None = None,
    ) -> Rollout:
        cfg = self.cfg
        theta = _weights_of(theta)
        eps = cfg.explore_eps if explore_eps is None else explore_eps
        state = EpisodeState.start(inst.width, inst.height, max_turns=cfg.max_turns)
        turns: list[tuple[str, dict | None, str | None]] = []
        features: list[np.ndarray] = []
        actions: list[int] = []
        old_probs: list[float] = []
        forced_flags: list[bool] = []
        tool_names: list[str] = []
        last_kind = "none"
        answered = False
        for turn in range(cfg.max_turns):
            oriented = (
                state.last.orientation == inst.target_orientation
                if inst.kind == "rotflip"
                else state.last.orientation.is_identity
            )
            phi = _features(inst, turn, oriented, last_kind, cfg.max_turns)
            probs = policy_probs(theta, phi)
            forced_answer = turn == cfg.max_turns - 1
            support = _support_probs(probs, forced_answer)
            behavior = _behavior_probs(support, eps)
            action = int(rng.choice(N_ACTIONS, p=behavior))
            features.append(phi)
            actions.append(action)
            old_probs.append(float(behavior[action]))
            forced_flags.append(forced_answer)
            name, category = ACTIONS[action]
            if category == "answer":
                text = self._answer_text(inst, state, name, actions)
                turns.append((f"t{turn}", None, text))
                answered = True
                break
            call = self._tool_call(inst, state, action)
            state = apply_tool(state, call, compute_pixels=False)
            tool_names.append(call.name)
            turns.append((f"t{turn}", call.to_payload(), None))
            last_kind = category
        assert answered, "horizon must end with an answer"
        trace = _trace_text(turns)
        reward, request, quality = self._reward(inst, phase, trace)
        return Rollout(
            instance=inst,
            features=features,
            actions=actions,
            old_probs=old_probs,
            forced=forced_flags,
            explore_eps=eps,
            trace=trace,
            request=request,
            reward=reward,
            tool_names=tool_names,
            answer_quality=quality,
        )


def rollout_group(
    env: ToyEnv,
    policy: "np.ndarray | PolicyParams",
    inst: TaskInstance,
    phase: str,
    group_size: int,
    rng: np.random.Generator,
    explore_eps: float | None = None,
) -> list[Rollout]:
    if group_size < 2:
        raise ValueError("group_size must be at least 2")
    theta = _weights_of(policy)
    return [
        env.rollout(theta, inst, phase, rng, explore_eps) for _ in range(group_size)
    ]


# --- GRPO ----------------------------------------------------------------------


def grpo_advantages(rewards: Sequence[float], std_floor: float = 1e-6) -> np.ndarray:
    r = np.asarray(rewards, dtype=np.float64)
    if r.size < 2:
        raise ValueError("a group needs at least 2 rewards")
    if (r == r[0]).all():
        return np.zeros_like(r)
    return (r - r.mean()) / max(float(r.std()), std_floor)


def _ratio_terms(theta: np.ndarray, rollout: Rollout):
    """Yields (features, action, support softmax, old behavior prob, ratio)
    per decision, with the new-policy behavior probability computed under
    the same ε-mixed law the rollout was sampled from."""
    for phi, action, old_p, forced in zip(
        rollout.features, rollout.actions, rollout.old_probs, rollout.forced
    ):
        support = _support_probs(policy_probs(theta, phi), forced)
        behavior = _behavior_probs(support, rollout.explore_eps)
        yield phi, action, support, old_p, behavior[action] / old_p


def surrogate_loss(
    theta: np.ndarray,
    group: Sequence[Rollout],
    advantages: Sequence[float],
    clip_eps: float = 0.2,
) -> float:
    total = 0.0
    for rollout, adv in zip(group, advantages):
        if not rollout.actions:
            continue
        acc = 0.0
        for _, _, _, _, ratio in _ratio_terms(theta, rollout):
            clipped = min(max(ratio, 1.0 - clip_eps), 1.0 + clip_eps)
            acc += min(ratio * adv, clipped * adv)
        total += acc / len(rollout.actions)
    return total / len(group)


def surrogate_grad(
    theta: np.ndarray,
    group: Sequence[Rollout],
    advantages: Sequence[float],
    clip_eps: float = 0.2,
) -> np.ndarray:
    """Analytic gradient of the clipped surrogate for the linear-softmax
    policy. A term contributes no gradient once its ratio is clipped on the
    disadvantageous side (the usual PPO dead zone). Only the softmax part
    of the behavior mixture depends on the parameters, so each term's
    gradient carries a (1−ε)·softmax(a) factor."""
    grad = np.zeros_like(theta)
    for rollout, adv in zip(group, advantages):
        if not rollout.actions or adv == 0.0:
            continue
        scale = 1.0 / (len(rollout.actions) * len(group))
        for phi, action, support, old_p, ratio in _ratio_terms(theta, rollout):
            if adv > 0 and ratio > 1.0 + clip_eps:
                continue
            if adv < 0 and ratio < 1.0 - clip_eps:
                continue
            # d ratio / d theta = (1−ε)/old_p · d support(a) / d theta, and
            # d support(a) / d theta[a'] = support(a) (1{a'=a} − support(a')) phi.
            eps = rollout.explore_eps
            coeff = adv * scale * (1.0 - eps) * support[action] / old_p
            grad -= np.outer(support * coeff, phi)
            grad[action] += coeff * phi
    return grad


def grpo_update(
    policy: "np.ndarray | PolicyParams",
    group: Sequence[Rollout],
    cfg: GrpoConfig,
) -> "np.ndarray | PolicyParams":
    """One ascent step on the clipped surrogate. Returns the updated policy
    in the same form it was given (raw weights in, raw weights out)."""
    theta = _weights_of(policy)
    adv = grpo_advantages([r.reward for r in group], cfg.std_floor)
    if not np.any(adv):
        new = theta.copy()
    else:
        grad = surrogate_grad(theta, group, adv, cfg.clip_eps)
        new = theta + cfg.lr * grad * param_mask(cfg.max_turns)
        if not np.isfinite(new).all():
            raise FloatingPointError("policy update produced non-finite weights")
    if isinstance(policy, PolicyParams):
        return PolicyParams(weights=new, max_turns=policy.max_turns)
    return new


# --- curriculum driver -----------------------------------------------------------


def _phases(mode: str, steps: int) -> list[tuple[str, int]]:
    if mode == "toolsrl":
        return [("stage1", steps), ("stage2", steps)]
    if mode not in MODES:
        raise ValueError(f"unknown mode: {mode!r}")
    # Single-stage baselines get the same total budget as the curriculum.
    return [(mode, 2 * steps)]


def _rng_for(seed: int, mode: str) -> np.random.Generator:
    digest = hashlib.sha256(f"currsim:{seed}:{mode}".encode()).digest()
    return np.random.default_rng(int.from_bytes(digest[:8], "big"))


def annealed_eps(eps0: float, step: int, total_steps: int) -> float:
    """Exploration schedule: linear decay from eps0 to 0 at 75% of the run,
    so the closing quarter samples the pure policy."""
    horizon = 0.75 * total_steps
    return eps0 * max(0.0, 1.0 - step / horizon) if horizon > 0 else 0.0


def run_curriculum(cfg: GrpoConfig, mode: str) -> list[dict]:
    """Train one mode; returns one metrics row per step (METRIC_COLUMNS)."""
    env = ToyEnv(cfg)
    rng = _rng_for(cfg.seed, mode)
    theta = init_policy(cfg.max_turns)
    rows: list[dict] = []
    total_steps = sum(steps for _, steps in _phases(mode, cfg.steps_per_stage))
    step = 0
    for phase, steps in _phases(mode, cfg.steps_per_stage):
        for _ in range(steps):
            inst = env.instance_for_step(phase, step)
            eps = annealed_eps(cfg.explore_eps, step, total_steps)
            group = rollout_group(env, theta, inst, phase, cfg.group_size, rng, eps)
            theta = grpo_update(theta, group, cfg)
            counts = {name: 0 for name in TOOL_NAMES}
            total_calls = 0
            for r in group:
                for name in r.tool_names:
                    counts[name] += 1
                    total_calls += 1
            row = {
                "step": step,
                "mode": mode,
                "seed": cfg.seed,
                "mean_reward": float(np.mean([r.reward for r in group])),
                "mean_tool_calls": total_calls / len(group),
                "accuracy": float(np.mean([r.answer_quality for r in group])),
            }
            for name in TOOL_NAMES:
                frac = counts[name] / total_calls if total_calls else 0.0
                row[f"frac_{_TOOL_SHORT[name]}"] = frac
            rows.append(row)
            step += 1
    return rows


def write_metrics_csv(rows: Sequence[dict], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(METRIC_COLUMNS) + "\n")
        for row in rows:
            cells = []
            for col in METRIC_COLUMNS:
                value = row[col]
                if isinstance(value, float):
                    cells.append(f"{value:.6f}")
                else:
                    cells.append(str(value))
            fh.write(",".join(cells) + "\n")


def read_metrics_csv(path: str | Path) -> list[dict]:
    rows: list[dict] = []
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip().split(",")
        if tuple(header) != METRIC_COLUMNS:
            raise ValueError(f"unexpected metrics header: {header}")
        for line in fh:
            line = line.strip()
            if not line:
                continue
            cells = line.split(",")
            row: dict = {}
            for col, cell in zip(METRIC_COLUMNS, cells):
                if col in ("step", "seed"):
                    row[col] = int(cell)
                elif col == "mode":
                    row[col] = cell
                else:
                    row[col] = float(cell)
            rows.append(row)
    return rows


def summarize_final(rows: Sequence[dict], tail_frac: float = 0.25) -> dict:
    """Mean tool-call rate and answer quality over the last tail_frac of
    steps (for the curriculum that window lies inside stage 2)."""
    if not rows:
        raise ValueError("no metrics rows")
    n_tail = max(1, math.ceil(len(rows) * tail_frac))
    tail = rows[-n_tail:]
    return {
        "tool_rate": float(np.mean([r["mean_tool_calls"] for r in tail])),
        "answer": float(np.mean([r["accuracy"] for r in tail])),
        "reward": float(np.mean([r["mean_reward"] for r in tail])),
        "steps": len(rows),
    }
