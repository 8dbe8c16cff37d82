"""Request/response scoring around the reward stack.

A ScoreRequest carries a raw model trace plus the grading context (image
dimensions or a PNG to peek them from, per-task ground truth, the answer
key). score_one parses the trace, replays the tool calls against a
dimensions-only episode (pixel content never affects a reward, so no pixels
are materialized), and returns every reward component in a breakdown dict.

Responses serialize to canonical JSON: keys sorted, per-state rewards as
index-ordered [index, value] pairs, and timing excluded unless asked for —
two runs over the same request bytes produce identical response bytes.
"""

from __future__ import annotations

import base64
import json
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping

from .judge import JudgeUnavailable
from .png import PngError, png_size
from .rewards import (
    DEFAULT_CONFIG,
    GroundTruth,
    RewardConfig,
    RotFlipGT,
    answer_reward,
    parse_ground_truth,
    score_states,
    stage1_aggregate,
    stage2_final,
    tool_conditioned_reward,
)
from .toolbox import EpisodeState, replay_calls
from .trace import extract_answer_state, format_reward, parse_trace

__all__ = [
    "ScoreRequest",
    "ScoreResponse",
    "RequestError",
    "parse_request",
    "score_one",
    "score_obj",
    "response_to_json",
]


class RequestError(ValueError):
    """The request is malformed; carries a short machine-readable reason."""


@dataclass(frozen=True)
class ScoreRequest:
    request_id: str
    stage: int
    task: str
    trace: str
    width: int
    height: int
    ground_truth: Mapping | None = None
    question: str = ""
    target_answer: object = None
    norm_range: object = None
    config: Mapping | None = None
    max_turns: int | None = None

    def reward_config(self) -> RewardConfig:
        if not self.config:
            return DEFAULT_CONFIG
        return RewardConfig.from_json_dict(self.config)


@dataclass(frozen=True)
class ScoreResponse:
    request_id: str
    ok: bool
    stage: int | None = None
    breakdown: Mapping | None = None
    violations: tuple[str, ...] = ()
    error: str | None = None
    timing_ms: float | None = None


def _peek_dims(obj: Mapping, base_dir: str | Path | None) -> tuple[int, int]:
    if "width" in obj and "height" in obj:
        w, h = int(obj["width"]), int(obj["height"])
    elif "png_base64" in obj:
        w, h = png_size(base64.b64decode(obj["png_base64"]))
    elif "path" in obj:
        path = Path(obj["path"])
        if base_dir is not None and not path.is_absolute():
            path = Path(base_dir) / path
        with open(path, "rb") as fh:
            w, h = png_size(fh.read(64))
    else:
        raise RequestError("image needs width/height, png_base64, or path")
    if w <= 0 or h <= 0:
        raise RequestError("image dimensions must be positive")
    return w, h


def parse_request(obj: Mapping, base_dir: str | Path | None = None) -> ScoreRequest:
    try:
        request_id = str(obj["id"])
        stage = int(obj["stage"])
        task = str(obj.get("task", ""))
        trace = obj["trace"]
        image = obj["image"]
    except (KeyError, TypeError, ValueError) as exc:
        raise RequestError(f"missing_field:{exc}") from exc
    if stage not in (1, 2):
        raise RequestError(f"bad_stage:{stage}")
    if not isinstance(trace, str):
        raise RequestError("trace_not_string")
    if not isinstance(image, Mapping):
        raise RequestError("image_not_object")
    try:
        width, height = _peek_dims(image, base_dir)
    except (OSError, PngError, ValueError) as exc:
        raise RequestError(f"bad_image:{exc}") from exc
    gt = obj.get("ground_truth")
    if stage == 1:
        if not isinstance(gt, Mapping):
            raise RequestError("stage1_needs_ground_truth")
        try:
            parse_ground_truth(gt)
        except (KeyError, ValueError, TypeError) as exc:
            raise RequestError(f"bad_ground_truth:{exc}") from exc
        if task != gt.get("kind"):
            raise RequestError(f"task_gt_mismatch:{task}!={gt.get('kind')}")
    max_turns = obj.get("max_turns")
    req = ScoreRequest(
        request_id=request_id,
        stage=stage,
        task=task,
        trace=trace,
        width=width,
        height=height,
        ground_truth=gt if isinstance(gt, Mapping) else None,
        question=str(obj.get("question", "")),
        target_answer=obj.get("target_answer"),
        norm_range=obj.get("norm_range"),
        config=obj.get("config"),
        max_turns=int(max_turns) if max_turns is not None else None,
    )
    try:
        req.reward_config()
    except (ValueError, TypeError) as exc:
        raise RequestError(f"bad_config:{exc}") from exc
    return req


def _norm_range_value(raw) -> object:
    if isinstance(raw, (list, tuple)):
        return tuple(float(v) for v in raw)
    return float(raw) if raw is not None else None


def score_one(
    req: ScoreRequest,
    judge: Callable[[str, str, str], bool] | None = None,
    with_timing: bool = False,
) -> ScoreResponse:
    t0 = time.perf_counter()
    cfg = req.reward_config()

    traj, violations = parse_trace(req.trace)
    fmt = format_reward(traj, violations, cfg.w_fmt)

    start = (
        EpisodeState.start(req.width, req.height)
        if req.max_turns is None
        else EpisodeState.start(req.width, req.height, max_turns=req.max_turns)
    )
    state, replay_violations, ok_flags = replay_calls(start, traj.tool_calls)
    all_violations = tuple(violations) + tuple(replay_violations)

    tool_names = list(traj.tool_names)
    breakdown: dict = {
        "format": fmt,
        "tool_calls": len(tool_names),
        "tool_ok": [bool(b) for b in ok_flags],
    }

    if req.stage == 1:
        gt = parse_ground_truth(req.ground_truth)
        sc = score_states(state, gt, cfg)
        all_violations += sc.violations
        answer_task = "rotflip" if isinstance(gt, RotFlipGT) else req.task
        ref = extract_answer_state(traj, answer_task, len(state.lineage))
        all_violations += ref.violations
        t_answer = ref.element_indices if ref.element_indices is not None else ref.index
        res = stage1_aggregate(sc.per_state, t_answer, fmt)
        breakdown.update(
            per_state={int(k): float(v) for k, v in sc.per_state.items()},
            global_tool=res.r_global,
            answer_tool=res.r_answer,
            final=res.r_final,
        )
        if sc.s_tp is not None:
            breakdown["s_tp"] = sc.s_tp
            breakdown["matching"] = [
                [int(i), int(j), float(s)] for i, j, s in (sc.matching or ())
            ]
    else:
        r_ans = answer_reward(
            traj.terminal_answer,
            req.target_answer,
            req.task,
            norm_range=_norm_range_value(req.norm_range),
            judge=judge,
            question=req.question,
        )
        breakdown.update(
            answer=r_ans,
            final=stage2_final(r_ans, fmt),
            tool_conditioned=tool_conditioned_reward(r_ans, len(tool_names)),
        )

    elapsed = (time.perf_counter() - t0) * 1e3
    return ScoreResponse(
        request_id=req.request_id,
        ok=True,
        stage=req.stage,
        breakdown=breakdown,
        violations=all_violations,
        timing_ms=elapsed if with_timing else None,
    )


def score_obj(
    obj: Mapping,
    base_dir: str | Path | None = None,
    judge: Callable[[str, str, str], bool] | None = None,
    with_timing: bool = False,
) -> ScoreResponse:
    """Parse-and-score with error capture: bad requests become ok=false
    responses rather than exceptions."""
    try:
        rid = str(obj.get("id", "")) if isinstance(obj, Mapping) else ""
        req = parse_request(obj, base_dir)
    except RequestError as exc:
        return ScoreResponse(request_id=rid, ok=False, error=str(exc))
    try:
        return score_one(req, judge=judge, with_timing=with_timing)
    except JudgeUnavailable as exc:
        return ScoreResponse(
            request_id=req.request_id, ok=False, error=f"judge_unavailable:{exc}"
        )
    except Exception as exc:  # noqa: BLE001 — a request must never kill the loop
        return ScoreResponse(
            request_id=req.request_id, ok=False, error=f"internal:{exc}"
        )


def response_to_json(resp: ScoreResponse, include_timing: bool = False) -> str:
    obj: dict = {"id": resp.request_id, "ok": resp.ok}
    if resp.ok:
        obj["stage"] = resp.stage
        breakdown = dict(resp.breakdown or {})
        if "per_state" in breakdown:
            breakdown["per_state"] = [
                [int(k), float(breakdown["per_state"][k])]
                for k in sorted(breakdown["per_state"])
            ]
        obj["breakdown"] = breakdown
        obj["violations"] = list(resp.violations)
    else:
        obj["error"] = resp.error
    if include_timing and resp.timing_ms is not None:
        obj["timing_ms"] = round(resp.timing_ms, 3)
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))
