"""Tolerant parsing of tagged rollout text into structured trajectories.

A trajectory is a sequence of turns, each a `<think>...</think>` segment
followed by exactly one `<tool_call>{json}</tool_call>` or
`<answer>...</answer>`. The parser is total: malformed input never raises,
it yields the best-effort trajectory plus a list of violation codes. The
format reward pays w_fmt only for structurally flawless traces.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field

from .toolbox import ToolCall, validate_tool_call

__all__ = [
    "AnswerPayload",
    "TraceTurn",
    "Trajectory",
    "AnswerStateRef",
    "parse_trace",
    "parse_answer",
    "serialize_trajectory",
    "format_reward",
    "extract_answer_state",
    "DEFAULT_FORMAT_WEIGHT",
    "INDEX_ANSWER_TASKS",
]

DEFAULT_FORMAT_WEIGHT = 0.5

# Tasks whose answers are image-lineage references rather than values.
INDEX_ANSWER_TASKS = ("rotflip",)

_TAG_RE = re.compile(r"<(think|tool_call|answer)>(.*?)</\1>", re.DOTALL)
_OPEN_RE = re.compile(r"<(think|tool_call|answer)>")
_CLOSE_RE = re.compile(r"</(think|tool_call|answer)>")


@dataclass(frozen=True)
class AnswerPayload:
    """Parsed answer content.

    kind is one of:
      free_text    raw string (anything unparseable as the other kinds)
      numeric      a finite number
      element_map  {element label: image index}
    Raw text is always preserved; numeric answers may later be read as image
    indices for tasks whose answers reference the lineage.
    """

    raw_text: str
    kind: str
    value: object = None

    @property
    def as_number(self) -> float | None:
        return float(self.value) if self.kind == "numeric" else None


def parse_answer(raw: str) -> AnswerPayload:
    text = raw.strip()
    try:
        obj = json.loads(text)
    except (json.JSONDecodeError, ValueError):
        obj = None
    if isinstance(obj, bool):
        obj = None
    if isinstance(obj, (int, float)) and math.isfinite(float(obj)):
        return AnswerPayload(raw, "numeric", float(obj))
    if (
        isinstance(obj, dict)
        and obj
        and all(
            isinstance(k, str) and isinstance(v, int) and not isinstance(v, bool) and v >= 0
            for k, v in obj.items()
        )
    ):
        return AnswerPayload(raw, "element_map", dict(obj))
    try:
        num = float(text)
        if math.isfinite(num):
            return AnswerPayload(raw, "numeric", num)
    except ValueError:
        pass
    return AnswerPayload(raw, "free_text", text)


@dataclass(frozen=True)
class TraceTurn:
    think: str | None = None
    tool_call: ToolCall | None = None
    raw_tool_text: str | None = None
    answer: AnswerPayload | None = None


@dataclass(frozen=True)
class Trajectory:
    turns: tuple[TraceTurn, ...] = ()

    @property
    def terminal_answer(self) -> AnswerPayload | None:
        if self.turns and self.turns[-1].answer is not None:
            return self.turns[-1].answer
        return None

    @property
    def tool_calls(self) -> list[ToolCall]:
        return [t.tool_call for t in self.turns if t.tool_call is not None]

    @property
    def tool_names(self) -> list[str]:
        return [c.name for c in self.tool_calls]


def parse_trace(text: str) -> tuple[Trajectory, list[str]]:
    """Parse rollout text. Never raises; returns (trajectory, violations)."""
    violations: list[str] = []
    segments = []
    last_end = 0
    residue = []
    for m in _TAG_RE.finditer(text):
        residue.append(text[last_end : m.start()])
        segments.append((m.group(1), m.group(2)))
        last_end = m.end()
    residue.append(text[last_end:])
    outside = "".join(residue)
    for m in _OPEN_RE.finditer(outside):
        violations.append(f"unclosed_tag:{m.group(1)}")
    for m in _CLOSE_RE.finditer(outside):
        violations.append(f"orphan_close_tag:{m.group(1)}")
    if _OPEN_RE.sub("", _CLOSE_RE.sub("", outside)).strip():
        violations.append("stray_text")

    turns: list[TraceTurn] = []
    think: str | None = None
    have_open = False

    def close_with(action_kind: str, content: str) -> None:
        nonlocal think, have_open
        if not have_open:
            violations.append("turn_without_think")
        if action_kind == "answer":
            turns.append(TraceTurn(think=think, answer=parse_answer(content)))
        else:
            call = None
            raw = content.strip()
            try:
                payload = json.loads(raw)
            except (json.JSONDecodeError, ValueError):
                payload = None
                violations.append("invalid_tool_json")
            if payload is not None:
                call, call_violations = validate_tool_call(payload)
                violations.extend(call_violations)
            turns.append(TraceTurn(think=think, tool_call=call, raw_tool_text=raw))
        think = None
        have_open = False

    for kind, content in segments:
        if kind == "think":
            if have_open:
                violations.append("turn_without_action")
                turns.append(TraceTurn(think=think))
            think = content
            have_open = True
        else:
            close_with(kind, content)
    if have_open:
        violations.append("turn_without_action")
        turns.append(TraceTurn(think=think))

    answer_positions = [i for i, t in enumerate(turns) if t.answer is not None]
    if len(answer_positions) > 1:
        violations.append("multiple_answers")
    if answer_positions and answer_positions[-1] != len(turns) - 1:
        violations.append("answer_not_final")

    return Trajectory(turns=tuple(turns)), violations


def serialize_trajectory(traj: Trajectory) -> str:
    """Canonical text form; parse_trace round-trips structurally valid input."""
    parts = []
    for turn in traj.turns:
        parts.append(f"<think>{turn.think if turn.think is not None else ''}</think>")
        if turn.answer is not None:
            parts.append(f"<answer>{turn.answer.raw_text}</answer>")
        elif turn.tool_call is not None:
            body = json.dumps(turn.tool_call.to_payload(), sort_keys=True)
            parts.append(f"<tool_call>{body}</tool_call>")
        elif turn.raw_tool_text is not None:
            parts.append(f"<tool_call>{turn.raw_tool_text}</tool_call>")
    return "\n".join(parts)


def format_reward(
    traj: Trajectory, violations: list[str], w_fmt: float = DEFAULT_FORMAT_WEIGHT
) -> float:
    """w_fmt iff the trace is structurally flawless, else 0.

    Flawless: no parse violations, at least one turn, every turn has a think
    segment and exactly one action, and the final turn carries the answer.
    """
    if violations:
        return 0.0
    if not traj.turns:
        return 0.0
    for turn in traj.turns:
        if turn.think is None:
            return 0.0
        has_tool = turn.tool_call is not None or turn.raw_tool_text is not None
        has_answer = turn.answer is not None
        if has_tool == has_answer:  # both or neither
            return 0.0
    if traj.terminal_answer is None:
        return 0.0
    return float(w_fmt)


@dataclass(frozen=True)
class AnswerStateRef:
    """Where in the lineage the answer claims its evidence lives."""

    index: int | None = None
    element_indices: dict[str, int] | None = None
    violations: tuple[str, ...] = ()


def extract_answer_state(
    traj: Trajectory, task: str, lineage_len: int
) -> AnswerStateRef:
    """Resolve the answer's lineage reference(s).

    Element maps give one index per element; integral numeric answers are
    image indices for index-answer tasks; anything else falls back to the
    last lineage index (the image the answer was produced from).
    """
    ans = traj.terminal_answer
    fallback = lineage_len - 1
    if ans is None:
        return AnswerStateRef(index=None, violations=("no_answer",))
    if ans.kind == "element_map":
        indices = dict(ans.value)  # type: ignore[arg-type]
        bad = tuple(
            f"answer_index_out_of_lineage:{k}={v}"
            for k, v in indices.items()
            if not (0 <= v < lineage_len)
        )
        return AnswerStateRef(element_indices=indices, violations=bad)
    if task in INDEX_ANSWER_TASKS and ans.kind == "numeric":
        num = float(ans.value)  # type: ignore[arg-type]
        if num == int(num):
            idx = int(num)
            bad = (
                (f"answer_index_out_of_lineage:{idx}",)
                if not (0 <= idx < lineage_len)
                else ()
            )
            return AnswerStateRef(index=idx, violations=bad)
    return AnswerStateRef(index=fallback)
