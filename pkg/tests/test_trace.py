"""Trace-parsing tests: the tagged rollout grammar, tolerant malformation
handling, answer typing, and the all-or-nothing format reward."""

from __future__ import annotations

import json
import random

import pytest

from vtrl.toolbox import (
    TOOL_FLIP,
    TOOL_HLINE,
    TOOL_MARK,
    TOOL_ROTATE,
    TOOL_VLINE,
    TOOL_ZOOM,
)
from vtrl.trace import (
    AnswerStateRef,
    extract_answer_state,
    format_reward,
    parse_answer,
    parse_trace,
    serialize_trajectory,
)

# --- random structurally-valid traces ------------------------------------------

_SAFE_TEXT = "abcdefghij KLMNOP 0123456789 .,:;!?-_()"


def _random_text(rng: random.Random, max_len: int = 30) -> str:
    return "".join(rng.choice(_SAFE_TEXT) for _ in range(rng.randint(0, max_len)))


def _random_call_body(rng: random.Random) -> str:
    name = rng.choice((TOOL_ZOOM, TOOL_ROTATE, TOOL_FLIP, TOOL_HLINE, TOOL_VLINE, TOOL_MARK))
    if name == TOOL_ZOOM:
        x1, y1 = rng.randint(0, 50), rng.randint(0, 50)
        args = {"bbox_2d": [x1, y1, x1 + rng.randint(1, 60), y1 + rng.randint(1, 60)]}
    elif name == TOOL_ROTATE:
        args = {"angle": rng.choice((90, 180, 270, -90, 30))}
    elif name == TOOL_FLIP:
        args = {"direction": rng.choice(("horizontal", "vertical"))}
    elif name == TOOL_HLINE:
        args = {"height_location": rng.randint(0, 400)}
    elif name == TOOL_VLINE:
        args = {"width_location": rng.randint(0, 400), "style": "dashed"}
    else:
        args = {"point_2d": [rng.randint(0, 300), rng.randint(0, 300)]}
    if rng.random() < 0.3:
        args["target_image"] = rng.choice((-1, 0, 1))
    if rng.random() < 0.3:
        args["label"] = _random_text(rng, 8)
    return json.dumps({"name": name, "arguments": args})


def _random_answer(rng: random.Random) -> str:
    kind = rng.random()
    if kind < 0.4:
        return str(rng.randint(-50, 500))
    if kind < 0.6:
        return f"{rng.uniform(-10, 10):.3f}"
    if kind < 0.8:
        return json.dumps({"A": rng.randint(0, 5), "B": rng.randint(0, 5)})
    return _random_text(rng, 20) or "something"


def _random_valid_trace(rng: random.Random) -> str:
    parts = []
    for _ in range(rng.randint(0, 4)):
        parts.append(f"<think>{_random_text(rng)}</think>")
        parts.append(f"<tool_call>{_random_call_body(rng)}</tool_call>")
    parts.append(f"<think>{_random_text(rng)}</think>")
    parts.append(f"<answer>{_random_answer(rng)}</answer>")
    return "\n".join(parts)


def test_random_valid_traces_round_trip_exactly():
    rng = random.Random(31415)
    for _ in range(1000):
        text = _random_valid_trace(rng)
        traj, violations = parse_trace(text)
        assert violations == []
        assert format_reward(traj, violations) == 0.5
        again, violations2 = parse_trace(serialize_trajectory(traj))
        assert violations2 == []
        assert len(again.turns) == len(traj.turns)
        for a, b in zip(traj.turns, again.turns):
            assert a.think == b.think
            assert a.tool_call == b.tool_call
            if a.answer is None:
                assert b.answer is None
            else:
                assert b.answer is not None
                assert (a.answer.kind, a.answer.value) == (b.answer.kind, b.answer.value)


# --- malformations --------------------------------------------------------------


def _violations_of(text: str) -> list[str]:
    traj, violations = parse_trace(text)
    assert format_reward(traj, violations) == 0.0, text
    return violations


def test_unclosed_tag():
    v = _violations_of("<think>started thinking")
    assert "unclosed_tag:think" in v


def test_orphan_close_tag():
    v = _violations_of("<think>t</think><answer>5</answer></answer>")
    assert "orphan_close_tag:answer" in v


def test_stray_text_between_turns():
    v = _violations_of(
        "<think>t</think>meanwhile...<answer>5</answer>"
    )
    assert v == ["stray_text"]


def test_turn_without_think():
    v = _violations_of('<tool_call>{"name": "image_rotate_tool", "arguments": {"angle": 90}}</tool_call>')
    assert "turn_without_think" in v


def test_invalid_tool_json():
    v = _violations_of("<think>t</think><tool_call>rotate by 90</tool_call>")
    assert "invalid_tool_json" in v


def test_turn_without_action():
    v = _violations_of("<think>one</think><think>two</think><answer>5</answer>")
    assert "turn_without_action" in v
    v = _violations_of("<think>only thoughts</think>")
    assert "turn_without_action" in v


def test_multiple_answers():
    v = _violations_of(
        "<think>a</think><answer>1</answer><think>b</think><answer>2</answer>"
    )
    assert "multiple_answers" in v


def test_answer_not_final():
    v = _violations_of(
        "<think>a</think><answer>1</answer>"
        '<think>b</think><tool_call>{"name": "image_flip_tool", "arguments": {"direction": "vertical"}}</tool_call>'
    )
    assert "answer_not_final" in v


def test_parser_never_raises_on_garbage():
    rng = random.Random(8)
    alphabet = "<>things /answer think tool_call {}[]\"'0123456789"
    for _ in range(300):
        text = "".join(rng.choice(alphabet) for _ in range(rng.randint(0, 60)))
        traj, violations = parse_trace(text)  # must not raise
        assert isinstance(violations, list)
        assert format_reward(traj, violations) in (0.0, 0.5)


# --- typed payloads ---------------------------------------------------------------


def test_example_calls_parse_to_typed_forms():
    text = (
        "<think>look closer</think>"
        '<tool_call>{"name": "image_zoom_in_tool", "arguments": {"bbox_2d": [50, 100, 200, 300]}}</tool_call>'
        "<think>mark the height</think>"
        '<tool_call>{"name": "image_draw_horizontal_line_tool", "arguments": {"height_location": 157}}</tool_call>'
        "<think>pin the point</think>"
        '<tool_call>{"name": "image_mark_points_tool", "arguments": {"point_2d": [157, 200]}}</tool_call>'
        "<think>done</think><answer>157</answer>"
    )
    traj, violations = parse_trace(text)
    assert violations == []
    zoom, hline, mark = traj.tool_calls
    assert zoom.name == TOOL_ZOOM and zoom.args["bbox_2d"] == (50.0, 100.0, 200.0, 300.0)
    assert hline.name == TOOL_HLINE and hline.args["height_location"] == 157.0
    assert mark.name == TOOL_MARK and mark.args["point_2d"] == ((157.0, 200.0),)
    assert traj.terminal_answer.kind == "numeric"
    assert traj.terminal_answer.value == 157.0


def test_answer_typing():
    assert parse_answer("42").kind == "numeric"
    assert parse_answer("42").value == 42.0
    assert parse_answer("  -3.5  ").value == -3.5
    assert parse_answer("4.5e1").value == 45.0
    assert parse_answer("true").kind == "free_text"  # booleans are not counts
    assert parse_answer('"42"').kind == "free_text"  # a quoted string stays text
    assert parse_answer("Infinity").kind == "free_text"
    assert parse_answer("NaN").kind == "free_text"
    m = parse_answer('{"A": 1, "B": 0}')
    assert m.kind == "element_map" and m.value == {"A": 1, "B": 0}
    assert parse_answer('{"A": -1}').kind == "free_text"  # negative index
    assert parse_answer('{"A": true}').kind == "free_text"
    assert parse_answer("{}").kind == "free_text"  # empty map carries nothing
    assert parse_answer("the left one").kind == "free_text"
    assert parse_answer("x") .as_number is None
    assert parse_answer("3").as_number == 3.0


def test_format_reward_is_all_or_nothing():
    flawless = "<think>t</think><answer>1</answer>"
    traj, violations = parse_trace(flawless)
    assert format_reward(traj, violations) == 0.5
    assert format_reward(traj, violations, w_fmt=0.25) == 0.25
    # a pending format violation zeroes it even if the structure parsed
    assert format_reward(traj, ["stray_text"]) == 0.0
    # no answer at the end -> no format pay
    tool_only = (
        "<think>t</think>"
        '<tool_call>{"name": "image_rotate_tool", "arguments": {"angle": 90}}</tool_call>'
    )
    traj2, violations2 = parse_trace(tool_only)
    assert violations2 == []
    assert format_reward(traj2, violations2) == 0.0
    traj3, violations3 = parse_trace("")
    assert format_reward(traj3, violations3) == 0.0


# --- lineage references ---------------------------------------------------------------


def _traj_with_answer(raw: str):
    traj, violations = parse_trace(f"<think>t</think><answer>{raw}</answer>")
    assert violations == []
    return traj


def test_answer_state_for_index_tasks():
    ref = extract_answer_state(_traj_with_answer("2"), "rotflip", lineage_len=4)
    assert ref == AnswerStateRef(index=2)
    ref = extract_answer_state(_traj_with_answer("9"), "rotflip", lineage_len=4)
    assert ref.index == 9 and ref.violations == ("answer_index_out_of_lineage:9",)
    # non-integral numbers cannot reference an image
    ref = extract_answer_state(_traj_with_answer("2.5"), "rotflip", lineage_len=4)
    assert ref.index == 3 and ref.violations == ()


def test_answer_state_for_value_tasks_defaults_to_last():
    ref = extract_answer_state(_traj_with_answer("57"), "read_value", lineage_len=5)
    assert ref == AnswerStateRef(index=4)


def test_answer_state_element_map():
    traj = _traj_with_answer('{"A": 1, "B": 3}')
    ref = extract_answer_state(traj, "compare_count", lineage_len=4)
    assert ref.element_indices == {"A": 1, "B": 3}
    assert ref.violations == ()
    bad = extract_answer_state(traj, "compare_count", lineage_len=2)
    assert bad.violations == ("answer_index_out_of_lineage:B=3",)


def test_answer_state_missing_answer():
    traj, _ = parse_trace("<think>t</think>")
    ref = extract_answer_state(traj, "read_value", lineage_len=3)
    assert ref.index is None and ref.violations == ("no_answer",)
