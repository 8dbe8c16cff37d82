"""Request scoring tests: parsing errors, both scoring stages end to end,
error capture, and canonical response serialization."""

from __future__ import annotations

import base64
import json

import pytest

from vtrl.judge import JudgeUnavailable
from vtrl.png import encode_png
from vtrl.raster import Image
from vtrl.scoring import (
    RequestError,
    parse_request,
    response_to_json,
    score_obj,
    score_one,
)

ZOOM_TRACE = (
    "<think>inspect</think>"
    '<tool_call>{"name": "image_zoom_in_tool", "arguments": {"bbox_2d": [10, 10, 40, 40]}}</tool_call>'
    "<think>report</think><answer>0</answer>"
)
ANSWER_TRACE = "<think>read it</think><answer>57</answer>"


def _zoom_request(image=None, **over):
    req = {
        "id": "r1",
        "stage": 1,
        "task": "zoom",
        "trace": ZOOM_TRACE,
        "image": {"width": 64, "height": 64} if image is None else image,
        "ground_truth": {"kind": "zoom", "boxes": [[10, 10, 40, 40]]},
    }
    req.update(over)
    return req


def _stage2_request(image=None, **over):
    req = {
        "id": "r2",
        "stage": 2,
        "task": "read_value",
        "trace": ANSWER_TRACE,
        "image": {"width": 64, "height": 64} if image is None else image,
        "target_answer": 57,
        "norm_range": 100,
    }
    req.update(over)
    return req


# --- parsing ---------------------------------------------------------------------


def test_parse_request_happy_path():
    req = parse_request(_zoom_request())
    assert req.request_id == "r1" and req.stage == 1
    assert (req.width, req.height) == (64, 64)


def test_parse_request_dims_from_png_bytes():
    img = Image.blank(37, 21)
    b64 = base64.b64encode(encode_png(img)).decode("ascii")
    req = parse_request(_stage2_request(image={"png_base64": b64}))
    assert (req.width, req.height) == (37, 21)


def test_parse_request_dims_from_file(tmp_path):
    p = tmp_path / "img.png"
    p.write_bytes(encode_png(Image.blank(12, 9)))
    req = parse_request(_stage2_request(image={"path": "img.png"}), base_dir=tmp_path)
    assert (req.width, req.height) == (12, 9)


def _expect_error(obj, prefix, base_dir=None):
    with pytest.raises(RequestError) as err:
        parse_request(obj, base_dir=base_dir)
    assert str(err.value).startswith(prefix), str(err.value)


def test_parse_request_error_reasons():
    missing = _zoom_request()
    del missing["id"]
    _expect_error(missing, "missing_field")
    _expect_error(_zoom_request(stage=3), "bad_stage:3")
    _expect_error(_zoom_request(trace=42), "trace_not_string")
    _expect_error(_zoom_request(image="nope"), "image_not_object")
    _expect_error(_zoom_request(image={}), "bad_image")
    _expect_error(_zoom_request(ground_truth=None), "stage1_needs_ground_truth")
    _expect_error(
        _zoom_request(ground_truth={"kind": "zoom", "boxes": []}), "bad_ground_truth"
    )
    _expect_error(
        _zoom_request(ground_truth={"kind": "mystery"}), "bad_ground_truth"
    )
    _expect_error(_zoom_request(task="draw"), "task_gt_mismatch:draw!=zoom")
    _expect_error(_zoom_request(config={"w_q": 1}), "bad_config")
    _expect_error(_zoom_request(config={"w_fp": -1}), "bad_config")
    _expect_error(_zoom_request(image={"width": 0, "height": 10}), "bad_image")


# --- stage 1 ---------------------------------------------------------------------


def test_stage1_perfect_zoom_scores_full_marks():
    resp = score_one(parse_request(_zoom_request()))
    assert resp.ok and resp.stage == 1
    b = resp.breakdown
    assert b["per_state"] == {1: 1.0}
    assert b["global_tool"] == 1.0
    assert b["answer_tool"] == 1.0  # answer issued from the zoomed state
    assert b["final"] == pytest.approx(1.5)
    assert b["format"] == 0.5
    assert b["tool_ok"] == [True]
    assert resp.violations == ()


def test_stage1_answerless_trace_keeps_global_only():
    trace = (
        "<think>inspect</think>"
        '<tool_call>{"name": "image_zoom_in_tool", "arguments": {"bbox_2d": [10, 10, 40, 40]}}</tool_call>'
    )
    resp = score_one(parse_request(_zoom_request(trace=trace)))
    b = resp.breakdown
    assert b["format"] == 0.0  # no terminal answer, no format pay
    assert b["global_tool"] == 1.0
    assert b["answer_tool"] == 0.0
    assert b["final"] == pytest.approx(0.5)
    assert "no_answer" in resp.violations


def test_stage1_no_tools_at_all():
    resp = score_one(parse_request(_zoom_request(trace="<think>hm</think><answer>1</answer>")))
    b = resp.breakdown
    assert b["per_state"] == {}
    assert b["global_tool"] == 0.0 and b["answer_tool"] == 0.0
    assert b["final"] == pytest.approx(0.5)  # format only
    assert b["tool_calls"] == 0


def test_stage1_draw_breakdown_carries_matching_audit():
    trace = (
        "<think>mark</think>"
        '<tool_call>{"name": "image_draw_vertical_line_tool", "arguments": {"width_location": 30}}</tool_call>'
        "<think>done</think><answer>1</answer>"
    )
    obj = _zoom_request(
        task="draw",
        trace=trace,
        ground_truth={"kind": "draw", "primitives": [{"kind": "x_line", "c": 30.0}]},
    )
    resp = score_one(parse_request(obj))
    b = resp.breakdown
    assert b["per_state"] == {1: 1.0}
    assert b["s_tp"] == 1.0
    assert b["matching"] == [[0, 0, 1.0]]


def test_stage1_rotation_answer_indexes_the_lineage():
    trace = (
        "<think>fix</think>"
        '<tool_call>{"name": "image_rotate_tool", "arguments": {"angle": 270}}</tool_call>'
        "<think>which image is upright</think><answer>1</answer>"
    )
    obj = _zoom_request(
        task="rotflip",
        trace=trace,
        ground_truth={
            "kind": "rotflip",
            "target": {"quarter_turns": 0, "mirrored": False},
        },
    )
    # with an identity target the untouched root already matches, but the
    # answer picked the rotated state, so the answer term pays nothing
    resp = score_one(parse_request(obj))
    b = resp.breakdown
    assert b["per_state"] == {0: 1.0, 1: 0.0}
    assert b["global_tool"] == 1.0
    assert b["answer_tool"] == 0.0
    assert b["final"] == pytest.approx(1.0)
    # pointing the answer at the state matching the target pays the answer term
    obj2 = dict(obj)
    obj2["ground_truth"] = {
        "kind": "rotflip",
        "target": {"quarter_turns": 3, "mirrored": False},
    }
    resp2 = score_one(parse_request(obj2))
    assert resp2.breakdown["per_state"] == {0: 0.0, 1: 1.0}
    assert resp2.breakdown["answer_tool"] == 1.0
    assert resp2.breakdown["final"] == pytest.approx(1.5)


def test_stage1_max_turns_is_enforced():
    trace = (
        "<think>a</think>"
        '<tool_call>{"name": "image_zoom_in_tool", "arguments": {"bbox_2d": [10, 10, 40, 40]}}</tool_call>'
        "<think>b</think>"
        '<tool_call>{"name": "image_zoom_in_tool", "arguments": {"bbox_2d": [0, 0, 20, 20]}}</tool_call>'
        "<think>c</think><answer>0</answer>"
    )
    resp = score_one(parse_request(_zoom_request(trace=trace, max_turns=1)))
    assert "turn_limit_exceeded:1" in resp.violations
    assert resp.breakdown["tool_ok"] == [True, False]
    assert resp.breakdown["per_state"] == {1: 1.0}


# --- stage 2 ---------------------------------------------------------------------


def test_stage2_numeric_answer():
    resp = score_one(parse_request(_stage2_request()))
    b = resp.breakdown
    assert b["answer"] == 1.0
    assert b["final"] == pytest.approx(1.5)
    assert b["tool_conditioned"] == 0.0  # no tool calls in the trace
    off = score_one(parse_request(_stage2_request(target_answer=47)))
    assert off.breakdown["answer"] == pytest.approx(0.9)


def test_stage2_pair_answer():
    obj = _stage2_request(
        trace="<think>both</think><answer>(30, 70)</answer>",
        target_answer=[30, 70],
        norm_range=[100, 50],
    )
    resp = score_one(parse_request(obj))
    assert resp.breakdown["answer"] == 1.0


def test_stage2_tool_conditioned_rewards_tool_use():
    trace = (
        "<think>zoom first</think>"
        '<tool_call>{"name": "image_zoom_in_tool", "arguments": {"bbox_2d": [0, 0, 30, 30]}}</tool_call>'
        "<think>now read</think><answer>57</answer>"
    )
    resp = score_one(parse_request(_stage2_request(trace=trace)))
    assert resp.breakdown["tool_conditioned"] == 1.0


def test_stage2_judged_task():
    calls = []

    def judge(question, answer, target):
        calls.append((question, answer, target))
        return answer == target

    obj = _stage2_request(
        task="vqa",
        trace="<think>look</think><answer>left lung</answer>",
        target_answer="left lung",
        norm_range=None,
        question="which lung?",
    )
    resp = score_one(parse_request(obj), judge=judge)
    assert resp.breakdown["answer"] == 1.0
    assert calls == [("which lung?", "left lung", "left lung")]


def test_config_override_changes_format_weight():
    resp = score_one(parse_request(_stage2_request(config={"w_fmt": 0.25})))
    assert resp.breakdown["format"] == 0.25
    assert resp.breakdown["final"] == pytest.approx(1.25)


# --- error capture -----------------------------------------------------------------


def test_score_obj_wraps_parse_errors():
    resp = score_obj({"id": "x", "stage": 9})
    assert not resp.ok and resp.request_id == "x"
    assert resp.error.startswith("missing_field") or resp.error.startswith("bad_stage")


def test_score_obj_maps_judge_unavailability():
    def judge(question, answer, target):
        raise JudgeUnavailable("endpoint down")

    obj = _stage2_request(task="vqa", target_answer="yes", norm_range=None)
    resp = score_obj(obj, judge=judge)
    assert not resp.ok
    assert resp.error.startswith("judge_unavailable:")


def test_score_obj_maps_unexpected_failures_to_internal():
    obj = _stage2_request(norm_range="wat")
    resp = score_obj(obj)
    assert not resp.ok
    assert resp.error.startswith("internal:")


def test_score_obj_requires_mapping():
    resp = score_obj(["not", "a", "request"])
    assert not resp.ok and resp.request_id == ""


# --- canonical serialization ----------------------------------------------------------


def test_response_json_is_canonical_and_stable():
    resp1 = score_one(parse_request(_zoom_request()))
    resp2 = score_one(parse_request(_zoom_request()))
    assert response_to_json(resp1) == response_to_json(resp2)
    obj = json.loads(response_to_json(resp1))
    assert obj["breakdown"]["per_state"] == [[1, 1.0]]
    assert obj["ok"] is True and obj["id"] == "r1"
    # keys are sorted and the encoding is compact
    text = response_to_json(resp1)
    assert text == json.dumps(json.loads(text), sort_keys=True, separators=(",", ":"))


def test_response_json_timing_is_opt_in():
    resp = score_one(parse_request(_zoom_request()), with_timing=True)
    assert "timing_ms" not in json.loads(response_to_json(resp))
    assert "timing_ms" in json.loads(response_to_json(resp, include_timing=True))
