#!/usr/bin/env python3
"""Regenerate the frozen scoring fixtures under tests/fixtures/.

The fixture batch pins the scorer's observable wire behavior:

* requests.jsonl — a mixed batch covering every request shape the scorer
  accepts (both stages, every supervision kind, answer forms, config
  overrides, base64- and path-backed images, violation cases),
* img.png      — deterministic image backing the path-based request,
* golden.jsonl — the expected response line for each request, in request
  order, scored with timing disabled.

Determinism contract: scoring this batch must reproduce golden.jsonl
byte for byte, in any request order, through the CLI and the service
alike. Regenerate only when the scorer's observable behavior is meant
to change, and commit the diff.

Run from the repository root:  python3 scripts/make_fixtures.py
"""

from __future__ import annotations

import base64
import json
from pathlib import Path

from vtrl.png import encode_png
from vtrl.scoring import response_to_json, score_obj
from vtrl.synth import SynthConfig, gen_dataset

FIXTURES = Path(__file__).resolve().parent.parent / "tests" / "fixtures"


def think(text: str = "look") -> str:
    return f"<think>{text}</think>"


def tool(name: str, **args) -> str:
    payload = {"name": name, "arguments": args}
    return f"<tool_call>{json.dumps(payload, sort_keys=True)}</tool_call>"


def answer(text) -> str:
    return f"<answer>{text}</answer>"


def zoom(box, **extra) -> str:
    return tool("image_zoom_in_tool", bbox_2d=list(box), **extra)


def build_requests() -> list[dict]:
    dims = {"width": 64, "height": 64}
    zoom_gt = {"kind": "zoom", "boxes": [[10.0, 10.0, 40.0, 40.0]]}
    reqs: list[dict] = []

    def add(rid: str, stage: int, task: str, trace: str, **extra):
        reqs.append(
            {
                "id": rid,
                "stage": stage,
                "task": task,
                "trace": trace,
                "image": dict(dims),
                **extra,
            }
        )

    # --- stage 1: zoom -----------------------------------------------------
    add(
        "fx-zoom-exact", 1, "zoom",
        think() + zoom([10, 10, 40, 40]) + think("done") + answer(0),
        ground_truth=zoom_gt,
    )
    add(
        "fx-zoom-partial", 1, "zoom",
        think() + zoom([20, 20, 50, 50]) + think("hm") + answer(0),
        ground_truth=zoom_gt,
    )
    add(
        "fx-zoom-chain", 1, "zoom",
        think() + zoom([5, 5, 60, 60])
        + think("closer") + zoom([5, 5, 35, 35], target_image=1)
        + think() + answer(0),
        ground_truth=zoom_gt,
    )
    add(
        "fx-zoom-after-rotate", 1, "zoom",
        think() + tool("image_rotate_tool", angle=90)
        + think("now crop") + zoom([10, 10, 40, 40])
        + think() + answer(0),
        ground_truth=zoom_gt,
    )
    add(
        "fx-zoom-binarized", 1, "zoom",
        think() + zoom([12, 12, 42, 42]) + think() + answer(0),
        ground_truth=zoom_gt,
        config={"zoom_binarize": True, "zoom_threshold": 0.5},
    )

    # --- stage 1: draw -----------------------------------------------------
    draw_line_gt = {"kind": "draw", "primitives": [{"kind": "x_line", "c": 32.0}]}
    add(
        "fx-draw-line-exact", 1, "draw",
        think() + tool("image_draw_vertical_line_tool", width_location=32)
        + think() + answer(1),
        ground_truth=draw_line_gt,
    )
    add(
        "fx-draw-line-offset", 1, "draw",
        think() + tool("image_draw_vertical_line_tool", width_location=40)
        + think() + answer(1),
        ground_truth=draw_line_gt,
    )
    add(
        "fx-draw-marks-2v2", 1, "draw",
        think()
        + tool("image_mark_points_tool", point_2d=[[20, 20], [52, 52]])
        + think() + answer(1),
        ground_truth={
            "kind": "draw",
            "primitives": [
                {"kind": "point", "x": 20.0, "y": 20.0},
                {"kind": "point", "x": 44.0, "y": 44.0},
            ],
        },
    )
    add(
        "fx-draw-after-rotate", 1, "draw",
        think() + tool("image_rotate_tool", angle=90)
        + think("ruler") + tool("image_draw_horizontal_line_tool", height_location=12)
        + think() + answer(1),
        ground_truth={"kind": "draw", "primitives": [{"kind": "x_line", "c": 12.0}]},
    )
    add(
        "fx-draw-styled", 1, "draw",
        think()
        + tool(
            "image_draw_vertical_line_tool",
            width_location=32,
            color="blue",
            thickness=5,
            style="dashed",
        )
        + think() + answer(1),
        ground_truth=draw_line_gt,
    )

    # --- stage 1: rotflip ----------------------------------------------------
    add(
        "fx-rotflip-restore", 1, "rotflip",
        think("upright?") + tool("image_rotate_tool", angle=270)
        + think() + answer(1),
        ground_truth={"kind": "rotflip", "target": {"quarter_turns": 3, "mirrored": False}},
    )
    add(
        "fx-rotflip-mirror", 1, "rotflip",
        think() + tool("image_flip_tool", direction="horizontal")
        + think() + tool("image_rotate_tool", angle=90)
        + think("pick") + answer(2),
        ground_truth={"kind": "rotflip", "target": {"quarter_turns": 1, "mirrored": True}},
    )
    add(
        "fx-rotflip-element-map", 1, "rotflip",
        think() + tool("image_rotate_tool", angle=180)
        + think() + answer('{"A": 1, "B": 0}'),
        ground_truth={"kind": "rotflip", "target": {"quarter_turns": 2, "mirrored": False}},
    )

    # --- stage 1: degraded traces ---------------------------------------------
    add(
        "fx-format-broken", 1, "zoom",
        "<think>never closed" + zoom([10, 10, 40, 40]) + answer(0),
        ground_truth=zoom_gt,
    )
    add("fx-no-tools", 1, "zoom", think() + answer(0), ground_truth=zoom_gt)
    add(
        "fx-turn-limit", 1, "zoom",
        think() + zoom([10, 10, 40, 40])
        + think() + zoom([12, 12, 38, 38])
        + think() + answer(0),
        ground_truth=zoom_gt,
        max_turns=1,
    )
    add(
        "fx-empty-zoom", 1, "zoom",
        think() + zoom([30, 30, 30, 40]) + think() + answer(0),
        ground_truth=zoom_gt,
    )

    # --- stage 2 ---------------------------------------------------------------
    add(
        "fx-answer-exact", 2, "read_value",
        think() + answer(57), target_answer=57, norm_range=100,
    )
    add(
        "fx-answer-near", 2, "read_value",
        think() + answer(62), target_answer=57, norm_range=100,
    )
    add(
        "fx-answer-pair", 2, "read_value",
        think() + answer("x=40, y=70"),
        target_answer=[30, 70], norm_range=[100, 100],
    )
    add(
        "fx-answer-count", 2, "compare_count",
        think() + zoom([4, 4, 60, 60]) + think("count") + answer(7),
        target_answer=7, norm_range=12,
    )
    add(
        "fx-answer-freetext", 2, "vqa",
        think() + answer("the red marker"),
        target_answer="THE RED  marker", norm_range=None,
    )
    add(
        "fx-config-fmt", 2, "read_value",
        think() + answer(57), target_answer=57, norm_range=100,
        config={"w_fmt": 0.25},
    )
    return reqs


def synth_backed_requests() -> list[dict]:
    docs = gen_dataset(SynthConfig(seed=424242, n_read_value=0, n_compare_count=2, aug_prob=0.0))
    img_path = FIXTURES / "img.png"
    img_path.write_bytes(encode_png(docs[0].image))
    reqs = [
        {
            "id": "fx-image-path",
            "stage": 2,
            "task": docs[0].task,
            "trace": think() + answer(docs[0].answer),
            "image": {"path": "img.png"},
            "target_answer": docs[0].answer,
            "norm_range": docs[0].norm_range,
        },
        {
            "id": "fx-image-base64",
            "stage": 2,
            "task": docs[1].task,
            "trace": think() + answer(docs[1].answer),
            "image": {
                "png_base64": base64.b64encode(encode_png(docs[1].image)).decode()
            },
            "target_answer": docs[1].answer,
            "norm_range": docs[1].norm_range,
        },
    ]
    return reqs


def main() -> None:
    FIXTURES.mkdir(parents=True, exist_ok=True)
    requests = build_requests() + synth_backed_requests()
    ids = [r["id"] for r in requests]
    assert len(set(ids)) == len(ids), "fixture ids must be unique"

    request_lines = [
        json.dumps(r, sort_keys=True, separators=(",", ":")) for r in requests
    ]
    golden_lines = []
    for obj in requests:
        resp = score_obj(obj, base_dir=str(FIXTURES), with_timing=False)
        if not resp.ok:
            raise SystemExit(f"fixture {obj['id']} failed to score: {resp.error}")
        golden_lines.append(response_to_json(resp, include_timing=False))

    (FIXTURES / "requests.jsonl").write_text("".join(l + "\n" for l in request_lines))
    (FIXTURES / "golden.jsonl").write_text("".join(l + "\n" for l in golden_lines))
    print(f"wrote {len(requests)} fixtures to {FIXTURES}")


if __name__ == "__main__":
    main()
