"""Tool-usage accounting tests: hand-counted aggregates, grouping,
executed-only filtering, and the two renderers."""

from __future__ import annotations

import pytest

from vtrl.stats import (
    CATEGORIES,
    EpisodeUsage,
    collect_usage,
    render_csv,
    render_table,
    usage_report,
)
from vtrl.toolbox import (
    TOOL_FLIP,
    TOOL_HLINE,
    TOOL_MARK,
    TOOL_ROTATE,
    TOOL_VLINE,
    TOOL_ZOOM,
)
from vtrl.trace import parse_trace


def _episodes():
    # 4 episodes, 5 calls total: zoom 3, hline 1, flip 1
    return [
        EpisodeUsage.from_names("a", [TOOL_ZOOM, TOOL_HLINE]),
        EpisodeUsage.from_names("a", [TOOL_ZOOM]),
        EpisodeUsage.from_names("b", [TOOL_ZOOM, TOOL_FLIP]),
        EpisodeUsage.from_names("b", []),
    ]


def test_hand_counted_aggregates():
    report = collect_usage(_episodes())
    st = report.overall
    assert st.episodes == 4
    assert st.total_calls == 5
    assert st.mean_calls == pytest.approx(5 / 4)
    assert st.tool_counts[TOOL_ZOOM] == 3
    assert st.tool_fractions[TOOL_ZOOM] == pytest.approx(0.6)
    assert st.category_fractions["zoom"] == pytest.approx(0.6)
    assert st.category_fractions["line"] == pytest.approx(0.2)
    assert st.category_fractions["flip"] == pytest.approx(0.2)
    assert st.composite_ratio == pytest.approx(0.5)  # 2 of 4 used >= 2 tools
    assert st.distribution_defined
    assert sum(st.category_fractions.values()) == pytest.approx(1.0)


def test_groups_are_split_and_sorted():
    report = collect_usage(_episodes())
    assert list(report.groups) == ["a", "b"]
    assert report.groups["a"].episodes == 2
    assert report.groups["a"].total_calls == 3
    assert report.groups["b"].mean_calls == pytest.approx(1.0)
    assert report.groups["b"].composite_ratio == pytest.approx(0.5)


def test_reorder_and_duplication_behavior():
    eps = _episodes()
    shuffled = collect_usage(list(reversed(eps))).overall
    assert shuffled == collect_usage(eps).overall
    doubled = collect_usage(eps + eps).overall
    assert doubled.episodes == 8 and doubled.total_calls == 10
    assert doubled.mean_calls == collect_usage(eps).overall.mean_calls
    assert doubled.tool_fractions == collect_usage(eps).overall.tool_fractions


def test_composite_needs_distinct_tools():
    # three calls but all the same tool: not a composite episode
    mono = EpisodeUsage.from_names("g", [TOOL_ZOOM, TOOL_ZOOM, TOOL_ZOOM])
    duo = EpisodeUsage.from_names("g", [TOOL_HLINE, TOOL_VLINE])
    report = collect_usage([mono, duo])
    assert report.overall.composite_ratio == pytest.approx(0.5)
    # hline and vline are distinct tools in the same category
    assert report.overall.category_fractions["line"] == pytest.approx(0.4)


def test_empty_log_is_defined_about_being_undefined():
    report = collect_usage([])
    assert report.overall.episodes == 0
    assert report.overall.mean_calls == 0.0
    assert not report.overall.distribution_defined
    quiet = collect_usage([EpisodeUsage.from_names("g", [])])
    assert quiet.overall.episodes == 1
    assert not quiet.overall.distribution_defined
    # renderers must not choke on the degenerate report
    assert "overall" in render_table(report)
    assert render_csv(report).count("\n") >= 2


def test_executed_only_drops_rejected_calls():
    eps = [
        EpisodeUsage.from_names(
            "g", [TOOL_ZOOM, TOOL_MARK, TOOL_ROTATE], ok=[True, False, True]
        )
    ]
    every = collect_usage(eps, executed_only=False)
    ran = collect_usage(eps, executed_only=True)
    assert every.overall.total_calls == 3
    assert ran.overall.total_calls == 2
    assert ran.overall.tool_counts[TOOL_MARK] == 0
    assert ran.executed_only and not every.executed_only


def test_ok_flags_must_align():
    with pytest.raises(ValueError):
        EpisodeUsage.from_names("g", [TOOL_ZOOM], ok=[True, False])


def _traj(text: str):
    traj, violations = parse_trace(text)
    assert violations == []
    return traj


def test_usage_report_from_trajectories():
    logs = [
        _traj(
            "<think>a</think>"
            '<tool_call>{"name": "image_zoom_in_tool", "arguments": {"bbox_2d": [0, 0, 10, 10]}}</tool_call>'
            "<think>b</think>"
            '<tool_call>{"name": "image_flip_tool", "arguments": {"direction": "vertical"}}</tool_call>'
            "<think>c</think><answer>1</answer>"
        ),
        _traj("<think>direct</think><answer>2</answer>"),
    ]
    report = usage_report(logs, grouping=["treat", "control"])
    assert report.overall.episodes == 2
    assert report.overall.total_calls == 2
    assert report.groups["treat"].composite_ratio == 1.0
    assert report.groups["control"].total_calls == 0
    with pytest.raises(ValueError):
        usage_report(logs, grouping=["only-one"])


def test_usage_report_replays_for_executed_only():
    # the zoom targets a region far outside a 16x16 image: it cannot execute
    logs = [
        _traj(
            "<think>a</think>"
            '<tool_call>{"name": "image_zoom_in_tool", "arguments": {"bbox_2d": [100, 100, 200, 200]}}</tool_call>'
            "<think>b</think>"
            '<tool_call>{"name": "image_rotate_tool", "arguments": {"angle": 90}}</tool_call>'
            "<think>c</think><answer>1</answer>"
        )
    ]
    ran = usage_report(logs, executed_only=True, dims=[(16, 16)])
    assert ran.overall.total_calls == 1
    assert ran.overall.tool_counts[TOOL_ROTATE] == 1
    assert ran.overall.tool_counts[TOOL_ZOOM] == 0
    with pytest.raises(ValueError):
        usage_report(logs, executed_only=True)  # dims are required


def test_renderers_carry_the_same_numbers():
    report = collect_usage(_episodes())
    csv_text = render_csv(report)
    lines = csv_text.strip().splitlines()
    header = lines[0].split(",")
    overall = dict(zip(header, lines[1].split(",")))
    assert overall["scope"] == "overall"
    assert overall["episodes"] == "4"
    assert overall["total_calls"] == "5"
    assert float(overall["frac_zoom"]) == pytest.approx(0.6)
    assert float(overall["composite_ratio"]) == pytest.approx(0.5)
    for cat in CATEGORIES:
        assert f"frac_cat_{cat}" in header
    table = render_table(report)
    assert "overall" in table and "a" in table and "b" in table
