"""Tool-usage accounting over scored episodes.

Aggregates how often each tool is invoked, what fraction of calls go to each
tool (and to the coarser zoom/rotate/flip/line/point categories), and how
many episodes combine two or more distinct tools. Counts can be restricted
to calls that actually executed, dropping ones the toolbox rejected.
"""

from __future__ import annotations

import io
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

from .toolbox import (
    TOOL_FLIP,
    TOOL_HLINE,
    TOOL_MARK,
    TOOL_NAMES,
    TOOL_ROTATE,
    TOOL_VLINE,
    TOOL_ZOOM,
)

__all__ = [
    "CATEGORY_OF",
    "CATEGORIES",
    "TOOL_SHORT",
    "EpisodeUsage",
    "UsageStats",
    "UsageReport",
    "collect_usage",
    "usage_report",
    "render_table",
    "render_csv",
]

CATEGORY_OF = {
    TOOL_ZOOM: "zoom",
    TOOL_ROTATE: "rotate",
    TOOL_FLIP: "flip",
    TOOL_HLINE: "line",
    TOOL_VLINE: "line",
    TOOL_MARK: "point",
}
CATEGORIES = ("zoom", "rotate", "flip", "line", "point")


@dataclass(frozen=True)
class EpisodeUsage:
    """One episode's tool calls: (tool name, executed-ok flag) per call."""

    group: str
    calls: tuple[tuple[str, bool], ...]

    @classmethod
    def from_names(
        cls, group: str, names: Sequence[str], ok: Sequence[bool] | None = None
    ) -> "EpisodeUsage":
        if ok is None:
            ok = [True] * len(names)
        if len(ok) != len(names):
            raise ValueError("ok flags must align with tool names")
        return cls(group, tuple(zip([str(n) for n in names], [bool(b) for b in ok])))


@dataclass(frozen=True)
class UsageStats:
    episodes: int
    total_calls: int
    mean_calls: float
    tool_counts: Mapping[str, int]
    tool_fractions: Mapping[str, float]
    category_fractions: Mapping[str, float]
    composite_ratio: float
    # False when there were no calls (or no episodes): the per-tool
    # distribution is undefined and the zero fractions are placeholders.
    distribution_defined: bool = True


@dataclass(frozen=True)
class UsageReport:
    overall: UsageStats
    groups: Mapping[str, UsageStats]
    executed_only: bool


def _stats_for(episodes: list[tuple[str, ...]]) -> UsageStats:
    n_ep = len(episodes)
    counts = {name: 0 for name in TOOL_NAMES}
    composite = 0
    total = 0
    for names in episodes:
        for name in names:
            if name in counts:
                counts[name] += 1
                total += 1
        if len({n for n in names if n in counts}) >= 2:
            composite += 1
    fractions = {
        name: (counts[name] / total if total else 0.0) for name in TOOL_NAMES
    }
    cat = {c: 0.0 for c in CATEGORIES}
    for name, frac in fractions.items():
        cat[CATEGORY_OF[name]] += frac
    return UsageStats(
        episodes=n_ep,
        total_calls=total,
        mean_calls=(total / n_ep if n_ep else 0.0),
        tool_counts=counts,
        tool_fractions=fractions,
        category_fractions=cat,
        composite_ratio=(composite / n_ep if n_ep else 0.0),
        distribution_defined=total > 0,
    )


def collect_usage(
    episodes: Iterable[EpisodeUsage], executed_only: bool = False
) -> UsageReport:
    """Aggregate per-tool usage overall and per group.

    With executed_only, calls whose ok flag is False (rejected by the
    toolbox) are excluded from every count; the default counts every parsed
    call regardless of execution success.
    """
    by_group: dict[str, list[tuple[str, ...]]] = {}
    flat: list[tuple[str, ...]] = []
    for ep in episodes:
        names = tuple(
            name for name, ok in ep.calls if (ok or not executed_only)
        )
        flat.append(names)
        by_group.setdefault(ep.group, []).append(names)
    return UsageReport(
        overall=_stats_for(flat),
        groups={g: _stats_for(eps) for g, eps in sorted(by_group.items())},
        executed_only=executed_only,
    )


def usage_report(
    logs,
    grouping: Sequence[str] | None = None,
    executed_only: bool = False,
    dims: Sequence[tuple[int, int]] | None = None,
) -> UsageReport:
    """Usage aggregation straight from parsed trajectories.

    `grouping` optionally labels each trajectory (same length as logs);
    ungrouped logs all land in "all". With executed_only, each trajectory is
    replayed against its (width, height) from `dims` to decide which calls
    actually executed.
    """
    logs = list(logs)
    if grouping is not None and len(grouping) != len(logs):
        raise ValueError("grouping must align with logs")
    if executed_only:
        if dims is None or len(dims) != len(logs):
            raise ValueError("executed_only needs (width, height) per log")
        from .toolbox import EpisodeState, replay_calls

        episodes = []
        for k, traj in enumerate(logs):
            w, h = dims[k]
            _, _, ok = replay_calls(EpisodeState.start(w, h), list(traj.tool_calls))
            group = grouping[k] if grouping is not None else "all"
            episodes.append(EpisodeUsage.from_names(group, list(traj.tool_names), ok))
    else:
        episodes = [
            EpisodeUsage.from_names(
                grouping[k] if grouping is not None else "all",
                list(traj.tool_names),
            )
            for k, traj in enumerate(logs)
        ]
    return collect_usage(episodes, executed_only=executed_only)


# Column-name stems shared with the curriculum metrics schema, so per-tool
# fraction columns line up across both renderers.
TOOL_SHORT = {
    TOOL_ZOOM: "zoom",
    TOOL_ROTATE: "rotate",
    TOOL_FLIP: "flip",
    TOOL_HLINE: "hline",
    TOOL_VLINE: "vline",
    TOOL_MARK: "mark",
}
_SHORT = TOOL_SHORT


def _rows(report: UsageReport) -> list[tuple[str, UsageStats]]:
    return [("overall", report.overall)] + list(report.groups.items())


def render_csv(report: UsageReport) -> str:
    buf = io.StringIO()
    cols = (
        ["scope", "episodes", "total_calls", "mean_calls", "composite_ratio"]
        + [f"frac_{_SHORT[n]}" for n in TOOL_NAMES]
        + [f"frac_cat_{c}" for c in CATEGORIES]
        + ["distribution_defined"]
    )
    buf.write(",".join(cols) + "\n")
    for scope, st in _rows(report):
        cells = [
            scope,
            str(st.episodes),
            str(st.total_calls),
            f"{st.mean_calls:.6f}",
            f"{st.composite_ratio:.6f}",
        ]
        cells += [f"{st.tool_fractions[n]:.6f}" for n in TOOL_NAMES]
        cells += [f"{st.category_fractions[c]:.6f}" for c in CATEGORIES]
        cells.append("1" if st.distribution_defined else "0")
        buf.write(",".join(cells) + "\n")
    return buf.getvalue()


def render_table(report: UsageReport) -> str:
    head = ["scope", "eps", "calls", "mean", "multi"]
    head += [_SHORT[n] for n in TOOL_NAMES]
    head += [f"[{c}]" for c in CATEGORIES]
    rows = [head]
    for scope, st in _rows(report):
        row = [
            scope + ("" if st.distribution_defined else " (no calls)"),
            str(st.episodes),
            str(st.total_calls),
            f"{st.mean_calls:.2f}",
            f"{st.composite_ratio:.2f}",
        ]
        row += [f"{st.tool_fractions[n]:.3f}" for n in TOOL_NAMES]
        row += [f"{st.category_fractions[c]:.3f}" for c in CATEGORIES]
        rows.append(row)
    widths = [max(len(r[i]) for r in rows) for i in range(len(head))]
    lines = []
    for i, row in enumerate(rows):
        lines.append(
            "  ".join(cell.rjust(w) if j else cell.ljust(w) for j, (cell, w) in enumerate(zip(row, widths)))
        )
        if i == 0:
            lines.append("  ".join("-" * w for w in widths))
    note = " (executed calls only)" if report.executed_only else ""
    return "tool usage" + note + "\n" + "\n".join(lines) + "\n"
