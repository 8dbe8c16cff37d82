"""Command-line front end.

Subcommands:

* ``gen-data``  — render synthetic chart documents and a manifest.
* ``score``     — batch-score NDJSON requests, or join a dataset manifest
  with a trajectory log and score the pairs.
* ``simulate``  — run the toy GRPO curriculum and write a metrics CSV.
* ``stats``     — tool-usage report over a trajectory log.
* ``serve``     — NDJSON scoring service over stdio or TCP.

A ``--config FILE`` (flat JSON whose keys are reward and/or simulation
settings) supplies defaults; explicit flags override file values, and a
request's own ``config`` object overrides both.

Exit codes: 0 success; 2 bad input (including any request rejected as
malformed); 3 judge backend failure; 4 internal error. Batch scoring
reports per-request failures in-band as ``ok:false`` lines and keeps
going — the exit code is the worst severity seen.
"""

from __future__ import annotations

import argparse
import json
import shlex
import sys
from pathlib import Path

from .currsim import (
    MODES,
    GrpoConfig,
    run_curriculum,
    summarize_final,
    write_metrics_csv,
)
from .judge import SubprocessJudge
from .rewards import RewardConfig
from .scoring import ScoreResponse, response_to_json
from .service import DEFAULT_MAX_INFLIGHT, ServiceConfig, TcpScoreServer, serve_stdio, serve_stream
from .stats import EpisodeUsage, collect_usage, render_csv, render_table
from .synth import (
    TASK_COMPARE_COUNT,
    TASK_READ_VALUE,
    SynthConfig,
    gen_dataset,
    load_manifest,
    write_dataset,
)
from .toolbox import DEFAULT_MAX_TURNS, EpisodeState, replay_calls
from .trace import parse_trace

__all__ = ["main"]

EXIT_OK = 0
EXIT_BAD_INPUT = 2
EXIT_JUDGE = 3
EXIT_INTERNAL = 4

_REWARD_KEYS = tuple(RewardConfig.__dataclass_fields__)
_GRPO_KEYS = tuple(GrpoConfig.__dataclass_fields__)


class CliError(Exception):
    """Operator-level failure with a machine-readable reason and exit code."""

    def __init__(self, reason: str, code: int = EXIT_BAD_INPUT):
        super().__init__(reason)
        self.reason = reason
        self.code = code


# --- config file ---------------------------------------------------------------


def load_config_file(path: str | None) -> dict:
    """Flat JSON object whose keys are RewardConfig and/or GrpoConfig fields."""
    if path is None:
        return {}
    try:
        with open(path, "r", encoding="utf-8") as fh:
            obj = json.load(fh)
    except OSError as exc:
        raise CliError(f"config_unreadable:{exc}") from exc
    except json.JSONDecodeError as exc:
        raise CliError(f"config_bad_json:{exc}") from exc
    if not isinstance(obj, dict):
        raise CliError("config_not_object")
    unknown = set(obj) - set(_REWARD_KEYS) - set(_GRPO_KEYS)
    if unknown:
        raise CliError(f"config_unknown_keys:{sorted(unknown)}")
    return obj


def _merge_settings(keys, file_cfg: dict, args) -> dict:
    """File values for `keys`, overridden by any flag the user actually set."""
    merged = {k: file_cfg[k] for k in keys if k in file_cfg}
    for key in keys:
        value = getattr(args, key, None)
        if value is not None:
            merged[key] = value
    return merged


def reward_overrides(args, file_cfg: dict) -> dict | None:
    merged = _merge_settings(_REWARD_KEYS, file_cfg, args)
    if not merged:
        return None
    try:
        RewardConfig.from_json_dict(merged)
    except (ValueError, TypeError) as exc:
        raise CliError(f"bad_reward_config:{exc}") from exc
    return merged


def grpo_config(args, file_cfg: dict) -> GrpoConfig:
    merged = _merge_settings(_GRPO_KEYS, file_cfg, args)
    try:
        return GrpoConfig(**merged)
    except (ValueError, TypeError) as exc:
        raise CliError(f"bad_simulation_config:{exc}") from exc


def _add_reward_flags(sub: argparse.ArgumentParser) -> None:
    group = sub.add_argument_group(
        "reward settings",
        "Applied to requests that carry no 'config' of their own. "
        "Defaults: w_fp=0.1, w_fn=1.0, zoom_binarize=off, "
        "zoom_threshold=0.5, w_fmt=0.5.",
    )
    group.add_argument("--w-fp", dest="w_fp", type=float, default=None)
    group.add_argument("--w-fn", dest="w_fn", type=float, default=None)
    group.add_argument(
        "--zoom-binarize",
        dest="zoom_binarize",
        action=argparse.BooleanOptionalAction,
        default=None,
    )
    group.add_argument(
        "--zoom-threshold", dest="zoom_threshold", type=float, default=None
    )
    group.add_argument("--w-fmt", dest="w_fmt", type=float, default=None)


def _judge_from_args(args):
    command = getattr(args, "judge_cmd", None)
    if not command:
        return None
    return SubprocessJudge(tuple(shlex.split(command)))


# --- output helpers -------------------------------------------------------------


class _LineSink:
    """Serialized line writer that tracks the worst response severity."""

    def __init__(self, stream):
        self.stream = stream
        self.worst = EXIT_OK
        self.lines = 0

    def write_line(self, text: str) -> None:
        self.stream.write(text + "\n")
        self.lines += 1
        self.worst = max(self.worst, _severity(text))

    def flush(self) -> None:
        self.stream.flush()


def _severity(response_line: str) -> int:
    try:
        obj = json.loads(response_line)
    except json.JSONDecodeError:
        return EXIT_INTERNAL
    if not isinstance(obj, dict) or obj.get("ok"):
        return EXIT_OK
    error = str(obj.get("error", ""))
    if error.startswith("judge_unavailable"):
        return EXIT_JUDGE
    if error.startswith("internal"):
        return EXIT_INTERNAL
    return EXIT_BAD_INPUT


def _open_out(path: str | None):
    if path is None or path == "-":
        return sys.stdout, False
    try:
        return open(path, "w", encoding="utf-8"), True
    except OSError as exc:
        raise CliError(f"output_unwritable:{exc}") from exc


# --- gen-data -------------------------------------------------------------------

_TASK_ALIASES = {
    "read-value": TASK_READ_VALUE,
    TASK_READ_VALUE: TASK_READ_VALUE,
    "compare-count": TASK_COMPARE_COUNT,
    TASK_COMPARE_COUNT: TASK_COMPARE_COUNT,
    "both": "both",
}


def cmd_gen_data(args, file_cfg: dict) -> int:
    task = _TASK_ALIASES[args.task]
    n_read = args.count if task in (TASK_READ_VALUE, "both") else 0
    n_compare = args.count if task in (TASK_COMPARE_COUNT, "both") else 0
    try:
        cfg = SynthConfig(
            seed=args.seed,
            n_read_value=n_read,
            n_compare_count=n_compare,
            aug_prob=args.aug_prob,
        )
    except ValueError as exc:
        raise CliError(f"bad_gen_config:{exc}") from exc
    docs = gen_dataset(cfg)
    manifest = write_dataset(docs, args.out)
    print(json.dumps({"docs": len(docs), "manifest": str(manifest)}))
    return EXIT_OK


# --- score ----------------------------------------------------------------------


def _read_jsonl(path: str) -> list:
    rows = []
    try:
        with open(path, "r", encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                line = line.strip()
                if not line:
                    continue
                try:
                    rows.append(json.loads(line))
                except json.JSONDecodeError as exc:
                    raise CliError(f"bad_jsonl:{path}:{lineno}:{exc.msg}") from exc
    except OSError as exc:
        raise CliError(f"input_unreadable:{exc}") from exc
    return rows


def _iter_request_lines(path: str):
    try:
        with open(path, "r", encoding="utf-8") as fh:
            yield from fh
    except OSError as exc:
        raise CliError(f"input_unreadable:{exc}") from exc


def _join_requests(args) -> tuple[list[str], list[ScoreResponse]]:
    """Pair manifest rows with trajectory-log entries into request lines.

    Pairs that cannot form a valid request (unknown document, no matching
    supervision record) are reported as ok:false responses so the rest of
    the batch still scores.
    """
    rows = {row["id"]: row for row in load_manifest(args.manifest)}
    entries = _read_jsonl(args.traces)
    lines: list[str] = []
    failures: list[ScoreResponse] = []
    for k, entry in enumerate(entries):
        if not isinstance(entry, dict) or "trace" not in entry:
            raise CliError(f"bad_trace_entry:{args.traces}:{k + 1}")
        rid = str(entry.get("id", f"req-{k}"))
        doc_id = str(entry.get("doc", entry.get("id", "")))
        row = rows.get(doc_id)
        if row is None:
            failures.append(
                ScoreResponse(request_id=rid, ok=False, error=f"unknown_doc:{doc_id}")
            )
            continue
        req = {
            "id": rid,
            "stage": args.stage,
            "trace": entry["trace"],
            "image": {"width": row["width"], "height": row["height"]},
        }
        if args.stage == 1:
            kind = entry.get("task", args.task)
            if kind is None:
                failures.append(
                    ScoreResponse(request_id=rid, ok=False, error="missing_task")
                )
                continue
            gt = next(
                (g for g in row.get("supervision", ()) if g.get("kind") == kind),
                None,
            )
            if gt is None:
                failures.append(
                    ScoreResponse(
                        request_id=rid, ok=False, error=f"missing_supervision:{kind}"
                    )
                )
                continue
            req["task"] = kind
            req["ground_truth"] = gt
        else:
            req["task"] = row["task"]
            req["question"] = row.get("question", "")
            req["target_answer"] = row.get("answer")
            req["norm_range"] = row.get("norm_range")
        if "max_turns" in entry:
            req["max_turns"] = entry["max_turns"]
        lines.append(json.dumps(req, sort_keys=True, separators=(",", ":")))
    return lines, failures


def cmd_score(args, file_cfg: dict) -> int:
    if args.requests is not None and args.manifest is not None:
        raise CliError("choose_one:--requests or --manifest/--traces")
    if args.requests is None and (args.manifest is None or args.traces is None):
        raise CliError("need_input:--requests or both --manifest and --traces")

    failures: list[ScoreResponse] = []
    if args.requests is not None:
        if not Path(args.requests).is_file():
            raise CliError(f"input_unreadable:{args.requests}")
        lines = _iter_request_lines(args.requests)
        base_dir = args.base_dir or str(Path(args.requests).parent)
    else:
        if args.stage is None:
            raise CliError("need_stage:--stage 1 or 2 with --manifest")
        lines, failures = _join_requests(args)
        base_dir = args.base_dir or str(Path(args.manifest).parent)

    try:
        cfg = ServiceConfig(
            max_inflight=args.jobs,
            base_dir=base_dir,
            include_timing=args.timing,
            judge=_judge_from_args(args),
            default_request_config=reward_overrides(args, file_cfg),
        )
    except ValueError as exc:
        raise CliError(f"bad_service_config:{exc}") from exc
    out, close = _open_out(args.out)
    sink = _LineSink(out)
    try:
        for resp in failures:
            sink.write_line(response_to_json(resp))
        serve_stream(lines, sink.write_line, cfg)
        sink.flush()
    finally:
        if close:
            out.close()
    return sink.worst


# --- simulate -------------------------------------------------------------------


def cmd_simulate(args, file_cfg: dict) -> int:
    cfg = grpo_config(args, file_cfg)
    modes = list(MODES) if args.mode == "all" else [args.mode]
    all_rows: list[dict] = []
    for mode in modes:
        rows = run_curriculum(cfg, mode)
        all_rows.extend(rows)
        summary = {"mode": mode, "seed": cfg.seed, **summarize_final(rows)}
        print(json.dumps(summary, sort_keys=True))
    write_metrics_csv(all_rows, args.out)
    return EXIT_OK


# --- stats ----------------------------------------------------------------------


def _episode_from_log(entry, lineno: int, executed_only: bool) -> EpisodeUsage:
    if isinstance(entry, str):
        entry = {"trace": entry}
    if not isinstance(entry, dict) or "trace" not in entry:
        raise CliError(f"bad_log_entry:{lineno}")
    traj, _ = parse_trace(str(entry["trace"]))
    group = str(entry.get("group", entry.get("task", "all")))
    ok = None
    if executed_only:
        if "width" not in entry or "height" not in entry:
            raise CliError(f"executed_only_needs_dims:{lineno}")
        start = EpisodeState.start(
            int(entry["width"]),
            int(entry["height"]),
            max_turns=int(entry.get("max_turns", DEFAULT_MAX_TURNS)),
        )
        _, _, ok = replay_calls(start, traj.tool_calls)
    return EpisodeUsage.from_names(group, traj.tool_names, ok)


def cmd_stats(args, file_cfg: dict) -> int:
    entries = _read_jsonl(args.log)
    episodes = [
        _episode_from_log(entry, k + 1, args.executed_only)
        for k, entry in enumerate(entries)
    ]
    report = collect_usage(episodes, executed_only=args.executed_only)
    rendered = render_csv(report) if args.csv else render_table(report)
    out, close = _open_out(args.out)
    try:
        out.write(rendered)
        if not rendered.endswith("\n"):
            out.write("\n")
        out.flush()
    finally:
        if close:
            out.close()
    return EXIT_OK


# --- serve ----------------------------------------------------------------------


def cmd_serve(args, file_cfg: dict) -> int:
    try:
        cfg = ServiceConfig(
            max_inflight=args.max_inflight,
            base_dir=args.base_dir,
            include_timing=args.timing,
            judge=_judge_from_args(args),
            default_request_config=reward_overrides(args, file_cfg),
        )
    except ValueError as exc:
        raise CliError(f"bad_service_config:{exc}") from exc
    if args.stdio:
        serve_stdio(cfg)
        return EXIT_OK
    server = TcpScoreServer(args.host, args.port, cfg)
    print(
        json.dumps({"listening": server.server_address[0], "port": server.bound_port}),
        flush=True,
    )
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
    return EXIT_OK


# --- parser ---------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vtrl",
        description=__doc__,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument(
        "--config",
        default=None,
        metavar="FILE",
        help="flat JSON file of reward/simulation settings; flags override it",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="render synthetic chart documents")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument(
        "--task",
        choices=sorted(_TASK_ALIASES),
        default="both",
        help="which generator to run (default: both)",
    )
    p.add_argument("--seed", type=int, default=0)
    p.add_argument(
        "--count",
        type=int,
        default=32,
        help="documents per selected task (default: 32)",
    )
    p.add_argument(
        "--aug-prob",
        type=float,
        default=0.7,
        help="probability a document is rotated/flipped (default: 0.7)",
    )
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser(
        "score",
        help="batch-score requests",
        description="Score NDJSON requests (--requests), or pair a dataset "
        "manifest with a trajectory log (--manifest/--traces). One response "
        "object per line; with --jobs 1 (the default) responses preserve "
        "input order.",
    )
    p.add_argument("--requests", default=None, help="NDJSON request file")
    p.add_argument("--manifest", default=None, help="dataset manifest.jsonl")
    p.add_argument(
        "--traces",
        default=None,
        help="trajectory log: one JSON object per line with id and trace",
    )
    p.add_argument(
        "--stage",
        type=int,
        choices=(1, 2),
        default=None,
        help="stage for manifest-joined requests",
    )
    p.add_argument(
        "--task",
        default=None,
        help="supervision kind (zoom|draw|rotflip) for stage-1 joins when "
        "trace entries don't name one",
    )
    p.add_argument("--out", default=None, help="response file (default: stdout)")
    p.add_argument(
        "--jobs",
        type=int,
        default=1,
        help="concurrent scoring workers; >1 may reorder output (default: 1)",
    )
    p.add_argument(
        "--timing",
        action=argparse.BooleanOptionalAction,
        default=False,
        help="include per-request timing (default: off, keeps output "
        "byte-reproducible)",
    )
    p.add_argument("--base-dir", default=None, help="root for relative image paths")
    p.add_argument(
        "--judge-cmd",
        default=None,
        help="external judge command for free-text answers (shell-quoted)",
    )
    _add_reward_flags(p)
    p.set_defaults(func=cmd_score)

    p = sub.add_parser(
        "simulate",
        help="run the toy GRPO curriculum",
        description="Trains the toy policy and writes one metrics row per "
        "step. Prints a JSON summary line per mode (tail-window tool rate, "
        "answer quality, reward).",
    )
    p.add_argument(
        "--mode",
        choices=MODES + ("all",),
        default="toolsrl",
        help="reward curriculum (default: toolsrl)",
    )
    p.add_argument("--out", required=True, help="metrics CSV path")
    g = p.add_argument_group(
        "simulation settings",
        "Defaults: group_size=16, clip_eps=0.2, lr=2.0, kl_coef=0.0, "
        "steps_per_stage=200, std_floor=1e-6, max_turns=6, pool_docs=6, "
        "seed=0, explore_eps=0.05.",
    )
    g.add_argument("--group-size", dest="group_size", type=int, default=None)
    g.add_argument("--clip-eps", dest="clip_eps", type=float, default=None)
    g.add_argument("--lr", dest="lr", type=float, default=None)
    g.add_argument("--kl-coef", dest="kl_coef", type=float, default=None)
    g.add_argument(
        "--steps-per-stage", dest="steps_per_stage", type=int, default=None
    )
    g.add_argument("--std-floor", dest="std_floor", type=float, default=None)
    g.add_argument("--max-turns", dest="max_turns", type=int, default=None)
    g.add_argument("--pool-docs", dest="pool_docs", type=int, default=None)
    g.add_argument("--seed", dest="seed", type=int, default=None)
    g.add_argument("--explore-eps", dest="explore_eps", type=float, default=None)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser(
        "stats",
        help="tool-usage report over a trajectory log",
        description="Reads a JSONL log (each line a trace string or an "
        "object with trace and optional group/task, width, height) and "
        "prints usage statistics overall and per group.",
    )
    p.add_argument("--log", required=True, help="trajectory log (JSONL)")
    p.add_argument(
        "--executed-only",
        action="store_true",
        help="count only calls the toolbox executed (entries need "
        "width/height for replay)",
    )
    p.add_argument("--csv", action="store_true", help="CSV instead of a table")
    p.add_argument("--out", default=None, help="output file (default: stdout)")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser(
        "serve",
        help="NDJSON scoring service",
        description="One JSON request per line in, one response per line "
        "out; responses may be reordered, so match them by id. At most "
        "--max-inflight requests score concurrently; further input "
        "backpressures the transport.",
    )
    mode = p.add_mutually_exclusive_group(required=True)
    mode.add_argument("--stdio", action="store_true", help="serve stdin/stdout")
    mode.add_argument("--port", type=int, default=None, help="TCP port (0 = any)")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument(
        "--max-inflight", type=int, default=DEFAULT_MAX_INFLIGHT, metavar="N"
    )
    p.add_argument("--base-dir", default=None, help="root for relative image paths")
    p.add_argument(
        "--timing",
        action=argparse.BooleanOptionalAction,
        default=True,
        help="include per-request timing (default: on)",
    )
    p.add_argument(
        "--judge-cmd",
        default=None,
        help="external judge command for free-text answers (shell-quoted)",
    )
    _add_reward_flags(p)
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        file_cfg = load_config_file(args.config)
        return args.func(args, file_cfg)
    except CliError as exc:
        print(json.dumps({"error": exc.reason}), file=sys.stderr)
        return exc.code
    except BrokenPipeError:
        return EXIT_OK
    except KeyboardInterrupt:
        return 130
    except Exception as exc:  # noqa: BLE001 — surface, don't traceback-dump
        print(json.dumps({"error": f"internal:{exc}"}), file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
