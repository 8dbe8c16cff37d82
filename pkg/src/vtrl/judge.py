"""Binary answer judges.

Free-text answers outside the numeric chart tasks are graded by a judge
that returns a yes/no verdict. The default is strict normalized string
equality; an external command can be plugged in for semantic grading.
"""

from __future__ import annotations

import json
import subprocess
from dataclasses import dataclass
from typing import Protocol, runtime_checkable

__all__ = [
    "Judge",
    "JudgeUnavailable",
    "ExactMatchJudge",
    "SubprocessJudge",
    "judge_prompt",
    "load_judge",
]


class JudgeUnavailable(RuntimeError):
    """The configured judge backend could not produce a verdict."""


@runtime_checkable
class Judge(Protocol):
    def __call__(self, question: str, answer: str, target: str) -> bool: ...


def _normalize(text: str) -> str:
    return " ".join(text.lower().strip().split())


@dataclass(frozen=True)
class ExactMatchJudge:
    """Case- and whitespace-insensitive string equality."""

    def __call__(self, question: str, answer: str, target: str) -> bool:
        return _normalize(answer) == _normalize(target)


def judge_prompt(question: str, answer: str, target: str) -> str:
    return (
        "You are grading a model's answer against a reference answer.\n"
        "Reply with exactly one word: YES if the answer matches the "
        "reference in meaning, NO otherwise.\n\n"
        f"Question: {question}\n"
        f"Reference answer: {target}\n"
        f"Model answer: {answer}\n"
        "Verdict:"
    )


@dataclass(frozen=True)
class SubprocessJudge:
    """Pipes a grading prompt to an external command's stdin.

    The command must print YES or NO (leading/trailing noise tolerated on
    the last non-empty line). Anything else raises JudgeUnavailable so the
    caller can fail loudly rather than silently zeroing answers.
    """

    command: tuple[str, ...]
    timeout_s: float = 30.0

    def __call__(self, question: str, answer: str, target: str) -> bool:
        prompt = judge_prompt(question, answer, target)
        try:
            proc = subprocess.run(
                list(self.command),
                input=prompt.encode("utf-8"),
                stdout=subprocess.PIPE,
                stderr=subprocess.PIPE,
                timeout=self.timeout_s,
            )
        except (OSError, subprocess.TimeoutExpired) as exc:
            raise JudgeUnavailable(f"judge command failed: {exc}") from exc
        if proc.returncode != 0:
            raise JudgeUnavailable(
                f"judge exited {proc.returncode}: {proc.stderr.decode(errors='replace')[:200]}"
            )
        lines = [
            ln.strip() for ln in proc.stdout.decode(errors="replace").splitlines()
        ]
        verdict = next((ln for ln in reversed(lines) if ln), "")
        token = verdict.split()[-1].upper().strip(".,!") if verdict else ""
        if token == "YES":
            return True
        if token == "NO":
            return False
        raise JudgeUnavailable(f"unparseable judge verdict: {verdict!r}")


def load_judge(spec: dict | None) -> Judge:
    """Build a judge from a config mapping ({"kind": "exact"} or
    {"kind": "command", "command": [...]}). None means exact match."""
    if spec is None:
        return ExactMatchJudge()
    kind = spec.get("kind", "exact")
    if kind == "exact":
        return ExactMatchJudge()
    if kind == "command":
        cmd = spec.get("command")
        if not cmd:
            raise ValueError("command judge needs a non-empty 'command' list")
        return SubprocessJudge(tuple(str(c) for c in cmd), float(spec.get("timeout_s", 30.0)))
    raise ValueError(f"unknown judge kind: {kind!r}")
