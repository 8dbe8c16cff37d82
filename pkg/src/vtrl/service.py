"""Newline-delimited JSON scoring service.

One request object per line in, one response object per line out. Requests
are scored concurrently by a bounded worker pool, so responses may come
back in any order; callers correlate by id. Each connection (or the stdio
stream) has its own id space, and reusing an id within it is an error.

Runs over stdio for subprocess embedding or as a threaded TCP server.
"""

from __future__ import annotations

import json
import socketserver
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Callable, Iterable, Mapping

from .scoring import ScoreResponse, response_to_json, score_obj

__all__ = [
    "ServiceConfig",
    "serve_stream",
    "serve_stdio",
    "TcpScoreServer",
]

DEFAULT_MAX_INFLIGHT = 8


@dataclass(frozen=True)
class ServiceConfig:
    max_inflight: int = DEFAULT_MAX_INFLIGHT
    base_dir: str | None = None
    include_timing: bool = True
    judge: Callable[[str, str, str], bool] | None = None
    # Reward-config fields applied to requests that don't carry their own
    # "config" object; a request's explicit config always wins.
    default_request_config: Mapping | None = None

    def __post_init__(self):
        if self.max_inflight < 1:
            raise ValueError("max_inflight must be at least 1")


def _error_line(request_id: str, reason: str) -> str:
    return response_to_json(
        ScoreResponse(request_id=request_id, ok=False, error=reason)
    )


def serve_stream(
    lines: Iterable[bytes | str],
    write_line: Callable[[str], None],
    cfg: ServiceConfig = ServiceConfig(),
) -> int:
    """Score each NDJSON line from `lines`, emitting responses via
    `write_line` as they finish (possibly out of order). Returns the number
    of requests handled. `write_line` is serialized internally.

    At most max_inflight requests are being scored at once; further reads
    block until a slot frees, which backpressures the transport. Reusing a
    request id within one stream still scores the request but flags it with
    a duplicate_request_id violation.
    """
    lock = threading.Lock()
    slots = threading.BoundedSemaphore(cfg.max_inflight)
    seen_ids: set[str] = set()
    handled = 0

    def emit(text: str) -> None:
        with lock:
            write_line(text)

    def work(obj, duplicate: bool) -> None:
        try:
            if (
                cfg.default_request_config
                and isinstance(obj, dict)
                and "config" not in obj
            ):
                obj = {**obj, "config": dict(cfg.default_request_config)}
            resp = score_obj(
                obj,
                base_dir=cfg.base_dir,
                judge=cfg.judge,
                with_timing=cfg.include_timing,
            )
            if duplicate:
                resp = replace(
                    resp, violations=resp.violations + ("duplicate_request_id",)
                )
            emit(response_to_json(resp, include_timing=cfg.include_timing))
        finally:
            slots.release()

    with ThreadPoolExecutor(max_workers=cfg.max_inflight) as pool:
        for raw in lines:
            if isinstance(raw, bytes):
                raw = raw.decode("utf-8", errors="replace")
            raw = raw.strip()
            if not raw:
                continue
            handled += 1
            try:
                obj = json.loads(raw)
            except json.JSONDecodeError:
                emit(_error_line("", "bad_json"))
                continue
            rid = str(obj.get("id", "")) if isinstance(obj, dict) else ""
            duplicate = bool(rid) and rid in seen_ids
            if rid:
                seen_ids.add(rid)
            slots.acquire()
            pool.submit(work, obj, duplicate)
    return handled


def serve_stdio(cfg: ServiceConfig = ServiceConfig()) -> int:
    """Serve NDJSON over stdin/stdout until EOF."""
    import sys

    out = sys.stdout

    def write_line(text: str) -> None:
        out.write(text + "\n")
        out.flush()

    return serve_stream(sys.stdin, write_line, cfg)


class _Handler(socketserver.StreamRequestHandler):
    def handle(self) -> None:  # one NDJSON session per connection
        cfg: ServiceConfig = self.server.service_config  # type: ignore[attr-defined]

        def write_line(text: str) -> None:
            try:
                self.wfile.write(text.encode("utf-8") + b"\n")
                self.wfile.flush()
            except (BrokenPipeError, ConnectionResetError, OSError):
                pass

        try:
            serve_stream(iter(self.rfile.readline, b""), write_line, cfg)
        except (ConnectionResetError, OSError):
            pass


class TcpScoreServer(socketserver.ThreadingTCPServer):
    """Threaded NDJSON scorer; each connection gets its own session."""

    allow_reuse_address = True
    daemon_threads = True

    def __init__(self, host: str, port: int, cfg: ServiceConfig = ServiceConfig()):
        super().__init__((host, port), _Handler)
        self.service_config = cfg

    @property
    def bound_port(self) -> int:
        return self.server_address[1]

    def serve_background(self) -> threading.Thread:
        thread = threading.Thread(target=self.serve_forever, daemon=True)
        thread.start()
        return thread
