"""Visual tool-use reward machinery.

The stack, bottom to top:

* :mod:`vtrl.raster` / :mod:`vtrl.png` / :mod:`vtrl.font` — pure-Python
  images: crop/resize/rotate/flip, annotation drawing, PNG codec, bitmap text.
* :mod:`vtrl.toolbox` — the six image tools executed against an episode
  state that tracks the lineage of views and the frame maps back to the
  original pixel grid.
* :mod:`vtrl.trace` — tolerant parsing of tagged rollout text into
  structured trajectories plus the format reward.
* :mod:`vtrl.rewards` — per-state tool rewards (zoom overlap, orientation,
  drawing via Hungarian matching), stage aggregation, and answer scoring.
* :mod:`vtrl.synth` — self-grading synthetic chart tasks with pixel-exact
  tool supervision.
* :mod:`vtrl.scoring` / :mod:`vtrl.service` — request/response scoring and
  the NDJSON service over stdio or TCP.
* :mod:`vtrl.currsim` — a toy GRPO curriculum showing the two-stage
  tool-then-answer training dynamics end to end.
* :mod:`vtrl.stats` — tool-usage analytics over trajectory logs.

``python -m vtrl.cli --help`` (or the ``vtrl`` entry point) exposes the
operational surface.
"""

from .rewards import (
    DrawGT,
    GroundTruth,
    RewardConfig,
    RotFlipGT,
    ZoomGT,
    answer_reward,
    draw_reward,
    modf1,
    orientation_reward,
    parse_ground_truth,
    score_states,
    stage1_aggregate,
    stage2_final,
    zoom_reward,
)
from .scoring import ScoreRequest, ScoreResponse, parse_request, score_obj, score_one
from .service import ServiceConfig, TcpScoreServer, serve_stream
from .toolbox import (
    EpisodeState,
    ToolCall,
    TOOL_NAMES,
    apply_tool,
    replay_calls,
    validate_tool_call,
)
from .trace import Trajectory, format_reward, parse_trace

__version__ = "0.1.0"

__all__ = [
    "__version__",
    # rewards
    "RewardConfig",
    "GroundTruth",
    "ZoomGT",
    "RotFlipGT",
    "DrawGT",
    "parse_ground_truth",
    "modf1",
    "zoom_reward",
    "orientation_reward",
    "draw_reward",
    "score_states",
    "stage1_aggregate",
    "answer_reward",
    "stage2_final",
    # toolbox
    "ToolCall",
    "TOOL_NAMES",
    "EpisodeState",
    "validate_tool_call",
    "apply_tool",
    "replay_calls",
    # traces
    "Trajectory",
    "parse_trace",
    "format_reward",
    # scoring + service
    "ScoreRequest",
    "ScoreResponse",
    "parse_request",
    "score_one",
    "score_obj",
    "ServiceConfig",
    "serve_stream",
    "TcpScoreServer",
]
