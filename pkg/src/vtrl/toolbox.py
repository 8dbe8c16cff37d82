"""Visual tool execution over an image lineage.

Six tools operate on any image produced earlier in an episode: zoom into a
box, rotate, flip, draw a horizontal/vertical guide line, and mark points.
Every successful call appends a lineage entry carrying the produced image
(optionally virtual, dims only), its orientation relative to the episode
start, an affine frame map back to original-image coordinates, and the
accumulated draw primitives for supervision.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace

from . import raster
from .raster import BBox, EmptyRegionError, Image, UnknownColorError

__all__ = [
    "TOOL_ZOOM",
    "TOOL_ROTATE",
    "TOOL_FLIP",
    "TOOL_HLINE",
    "TOOL_VLINE",
    "TOOL_MARK",
    "TOOL_NAMES",
    "ToolCall",
    "validate_tool_call",
    "Orientation",
    "IDENTITY_ORIENTATION",
    "FrameMap",
    "Primitive",
    "LineageEntry",
    "EpisodeState",
    "ToolboxError",
    "TurnLimitExceeded",
    "TargetOutOfRange",
    "InvalidArguments",
    "resolve_target",
    "apply_tool",
    "episode_trace",
    "replay_calls",
]

TOOL_ZOOM = "image_zoom_in_tool"
TOOL_ROTATE = "image_rotate_tool"
TOOL_FLIP = "image_flip_tool"
TOOL_HLINE = "image_draw_horizontal_line_tool"
TOOL_VLINE = "image_draw_vertical_line_tool"
TOOL_MARK = "image_mark_points_tool"

TOOL_NAMES = (TOOL_ZOOM, TOOL_ROTATE, TOOL_FLIP, TOOL_HLINE, TOOL_VLINE, TOOL_MARK)

DRAW_TOOLS = (TOOL_HLINE, TOOL_VLINE, TOOL_MARK)

DEFAULT_MAX_TURNS = 10
DEFAULT_LINE_THICKNESS = 3
DEFAULT_MARK_SIZE = 6
DEFAULT_DRAW_COLOR = "red"
MARK_SHAPES = ("circle", "X", "star")
LINE_STYLES = ("solid", "dashed")


class ToolboxError(Exception):
    """Base for tool execution failures."""


class TurnLimitExceeded(ToolboxError):
    pass


class TargetOutOfRange(ToolboxError):
    pass


class InvalidArguments(ToolboxError):
    pass


# --- tool calls -------------------------------------------------------------


@dataclass(frozen=True)
class ToolCall:
    """A validated tool invocation. `args` holds normalized argument values."""

    name: str
    args: dict
    label: str | None = None
    target_image: int = -1

    def to_payload(self) -> dict:
        args = dict(self.args)
        if self.name == TOOL_MARK:
            args["point_2d"] = [list(p) for p in args["point_2d"]]
        if self.name == TOOL_ZOOM:
            args["bbox_2d"] = list(args["bbox_2d"])
        if self.label is not None:
            args["label"] = self.label
        args["target_image"] = self.target_image
        return {"name": self.name, "arguments": args}


def _as_number(v) -> float | None:
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        return None
    f = float(v)
    return f if math.isfinite(f) else None


def _as_int(v) -> int | None:
    f = _as_number(v)
    if f is None or f != int(f):
        return None
    return int(f)


def _valid_color(color, bad) -> str:
    if isinstance(color, str):
        try:
            raster.Color.named(color)
            return color.strip().lower()
        except UnknownColorError:
            pass
    bad("color")
    return DEFAULT_DRAW_COLOR


def _as_point(v) -> tuple[float, float] | None:
    if not isinstance(v, (list, tuple)) or len(v) != 2:
        return None
    x, y = _as_number(v[0]), _as_number(v[1])
    if x is None or y is None:
        return None
    return (x, y)


def validate_tool_call(payload) -> tuple[ToolCall | None, list[str]]:
    """Validate one parsed tool-call JSON body against the tool schemas.

    Returns (call, violations); call is None when the body is unusable.
    Unknown extra arguments are tolerated and ignored.
    """
    violations: list[str] = []
    if not isinstance(payload, dict):
        return None, ["invalid_tool_json"]
    name = payload.get("name")
    raw_args = payload.get("arguments")
    if not isinstance(name, str) or name not in TOOL_NAMES:
        return None, [f"unknown_tool:{name!r}"]
    if not isinstance(raw_args, dict):
        return None, [f"missing_arg:{name}:arguments"]

    def bad(arg: str) -> None:
        violations.append(f"bad_arg:{name}:{arg}")

    def missing(arg: str) -> None:
        violations.append(f"missing_arg:{name}:{arg}")

    args: dict = {}
    if name == TOOL_ZOOM:
        box = raw_args.get("bbox_2d")
        if box is None:
            missing("bbox_2d")
        elif (
            not isinstance(box, (list, tuple))
            or len(box) != 4
            or any(_as_number(v) is None for v in box)
        ):
            bad("bbox_2d")
        else:
            args["bbox_2d"] = tuple(float(v) for v in box)
    elif name == TOOL_ROTATE:
        angle = raw_args.get("angle")
        if angle is None:
            missing("angle")
        elif _as_int(angle) is None:
            bad("angle")
        else:
            args["angle"] = _as_int(angle)
    elif name == TOOL_FLIP:
        direction = raw_args.get("direction")
        if direction is None:
            missing("direction")
        elif direction not in ("horizontal", "vertical"):
            bad("direction")
        else:
            args["direction"] = direction
    elif name == TOOL_HLINE or name == TOOL_VLINE:
        key = "height_location" if name == TOOL_HLINE else "width_location"
        loc = raw_args.get(key)
        if loc is None:
            missing(key)
        elif _as_number(loc) is None:
            bad(key)
        else:
            args[key] = float(loc)
        args["color"] = _valid_color(raw_args.get("color", DEFAULT_DRAW_COLOR), bad)
        thickness = raw_args.get("thickness", DEFAULT_LINE_THICKNESS)
        t = _as_int(thickness)
        if t is None or t < 1:
            bad("thickness")
            t = DEFAULT_LINE_THICKNESS
        args["thickness"] = t
        style = raw_args.get("style", "solid")
        if style not in LINE_STYLES:
            bad("style")
            style = "solid"
        args["style"] = style
    elif name == TOOL_MARK:
        pts = raw_args.get("point_2d")
        if pts is None:
            missing("point_2d")
        else:
            single = _as_point(pts)
            if single is not None:
                args["point_2d"] = (single,)
            elif isinstance(pts, (list, tuple)) and pts:
                parsed = [_as_point(p) for p in pts]
                if any(p is None for p in parsed):
                    bad("point_2d")
                else:
                    args["point_2d"] = tuple(parsed)
            else:
                bad("point_2d")
        args["color"] = _valid_color(raw_args.get("color", DEFAULT_DRAW_COLOR), bad)
        size = raw_args.get("size", DEFAULT_MARK_SIZE)
        s = _as_int(size)
        if s is None or s < 1:
            bad("size")
            s = DEFAULT_MARK_SIZE
        args["size"] = s
        shape = raw_args.get("shape", "circle")
        if shape not in MARK_SHAPES:
            bad("shape")
            shape = "circle"
        args["shape"] = shape

    label = raw_args.get("label")
    if label is not None and not isinstance(label, str):
        label = json.dumps(label, sort_keys=True)
    target = raw_args.get("target_image", -1)
    ti = _as_int(target)
    if ti is None:
        violations.append(f"bad_arg:{name}:target_image")
        ti = -1

    required = {
        TOOL_ZOOM: ("bbox_2d",),
        TOOL_ROTATE: ("angle",),
        TOOL_FLIP: ("direction",),
        TOOL_HLINE: ("height_location",),
        TOOL_VLINE: ("width_location",),
        TOOL_MARK: ("point_2d",),
    }[name]
    if any(k not in args for k in required):
        return None, violations
    return ToolCall(name=name, args=args, label=label, target_image=ti), violations


# --- orientation (dihedral group of the square) ------------------------------


@dataclass(frozen=True)
class Orientation:
    """Net axis-aligned transform: mirror first (left-right), then
    `quarter_turns` clockwise quarter turns. Any arbitrary-angle rotation
    permanently sets `non_axis_aligned`.
    """

    quarter_turns: int = 0
    mirrored: bool = False
    non_axis_aligned: bool = False

    def __post_init__(self):
        object.__setattr__(self, "quarter_turns", int(self.quarter_turns) % 4)

    @property
    def is_identity(self) -> bool:
        return not self.quarter_turns and not self.mirrored and not self.non_axis_aligned

    def after(self, inner: "Orientation") -> "Orientation":
        """Group composition self o inner (inner applied first)."""
        q = self.quarter_turns + (-inner.quarter_turns if self.mirrored else inner.quarter_turns)
        return Orientation(
            q % 4,
            self.mirrored ^ inner.mirrored,
            self.non_axis_aligned or inner.non_axis_aligned,
        )

    def inverse(self) -> "Orientation":
        if self.non_axis_aligned:
            raise ValueError("non-axis-aligned orientation has no exact inverse")
        if self.mirrored:
            return self  # reflections are involutions
        return Orientation((-self.quarter_turns) % 4, False)

    def apply_to_image(self, img: Image) -> Image:
        if self.non_axis_aligned:
            raise ValueError("cannot apply a non-axis-aligned orientation exactly")
        out = raster.flip(img, "horizontal") if self.mirrored else img.copy()
        return raster.rotate_quarter(out, self.quarter_turns)

    def to_json_dict(self) -> dict:
        return {
            "quarter_turns": self.quarter_turns,
            "mirrored": self.mirrored,
            "non_axis_aligned": self.non_axis_aligned,
        }

    @classmethod
    def from_json_dict(cls, obj: dict) -> "Orientation":
        return cls(
            int(obj.get("quarter_turns", 0)),
            bool(obj.get("mirrored", False)),
            bool(obj.get("non_axis_aligned", False)),
        )

    @classmethod
    def from_transform_name(cls, name: str) -> "Orientation":
        try:
            return _NAMED_TRANSFORMS[name]
        except KeyError:
            raise ValueError(f"unknown transform name: {name!r}") from None


IDENTITY_ORIENTATION = Orientation()

_NAMED_TRANSFORMS = {
    "identity": Orientation(0, False),
    "rotate90": Orientation(1, False),
    "rotate180": Orientation(2, False),
    "rotate270": Orientation(3, False),
    "hflip": Orientation(0, True),
    "vflip": Orientation(2, True),
}

ALL_ORIENTATIONS = tuple(
    Orientation(q, m) for m in (False, True) for q in range(4)
)


# --- frame maps --------------------------------------------------------------


@dataclass(frozen=True)
class FrameMap:
    """Affine map from this image's continuous pixel coords to original-image
    coords: (x, y) -> (m00 x + m01 y + b0, m10 x + m11 y + b1).

    Stays valid only while axis-aligned; an arbitrary-angle rotation
    invalidates the frame for supervision mapping.
    """

    m00: float = 1.0
    m01: float = 0.0
    m10: float = 0.0
    m11: float = 1.0
    b0: float = 0.0
    b1: float = 0.0
    valid: bool = True

    def compose_inner(self, inner: "FrameMap") -> "FrameMap":
        """Map through `inner` first, then self (self: parent->orig,
        inner: child->parent; result: child->orig)."""
        if not (self.valid and inner.valid):
            return INVALID_FRAME
        return FrameMap(
            self.m00 * inner.m00 + self.m01 * inner.m10,
            self.m00 * inner.m01 + self.m01 * inner.m11,
            self.m10 * inner.m00 + self.m11 * inner.m10,
            self.m10 * inner.m01 + self.m11 * inner.m11,
            self.m00 * inner.b0 + self.m01 * inner.b1 + self.b0,
            self.m10 * inner.b0 + self.m11 * inner.b1 + self.b1,
        )

    def map_xy(self, x: float, y: float) -> tuple[float, float]:
        return (
            self.m00 * x + self.m01 * y + self.b0,
            self.m10 * x + self.m11 * y + self.b1,
        )

    def map_box(self, box: BBox) -> BBox:
        ax, ay = self.map_xy(box.x1, box.y1)
        bx, by = self.map_xy(box.x2, box.y2)
        return BBox(min(ax, bx), min(ay, by), max(ax, bx), max(ay, by))

    def map_point_px(self, x: float, y: float) -> tuple[float, float]:
        """Pixel-center convention for point coordinates."""
        ox, oy = self.map_xy(x + 0.5, y + 0.5)
        return ox - 0.5, oy - 0.5

    def map_line_px(self, kind: str, c: float) -> tuple[str, float]:
        """Map a pixel row/column line. x_line = vertical line at a column,
        y_line = horizontal line at a row; an axis swap flips the kind."""
        cc = c + 0.5
        if kind == "x_line":
            if self.m00 != 0.0:
                return "x_line", self.m00 * cc + self.b0 - 0.5
            return "y_line", self.m10 * cc + self.b1 - 0.5
        if kind == "y_line":
            if self.m11 != 0.0:
                return "y_line", self.m11 * cc + self.b1 - 0.5
            return "x_line", self.m01 * cc + self.b0 - 0.5
        raise ValueError(f"not a line kind: {kind!r}")

    def inverse(self) -> "FrameMap":
        det = self.m00 * self.m11 - self.m01 * self.m10
        if not self.valid or det == 0.0:
            return INVALID_FRAME
        i00 = self.m11 / det
        i01 = -self.m01 / det
        i10 = -self.m10 / det
        i11 = self.m00 / det
        return FrameMap(
            i00, i01, i10, i11,
            -(i00 * self.b0 + i01 * self.b1),
            -(i10 * self.b0 + i11 * self.b1),
        )

    @property
    def axis_aligned(self) -> bool:
        return (self.m01 == 0.0 and self.m10 == 0.0) or (
            self.m00 == 0.0 and self.m11 == 0.0
        )


IDENTITY_FRAME = FrameMap()
INVALID_FRAME = FrameMap(valid=False)


def _crop_frame(x1: int, y1: int, cw: int, ch: int, out_w: int, out_h: int) -> FrameMap:
    # child coords scale back up to the crop, then shift by the crop origin
    return FrameMap(cw / out_w, 0.0, 0.0, ch / out_h, float(x1), float(y1))


def _quarter_frame(k: int, parent_w: int, parent_h: int) -> FrameMap:
    k %= 4
    if k == 0:
        return IDENTITY_FRAME
    if k == 1:  # child (x, y) came from parent (y, H - x)
        return FrameMap(0.0, 1.0, -1.0, 0.0, 0.0, float(parent_h))
    if k == 2:
        return FrameMap(-1.0, 0.0, 0.0, -1.0, float(parent_w), float(parent_h))
    return FrameMap(0.0, -1.0, 1.0, 0.0, float(parent_w), 0.0)


def _flip_frame(direction: str, parent_w: int, parent_h: int) -> FrameMap:
    if direction == "horizontal":
        return FrameMap(-1.0, 0.0, 0.0, 1.0, float(parent_w), 0.0)
    return FrameMap(1.0, 0.0, 0.0, -1.0, 0.0, float(parent_h))


# --- primitives ---------------------------------------------------------------


@dataclass(frozen=True)
class Primitive:
    """Draw-supervision geometry: a vertical line at a pixel column (x_line),
    a horizontal line at a pixel row (y_line), or a point."""

    kind: str  # "x_line" | "y_line" | "point"
    x: float | None = None
    y: float | None = None

    @classmethod
    def x_line(cls, c: float) -> "Primitive":
        return cls("x_line", x=float(c))

    @classmethod
    def y_line(cls, c: float) -> "Primitive":
        return cls("y_line", y=float(c))

    @classmethod
    def point(cls, x: float, y: float) -> "Primitive":
        return cls("point", x=float(x), y=float(y))

    @property
    def coord(self) -> float:
        if self.kind == "x_line":
            return float(self.x)  # type: ignore[arg-type]
        if self.kind == "y_line":
            return float(self.y)  # type: ignore[arg-type]
        raise ValueError("point primitives have two coordinates")

    def to_json_dict(self) -> dict:
        if self.kind == "point":
            return {"kind": "point", "x": self.x, "y": self.y}
        return {"kind": self.kind, "c": self.coord}

    @classmethod
    def from_json_dict(cls, obj: dict) -> "Primitive":
        kind = obj.get("kind")
        if kind == "point":
            return cls.point(float(obj["x"]), float(obj["y"]))
        if kind in ("x_line", "y_line"):
            return cls(kind, x=float(obj["c"])) if kind == "x_line" else cls(
                kind, y=float(obj["c"])
            )
        raise ValueError(f"unknown primitive kind: {kind!r}")


def call_primitives(call: ToolCall) -> tuple[Primitive, ...]:
    """Primitives a draw/mark call asserts, using its raw (unclamped) coords."""
    if call.name == TOOL_HLINE:
        return (Primitive.y_line(call.args["height_location"]),)
    if call.name == TOOL_VLINE:
        return (Primitive.x_line(call.args["width_location"]),)
    if call.name == TOOL_MARK:
        return tuple(Primitive.point(x, y) for x, y in call.args["point_2d"])
    return ()


# --- episode state ------------------------------------------------------------


@dataclass(frozen=True)
class LineageEntry:
    width: int
    height: int
    orientation: Orientation
    frame: FrameMap
    call: ToolCall | None = None
    primitives: tuple[Primitive, ...] = ()
    clamped: bool = False
    image: Image | None = None
    target_index: int = 0  # lineage index the producing call operated on

    @property
    def dims(self) -> tuple[int, int]:
        return (self.width, self.height)


@dataclass(frozen=True)
class EpisodeState:
    """Append-only image lineage; index 0 is the original input image."""

    lineage: tuple[LineageEntry, ...]
    turn: int = 0
    max_turns: int = DEFAULT_MAX_TURNS

    @classmethod
    def start(
        cls,
        width: int,
        height: int,
        image: Image | None = None,
        orientation: Orientation = IDENTITY_ORIENTATION,
        max_turns: int = DEFAULT_MAX_TURNS,
    ) -> "EpisodeState":
        if image is not None and (image.width, image.height) != (width, height):
            raise ValueError("image dims disagree with declared dims")
        entry = LineageEntry(
            width=width,
            height=height,
            orientation=orientation,
            frame=IDENTITY_FRAME,
            image=image,
        )
        return cls(lineage=(entry,), turn=0, max_turns=max_turns)

    @classmethod
    def from_image(cls, image: Image, **kw) -> "EpisodeState":
        return cls.start(image.width, image.height, image=image, **kw)

    def __len__(self) -> int:
        return len(self.lineage)

    @property
    def last(self) -> LineageEntry:
        return self.lineage[-1]

    @property
    def tool_count(self) -> int:
        return len(self.lineage) - 1


def resolve_target(state: EpisodeState, k: int) -> int:
    """Resolve a target_image index: negatives count from the end
    (-1 = most recent), 0 = original."""
    n = len(state.lineage)
    idx = n + k if k < 0 else k
    if idx < 0 or idx >= n:
        raise TargetOutOfRange(f"target_image {k} outside lineage of length {n}")
    return idx


def apply_tool(
    state: EpisodeState, call: ToolCall, compute_pixels: bool = True
) -> EpisodeState:
    """Execute one validated call, returning the extended episode state.

    With compute_pixels=False the produced entry is virtual (image=None) but
    carries identical dims/orientation/frame/primitives metadata; geometry
    scoring never needs the pixels.
    """
    if state.turn >= state.max_turns:
        raise TurnLimitExceeded(f"turn limit {state.max_turns} reached")
    tidx = resolve_target(state, call.target_image)
    target = state.lineage[tidx]
    want_pixels = compute_pixels and target.image is not None

    name = call.name
    clamped = False
    if name == TOOL_ZOOM:
        box = BBox.from_seq(call.args["bbox_2d"])
        x1, y1, x2, y2 = box.int_region(target.width, target.height)
        clamped = (x1, y1, x2, y2) != tuple(int(round(v)) for v in call.args["bbox_2d"])
        out_w, out_h = raster.crop_output_dims(x2 - x1, y2 - y1)
        frame = target.frame.compose_inner(
            _crop_frame(x1, y1, x2 - x1, y2 - y1, out_w, out_h)
        )
        image = raster.crop_resize(target.image, box) if want_pixels else None
        entry = LineageEntry(
            out_w, out_h, target.orientation, frame, call, (), clamped, image, tidx
        )
    elif name == TOOL_ROTATE:
        angle = call.args["angle"]
        a = angle % 360
        out_w, out_h = raster.rotated_extent(target.width, target.height, a)
        if a % 90 == 0:
            transform = Orientation(a // 90, False)
            frame = target.frame.compose_inner(
                _quarter_frame(a // 90, target.width, target.height)
            )
        else:
            transform = Orientation(0, False, non_axis_aligned=True)
            frame = INVALID_FRAME
        orientation = transform.after(target.orientation)
        image = raster.rotate_arbitrary(target.image, a) if want_pixels else None
        entry = LineageEntry(out_w, out_h, orientation, frame, call, (), False, image, tidx)
    elif name == TOOL_FLIP:
        direction = call.args["direction"]
        transform = Orientation(0, True) if direction == "horizontal" else Orientation(2, True)
        orientation = transform.after(target.orientation)
        frame = target.frame.compose_inner(
            _flip_frame(direction, target.width, target.height)
        )
        image = raster.flip(target.image, direction) if want_pixels else None
        entry = LineageEntry(
            target.width, target.height, orientation, frame, call, (), False, image, tidx
        )
    elif name in DRAW_TOOLS:
        prims = target.primitives + call_primitives(call)
        image = None
        if name == TOOL_HLINE:
            loc = call.args["height_location"]
            clamped = not (0 <= round(loc) <= target.height - 1)
            if want_pixels:
                image = raster.draw_hline(
                    target.image,
                    loc,
                    raster.Color.named(call.args.get("color", DEFAULT_DRAW_COLOR)),
                    call.args.get("thickness", DEFAULT_LINE_THICKNESS),
                    call.args.get("style", "solid"),
                )
        elif name == TOOL_VLINE:
            loc = call.args["width_location"]
            clamped = not (0 <= round(loc) <= target.width - 1)
            if want_pixels:
                image = raster.draw_vline(
                    target.image,
                    loc,
                    raster.Color.named(call.args.get("color", DEFAULT_DRAW_COLOR)),
                    call.args.get("thickness", DEFAULT_LINE_THICKNESS),
                    call.args.get("style", "solid"),
                )
        else:
            pts = call.args["point_2d"]
            clamped = any(
                not (0 <= round(x) <= target.width - 1 and 0 <= round(y) <= target.height - 1)
                for x, y in pts
            )
            if want_pixels:
                arr = target.image.pixels.copy()
                for x, y in pts:
                    raster.paint_marker(
                        arr,
                        x,
                        y,
                        call.args.get("shape", "circle"),
                        call.args.get("size", DEFAULT_MARK_SIZE),
                        raster.Color.named(call.args.get("color", DEFAULT_DRAW_COLOR)),
                    )
                image = Image(arr)
        entry = LineageEntry(
            target.width,
            target.height,
            target.orientation,
            target.frame,
            call,
            prims,
            clamped,
            image,
            tidx,
        )
    else:
        raise InvalidArguments(f"unknown tool {name!r}")

    return replace(state, lineage=state.lineage + (entry,), turn=state.turn + 1)


def episode_trace(state: EpisodeState) -> list[dict]:
    """JSON-able log of the calls that built this lineage."""
    records = []
    for idx, entry in enumerate(state.lineage[1:], start=1):
        call = entry.call
        assert call is not None
        records.append(
            {
                "index": idx,
                "tool": call.name,
                "arguments": call.to_payload()["arguments"],
                "resolved_target": entry.target_index,
                "produced_dims": [entry.width, entry.height],
                "orientation": entry.orientation.to_json_dict(),
                "clamped": entry.clamped,
            }
        )
    return records


def replay_calls(
    start: EpisodeState,
    calls: list[ToolCall],
    compute_pixels: bool = False,
) -> tuple[EpisodeState, list[str], list[bool]]:
    """Apply calls in order, collecting execution violations instead of
    raising. Returns (state, violations, per-call ok flags)."""
    state = start
    violations: list[str] = []
    ok_flags: list[bool] = []
    for i, call in enumerate(calls):
        try:
            state = apply_tool(state, call, compute_pixels=compute_pixels)
            ok_flags.append(True)
        except TurnLimitExceeded:
            violations.append(f"turn_limit_exceeded:{i}")
            ok_flags.append(False)
        except TargetOutOfRange:
            violations.append(f"target_out_of_range:{i}")
            ok_flags.append(False)
        except EmptyRegionError:
            violations.append(f"empty_zoom_region:{i}")
            ok_flags.append(False)
        except (InvalidArguments, UnknownColorError, ValueError):
            violations.append(f"invalid_arguments:{i}")
            ok_flags.append(False)
    return state, violations, ok_flags
