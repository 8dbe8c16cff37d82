"""Pixel-level image model and the geometry primitives built on it.

Images are owned 8-bit RGB rasters backed by numpy. Quarter-turn rotations
and flips are exact pixel permutations; resizing and arbitrary-angle rotation
use bilinear resampling (white background for exposed canvas). Boxes follow a
half-open pixel convention [x1, x2) x [y1, y2) so that the analytic area of
an integer box equals the number of pixel centers it covers.

All public `draw_*` / transform functions are pure: they return a new Image
and never mutate their input. The `paint_*` helpers mutate a raw array in
place and exist for compositing (chart rendering) on a working canvas.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "Color",
    "PALETTE",
    "Image",
    "BBox",
    "EmptyRegionError",
    "UnknownColorError",
    "crop_resize",
    "resize",
    "rotate_quarter",
    "rotate_arbitrary",
    "flip",
    "draw_hline",
    "draw_vline",
    "draw_marker",
    "paint_hline",
    "paint_vline",
    "paint_marker",
    "rotated_extent",
]

DASH_PERIOD = 8  # dashed style: 8 px on, 8 px off


class EmptyRegionError(ValueError):
    """Crop box clamps to a zero-area region."""


class UnknownColorError(ValueError):
    """Color name outside the fixed palette."""


@dataclass(frozen=True)
class Color:
    r: int
    g: int
    b: int

    def as_array(self) -> np.ndarray:
        return np.array([self.r, self.g, self.b], dtype=np.uint8)

    @classmethod
    def named(cls, name: str) -> "Color":
        try:
            return PALETTE[str(name).strip().lower()]
        except KeyError:
            raise UnknownColorError(f"unknown color name: {name!r}") from None


PALETTE: dict[str, Color] = {
    "red": Color(230, 30, 30),
    "green": Color(0, 160, 60),
    "blue": Color(40, 70, 230),
    "yellow": Color(240, 200, 0),
    "purple": Color(150, 40, 200),
    "orange": Color(250, 140, 20),
    "cyan": Color(0, 180, 200),
    "magenta": Color(220, 40, 160),
    "black": Color(0, 0, 0),
    "white": Color(255, 255, 255),
}

WHITE = PALETTE["white"]
BLACK = PALETTE["black"]


class Image:
    """Owned (H, W, 3) uint8 raster, row-major RGB."""

    __slots__ = ("pixels",)

    def __init__(self, pixels: np.ndarray):
        arr = np.asarray(pixels, dtype=np.uint8)
        if arr.ndim != 3 or arr.shape[2] != 3:
            raise ValueError("pixels must have shape (H, W, 3)")
        if arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValueError("image must be at least 1x1")
        self.pixels = np.ascontiguousarray(arr)

    @property
    def width(self) -> int:
        return int(self.pixels.shape[1])

    @property
    def height(self) -> int:
        return int(self.pixels.shape[0])

    @property
    def size(self) -> tuple[int, int]:
        return (self.width, self.height)

    @property
    def long_edge(self) -> int:
        return max(self.width, self.height)

    @classmethod
    def blank(cls, width: int, height: int, color: Color = WHITE) -> "Image":
        arr = np.empty((height, width, 3), dtype=np.uint8)
        arr[:, :] = color.as_array()
        return cls(arr)

    def copy(self) -> "Image":
        return Image(self.pixels.copy())

    def tobytes(self) -> bytes:
        return self.pixels.tobytes()

    def same_pixels(self, other: "Image") -> bool:
        return self.pixels.shape == other.pixels.shape and bool(
            np.array_equal(self.pixels, other.pixels)
        )

    def __repr__(self) -> str:
        return f"Image({self.width}x{self.height})"


@dataclass(frozen=True)
class BBox:
    """Half-open pixel box [x1, x2) x [y1, y2). Coordinates may be fractional."""

    x1: float
    y1: float
    x2: float
    y2: float

    def width(self) -> float:
        return max(0.0, self.x2 - self.x1)

    def height(self) -> float:
        return max(0.0, self.y2 - self.y1)

    def area(self) -> float:
        return self.width() * self.height()

    def intersect(self, other: "BBox") -> "BBox":
        return BBox(
            max(self.x1, other.x1),
            max(self.y1, other.y1),
            min(self.x2, other.x2),
            min(self.y2, other.y2),
        )

    def clamped(self, width: int, height: int) -> "BBox":
        return BBox(
            min(max(self.x1, 0.0), float(width)),
            min(max(self.y1, 0.0), float(height)),
            min(max(self.x2, 0.0), float(width)),
            min(max(self.y2, 0.0), float(height)),
        )

    def int_region(self, width: int, height: int) -> tuple[int, int, int, int]:
        """Integer crop region after rounding and clamping.

        Raises EmptyRegionError when the clamped region has no pixels.
        """
        x1 = min(max(int(round(self.x1)), 0), width)
        y1 = min(max(int(round(self.y1)), 0), height)
        x2 = min(max(int(round(self.x2)), 0), width)
        y2 = min(max(int(round(self.y2)), 0), height)
        if x2 <= x1 or y2 <= y1:
            raise EmptyRegionError(
                f"box {self} clamps to empty region on {width}x{height} image"
            )
        return x1, y1, x2, y2

    @classmethod
    def from_seq(cls, seq) -> "BBox":
        x1, y1, x2, y2 = (float(v) for v in seq)
        return cls(x1, y1, x2, y2)


# --- resampling -------------------------------------------------------------


def _scaled_dims(width: int, height: int, target_long: float) -> tuple[int, int]:
    s = target_long / max(width, height)
    return max(1, int(round(width * s))), max(1, int(round(height * s)))


def _resize_bilinear(arr: np.ndarray, out_w: int, out_h: int) -> np.ndarray:
    h, w = arr.shape[:2]
    if (out_w, out_h) == (w, h):
        return arr.copy()
    xs = (np.arange(out_w, dtype=np.float64) + 0.5) * (w / out_w) - 0.5
    ys = (np.arange(out_h, dtype=np.float64) + 0.5) * (h / out_h) - 0.5
    xs = np.clip(xs, 0.0, w - 1.0)
    ys = np.clip(ys, 0.0, h - 1.0)
    x0 = np.floor(xs).astype(np.int64)
    y0 = np.floor(ys).astype(np.int64)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = (xs - x0)[None, :, None]
    fy = (ys - y0)[:, None, None]
    a = arr[np.ix_(y0, x0)].astype(np.float64)
    b = arr[np.ix_(y0, x1)].astype(np.float64)
    c = arr[np.ix_(y1, x0)].astype(np.float64)
    d = arr[np.ix_(y1, x1)].astype(np.float64)
    out = a * (1 - fx) * (1 - fy) + b * fx * (1 - fy) + c * (1 - fx) * fy + d * fx * fy
    return np.floor(out + 0.5).astype(np.uint8)


def resize(img: Image, out_w: int, out_h: int) -> Image:
    """Bilinear resize to exactly (out_w, out_h). Identity dims copy exactly."""
    if out_w < 1 or out_h < 1:
        raise ValueError("output dims must be >= 1")
    return Image(_resize_bilinear(img.pixels, out_w, out_h))


def crop_resize(
    img: Image, box: BBox, out_max_edge: int = 768, upscale_cap: float = 4.0
) -> Image:
    """Crop `box` (clamped) and scale so the longer edge equals
    min(out_max_edge, upscale_cap * crop longer edge).

    With the full-image box and out_max_edge = max(W, H) this is the identity.
    Raises EmptyRegionError for boxes that clamp to nothing.
    """
    x1, y1, x2, y2 = box.int_region(img.width, img.height)
    crop = img.pixels[y1:y2, x1:x2]
    ch, cw = crop.shape[:2]
    target_long = min(float(out_max_edge), upscale_cap * max(cw, ch))
    out_w, out_h = _scaled_dims(cw, ch, target_long)
    return Image(_resize_bilinear(crop, out_w, out_h))


def crop_output_dims(
    crop_w: int, crop_h: int, out_max_edge: int = 768, upscale_cap: float = 4.0
) -> tuple[int, int]:
    """Output dims crop_resize would produce, without touching pixels."""
    target_long = min(float(out_max_edge), upscale_cap * max(crop_w, crop_h))
    return _scaled_dims(crop_w, crop_h, target_long)


# --- rotations and flips ----------------------------------------------------


def rotate_quarter(img: Image, k: int) -> Image:
    """Rotate by k quarter turns clockwise. Exact pixel permutation."""
    k %= 4
    if k == 0:
        return img.copy()
    return Image(np.ascontiguousarray(np.rot90(img.pixels, -k)))


def rotated_extent(width: int, height: int, angle_deg: float) -> tuple[int, int]:
    """Canvas size holding `width` x `height` rotated by angle_deg."""
    a = angle_deg % 360.0
    if a % 90.0 == 0.0:
        k = int(a // 90) % 4
        return (width, height) if k % 2 == 0 else (height, width)
    t = math.radians(a)
    c, s = abs(math.cos(t)), abs(math.sin(t))
    return (
        int(math.ceil(width * c + height * s)),
        int(math.ceil(width * s + height * c)),
    )


def rotate_arbitrary(img: Image, angle_deg: float) -> Image:
    """Rotate clockwise by any angle; canvas expands, background is white.

    Multiples of 90 dispatch to the exact quarter-turn permutation.
    """
    a = angle_deg % 360.0
    if a % 90.0 == 0.0:
        return rotate_quarter(img, int(a // 90))
    h, w = img.pixels.shape[:2]
    out_w, out_h = rotated_extent(w, h, a)
    t = math.radians(a)
    cos, sin = math.cos(t), math.sin(t)
    # Inverse map output pixel centers back to source coords. Positive angles
    # look clockwise on screen, which is the standard CCW matrix in y-down
    # image coordinates; its inverse is the transpose.
    xo = np.arange(out_w, dtype=np.float64) + 0.5 - out_w / 2.0
    yo = np.arange(out_h, dtype=np.float64) + 0.5 - out_h / 2.0
    X, Y = np.meshgrid(xo, yo)
    xs = cos * X + sin * Y + w / 2.0 - 0.5
    ys = -sin * X + cos * Y + h / 2.0 - 0.5
    inside = (xs > -0.5) & (xs < w - 0.5) & (ys > -0.5) & (ys < h - 0.5)
    xc = np.clip(xs, 0.0, w - 1.0)
    yc = np.clip(ys, 0.0, h - 1.0)
    x0 = np.floor(xc).astype(np.int64)
    y0 = np.floor(yc).astype(np.int64)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = (xc - x0)[:, :, None]
    fy = (yc - y0)[:, :, None]
    src = img.pixels.astype(np.float64)
    out = (
        src[y0, x0] * (1 - fx) * (1 - fy)
        + src[y0, x1] * fx * (1 - fy)
        + src[y1, x0] * (1 - fx) * fy
        + src[y1, x1] * fx * fy
    )
    out = np.floor(out + 0.5).astype(np.uint8)
    out[~inside] = WHITE.as_array()
    return Image(out)


def flip(img: Image, direction: str) -> Image:
    """Mirror the image: 'horizontal' = left-right, 'vertical' = top-bottom."""
    if direction == "horizontal":
        return Image(np.ascontiguousarray(np.flip(img.pixels, axis=1)))
    if direction == "vertical":
        return Image(np.ascontiguousarray(np.flip(img.pixels, axis=0)))
    raise ValueError(f"direction must be 'horizontal' or 'vertical', got {direction!r}")


# --- drawing ----------------------------------------------------------------


def _thickness_span(center: int, thickness: int, limit: int) -> tuple[int, int]:
    lo = center - (thickness - 1) // 2
    return max(0, lo), min(limit, lo + thickness)


def _dash_mask(length: int, style: str) -> np.ndarray:
    if style == "solid":
        return np.ones(length, dtype=bool)
    if style == "dashed":
        return (np.arange(length) // DASH_PERIOD) % 2 == 0
    raise ValueError(f"style must be 'solid' or 'dashed', got {style!r}")


def paint_hline(
    arr: np.ndarray, row: float, color: Color, thickness: int = 3, style: str = "solid"
) -> bool:
    """Paint a horizontal line across the full width, in place.

    Returns True when the requested row had to be clamped into bounds.
    """
    h, w = arr.shape[:2]
    r = int(round(row))
    rc = min(max(r, 0), h - 1)
    lo, hi = _thickness_span(rc, max(1, int(thickness)), h)
    arr[lo:hi, _dash_mask(w, style)] = color.as_array()
    return rc != r


def paint_vline(
    arr: np.ndarray, col: float, color: Color, thickness: int = 3, style: str = "solid"
) -> bool:
    """Paint a vertical line across the full height, in place. Returns clamp flag."""
    h, w = arr.shape[:2]
    c = int(round(col))
    cc = min(max(c, 0), w - 1)
    lo, hi = _thickness_span(cc, max(1, int(thickness)), w)
    arr[_dash_mask(h, style), lo:hi] = color.as_array()
    return cc != c


def paint_marker(
    arr: np.ndarray,
    x: float,
    y: float,
    shape: str = "circle",
    size: int = 6,
    color: Color = PALETTE["red"],
) -> bool:
    """Paint a marker centered at (x, y), in place. Returns clamp flag.

    `size` is the marker radius in pixels. Every shape covers its center pixel.
    """
    h, w = arr.shape[:2]
    xi, yi = int(round(x)), int(round(y))
    xc = min(max(xi, 0), w - 1)
    yc = min(max(yi, 0), h - 1)
    r = max(1, int(size))
    y0, y1 = max(0, yc - r), min(h, yc + r + 1)
    x0, x1 = max(0, xc - r), min(w, xc + r + 1)
    dy = np.arange(y0, y1)[:, None] - yc
    dx = np.arange(x0, x1)[None, :] - xc
    if shape == "circle":
        mask = dx * dx + dy * dy <= r * r
    elif shape == "X":
        mask = np.abs(dx) == np.abs(dy)
    elif shape == "star":
        mask = (dx == 0) | (dy == 0) | (np.abs(dx) == np.abs(dy))
    else:
        raise ValueError(f"shape must be one of circle/X/star, got {shape!r}")
    arr[y0:y1, x0:x1][mask] = color.as_array()
    return (xc, yc) != (xi, yi)


def draw_hline(
    img: Image, row: float, color: Color, thickness: int = 3, style: str = "solid"
) -> Image:
    out = img.pixels.copy()
    paint_hline(out, row, color, thickness, style)
    return Image(out)


def draw_vline(
    img: Image, col: float, color: Color, thickness: int = 3, style: str = "solid"
) -> Image:
    out = img.pixels.copy()
    paint_vline(out, col, color, thickness, style)
    return Image(out)


def draw_marker(
    img: Image,
    x: float,
    y: float,
    shape: str = "circle",
    size: int = 6,
    color: Color = PALETTE["red"],
) -> Image:
    out = img.pixels.copy()
    paint_marker(out, x, y, shape, size, color)
    return Image(out)
