"""Embedded 5x7 bitmap font for chart labels and tick text.

Each glyph is five column bytes, LSB = top row. Enough coverage for integer
tick labels, alphanumeric point labels, and simple punctuation; lowercase
falls back to the uppercase glyph, anything unknown renders as a hollow box.
"""

from __future__ import annotations

import numpy as np

from .raster import Color

__all__ = ["GLYPH_W", "GLYPH_H", "text_width", "paint_text"]

GLYPH_W = 5
GLYPH_H = 7
_ADVANCE = GLYPH_W + 1

_FONT: dict[str, tuple[int, int, int, int, int]] = {
    " ": (0x00, 0x00, 0x00, 0x00, 0x00),
    "-": (0x08, 0x08, 0x08, 0x08, 0x08),
    ".": (0x00, 0x60, 0x60, 0x00, 0x00),
    ",": (0x00, 0x50, 0x30, 0x00, 0x00),
    ":": (0x00, 0x36, 0x36, 0x00, 0x00),
    "(": (0x00, 0x1C, 0x22, 0x41, 0x00),
    ")": (0x00, 0x41, 0x22, 0x1C, 0x00),
    "<": (0x08, 0x14, 0x22, 0x41, 0x00),
    ">": (0x00, 0x41, 0x22, 0x14, 0x08),
    "=": (0x14, 0x14, 0x14, 0x14, 0x14),
    "?": (0x02, 0x01, 0x51, 0x09, 0x06),
    "/": (0x20, 0x10, 0x08, 0x04, 0x02),
    "0": (0x3E, 0x51, 0x49, 0x45, 0x3E),
    "1": (0x00, 0x42, 0x7F, 0x40, 0x00),
    "2": (0x42, 0x61, 0x51, 0x49, 0x46),
    "3": (0x21, 0x41, 0x45, 0x4B, 0x31),
    "4": (0x18, 0x14, 0x12, 0x7F, 0x10),
    "5": (0x27, 0x45, 0x45, 0x45, 0x39),
    "6": (0x3C, 0x4A, 0x49, 0x49, 0x30),
    "7": (0x01, 0x71, 0x09, 0x05, 0x03),
    "8": (0x36, 0x49, 0x49, 0x49, 0x36),
    "9": (0x06, 0x49, 0x49, 0x29, 0x1E),
    "A": (0x7E, 0x11, 0x11, 0x11, 0x7E),
    "B": (0x7F, 0x49, 0x49, 0x49, 0x36),
    "C": (0x3E, 0x41, 0x41, 0x41, 0x22),
    "D": (0x7F, 0x41, 0x41, 0x22, 0x1C),
    "E": (0x7F, 0x49, 0x49, 0x49, 0x41),
    "F": (0x7F, 0x09, 0x09, 0x09, 0x01),
    "G": (0x3E, 0x41, 0x49, 0x49, 0x7A),
    "H": (0x7F, 0x08, 0x08, 0x08, 0x7F),
    "I": (0x00, 0x41, 0x7F, 0x41, 0x00),
    "J": (0x20, 0x40, 0x41, 0x3F, 0x01),
    "K": (0x7F, 0x08, 0x14, 0x22, 0x41),
    "L": (0x7F, 0x40, 0x40, 0x40, 0x40),
    "M": (0x7F, 0x02, 0x0C, 0x02, 0x7F),
    "N": (0x7F, 0x04, 0x08, 0x10, 0x7F),
    "O": (0x3E, 0x41, 0x41, 0x41, 0x3E),
    "P": (0x7F, 0x09, 0x09, 0x09, 0x06),
    "Q": (0x3E, 0x41, 0x51, 0x21, 0x5E),
    "R": (0x7F, 0x09, 0x19, 0x29, 0x46),
    "S": (0x46, 0x49, 0x49, 0x49, 0x31),
    "T": (0x01, 0x01, 0x7F, 0x01, 0x01),
    "U": (0x3F, 0x40, 0x40, 0x40, 0x3F),
    "V": (0x1F, 0x20, 0x40, 0x20, 0x1F),
    "W": (0x3F, 0x40, 0x38, 0x40, 0x3F),
    "X": (0x63, 0x14, 0x08, 0x14, 0x63),
    "Y": (0x07, 0x08, 0x70, 0x08, 0x07),
    "Z": (0x61, 0x51, 0x49, 0x45, 0x43),
}

_UNKNOWN = (0x7F, 0x41, 0x41, 0x41, 0x7F)


def _glyph(ch: str) -> tuple[int, int, int, int, int]:
    return _FONT.get(ch) or _FONT.get(ch.upper()) or _UNKNOWN


def text_width(text: str, scale: int = 1) -> int:
    if not text:
        return 0
    return (len(text) * _ADVANCE - 1) * scale


def paint_text(
    arr: np.ndarray, x: int, y: int, text: str, color: Color, scale: int = 1
) -> None:
    """Paint `text` with its top-left corner at (x, y), in place.

    Pixels falling outside the array are silently skipped.
    """
    h, w = arr.shape[:2]
    rgb = color.as_array()
    pen = int(x)
    top = int(y)
    s = max(1, int(scale))
    for ch in text:
        cols = _glyph(ch)
        for cx, bits in enumerate(cols):
            if not bits:
                continue
            for cy in range(GLYPH_H):
                if not (bits >> cy) & 1:
                    continue
                py0 = top + cy * s
                px0 = pen + cx * s
                y0, y1 = max(0, py0), min(h, py0 + s)
                x0, x1 = max(0, px0), min(w, px0 + s)
                if y0 < y1 and x0 < x1:
                    arr[y0:y1, x0:x1] = rgb
        pen += _ADVANCE * s
