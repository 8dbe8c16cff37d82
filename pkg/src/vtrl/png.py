"""Minimal deterministic PNG codec.

Encoding always emits 8-bit RGB (color type 2), filter 0 on every scanline,
and a fixed zlib level, so identical pixels give identical bytes. Decoding
accepts non-interlaced 8-bit gray / RGB / palette / gray+alpha / RGBA with
any scanline filter; alpha is composited over white.
"""

from __future__ import annotations

import struct
import zlib

import numpy as np

from .raster import Image

__all__ = ["encode_png", "decode_png", "png_size", "PngError"]

_SIGNATURE = b"\x89PNG\r\n\x1a\n"
_ZLIB_LEVEL = 6


class PngError(ValueError):
    """Malformed or unsupported PNG data."""


def _chunk(tag: bytes, payload: bytes) -> bytes:
    return (
        struct.pack(">I", len(payload))
        + tag
        + payload
        + struct.pack(">I", zlib.crc32(tag + payload) & 0xFFFFFFFF)
    )


def encode_png(img: Image) -> bytes:
    h, w = img.pixels.shape[:2]
    ihdr = struct.pack(">IIBBBBB", w, h, 8, 2, 0, 0, 0)
    rows = np.empty((h, 1 + w * 3), dtype=np.uint8)
    rows[:, 0] = 0  # filter type None on every scanline
    rows[:, 1:] = img.pixels.reshape(h, w * 3)
    idat = zlib.compress(rows.tobytes(), _ZLIB_LEVEL)
    return _SIGNATURE + _chunk(b"IHDR", ihdr) + _chunk(b"IDAT", idat) + _chunk(b"IEND", b"")


def _iter_chunks(data: bytes):
    pos = len(_SIGNATURE)
    n = len(data)
    while pos + 8 <= n:
        (length,) = struct.unpack(">I", data[pos : pos + 4])
        tag = data[pos + 4 : pos + 8]
        payload = data[pos + 8 : pos + 8 + length]
        if len(payload) != length:
            raise PngError("truncated chunk")
        yield tag, payload
        pos += 12 + length
        if tag == b"IEND":
            return
    raise PngError("missing IEND chunk")


def _parse_ihdr(data: bytes) -> tuple[int, int, int, int, int]:
    if not data.startswith(_SIGNATURE):
        raise PngError("bad PNG signature")
    for tag, payload in _iter_chunks(data):
        if tag != b"IHDR":
            raise PngError("first chunk is not IHDR")
        if len(payload) != 13:
            raise PngError("bad IHDR length")
        w, h, depth, ctype, comp, filt, interlace = struct.unpack(">IIBBBBB", payload)
        if comp != 0 or filt != 0:
            raise PngError("unsupported compression/filter method")
        return w, h, depth, ctype, interlace
    raise PngError("no chunks")


def png_size(data: bytes) -> tuple[int, int]:
    """(width, height) from the header without decoding pixel data."""
    w, h, _, _, _ = _parse_ihdr(data)
    return w, h


_CHANNELS = {0: 1, 2: 3, 3: 1, 4: 2, 6: 4}


def _paeth(a: int, b: int, c: int) -> int:
    p = a + b - c
    pa, pb, pc = abs(p - a), abs(p - b), abs(p - c)
    if pa <= pb and pa <= pc:
        return a
    if pb <= pc:
        return b
    return c


def _unfilter(raw: bytes, w: int, h: int, bpp: int) -> np.ndarray:
    stride = w * bpp
    if len(raw) != h * (stride + 1):
        raise PngError("bad pixel data length")
    out = np.zeros((h, stride), dtype=np.uint8)
    prev = np.zeros(stride, dtype=np.uint8)
    at = 0
    for y in range(h):
        ftype = raw[at]
        line = np.frombuffer(raw, dtype=np.uint8, count=stride, offset=at + 1).copy()
        at += stride + 1
        if ftype == 0:
            cur = line
        elif ftype == 1:  # Sub: prefix sums per byte lane
            cur = line.astype(np.int64)
            for k in range(bpp):
                cur[k::bpp] = np.cumsum(cur[k::bpp]) % 256
            cur = cur.astype(np.uint8)
        elif ftype == 2:  # Up
            cur = line + prev
        elif ftype == 3:  # Average: sequential left-dependency
            cur = np.zeros(stride, dtype=np.uint8)
            for i in range(stride):
                left = int(cur[i - bpp]) if i >= bpp else 0
                cur[i] = (int(line[i]) + (left + int(prev[i])) // 2) & 0xFF
        elif ftype == 4:  # Paeth
            cur = np.zeros(stride, dtype=np.uint8)
            for i in range(stride):
                left = int(cur[i - bpp]) if i >= bpp else 0
                up = int(prev[i])
                ul = int(prev[i - bpp]) if i >= bpp else 0
                cur[i] = (int(line[i]) + _paeth(left, up, ul)) & 0xFF
        else:
            raise PngError(f"unknown filter type {ftype}")
        out[y] = cur
        prev = cur
    return out


def _composite_white(rgb: np.ndarray, alpha: np.ndarray) -> np.ndarray:
    a = alpha.astype(np.uint32)
    fg = rgb.astype(np.uint32)
    return ((fg * a[..., None] + 255 * (255 - a[..., None]) + 127) // 255).astype(np.uint8)


def decode_png(data: bytes) -> Image:
    w, h, depth, ctype, interlace = _parse_ihdr(data)
    if depth != 8:
        raise PngError(f"unsupported bit depth {depth}")
    if interlace != 0:
        raise PngError("interlaced PNG not supported")
    if ctype not in _CHANNELS:
        raise PngError(f"unsupported color type {ctype}")
    idat = bytearray()
    palette: np.ndarray | None = None
    for tag, payload in _iter_chunks(data):
        if tag == b"IDAT":
            idat.extend(payload)
        elif tag == b"PLTE":
            if len(payload) % 3:
                raise PngError("bad PLTE length")
            palette = np.frombuffer(payload, dtype=np.uint8).reshape(-1, 3)
    try:
        raw = zlib.decompress(bytes(idat))
    except zlib.error as exc:
        raise PngError(f"bad zlib stream: {exc}") from None
    ch = _CHANNELS[ctype]
    flat = _unfilter(raw, w, h, ch)
    px = flat.reshape(h, w, ch)
    if ctype == 2:
        rgb = px
    elif ctype == 0:
        rgb = np.repeat(px, 3, axis=2)
    elif ctype == 3:
        if palette is None:
            raise PngError("palette image without PLTE")
        idx = px[:, :, 0]
        if int(idx.max(initial=0)) >= len(palette):
            raise PngError("palette index out of range")
        rgb = palette[idx]
    elif ctype == 4:
        rgb = _composite_white(np.repeat(px[:, :, :1], 3, axis=2), px[:, :, 1])
    else:  # 6
        rgb = _composite_white(px[:, :, :3], px[:, :, 3])
    return Image(np.ascontiguousarray(rgb))
