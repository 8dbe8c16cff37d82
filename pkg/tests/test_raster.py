"""Raster tests: image container, boxes, resampling, exact quarter-turn
permutations, and in-place drawing."""

from __future__ import annotations

import math
import random

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from vtrl.raster import (
    BBox,
    Color,
    DASH_PERIOD,
    EmptyRegionError,
    Image,
    PALETTE,
    UnknownColorError,
    crop_output_dims,
    crop_resize,
    draw_hline,
    draw_marker,
    draw_vline,
    flip,
    paint_hline,
    paint_marker,
    paint_vline,
    resize,
    rotate_arbitrary,
    rotate_quarter,
    rotated_extent,
)

RED = PALETTE["red"]


def _random_image(rng: random.Random, w: int, h: int) -> Image:
    data = np.frombuffer(
        bytes(rng.getrandbits(8) for _ in range(w * h * 3)), dtype=np.uint8
    )
    return Image(data.reshape(h, w, 3).copy())


def _gradient_image(w: int, h: int) -> Image:
    xs = np.arange(w, dtype=np.float64)[None, :]
    ys = np.arange(h, dtype=np.float64)[:, None]
    plane = (xs * 2.0 + ys * 3.0) % 256.0
    arr = np.stack([plane, (plane + 40) % 256, (plane * 2) % 256], axis=2)
    return Image(arr.astype(np.uint8))


# --- container -----------------------------------------------------------------


def test_blank_image_fill_and_shape():
    img = Image.blank(7, 5, PALETTE["blue"])
    assert img.size == (7, 5) and img.long_edge == 7
    assert np.array_equal(img.pixels[2, 3], PALETTE["blue"].as_array())


def test_image_rejects_bad_shapes():
    with pytest.raises(ValueError):
        Image(np.zeros((4, 4), dtype=np.uint8))
    with pytest.raises(ValueError):
        Image(np.zeros((0, 4, 3), dtype=np.uint8))


def test_image_copy_is_independent():
    img = Image.blank(4, 4)
    cp = img.copy()
    cp.pixels[0, 0] = (1, 2, 3)
    assert not img.same_pixels(cp)


def test_color_lookup():
    assert Color.named(" Red ") == PALETTE["red"]
    with pytest.raises(UnknownColorError):
        Color.named("chartreuse")


# --- boxes ----------------------------------------------------------------------


def test_box_geometry():
    b = BBox(2.0, 3.0, 8.0, 7.0)
    assert b.width() == 6.0 and b.height() == 4.0 and b.area() == 24.0
    assert b.intersect(BBox(5, 0, 20, 5)).area() == 3.0 * 2.0
    inverted = BBox(8.0, 7.0, 2.0, 3.0)
    assert inverted.area() == 0.0


def test_box_clamp_and_int_region():
    b = BBox(-5.0, -5.0, 4.6, 3.4)
    assert b.clamped(10, 10) == BBox(0.0, 0.0, 4.6, 3.4)
    assert b.int_region(10, 10) == (0, 0, 5, 3)
    with pytest.raises(EmptyRegionError):
        BBox(20, 20, 30, 30).int_region(10, 10)
    with pytest.raises(EmptyRegionError):
        BBox(3, 3, 3.2, 9).int_region(10, 10)  # rounds to zero width


# --- resampling -----------------------------------------------------------------


def test_resize_identity_is_exact():
    img = _random_image(random.Random(1), 13, 9)
    out = resize(img, 13, 9)
    assert out.same_pixels(img)
    assert out.pixels is not img.pixels


def test_exact_halving_block_averages_within_one():
    img = _gradient_image(32, 24)
    out = resize(img, 16, 12)
    blocks = img.pixels.reshape(12, 2, 16, 2, 3).astype(np.float64)
    means = blocks.mean(axis=(1, 3))
    assert np.abs(out.pixels.astype(np.float64) - means).max() <= 1.0


def test_downscale_of_constant_image_is_constant():
    img = Image.blank(30, 20, PALETTE["orange"])
    out = resize(img, 7, 5)
    assert np.all(out.pixels == PALETTE["orange"].as_array())


def test_crop_full_box_roundtrip_is_identity():
    img = _random_image(random.Random(2), 20, 14)
    out = crop_resize(img, BBox(0, 0, 20, 14), out_max_edge=20)
    assert out.same_pixels(img)


def test_crop_upscale_cap():
    img = _gradient_image(40, 30)
    out = crop_resize(img, BBox(0, 0, 10, 8), out_max_edge=768, upscale_cap=4.0)
    # long edge of the crop is 10, so the output long edge is 4 * 10
    assert out.size == (40, 32)
    assert crop_output_dims(10, 8) == (40, 32)


def test_crop_respects_max_edge():
    img = _gradient_image(100, 60)
    out = crop_resize(img, BBox(0, 0, 100, 60), out_max_edge=50)
    assert out.size == (50, 30)
    assert crop_output_dims(100, 60, out_max_edge=50) == (50, 30)


def test_crop_clamps_overhanging_box():
    img = _gradient_image(20, 20)
    out = crop_resize(img, BBox(10, 10, 99, 99), out_max_edge=10)
    assert out.size == (10, 10)
    assert np.array_equal(out.pixels, img.pixels[10:20, 10:20])


def test_crop_empty_box_raises():
    img = Image.blank(10, 10)
    with pytest.raises(EmptyRegionError):
        crop_resize(img, BBox(50, 50, 60, 60))


def test_crop_upscaled_affine_plane_stays_affine():
    # bilinear interpolation reproduces an affine intensity plane exactly,
    # so upscaling a ramp must stay within rounding of the analytic plane
    w, h = 12, 10
    xs = np.arange(w, dtype=np.float64)[None, :]
    ys = np.arange(h, dtype=np.float64)[:, None]
    plane = 10.0 + 4.0 * xs + 6.0 * ys
    img = Image(np.repeat(plane[:, :, None], 3, axis=2).astype(np.uint8))
    out = crop_resize(img, BBox(0, 0, w, h), out_max_edge=2 * w, upscale_cap=4.0)
    ow, oh = out.size
    sx, sy = w / ow, h / oh
    # sample positions are pixel centers, clamped to the source center range
    px = np.clip((np.arange(ow) + 0.5) * sx - 0.5, 0.0, w - 1.0)
    py = np.clip((np.arange(oh) + 0.5) * sy - 0.5, 0.0, h - 1.0)
    expected = 10.0 + 4.0 * px[None, :] + 6.0 * py[:, None]
    assert np.abs(out.pixels[:, :, 0].astype(np.float64) - expected).max() <= 1.0


# --- quarter turns and flips -------------------------------------------------------


@pytest.mark.parametrize("k", range(-2, 7))
def test_quarter_turn_matches_array_rotation(k):
    img = _random_image(random.Random(3 + k), 11, 6)
    out = rotate_quarter(img, k)
    assert np.array_equal(out.pixels, np.rot90(img.pixels, -(k % 4)))


def test_quarter_turns_compose():
    img = _random_image(random.Random(4), 9, 7)
    twice = rotate_quarter(rotate_quarter(img, 1), 1)
    assert twice.same_pixels(rotate_quarter(img, 2))
    assert rotate_quarter(img, 4).same_pixels(img)


def test_flip_matches_array_flip():
    img = _random_image(random.Random(5), 8, 5)
    assert np.array_equal(flip(img, "horizontal").pixels, img.pixels[:, ::-1])
    assert np.array_equal(flip(img, "vertical").pixels, img.pixels[::-1, :])
    with pytest.raises(ValueError):
        flip(img, "diagonal")


def test_flips_are_involutions():
    img = _random_image(random.Random(6), 10, 4)
    assert flip(flip(img, "horizontal"), "horizontal").same_pixels(img)
    assert flip(flip(img, "vertical"), "vertical").same_pixels(img)


def test_arbitrary_rotation_dispatches_quarter_turns_exactly():
    img = _random_image(random.Random(7), 12, 8)
    for angle, k in ((0.0, 0), (90.0, 1), (180.0, 2), (270.0, 3), (450.0, 1)):
        assert rotate_arbitrary(img, angle).same_pixels(rotate_quarter(img, k))


def test_arbitrary_rotation_extent_and_background():
    img = Image.blank(10, 10, PALETTE["green"])
    out = rotate_arbitrary(img, 45.0)
    assert out.size == rotated_extent(10, 10, 45.0) == (15, 15)
    # corners fall outside the rotated square and take the white background
    assert np.array_equal(out.pixels[0, 0], PALETTE["white"].as_array())
    # the center still holds the source color
    assert np.array_equal(out.pixels[7, 7], PALETTE["green"].as_array())


def test_rotated_extent_right_angles():
    assert rotated_extent(10, 6, 0) == (10, 6)
    assert rotated_extent(10, 6, 90) == (6, 10)
    assert rotated_extent(10, 6, 180) == (10, 6)
    assert rotated_extent(10, 6, 270) == (6, 10)


@given(st.integers(2, 40), st.integers(2, 40), st.floats(0, 360))
def test_rotated_extent_holds_the_source(w, h, angle):
    ow, oh = rotated_extent(w, h, angle)
    t = math.radians(angle % 360.0)
    need_w = w * abs(math.cos(t)) + h * abs(math.sin(t))
    need_h = w * abs(math.sin(t)) + h * abs(math.cos(t))
    assert ow >= need_w - 1e-9 and oh >= need_h - 1e-9


# --- drawing --------------------------------------------------------------------------


def test_hline_rows_and_thickness():
    img = Image.blank(20, 20)
    clamped = paint_hline(img.pixels, 10, RED, thickness=3)
    assert clamped is False
    red = RED.as_array()
    for r in (9, 10, 11):
        assert np.all(img.pixels[r] == red)
    assert np.all(img.pixels[8] == 255) and np.all(img.pixels[12] == 255)


def test_vline_is_hline_transposed():
    a = Image.blank(20, 14)
    b = Image.blank(14, 20)
    paint_hline(a.pixels, 5, RED, thickness=2)
    paint_vline(b.pixels, 5, RED, thickness=2)
    assert np.array_equal(a.pixels.transpose(1, 0, 2), b.pixels)


def test_line_clamp_flag_and_position():
    img = Image.blank(10, 10)
    assert paint_hline(img.pixels, -7, RED, thickness=1) is True
    assert np.all(img.pixels[0] == RED.as_array())
    img2 = Image.blank(10, 10)
    assert paint_vline(img2.pixels, 99, RED, thickness=1) is True
    assert np.all(img2.pixels[:, 9] == RED.as_array())


def test_dashed_line_period():
    img = Image.blank(3 * DASH_PERIOD, 5)
    paint_hline(img.pixels, 2, RED, thickness=1, style="dashed")
    row = img.pixels[2]
    on = RED.as_array()
    assert np.all(row[:DASH_PERIOD] == on)
    assert np.all(row[DASH_PERIOD : 2 * DASH_PERIOD] == 255)
    assert np.all(row[2 * DASH_PERIOD :] == on)
    with pytest.raises(ValueError):
        paint_hline(img.pixels, 2, RED, style="dotted")


def test_marker_shapes_cover_center():
    for shape in ("circle", "X", "star"):
        img = Image.blank(21, 21)
        paint_marker(img.pixels, 10, 10, shape=shape, size=4)
        assert np.array_equal(img.pixels[10, 10], RED.as_array()), shape
    with pytest.raises(ValueError):
        paint_marker(Image.blank(5, 5).pixels, 2, 2, shape="triangle")


def test_marker_footprints():
    red = RED.as_array()
    img = Image.blank(21, 21)
    paint_marker(img.pixels, 10, 10, shape="circle", size=3)
    assert np.array_equal(img.pixels[10, 13], red)  # on the radius
    assert np.all(img.pixels[10, 14] == 255)  # just past it
    img = Image.blank(21, 21)
    paint_marker(img.pixels, 10, 10, shape="X", size=3)
    assert np.array_equal(img.pixels[12, 12], red)  # diagonal arm
    assert np.all(img.pixels[10, 12] == 255)  # axis stays clear
    img = Image.blank(21, 21)
    paint_marker(img.pixels, 10, 10, shape="star", size=3)
    assert np.array_equal(img.pixels[12, 12], red)  # diagonal arm
    assert np.array_equal(img.pixels[10, 12], red)  # axis arm too


def test_marker_clamp_flag():
    img = Image.blank(10, 10)
    assert paint_marker(img.pixels, -3, 4, size=2) is True
    assert np.array_equal(img.pixels[4, 0], RED.as_array())
    assert paint_marker(Image.blank(10, 10).pixels, 3.0, 4.0, size=2) is False


def test_draw_variants_are_pure():
    img = _random_image(random.Random(8), 16, 12)
    before = img.pixels.copy()
    out1 = draw_hline(img, 5, RED)
    out2 = draw_vline(img, 5, RED)
    out3 = draw_marker(img, 5, 5)
    assert np.array_equal(img.pixels, before)
    assert not out1.same_pixels(img)
    assert not out2.same_pixels(img)
    assert not out3.same_pixels(img)


def test_drawing_is_idempotent():
    img = Image.blank(16, 12)
    once = draw_hline(img, 4, RED, thickness=3)
    twice = draw_hline(once, 4, RED, thickness=3)
    assert twice.same_pixels(once)
