import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from morphscat.errors import CropOutOfBounds, DecodeError, DimensionMismatch, IoError, PlaneTooSmall
from morphscat.imgproc import (
    CROP_SIZE,
    FaceCrop,
    LAPLACIAN_8,
    RgbImage,
    crop_resize_face,
    filter_channels,
    laplacian_filter,
    load_image,
    rgb_to_ycbcr,
    ycbcr_to_rgb_values,
)

from conftest import make_png


def scalar_ycbcr(r, g, b):
    """Independent scalar reference for the full-range BT.601 conversion."""
    y = 0.299 * r + 0.587 * g + 0.114 * b
    cb = 128 - 0.168736 * r - 0.331264 * g + 0.5 * b
    cr = 128 + 0.5 * r - 0.418688 * g - 0.081312 * b
    return y, cb, cr


def solid_crop(rgb):
    return FaceCrop(np.full((CROP_SIZE, CROP_SIZE, 3), rgb, dtype=np.uint8))


# ---------------------------------------------------------------------------
# load_image


def test_load_1x1_black_png(tmp_path):
    p = make_png(tmp_path / "black.png", np.zeros((1, 1, 3)))
    img = load_image(p)
    assert (img.width, img.height) == (1, 1)
    assert img.pixels.tolist() == [[[0, 0, 0]]]


def test_load_2x2_white_png(tmp_path):
    p = make_png(tmp_path / "white.png", np.full((2, 2, 3), 255))
    img = load_image(p)
    assert img.pixels.shape == (2, 2, 3)
    assert np.all(img.pixels == 255)


def test_load_truncated_file_decode_error(tmp_path):
    good = tmp_path / "good.png"
    make_png(good, np.random.default_rng(0).integers(0, 256, (64, 64, 3)))
    data = good.read_bytes()
    bad = tmp_path / "trunc.png"
    bad.write_bytes(data[: len(data) // 2])
    with pytest.raises(DecodeError):
        load_image(bad)


def test_load_missing_file_io_error(tmp_path):
    with pytest.raises(IoError):
        load_image(tmp_path / "nope.png")


def test_load_garbage_decode_error(tmp_path):
    p = tmp_path / "garbage.png"
    p.write_bytes(b"this is not an image at all")
    with pytest.raises(DecodeError):
        load_image(p)


def test_load_unsupported_format_decode_error(tmp_path):
    from PIL import Image

    p = tmp_path / "img.bmp"
    Image.fromarray(np.zeros((4, 4, 3), dtype=np.uint8)).save(p, format="BMP")
    with pytest.raises(DecodeError):
        load_image(p)


def test_load_grayscale_promoted(tmp_path):
    p = make_png(tmp_path / "gray.png", np.arange(16, dtype=np.uint8).reshape(4, 4) * 10)
    img = load_image(p)
    assert img.pixels.shape == (4, 4, 3)
    assert np.all(img.pixels[..., 0] == img.pixels[..., 1])
    assert np.all(img.pixels[..., 1] == img.pixels[..., 2])


def test_load_rgba_alpha_discarded(tmp_path):
    from PIL import Image

    px = np.zeros((2, 2, 4), dtype=np.uint8)
    px[..., 0] = 200
    px[..., 3] = 7  # nearly transparent; color must survive unchanged
    p = tmp_path / "rgba.png"
    Image.fromarray(px, mode="RGBA").save(p, format="PNG")
    img = load_image(p)
    assert img.pixels.shape == (2, 2, 3)
    assert np.all(img.pixels[..., 0] == 200)


# ---------------------------------------------------------------------------
# crop_resize_face


def test_crop_250_passthrough_bitwise():
    rng = np.random.default_rng(1)
    px = rng.integers(0, 256, (CROP_SIZE, CROP_SIZE, 3), dtype=np.uint8)
    out = crop_resize_face(RgbImage(px))
    assert np.array_equal(out.pixels, px)


def test_crop_constant_gray_preserved():
    img = RgbImage(np.full((500, 500, 3), 100, dtype=np.uint8))
    out = crop_resize_face(img)
    assert out.pixels.shape == (CROP_SIZE, CROP_SIZE, 3)
    assert np.all(out.pixels == 100)


def test_crop_out_of_bounds():
    img = RgbImage(np.zeros((100, 100, 3), dtype=np.uint8))
    with pytest.raises(CropOutOfBounds):
        crop_resize_face(img, crop=(50, 50, 80, 80))
    with pytest.raises(CropOutOfBounds):
        crop_resize_face(img, crop=(-1, 0, 50, 50))


def test_crop_rect_center_equivalence():
    rng = np.random.default_rng(2)
    px = rng.integers(0, 256, (300, 400, 3), dtype=np.uint8)
    img = RgbImage(px)
    assert np.array_equal(
        crop_resize_face(img).pixels, crop_resize_face(img, crop=(50, 0, 300, 300)).pixels
    )


def test_crop_deterministic():
    rng = np.random.default_rng(3)
    px = rng.integers(0, 256, (311, 421, 3), dtype=np.uint8)
    a = crop_resize_face(RgbImage(px), crop=(10, 20, 301, 200))
    b = crop_resize_face(RgbImage(px.copy()), crop=(10, 20, 301, 200))
    assert np.array_equal(a.pixels, b.pixels)


# ---------------------------------------------------------------------------
# rgb_to_ycbcr


@pytest.mark.parametrize(
    "rgb,expected",
    [
        ((0, 0, 0), (0.0, 128.0, 128.0)),
        ((255, 255, 255), (255.0, 128.0, 128.0)),
        ((255, 0, 0), (76.245, 84.97232, 255.5)),
    ],
)
def test_ycbcr_known_values(rgb, expected):
    cs = rgb_to_ycbcr(solid_crop(rgb))
    got = (cs.y[0, 0], cs.cb[0, 0], cs.cr[0, 0])
    assert got == pytest.approx(expected, abs=1e-9)
    assert got == pytest.approx(scalar_ycbcr(*rgb), abs=1e-9)


@given(
    st.tuples(
        st.integers(0, 255), st.integers(0, 255), st.integers(0, 255)
    )
)
@settings(max_examples=50, deadline=None)
def test_ycbcr_matches_scalar_reference(rgb):
    cs = rgb_to_ycbcr(solid_crop(rgb))
    ref = scalar_ycbcr(*rgb)
    assert (cs.y[3, 7], cs.cb[3, 7], cs.cr[3, 7]) == pytest.approx(ref, abs=1e-9)


def test_ycbcr_roundtrip_within_1e9():
    rng = np.random.default_rng(4)
    crop = FaceCrop(rng.integers(0, 256, (CROP_SIZE, CROP_SIZE, 3), dtype=np.uint8))
    back = ycbcr_to_rgb_values(rgb_to_ycbcr(crop))
    assert np.max(np.abs(back - crop.pixels)) < 1e-9


# ---------------------------------------------------------------------------
# laplacian_filter


def test_laplacian_constant_plane_zero():
    out = laplacian_filter(np.full((8, 9), 42.5))
    assert out.shape == (8, 9)
    assert np.all(out == 0.0)


def test_laplacian_impulse_response():
    plane = np.zeros((5, 5))
    plane[2, 2] = 1.0
    out = laplacian_filter(plane)
    expected = np.zeros((5, 5))
    expected[2, 2] = -4.0
    expected[1, 2] = expected[3, 2] = expected[2, 1] = expected[2, 3] = 1.0
    assert np.array_equal(out, expected)


def test_laplacian_ramp_zero_interior():
    x = np.arange(10, dtype=float)
    plane = np.tile(x, (7, 1))
    out = laplacian_filter(plane)
    assert np.allclose(out[:, 1:-1], 0.0, atol=1e-12)


def test_laplacian_too_small():
    with pytest.raises(PlaneTooSmall):
        laplacian_filter(np.zeros((2, 5)))


def test_laplacian_rejects_non_2d():
    with pytest.raises(DimensionMismatch):
        laplacian_filter(np.zeros((3, 3, 3)))


@given(st.integers(0, 2**32 - 1), st.floats(-5, 5), st.floats(-5, 5))
@settings(max_examples=25, deadline=None)
def test_laplacian_linearity(seed, a, b):
    rng = np.random.default_rng(seed)
    p = rng.standard_normal((12, 14))
    q = rng.standard_normal((12, 14))
    lhs = laplacian_filter(a * p + b * q)
    rhs = a * laplacian_filter(p) + b * laplacian_filter(q)
    scale = max(np.abs(rhs).max(), 1.0)
    assert np.max(np.abs(lhs - rhs)) / scale < 1e-9


def test_laplacian_deterministic():
    rng = np.random.default_rng(5)
    plane = rng.standard_normal((33, 41))
    assert np.array_equal(laplacian_filter(plane), laplacian_filter(plane.copy()))


def test_laplacian_8_neighbor_variant_available():
    plane = np.zeros((5, 5))
    plane[2, 2] = 1.0
    out = laplacian_filter(plane, kernel=LAPLACIAN_8)
    assert out[2, 2] == -8.0
    assert out[1, 1] == 1.0


# ---------------------------------------------------------------------------
# filter_channels


def test_filter_channels_constant_crop_zero():
    fcs = filter_channels(rgb_to_ycbcr(solid_crop((13, 200, 91))))
    for plane in (fcs.ly, fcs.lcb, fcs.lcr):
        assert np.all(plane == 0.0)
        assert plane.shape == (CROP_SIZE, CROP_SIZE)


def test_filter_channels_single_red_pixel_response():
    px = np.zeros((CROP_SIZE, CROP_SIZE, 3), dtype=np.uint8)
    px[100, 100] = (255, 0, 0)
    fcs = filter_channels(rgb_to_ycbcr(FaceCrop(px)))
    # hand-composed: center response is -4 * (channel(red) - channel(black))
    red = scalar_ycbcr(255, 0, 0)
    black = scalar_ycbcr(0, 0, 0)
    for plane, r, k in zip((fcs.ly, fcs.lcb, fcs.lcr), red, black):
        assert plane[100, 100] == pytest.approx(-4.0 * (r - k), abs=1e-9)
        assert plane[100, 100] != 0.0
        assert plane[99, 100] == pytest.approx(r - k, abs=1e-9)


def test_filter_channels_dims_match():
    rng = np.random.default_rng(6)
    crop = FaceCrop(rng.integers(0, 256, (CROP_SIZE, CROP_SIZE, 3), dtype=np.uint8))
    fcs = filter_channels(rgb_to_ycbcr(crop))
    assert fcs.ly.shape == fcs.lcb.shape == fcs.lcr.shape == (CROP_SIZE, CROP_SIZE)
