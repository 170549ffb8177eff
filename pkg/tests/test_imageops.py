"""Warping, resizing, cropping, and PNG IO on uint8 images."""

import os

import numpy as np
import pytest
from PIL import Image

from vpbench.errors import CropTooSmall, EmptyIntersection, IoError, UnsupportedPngVariant
from vpbench.geometry import Homography, Point2, canvas_corners, solve_projective
from vpbench.imageops import WarpMode, bounded_view, load_png, rcc, save_png, warp_image
from vpbench.rng import Rng, derive_seed


def _noise_image(seed, h, w, c=3):
    rng = np.random.default_rng(seed)
    return rng.integers(0, 256, size=(h, w, c), dtype=np.uint8)


def _translation(dx, dy):
    m = np.eye(3)
    m[0, 2] = dx
    m[1, 2] = dy
    return Homography(m)


def test_warp_identity_is_bit_exact():
    img = _noise_image(0, 64, 48)
    out = warp_image(img, Homography.identity())
    assert out.dtype == np.uint8 and out.shape == img.shape
    assert np.array_equal(out, img)


def test_warp_integer_translation_shifts_content():
    img = _noise_image(1, 40, 40)
    out = warp_image(img, _translation(5, -3))
    # interior pixels only; border rows/cols take black fill
    assert np.array_equal(out[:-3, 5:], img[3:, :-5])
    assert np.all(out[:, :5] == 0)
    assert np.all(out[-3:, :] == 0)


def test_warp_half_pixel_translation_averages_neighbours():
    img = np.zeros((4, 4, 1), dtype=np.uint8)
    img[1, 1, 0] = 100
    img[1, 2, 0] = 200
    out = warp_image(img, _translation(0.5, 0.0))
    # inverse map puts output x=2 at source x=1.5: (100+200)/2 = 150
    assert out[1, 2, 0] == 150


def test_warp_quantization_rounds_half_up():
    img = np.zeros((2, 4, 1), dtype=np.uint8)
    img[:, 1, 0] = 1
    img[:, 2, 0] = 2
    out = warp_image(img, _translation(0.5, 0.0))
    # source x=1.5 blends 1 and 2 -> 1.5, floor(1.5 + 0.5) = 2
    assert out[0, 2, 0] == 2


def test_warp_perspective_preserves_range_and_fills_black():
    img = np.full((64, 64, 3), 255, dtype=np.uint8)
    src = canvas_corners(64, 64)
    dst = [Point2(10, 6), Point2(55, 2), Point2(60, 60), Point2(4, 58)]
    out = warp_image(img, solve_projective(src, dst))
    assert np.all(out[0, 0] == 0) and np.all(out[0, -1] == 0)  # outside the quad
    assert np.all(out[32, 32] == 255)  # deep inside it
    assert out.max() == 255


def test_warp_rejects_bad_images():
    h = Homography.identity()
    with pytest.raises(ValueError):
        warp_image(np.zeros((4, 4), dtype=np.uint8), h)  # missing channel axis
    with pytest.raises(ValueError):
        warp_image(np.zeros((4, 4, 2), dtype=np.uint8), h)
    with pytest.raises(ValueError):
        warp_image(np.zeros((4, 4, 3), dtype=np.float32), h)


def test_rcc_landscape_portrait_and_square():
    land = _noise_image(2, 50, 100)
    out = rcc(land, 64)
    assert out.shape == (64, 64, 3)
    port = rcc(np.transpose(land, (1, 0, 2)).copy(), 64)
    assert port.shape == (64, 64, 3)
    # transpose symmetry: same pipeline on the transposed image
    assert np.array_equal(np.transpose(out, (1, 0, 2)), port)
    sq = _noise_image(3, 64, 64)
    assert np.array_equal(rcc(sq, 64), sq)  # resize to own size is exact


def test_rcc_scaled_dimension_rounds_to_nearest():
    # 50x100 at side 64: long side 100*64/50 = 128 exactly
    assert rcc(_noise_image(4, 50, 100), 64).shape == (64, 64, 3)
    # 3x2 at side 2: long side floor(3*2/2 + 0.5) = 3, crop x0 = 0
    out = rcc(_noise_image(5, 2, 3), 2)
    assert out.shape == (2, 2, 3)


def test_rcc_centre_crop_origin():
    img = np.zeros((4, 8, 1), dtype=np.uint8)
    img[:, 2:6, 0] = 255  # center band survives a width-8 -> 4 crop
    out = rcc(img, 4)
    assert np.all(out == 255)


def test_bounded_identity_equals_plain_resize():
    img = _noise_image(6, 100, 100)
    out = bounded_view(img, Homography.identity(), 64)
    resized = rcc(img, 64)  # square input: rcc is exactly the resize
    assert np.array_equal(out, resized)
    same = _noise_image(7, 64, 64)
    assert np.array_equal(bounded_view(same, Homography.identity(), 64), same)


def test_bounded_view_has_no_fill_on_white(tmp_path):
    img = np.full((224, 224, 3), 255, dtype=np.uint8)
    rng = Rng(derive_seed(11, "nofill-unit"))
    from vpbench.geometry import sample_homography

    for _ in range(5):
        h = sample_homography(224, 224, 0.8, rng)
        bounded = bounded_view(img, h, 64)
        assert bounded.shape == (64, 64, 3)
        assert np.count_nonzero(bounded == 0) == 0
        warped = warp_image(img, h)
        if not np.array_equal(h.m, np.eye(3)):
            assert np.count_nonzero(warped == 0) > 0


def test_bounded_view_crop_too_small():
    img = _noise_image(8, 64, 64)
    src = canvas_corners(64, 64)
    # footprint collapses to a ~4 px quad near the centre
    dst = [Point2(30, 30), Point2(34, 30), Point2(34, 34), Point2(30, 34)]
    with pytest.raises(CropTooSmall):
        bounded_view(img, solve_projective(src, dst), 64)


def test_bounded_view_disjoint_footprint():
    img = _noise_image(9, 32, 32)
    with pytest.raises(EmptyIntersection):
        bounded_view(img, _translation(100.0, 0.0), 32)


def test_warp_mode_values():
    assert WarpMode.DEFAULT.value == "default"
    assert WarpMode.BOUNDED.value == "bounded"
    assert WarpMode("bounded") is WarpMode.BOUNDED


def test_png_roundtrip_rgb_and_gray(tmp_path):
    rgb = _noise_image(10, 20, 30)
    p = str(tmp_path / "rgb.png")
    save_png(rgb, p)
    assert np.array_equal(load_png(p), rgb)
    gray = _noise_image(11, 20, 30, c=1)
    p = str(tmp_path / "gray.png")
    save_png(gray, p)
    back = load_png(p)
    assert back.shape == (20, 30, 1)
    assert np.array_equal(back, gray)


def test_png_save_is_deterministic(tmp_path):
    img = _noise_image(12, 16, 16)
    a, b = str(tmp_path / "a.png"), str(tmp_path / "b.png")
    save_png(img, a)
    save_png(img, b)
    assert open(a, "rb").read() == open(b, "rb").read()


def test_load_png_rejects_non_png(tmp_path):
    p = str(tmp_path / "fake.png")
    with open(p, "w") as f:
        f.write("not an image")
    with pytest.raises(IoError):
        load_png(p)
    jpg = str(tmp_path / "img.jpg")
    Image.fromarray(_noise_image(13, 8, 8)).save(jpg, format="JPEG")
    with pytest.raises(IoError):
        load_png(jpg)


def test_load_png_rejects_16_bit(tmp_path):
    p = str(tmp_path / "deep.png")
    Image.fromarray((np.arange(16, dtype=np.uint16).reshape(4, 4) * 1000)).save(p)
    with pytest.raises(UnsupportedPngVariant):
        load_png(p)


def test_load_png_rejects_alpha(tmp_path):
    p = str(tmp_path / "rgba.png")
    Image.fromarray(np.zeros((4, 4, 4), dtype=np.uint8), "RGBA").save(p)
    with pytest.raises(UnsupportedPngVariant):
        load_png(p)


def test_load_png_palette_variants(tmp_path):
    base = Image.fromarray(np.arange(16, dtype=np.uint8).reshape(4, 4) * 16).convert("P")
    plain = str(tmp_path / "p.png")
    base.save(plain)
    out = load_png(plain)
    assert out.shape == (4, 4, 3)  # expanded to RGB
    trans = str(tmp_path / "pt.png")
    base.save(trans, transparency=0)
    with pytest.raises(UnsupportedPngVariant):
        load_png(trans)


def test_load_png_missing_file():
    with pytest.raises(IoError):
        load_png("/nonexistent/nowhere.png")


def test_save_png_rejects_bad_arrays(tmp_path):
    p = str(tmp_path / "x.png")
    with pytest.raises(ValueError):
        save_png(np.zeros((4, 4, 3), dtype=np.float64), p)
    with pytest.raises(ValueError):
        save_png(np.zeros((4, 4, 2), dtype=np.uint8), p)


def test_save_png_unwritable_path():
    with pytest.raises(IoError):
        save_png(_noise_image(14, 4, 4), "/nonexistent/dir/x.png")


def test_den_guard_blacks_vanishing_denominator():
    """Pixels where the inverse map hits the line at infinity go black."""
    import warnings

    from vpbench._kernels import warp_bilinear

    img = np.full((8, 8, 1), 200.0)
    # den = -0.25*(x+0.5) + 1.125 is exactly 0.0 at column 4's centre
    h_inv = np.ascontiguousarray(
        [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [-0.25, 0.0, 1.125]]
    )
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        out = warp_bilinear(img, h_inv)
    assert np.all(out[:, 4, 0] == 0.0)
    assert out.max() == 200.0  # column 0 maps inside the source
