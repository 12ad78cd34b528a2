import colorsys

import numpy as np
import pytest
from skimage.color import rgb2lab

from conftest import fixture_bytes, random_frame
from mlai.detection import BoundingBox
from mlai.errors import EmptyIntersection, LengthMismatch, MalformedHeader
from mlai.imaging import (
    ColorModel,
    Frame,
    crop,
    decode_frame,
    encode_frame,
    hsv_array,
    lab_array,
    read_image,
    rgb_to_hsv,
    rgb_to_lab,
)


def test_golden_1x1_gray():
    f = Frame(1, 1, 1, b"\x7f", ColorModel.GRAY8)
    assert encode_frame(f) == fixture_bytes("frame_1x1_gray.bin")
    assert decode_frame(fixture_bytes("frame_1x1_gray.bin")) == f


def test_golden_2x2_rgb():
    arr = np.arange(1, 13, dtype=np.uint8).reshape(2, 2, 3)
    f = Frame.from_array(arr)
    data = encode_frame(f)
    assert data == fixture_bytes("frame_2x2_rgb.bin")
    assert data[14:] == bytes(range(1, 13))


def test_roundtrip_random(rng):
    for _ in range(200):
        f = random_frame(rng)
        assert decode_frame(encode_frame(f)) == f


def test_bad_magic():
    with pytest.raises(MalformedHeader):
        decode_frame(b"XXXX" + bytes(11))


def test_truncated_header():
    with pytest.raises(MalformedHeader):
        decode_frame(b"MLF1\x00\x00")


def test_short_payload():
    # header declares 2x2 gray = 4 pixels, 3 bytes follow
    data = b"MLF1" + (2).to_bytes(4, "big") + (2).to_bytes(4, "big") + b"\x01\x01" + b"abc"
    with pytest.raises(LengthMismatch):
        decode_frame(data)


def test_channel_model_consistency():
    with pytest.raises(ValueError):
        Frame(1, 1, 3, b"abc", ColorModel.GRAY8)
    with pytest.raises(LengthMismatch):
        Frame(2, 1, 1, b"a", ColorModel.GRAY8)


def test_array_view_is_readonly():
    f = Frame.from_array(np.zeros((2, 3, 3), np.uint8))
    assert f.array().shape == (2, 3, 3)
    with pytest.raises(ValueError):
        f.array()[0, 0, 0] = 1


def test_hsv_examples():
    p = rgb_to_hsv(255, 0, 0)
    assert (p.h, p.s, p.v) == (0.0, 1.0, 1.0)
    p = rgb_to_hsv(128, 128, 128)
    assert (p.h, p.s) == (0.0, 0.0) and p.v == pytest.approx(128 / 255)
    p = rgb_to_hsv(0, 128, 255)
    # hand evaluation: max=b, h = 60 * ((r - g) / delta + 4)
    assert p.h == pytest.approx(60 * ((0 - 128) / 255 + 4))
    assert p.h == pytest.approx(209.88235294, abs=1e-6)
    assert (p.s, p.v) == (1.0, 1.0)


def test_hsv_matches_colorsys(rng):
    px = rng.integers(0, 256, (2000, 3), dtype=np.uint8)
    h, s, v = hsv_array(px)
    for i in range(len(px)):
        rh, rs, rv = colorsys.rgb_to_hsv(*(px[i] / 255.0))
        assert h[i] == pytest.approx((rh * 360.0) % 360.0, abs=1e-9)
        assert s[i] == pytest.approx(rs, abs=1e-12)
        assert v[i] == pytest.approx(rv, abs=1e-12)
    assert h.min() >= 0 and h.max() < 360
    assert s.min() >= 0 and s.max() <= 1 and v.max() <= 1


def test_lab_reference_points():
    w = rgb_to_lab(255, 255, 255)
    assert w.L == pytest.approx(100.0, abs=1e-9)
    assert abs(w.a) < 1e-6 and abs(w.b) < 1e-6
    k = rgb_to_lab(0, 0, 0)
    assert (k.L, k.a, k.b) == pytest.approx((0.0, 0.0, 0.0), abs=1e-12)
    red = rgb_to_lab(255, 0, 0)
    assert (red.L, red.a, red.b) == pytest.approx((53.24, 80.09, 67.20), abs=0.01)


def test_lab_matches_skimage(rng):
    px = rng.integers(0, 256, (1000, 3), dtype=np.uint8)
    L, a, b = lab_array(px)
    ref = rgb2lab(px[None] / 255.0)[0]
    # skimage tabulates the D65 white; ours is derived from the matrix, hence 1e-2
    np.testing.assert_allclose(np.stack([L, a, b], -1), ref, atol=1e-2)


def test_lab_lightness_monotone_in_gray():
    g = np.repeat(np.arange(256, dtype=np.uint8)[:, None], 3, axis=1)
    L, _, _ = lab_array(g)
    assert np.all(np.diff(L) >= 0)


def test_gray_pixels_have_zero_saturation():
    g = np.repeat(np.arange(256, dtype=np.uint8)[:, None], 3, axis=1)
    _, s, _ = hsv_array(g)
    assert np.all(s == 0)


def test_rgb_to_hsv_rejects_non_bytes():
    with pytest.raises(ValueError):
        rgb_to_hsv(256, 0, 0)


def test_crop_full_frame():
    f = Frame.from_array(np.arange(48, dtype=np.uint8).reshape(4, 4, 3))
    assert crop(f, BoundingBox(2, 2, 4, 4)) == f


def test_crop_half_outside():
    arr = np.arange(100, dtype=np.uint8).reshape(10, 10)
    f = Frame.from_array(arr)
    # box spans x in [-3, 3), y in [4, 8) -> clamped to columns 0..2
    c = crop(f, BoundingBox(0, 6, 6, 4))
    assert (c.width, c.height) == (3, 4)
    np.testing.assert_array_equal(c.array()[..., 0], arr[4:8, 0:3])


def test_crop_outside():
    f = Frame.from_array(np.zeros((4, 4), np.uint8))
    with pytest.raises(EmptyIntersection):
        crop(f, BoundingBox(20, 20, 2, 2))


def test_read_image_pnm(tmp_path, rng):
    arr = rng.integers(0, 256, (5, 7, 3), dtype=np.uint8)
    p = tmp_path / "x.ppm"
    p.write_bytes(b"P6\n7 5\n255\n" + arr.tobytes())
    np.testing.assert_array_equal(read_image(str(p)).array(), arr)
    g = tmp_path / "x.pgm"
    g.write_bytes(b"P5\n7 5\n255\n" + arr[..., 0].tobytes())
    np.testing.assert_array_equal(read_image(str(g)).array()[..., 0], arr[..., 0])


def test_read_image_mlf1(tmp_path):
    p = tmp_path / "f.mlf"
    p.write_bytes(fixture_bytes("frame_2x2_rgb.bin"))
    assert read_image(str(p)).width == 2


def test_read_image_truncated(tmp_path):
    p = tmp_path / "t.mlf"
    p.write_bytes(fixture_bytes("frame_2x2_rgb.bin")[:-1])
    with pytest.raises(LengthMismatch):
        read_image(str(p))
