"""Image I/O and transform contracts."""

import numpy as np
import pytest
from PIL import Image

from conftest import bilinear_at
from mammofuse.imagecore import (
    FormatError,
    GrayImage,
    RgbImage,
    crop_side,
    hflip,
    load_gray,
    normalize,
    random_resized_crop,
    resize_bilinear,
    save_gray,
)


def write_pgm(path, arr, maxval=255):
    header = f"P5\n{arr.shape[1]} {arr.shape[0]}\n{maxval}\n".encode()
    dtype = np.dtype("u1") if maxval == 255 else np.dtype(">u2")
    path.write_bytes(header + arr.astype(dtype).tobytes())


class TestLoadGray:
    def test_pgm_all_max_is_one(self, tmp_path):
        path = tmp_path / "white.pgm"
        write_pgm(path, np.full((3, 4), 255))
        img = load_gray(path)
        assert np.array_equal(img.data, np.ones((3, 4)))

    def test_pgm_midlevel_rescale(self, tmp_path):
        path = tmp_path / "mid.pgm"
        write_pgm(path, np.full((2, 2), 128))
        img = load_gray(path)
        assert img.data[0, 0] == pytest.approx(128 / 255)

    def test_16bit_png_max_is_one(self, tmp_path):
        path = tmp_path / "white16.png"
        Image.fromarray(np.full((2, 2), 65535, dtype=np.uint16)).save(path)
        img = load_gray(path)
        assert np.array_equal(img.data, np.ones((2, 2)))

    def test_8bit_png(self, tmp_path):
        path = tmp_path / "gray.png"
        Image.fromarray(np.full((2, 3), 51, dtype=np.uint8), mode="L").save(path)
        img = load_gray(path)
        assert np.allclose(img.data, 0.2)

    def test_missing_file(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            load_gray(tmp_path / "nope.pgm")

    def test_multichannel_png_rejected(self, tmp_path):
        path = tmp_path / "rgb.png"
        Image.fromarray(np.zeros((2, 2, 3), dtype=np.uint8), mode="RGB").save(path)
        with pytest.raises(FormatError, match="rgb.png"):
            load_gray(path)

    def test_unsupported_maxval_rejected(self, tmp_path):
        path = tmp_path / "odd.pgm"
        header = b"P5\n2 2\n1023\n"
        path.write_bytes(header + np.zeros(4, dtype=">u2").tobytes())
        with pytest.raises(FormatError, match="odd.pgm"):
            load_gray(path)

    def test_unknown_format_rejected(self, tmp_path):
        path = tmp_path / "junk.pgm"
        path.write_bytes(b"GIF89a....")
        with pytest.raises(FormatError, match="junk.pgm"):
            load_gray(path)

    def test_truncated_pgm_rejected(self, tmp_path):
        path = tmp_path / "short.pgm"
        path.write_bytes(b"P5\n4 4\n255\n\x00\x00")
        with pytest.raises(FormatError, match="truncated"):
            load_gray(path)

    def test_pgm_comments_skipped(self, tmp_path):
        path = tmp_path / "comment.pgm"
        path.write_bytes(b"P5\n# a comment\n1 1\n255\n\x7f")
        assert load_gray(path).data[0, 0] == pytest.approx(127 / 255)


class TestSaveGray:
    def test_pgm8_roundtrip_bit_exact(self, tmp_path, rng):
        src = tmp_path / "src.pgm"
        write_pgm(src, rng.integers(0, 256, (9, 7)))
        img = load_gray(src)
        out = tmp_path / "copy.pgm"
        save_gray(img, out)
        again = load_gray(out)
        assert np.array_equal(img.data, again.data)

    def test_pgm16_roundtrip(self, tmp_path, rng):
        src = tmp_path / "src16.pgm"
        write_pgm(src, rng.integers(0, 65536, (5, 6)), maxval=65535)
        img = load_gray(src)
        out = tmp_path / "copy16.pgm"
        save_gray(img, out, bits=16)
        assert np.array_equal(img.data, load_gray(out).data)

    def test_png_roundtrip(self, tmp_path, rng):
        img = GrayImage(rng.integers(0, 256, (4, 4)) / 255.0)
        out = tmp_path / "out.png"
        save_gray(img, out)
        assert np.array_equal(img.data, load_gray(out).data)


class TestGrayImage:
    def test_rejects_out_of_range(self):
        with pytest.raises(ValueError):
            GrayImage(np.array([[0.0, 1.5]]))

    def test_rejects_wrong_ndim(self):
        with pytest.raises(ValueError):
            GrayImage(np.zeros((2, 2, 2)))


class TestResize:
    def test_constant_stays_constant(self):
        img = GrayImage(np.full((5, 9), 0.3))
        out = resize_bilinear(img, 13, 4)
        assert out.width == 13 and out.height == 4
        assert np.max(np.abs(out.data - 0.3)) < 1e-6

    def test_ramp_monotone(self):
        img = GrayImage(np.array([[0.0, 1.0]]))
        out = resize_bilinear(img, 4, 1)
        vals = out.data[0]
        assert np.all(np.diff(vals) >= 0)
        assert vals[0] == 0.0 and vals[-1] == 1.0

    def test_checkerboard_downsample_is_block_mean(self):
        board = np.indices((4, 4)).sum(axis=0) % 2
        img = GrayImage(board.astype(float))
        out = resize_bilinear(img, 2, 2)
        # Pixel centers land exactly between 2x2 source blocks.
        assert np.allclose(out.data, 0.5)

    def test_matches_direct_formula(self, rng):
        data = rng.random((6, 11))
        out = resize_bilinear(GrayImage(data), 7, 3)
        for y in range(3):
            for x in range(7):
                fy = (y + 0.5) * (6 / 3) - 0.5
                fx = (x + 0.5) * (11 / 7) - 0.5
                assert out.data[y, x] == pytest.approx(bilinear_at(data, fy, fx), abs=1e-12)

    def test_zero_target_rejected(self):
        with pytest.raises(ValueError):
            resize_bilinear(GrayImage(np.zeros((2, 2))), 0, 2)


class TestRandomResizedCrop:
    def test_degenerate_scale_is_identity(self, rng):
        data = np.random.default_rng(5).random((32, 32))
        out = random_resized_crop(GrayImage(data), out=32, scale_lo=1.0, scale_hi=1.0, rng=rng)
        assert np.array_equal(out.data, data)

    def test_crop_side_arithmetic(self):
        assert crop_side(0.9, 600, 600) == 569
        assert crop_side(1.0, 600, 600) == 600
        assert crop_side(0.5, 10, 20) == 7

    def test_side_clamps_to_image(self):
        # Area fractions above 1 would overshoot; the side clamps instead.
        assert crop_side(1.5, 10, 10) == 10
        assert crop_side(1e-9, 3, 3) == 1

    def test_same_seed_is_bit_identical(self):
        data = np.random.default_rng(6).random((40, 40))
        a = random_resized_crop(GrayImage(data), out=24, rng=np.random.default_rng(9))
        b = random_resized_crop(GrayImage(data), out=24, rng=np.random.default_rng(9))
        assert np.array_equal(a.data, b.data)

    def test_output_size_always_out(self, rng):
        for shape in ((8, 8), (31, 17), (64, 100)):
            img = GrayImage(np.random.default_rng(7).random(shape))
            out = random_resized_crop(img, out=16, rng=rng)
            assert out.data.shape == (16, 16)

    def test_bad_scale_order_rejected(self, rng):
        with pytest.raises(ValueError):
            random_resized_crop(GrayImage(np.zeros((4, 4))), 4, 0.9, 0.5, rng=rng)


class TestHflip:
    def test_p_zero_is_identity(self, rng):
        img = GrayImage(np.array([[0.1, 0.9]]))
        assert np.array_equal(hflip(img, 0.0, rng=rng).data, img.data)

    def test_p_one_reverses_columns(self, rng):
        img = GrayImage(np.array([[0.1, 0.9]]))
        assert np.array_equal(hflip(img, 1.0, rng=rng).data, [[0.9, 0.1]])

    def test_double_flip_is_identity(self, rng):
        data = np.random.default_rng(8).random((5, 6))
        img = GrayImage(data)
        flipped = hflip(hflip(img, 1.0, rng=rng), 1.0, rng=rng)
        assert np.array_equal(flipped.data, data)

    def test_bad_probability_rejected(self, rng):
        with pytest.raises(ValueError):
            hflip(GrayImage(np.zeros((2, 2))), 1.5, rng=rng)


class TestNormalize:
    def test_identity_stats(self):
        img = RgbImage(np.random.default_rng(3).random((3, 4, 4)))
        out = normalize(img, (0.0, 0.0, 0.0), (1.0, 1.0, 1.0))
        assert np.array_equal(out.channels, img.channels)

    def test_mean_cancels(self):
        img = RgbImage(np.full((3, 2, 2), 0.485))
        out = normalize(img)
        assert np.allclose(out.channels[0], 0.0)

    def test_nonpositive_std_rejected(self):
        img = RgbImage(np.zeros((3, 2, 2)))
        with pytest.raises(ValueError):
            normalize(img, (0, 0, 0), (1, 0, 1))
