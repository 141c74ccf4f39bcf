import numpy as np
import pytest

from nodulebench.errors import BoxOutsideCrop, ConstantImage, EmptyLungMask, FullyHomogeneousImage
from nodulebench.geometry import BinaryMask, BoundingBox, GrayImage
from nodulebench.preprocess import (
    PreprocessRecord,
    crop_resize,
    map_box,
    needs_inversion,
    normalize_intensity,
    preprocess,
    trim_homogeneous_borders,
)
from nodulebench.synthetic import phantom_chest


def noisy(shape, seed=0):
    return np.random.default_rng(seed).random(shape)


class TestTrim:
    def test_frame_removed(self):
        px = np.full((60, 80), 0.2)
        px[10:50, 10:70] = noisy((40, 60))
        out, rec = trim_homogeneous_borders(GrayImage(px))
        np.testing.assert_array_equal(out.pixels, px[10:50, 10:70])
        assert (rec.trim_left, rec.trim_top, rec.trim_right, rec.trim_bottom) == (10, 10, 10, 10)

    def test_no_homogeneous_edges(self):
        px = noisy((20, 30))
        out, rec = trim_homogeneous_borders(GrayImage(px))
        np.testing.assert_array_equal(out.pixels, px)

    def test_constant(self):
        with pytest.raises(FullyHomogeneousImage):
            trim_homogeneous_borders(GrayImage(np.full((10, 10), 3.0)))

    def test_idempotent(self):
        px = np.zeros((50, 50))
        px[5:45, 12:40] = noisy((40, 28), 1)
        once, _ = trim_homogeneous_borders(GrayImage(px))
        twice, rec = trim_homogeneous_borders(once, variance_tol=1e-6 * (px.max() - px.min()) ** 2)
        np.testing.assert_array_equal(once.pixels, twice.pixels)


class TestNormalize:
    def test_range(self):
        out = normalize_intensity(GrayImage(noisy((30, 30)) * 500 - 20))
        assert (out.pixels.min(), out.pixels.max()) == (0.0, 1.0)

    def test_identity_on_unit_ramp(self):
        ramp = np.linspace(0, 1, 101).reshape(1, -1)
        out = normalize_intensity(GrayImage(ramp), 0, 100)
        np.testing.assert_allclose(out.pixels, ramp, atol=1e-15)

    def test_percentile_arithmetic(self):
        vals = np.arange(101, dtype=float).reshape(1, -1)
        out = normalize_intensity(GrayImage(vals), 1, 99)
        assert out.pixels[0, 50] == pytest.approx((50 - 1) / 98, abs=1e-12)

    def test_constant(self):
        with pytest.raises(ConstantImage):
            normalize_intensity(GrayImage(np.ones((4, 4))))


class TestCropResize:
    def test_square_box_has_no_padding(self):
        lungs = np.zeros((300, 300), bool)
        lungs[50:250, 50:250] = True
        out, rec = crop_resize(GrayImage(noisy((300, 300))), BinaryMask(lungs))
        assert out.shape == (1024, 1024)
        assert (rec.pad_left, rec.pad_top, rec.pad_right, rec.pad_bottom) == (0, 0, 0, 0)

    def test_two_to_one(self):
        img = GrayImage(noisy((500, 1000)) + 0.1)
        out, rec = crop_resize(img, BinaryMask(np.ones((500, 1000), bool)))
        assert rec.scale_x == pytest.approx(1.024) and rec.scale_y == pytest.approx(1.024)
        assert (rec.pad_top, rec.pad_bottom, rec.pad_left, rec.pad_right) == (256, 256, 0, 0)
        assert np.all(out.pixels[:256] == 0) and np.all(out.pixels[-256:] == 0)
        assert np.all(out.pixels[256:768] > 0)

    def test_odd_padding_goes_bottom_right(self):
        lungs = np.zeros((100, 100), bool)
        lungs[0:99, 0:32] = True  # 32 wide -> 331 of 1024, pad 693
        _, rec = crop_resize(GrayImage(noisy((100, 100))), BinaryMask(lungs))
        assert rec.pad_right - rec.pad_left == 1

    def test_aspect_preserved(self):
        rng = np.random.default_rng(2)
        for _ in range(20):
            h, w = rng.integers(20, 200, 2)
            _, rec = crop_resize(GrayImage(noisy((h, w))), BinaryMask(np.ones((h, w), bool)))
            content_w = 1024 - rec.pad_left - rec.pad_right
            content_h = 1024 - rec.pad_top - rec.pad_bottom
            assert abs(content_w / content_h * h - w) <= w / min(content_w, content_h) + 1e-9
            assert content_w * content_h == round(1024 * min(h, w) / max(h, w)) * 1024

    def test_empty_lungs(self):
        with pytest.raises(EmptyLungMask):
            crop_resize(GrayImage(noisy((10, 10))), BinaryMask(np.zeros((10, 10), bool)))


class TestMapBox:
    def test_identity(self):
        b = BoundingBox(3.5, 4, 5, 6)
        assert map_box(b, PreprocessRecord()) == b

    def test_pure_scale(self):
        r = PreprocessRecord(scale_x=2.0, scale_y=2.0)
        assert map_box(BoundingBox(1, 2, 3, 4), r) == BoundingBox(2, 4, 6, 8)

    def test_outside_crop(self):
        r = PreprocessRecord(crop_x=10, crop_y=10, crop_width=20, crop_height=20)
        with pytest.raises(BoxOutsideCrop):
            map_box(BoundingBox(50, 50, 5, 5), r)

    def test_round_trip(self):
        img, lungs, _ = phantom_chest(200, seed=3)
        _, rec = preprocess(img, lungs)
        rng = np.random.default_rng(0)
        for _ in range(200):
            x = rng.uniform(rec.crop_x, rec.crop_x + rec.crop_width - 5)
            y = rng.uniform(rec.crop_y, rec.crop_y + rec.crop_height - 5)
            b = BoundingBox(x, y, *rng.uniform(1, 30, 2))
            back = map_box(map_box(b, rec), rec, "inverse")
            assert max(abs(u - v) for u, v in zip(back.corners, b.corners)) < 1e-9


class TestPipeline:
    def test_output_contract(self):
        img, lungs, _ = phantom_chest(256, seed=0)
        out, rec = preprocess(img, lungs)
        assert out.shape == (1024, 1024)
        pad = np.ones((1024, 1024), bool)
        pad[rec.pad_top:1024 - rec.pad_bottom, rec.pad_left:1024 - rec.pad_right] = False
        assert np.all(out.pixels[pad] == 0)
        assert PreprocessRecord.from_json(rec.to_json()) == rec

    def test_inversion_detected(self):
        img, lungs, _ = phantom_chest(256, seed=0)
        assert not needs_inversion(img)
        inv = GrayImage(1 - img.pixels)
        assert needs_inversion(inv)
        a, _ = preprocess(img, lungs)
        b, rec = preprocess(inv, lungs)
        assert rec.inverted
        assert np.abs(a.pixels - b.pixels).mean() < 0.05
