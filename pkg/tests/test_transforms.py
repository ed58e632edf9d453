import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cvkit.core import BBoxSet, validate_bbox_set
from cvkit.transforms import (
    FlipParams,
    TransformDataset,
    crop_bbox,
    flip_bbox,
    flip_image,
    random_flip,
    resize_bbox,
    resize_image,
    translate_bbox,
)

from conftest import make_boxes, make_image, seed_forcing
from oracles import bilinear


class TestResizeImage:
    def test_identity_is_exact(self, rng):
        img = make_image(rng, 7, 9)
        out = resize_image(img, (7, 9))
        np.testing.assert_array_equal(out, img)

    def test_constant_stays_constant(self):
        img = np.full((3, 5, 4), 137.0)
        out = resize_image(img, (11, 3))
        assert out.shape == (3, 11, 3)
        np.testing.assert_array_equal(out, np.full((3, 11, 3), 137.0))

    def test_row_upsample_values(self):
        # 1x2 row [0, 255] to width 4: sample positions -0.25, 0.25, 0.75,
        # 1.25 clamp to [0, 1] giving weights 0, 0.25, 0.75, 1
        img = np.zeros((3, 1, 2))
        img[:, 0, 1] = 255.0
        out = resize_image(img, (1, 4))
        np.testing.assert_array_equal(out[0, 0], [0.0, 63.75, 191.25, 255.0])

    @pytest.mark.parametrize("bad", [(0, 4), (4, 0), (-1, 2)])
    def test_invalid_out_size(self, bad):
        with pytest.raises(ValueError):
            resize_image(np.zeros((3, 2, 2)), bad)

    def test_matches_per_pixel_oracle(self, rng):
        for _ in range(20):
            in_h, in_w = rng.integers(1, 7, size=2)
            out_h, out_w = rng.integers(1, 9, size=2)
            img = make_image(rng, in_h, in_w)
            got = resize_image(img, (out_h, out_w))
            want = np.asarray(bilinear(img, out_h, out_w))
            np.testing.assert_allclose(got, want, atol=1e-9)


class TestRandomFlip:
    def test_disabled_axes_identity(self, rng):
        img = make_image(rng)
        out, params = random_flip(img, x_random=False, y_random=False)
        assert params == FlipParams(False, False)
        np.testing.assert_array_equal(out, img)

    def test_forced_x_flip_reverses_columns(self, rng):
        img = make_image(rng)
        seed = seed_forcing(True)
        out, params = random_flip(img, x_random=True, rng=np.random.default_rng(seed))
        assert params.x_flip and not params.y_flip
        width = img.shape[2]
        for j in range(width):
            np.testing.assert_array_equal(out[:, :, j], img[:, :, width - 1 - j])

    def test_same_seed_same_output(self, rng):
        img = make_image(rng)
        out1, p1 = random_flip(img, x_random=True, y_random=True, rng=np.random.default_rng(7))
        out2, p2 = random_flip(img, x_random=True, y_random=True, rng=np.random.default_rng(7))
        assert p1 == p2
        np.testing.assert_array_equal(out1, out2)

    def test_x_axis_drawn_first(self, rng):
        # with both axes enabled the x decision consumes the first draw
        img = make_image(rng)
        seed = 11
        draws = np.random.default_rng(seed).random(2)
        _, params = random_flip(img, x_random=True, y_random=True, rng=np.random.default_rng(seed))
        assert params.x_flip == (draws[0] < 0.5)
        assert params.y_flip == (draws[1] < 0.5)

    def test_rng_required_when_enabled(self, rng):
        with pytest.raises(ValueError):
            random_flip(make_image(rng), x_random=True)

    def test_result_is_fresh_array(self, rng):
        img = make_image(rng)
        out, _ = random_flip(img, x_random=False, y_random=False)
        out[0, 0, 0] = -1
        assert img[0, 0, 0] != -1


class TestFlipBBox:
    def test_identity_params(self):
        b = BBoxSet([[10, 20, 30, 40]])
        out = flip_bbox(b, (100, 100), FlipParams(False, False))
        np.testing.assert_array_equal(out.boxes, b.boxes)

    def test_x_flip_example(self):
        b = BBoxSet([[10, 20, 30, 40]])
        out = flip_bbox(b, (100, 100), FlipParams(x_flip=True))
        np.testing.assert_array_equal(out.boxes, [[10, 60, 30, 80]])

    def test_keeps_labels_and_scores(self):
        b = BBoxSet([[10, 20, 30, 40]], labels=[3], scores=[0.7])
        out = flip_bbox(b, (100, 100), FlipParams(x_flip=True, y_flip=True))
        assert out.labels.tolist() == [3]
        assert out.scores.tolist() == [0.7]

    # coordinates on a dyadic grid: the reflections are then exact in
    # binary floating point and the involution holds bit-for-bit
    @given(
        y0=st.integers(0, 400), x0=st.integers(0, 400),
        dy=st.integers(0, 400), dx=st.integers(0, 400),
        x_flip=st.booleans(), y_flip=st.booleans(),
    )
    def test_involution_exact_on_dyadic_grid(self, y0, x0, dy, dx, x_flip, y_flip):
        b = BBoxSet(np.array([[y0, x0, y0 + dy, x0 + dx]]) / 8.0)
        params = FlipParams(x_flip=x_flip, y_flip=y_flip)
        twice = flip_bbox(flip_bbox(b, (100, 100), params), (100, 100), params)
        np.testing.assert_array_equal(twice.boxes, b.boxes)

    @given(
        y0=st.floats(0, 50), x0=st.floats(0, 50),
        dy=st.floats(0, 50), dx=st.floats(0, 50),
        x_flip=st.booleans(), y_flip=st.booleans(),
    )
    def test_involution_close_for_arbitrary_floats(self, y0, x0, dy, dx, x_flip, y_flip):
        b = BBoxSet([[y0, x0, y0 + dy, x0 + dx]])
        params = FlipParams(x_flip=x_flip, y_flip=y_flip)
        twice = flip_bbox(flip_bbox(b, (100, 100), params), (100, 100), params)
        np.testing.assert_allclose(twice.boxes, b.boxes, atol=1e-9)

    def test_stays_in_bounds(self, rng):
        b = BBoxSet(make_boxes(rng, 30, size=64))
        out = flip_bbox(b, (64, 64), FlipParams(x_flip=True, y_flip=True))
        assert validate_bbox_set(out, (64, 64)) == []

    def test_paint_flip_extract_consistency(self, rng):
        # painting a box, flipping the pixels, and reading the painted
        # bounds back must agree with flip_bbox on integer-aligned boxes
        for _ in range(25):
            h, w = rng.integers(4, 20, size=2)
            y0, y1 = np.sort(rng.choice(h + 1, size=2, replace=False))
            x0, x1 = np.sort(rng.choice(w + 1, size=2, replace=False))
            img = np.zeros((3, h, w))
            img[:, y0:y1, x0:x1] = 255.0
            x_flip = bool(rng.integers(2))
            y_flip = bool(rng.integers(2))
            flipped = flip_image(img, x_flip=x_flip, y_flip=y_flip)
            ys, xs = np.nonzero(flipped[0])
            extracted = [ys.min(), xs.min(), ys.max() + 1, xs.max() + 1]
            expected = flip_bbox(
                BBoxSet([[y0, x0, y1, x1]]), (h, w), FlipParams(x_flip, y_flip)
            ).boxes[0]
            np.testing.assert_array_equal(extracted, expected)


class TestResizeBBox:
    def test_unit_scale(self):
        b = BBoxSet([[10, 20, 30, 40]])
        out = resize_bbox(b, (100, 100), (100, 100))
        np.testing.assert_array_equal(out.boxes, b.boxes)

    def test_scaling_example(self):
        b = BBoxSet([[10, 20, 30, 40]])
        out = resize_bbox(b, (100, 100), (200, 50))
        np.testing.assert_array_equal(out.boxes, [[20, 10, 60, 20]])

    def test_round_trip(self, rng):
        b = BBoxSet(make_boxes(rng, 10))
        back = resize_bbox(resize_bbox(b, (100, 100), (37, 81)), (37, 81), (100, 100))
        np.testing.assert_allclose(back.boxes, b.boxes, atol=1e-9)

    def test_commutes_with_flip(self, rng):
        b = BBoxSet(make_boxes(rng, 10, size=50))
        params = FlipParams(x_flip=True, y_flip=True)
        a = flip_bbox(resize_bbox(b, (50, 50), (100, 25)), (100, 25), params)
        c = resize_bbox(flip_bbox(b, (50, 50), params), (50, 50), (100, 25))
        np.testing.assert_allclose(a.boxes, c.boxes, atol=1e-9)


class TestTranslateBBox:
    def test_zero_shift(self):
        b = BBoxSet([[0, 0, 10, 10]])
        np.testing.assert_array_equal(translate_bbox(b, 0, 0).boxes, b.boxes)

    def test_shift(self):
        out = translate_bbox(BBoxSet([[0, 0, 10, 10]]), 5, -2)
        np.testing.assert_array_equal(out.boxes, [[5, -2, 15, 8]])

    def test_inverse(self, rng):
        b = BBoxSet(make_boxes(rng, 5))
        back = translate_bbox(translate_bbox(b, 3.5, -1.25), -3.5, 1.25)
        np.testing.assert_array_equal(back.boxes, b.boxes)


class TestCropBBox:
    def test_whole_image_region(self, rng):
        b = BBoxSet(make_boxes(rng, 8, size=50), labels=np.arange(8))
        out, kept = crop_bbox(b, (0, 0, 50, 50))
        assert kept.tolist() == list(range(8))
        np.testing.assert_allclose(out.boxes, b.boxes)

    def test_clip_and_translate(self):
        out, kept = crop_bbox(BBoxSet([[0, 0, 10, 10]]), (5, 5, 20, 20), allow_outside_center=True)
        assert kept.tolist() == [0]
        np.testing.assert_array_equal(out.boxes, [[0, 0, 5, 5]])

    def test_center_on_boundary_counts_as_inside(self):
        # center (5,5) sits exactly on the region corner: closed
        # containment keeps the box
        out, kept = crop_bbox(BBoxSet([[0, 0, 10, 10]]), (5, 5, 20, 20), allow_outside_center=False)
        assert kept.tolist() == [0]
        np.testing.assert_array_equal(out.boxes, [[0, 0, 5, 5]])

    def test_center_outside_dropped(self):
        _, kept = crop_bbox(BBoxSet([[0, 0, 10, 10]]), (5.5, 5.5, 20, 20), allow_outside_center=False)
        assert kept.tolist() == []

    def test_zero_area_dropped(self):
        _, kept = crop_bbox(BBoxSet([[0, 0, 4, 4]]), (4, 0, 8, 8))
        assert kept.tolist() == []

    def test_kept_boxes_valid_in_region(self, rng):
        b = BBoxSet(make_boxes(rng, 40, size=100))
        region = (20, 30, 70, 90)
        out, _ = crop_bbox(b, region)
        assert validate_bbox_set(out, (50, 60)) == []

    def test_malformed_region(self):
        with pytest.raises(ValueError):
            crop_bbox(BBoxSet([[0, 0, 1, 1]]), (5, 5, 4, 9))


class _ListDataset:
    def __init__(self, samples):
        self.samples = list(samples)
        self.gets = 0

    def __len__(self):
        return len(self.samples)

    def __getitem__(self, i):
        self.gets += 1
        return self.samples[i]


class TestTransformDataset:
    def test_identity(self):
        base = _ListDataset([1, 2, 3])
        ds = TransformDataset(base, lambda s: s)
        assert len(ds) == 3
        assert [ds[i] for i in range(3)] == [1, 2, 3]

    def test_flip_pipeline_matches_manual(self, rng):
        img = make_image(rng, 20, 30)
        bbox = BBoxSet([[2, 3, 10, 12]], labels=[0])
        base = _ListDataset([(img, bbox)])
        seed = seed_forcing(True)

        def pipeline(sample):
            image, boxes = sample
            flipped, params = random_flip(image, x_random=True, rng=np.random.default_rng(seed))
            return flipped, flip_bbox(boxes, image.shape[1:], params)

        got_img, got_bbox = TransformDataset(base, pipeline)[0]
        want_img, params = random_flip(img, x_random=True, rng=np.random.default_rng(seed))
        want_bbox = flip_bbox(bbox, (20, 30), params)
        assert params.x_flip
        np.testing.assert_array_equal(got_img, want_img)
        np.testing.assert_array_equal(got_bbox.boxes, want_bbox.boxes)

    def test_nested_composition(self):
        base = _ListDataset([1, 2, 3])
        ds = TransformDataset(TransformDataset(base, lambda x: x + 1), lambda x: x * 10)
        assert [ds[i] for i in range(3)] == [20, 30, 40]

    def test_lazy(self):
        base = _ListDataset([1, 2, 3])
        ds = TransformDataset(base, lambda x: x)
        assert base.gets == 0
        ds[1]
        assert base.gets == 1

    def test_repeated_get_is_stable(self):
        base = _ListDataset([5])
        ds = TransformDataset(base, lambda x: x * 2)
        assert ds[0] == ds[0] == 10

    def test_base_not_mutated(self):
        base = _ListDataset([[1], [2]])
        ds = TransformDataset(base, lambda s: s + [99])
        assert ds[0] == [1, 99]
        assert base.samples == [[1], [2]]

    def test_error_propagates(self):
        def boom(_):
            raise RuntimeError("bad sample")

        ds = TransformDataset(_ListDataset([1]), boom)
        with pytest.raises(RuntimeError):
            ds[0]
