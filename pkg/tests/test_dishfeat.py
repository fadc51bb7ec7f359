import math

import numpy as np
import pytest

from dishstack.dishfeat import (PATCH_H, PATCH_W, ClassLabel, DishPatch,
                                export_dataset, extract_patch, load_dataset,
                                warp_to_circle)
from dishstack.ellipses import Ellipse
from dishstack.raster import Raster
from dishstack.stack_recon import ParamMatrix


def _fill_ellipse(canvas, e, color):
    ys, xs = np.mgrid[0:canvas.shape[0], 0:canvas.shape[1]]
    ca, sa = math.cos(e.alpha), math.sin(e.alpha)
    u = (ca * (xs - e.p) + sa * (ys - e.q)) / e.A
    v = (-sa * (xs - e.p) + ca * (ys - e.q)) / e.B
    canvas[np.hypot(u, v) <= 1] = color


class TestTypes:
    def test_class_label_range(self):
        ClassLabel(0, "red")
        ClassLabel(7, "brown")
        with pytest.raises(ValueError):
            ClassLabel(8, "bad")

    def test_patch_dimensions_enforced(self):
        DishPatch(pixels=np.zeros((PATCH_H, PATCH_W, 3)))
        with pytest.raises(ValueError):
            DishPatch(pixels=np.zeros((PATCH_W, PATCH_W, 3)))


class TestWarp:
    def test_centered_circle_is_identity(self):
        rng = np.random.default_rng(0)
        data = rng.random((100, 100, 3))
        e = Ellipse.make(49.5, 49.5, 50, 50, 0)
        out = warp_to_circle(Raster(data), e, diameter=100)
        assert np.abs(out.data - data).max() < 1 / 255

    def test_center_color_preserved(self):
        data = np.full((80, 120, 3), 0.2)
        data[39:42, 59:62] = (0.9, 0.1, 0.5)
        e = Ellipse.make(60, 40, 30, 12, 0.4)
        out = warp_to_circle(Raster(data), e, diameter=100)
        c = (100 - 1) / 2
        # patch center samples the ellipse center (bilinear around it)
        assert out.data[round(c), round(c)] == pytest.approx((0.9, 0.1, 0.5), abs=0.05)

    def test_ellipse_boundary_maps_to_patch_circle(self):
        canvas = np.zeros((200, 260, 3))
        e = Ellipse.make(130, 100, 60, 25, 0.3)
        _fill_ellipse(canvas, e, (1.0, 1.0, 1.0))
        out = warp_to_circle(Raster(canvas), e, diameter=100).data.mean(axis=2)
        c, r = (100 - 1) / 2, 50.0
        ys, xs = np.mgrid[0:100, 0:100]
        rad = np.hypot(xs - c, ys - c) / r
        assert out[rad < 0.9].min() > 0.9   # inside the disk: filled
        assert out[rad > 1.1].max() < 0.1   # outside: background

    def test_rejects_grayscale(self):
        with pytest.raises(ValueError):
            warp_to_circle(Raster(np.zeros((10, 10))),
                           Ellipse.make(5, 5, 3, 2, 0))


class TestExtractPatch:
    def _scene(self):
        canvas = np.zeros((300, 400, 3))
        bottom = Ellipse.make(200, 200, 90, 40, 0.0)
        top = Ellipse.make(200, 170, 90, 40, 0.0)
        _fill_ellipse(canvas, bottom, (0.8, 0.1, 0.1))
        _fill_ellipse(canvas, top, (0.1, 0.1, 0.8))
        stack = ParamMatrix.from_ellipses([bottom, top])
        return Raster(canvas), stack, bottom, top

    def test_output_dimensions(self):
        img, stack, _, _ = self._scene()
        for i in range(2):
            assert extract_patch(img, stack, i).pixels.shape == (50, 100, 3)

    def test_top_dish_no_subtraction(self):
        img, stack, _, top = self._scene()
        patch = extract_patch(img, stack, 0)
        lower_half = warp_to_circle(img, top, PATCH_W).data[PATCH_W // 2:]
        assert np.array_equal(patch.pixels, lower_half)

    def test_lower_dish_masked_by_upper(self):
        img, stack, bottom, top = self._scene()
        patch = extract_patch(img, stack, 1).pixels
        # the visible crescent of the bottom dish keeps its red
        assert patch[..., 0].max() > 0.7
        # pixels whose source lies inside the upper ellipse are zeroed:
        # the warped bottom-dish center row maps into the upper dish
        from dishstack.dishfeat import _warp_grid
        sx, sy = _warp_grid(bottom, PATCH_W)
        sx, sy = sx[PATCH_W // 2:], sy[PATCH_W // 2:]
        u = (sx - top.p) / top.A
        v = (sy - top.q) / top.B
        covered = np.hypot(u, v) <= 1.0
        assert covered.any()
        assert np.all(patch[covered] == 0.0)

    def test_all_black_image(self):
        stack = ParamMatrix.from_ellipses([Ellipse.make(50, 50, 30, 12, 0)])
        patch = extract_patch(Raster(np.zeros((100, 100, 3))), stack, 0)
        assert np.all(patch.pixels == 0.0)

    def test_depends_only_on_dish_and_upper(self):
        img, _, bottom, top = self._scene()
        lower_a = Ellipse.make(200, 230, 95, 42, 0.0)
        lower_b = Ellipse.make(210, 235, 80, 38, 0.1)
        s1 = ParamMatrix.from_ellipses([lower_a, bottom, top])
        s2 = ParamMatrix.from_ellipses([lower_b, bottom, top])
        for i in (0, 1):  # dishes below i differ, patches must not
            p1 = extract_patch(img, s1, i).pixels
            p2 = extract_patch(img, s2, i).pixels
            assert np.array_equal(p1, p2)

    def test_index_out_of_range(self):
        img, stack, _, _ = self._scene()
        with pytest.raises(IndexError):
            extract_patch(img, stack, 2)


class TestDatasetIO:
    def test_export_load_roundtrip(self, tmp_path):
        rng = np.random.default_rng(1)
        patches = []
        for n in range(5):
            lab = ClassLabel(n % 3, ["red", "green", "blue"][n % 3])
            patches.append((DishPatch(pixels=rng.random((50, 100, 3)),
                                      label=lab), f"img_{n}.png", n))
        manifest = export_dataset(patches, tmp_path)
        back = load_dataset(manifest)
        assert len(back) == 5
        for (orig, _, _), got in zip(patches, back):
            assert got.label == orig.label
            assert np.abs(got.pixels - orig.pixels).max() <= 0.5 / 255 + 1e-12

    def test_unlabeled_patch_rejected(self, tmp_path):
        patch = DishPatch(pixels=np.zeros((50, 100, 3)))
        with pytest.raises(ValueError):
            export_dataset([(patch, "x.png", 0)], tmp_path)
