import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from scipy import ndimage

from docconf.geometry import BinaryMask, rasterize
from docconf.postprocess import (
    PostprocessConfig,
    ProbabilityMap,
    binarize,
    connected_components,
    extract_objects,
)


def pmap(values):
    return ProbabilityMap(np.asarray(values, dtype=float))


class TestBinarize:
    def test_all_zero(self):
        assert binarize(pmap(np.zeros((4, 4)))).count == 0

    def test_tie_is_object(self):
        v = np.zeros((3, 3))
        v[1, 1] = 0.5
        m = binarize(pmap(v))
        assert m.count == 1 and m.bits[1, 1]

    def test_checkerboard(self):
        v = np.where(np.indices((5, 6)).sum(axis=0) % 2 == 0, 0.6, 0.4)
        np.testing.assert_array_equal(binarize(pmap(v)).bits, v == 0.6)

    def test_out_of_range_map_rejected(self):
        with pytest.raises(ValueError):
            pmap([[0.2, 1.1]])


class TestConnectedComponents:
    def test_diagonal_pair(self):
        bits = BinaryMask(np.eye(2, dtype=bool))
        assert len(connected_components(bits, 8)) == 1
        assert len(connected_components(bits, 4)) == 2

    def test_isolated_pixels(self):
        bits = np.zeros((9, 9), dtype=bool)
        bits[::4, ::4] = True
        bits[8, :] = False
        bits[0, 0] = bits[4, 4] = True
        comps = connected_components(BinaryMask(bits), 8)
        assert len(comps) == int(bits.sum())

    def test_raster_order(self):
        bits = np.zeros((6, 6), dtype=bool)
        bits[4, 0] = bits[0, 5] = bits[2, 2] = True
        firsts = [tuple(c[0]) for c in connected_components(BinaryMask(bits))]
        assert firsts == [(0, 5), (2, 2), (4, 0)]

    def test_bad_connectivity(self):
        with pytest.raises(ValueError):
            connected_components(BinaryMask(np.ones((2, 2), dtype=bool)), 6)

    @given(arrays(bool, (8, 9)), st.sampled_from([4, 8]))
    def test_partition(self, bits, conn):
        comps = connected_components(BinaryMask(bits), conn)
        seen = np.zeros_like(bits, dtype=int)
        for c in comps:
            seen[c[:, 0], c[:, 1]] += 1
        np.testing.assert_array_equal(seen, bits.astype(int))


class TestExtractObjects:
    def test_below_min_area_removed(self):
        v = np.zeros((20, 20))
        v[2:9, 2:9] = 0.9  # 49 pixels
        p = extract_objects(pmap(v))
        assert len(p) == 0 and p.filtered_pixels == 49

    def test_exactly_min_area_kept(self):
        v = np.zeros((20, 20))
        v[2:7, 2:12] = 0.9  # 50 pixels
        p = extract_objects(pmap(v))
        assert len(p) == 1 and p.objects[0].pixel_area == 50

    def test_solid_square(self):
        v = np.zeros((30, 30))
        v[5:15, 8:18] = 0.8
        (o,) = extract_objects(pmap(v)).objects
        assert o.pixel_area == 100
        assert o.mean_prob == pytest.approx(0.8, abs=1e-12)
        assert (o.bbox.x_min, o.bbox.y_min, o.bbox.x_max, o.bbox.y_max) == (8, 5, 17, 14)
        assert rasterize(o.polygon, 30, 30).count == 100

    def test_empty_map(self):
        p = extract_objects(pmap(np.zeros((5, 5))), image_id="x")
        assert len(p) == 0 and p.image_id == "x"

    def test_tiny_components_counted_as_filtered(self):
        v = np.zeros((6, 6))
        v[0, 0] = v[3, 3] = v[3, 4] = 1.0
        p = extract_objects(pmap(v), PostprocessConfig(min_area_px=0))
        assert len(p) == 0 and p.filtered_pixels == 3

    def test_mean_prob_over_component_only(self):
        v = np.zeros((12, 12))
        v[1:9, 1:9] = 0.6
        v[3:5, 3:5] = 1.0
        (o,) = extract_objects(pmap(v)).objects
        assert o.mean_prob == pytest.approx((60 * 0.6 + 4 * 1.0) / 64, abs=1e-12)

    def test_config_validation(self):
        with pytest.raises(ValueError):
            PostprocessConfig(binarize_threshold=1.0)
        with pytest.raises(ValueError):
            PostprocessConfig(min_area_px=-1)

    @given(arrays(bool, (10, 11)), st.sampled_from([4, 8]))
    def test_contour_rasterizes_to_filled_component(self, bits, conn):
        cfg = PostprocessConfig(connectivity=conn, min_area_px=0)
        pred = extract_objects(pmap(bits.astype(float)), cfg)
        structure = ndimage.generate_binary_structure(2, 1 if conn == 4 else 2)
        labels, n = ndimage.label(bits, structure=structure)
        big = [k for k in range(1, n + 1) if (labels == k).sum() >= 3]
        assert len(pred) == len(big)
        for obj, k in zip(pred.objects, big):
            filled = ndimage.binary_fill_holes(labels == k)
            np.testing.assert_array_equal(rasterize(obj.polygon, 10, 11).bits, filled)
            assert obj.pixel_area == int((labels == k).sum())
