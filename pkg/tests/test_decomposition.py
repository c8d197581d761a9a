import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mlfbpinn.decomposition import (
    build_active_map,
    build_decomposition,
    build_levels,
    full_active_map,
    normalize_input,
    pou_window,
    pou_window_jet,
    pou_windows,
    raw_window,
)

UNIT1 = [[0.0, 1.0]]
UNIT2 = [[0.0, 1.0], [0.0, 1.0]]


class TestBuildLevels:
    def test_two_subdomain_boxes(self):
        dec = build_levels(UNIT1, 2, 1.9)
        boxes = [s.box[0] for s in dec.subdomains(2)]
        np.testing.assert_allclose(boxes[0], [-0.95, 0.95], atol=1e-15)
        np.testing.assert_allclose(boxes[1], [0.05, 1.95], atol=1e-15)

    def test_counts_2d_three_levels(self):
        assert build_levels(UNIT2, 3, 1.9).counts == [1, 4, 16]

    def test_top_level_seven_levels(self):
        dec = build_levels(UNIT2, 7, 1.9)
        assert dec.per_dim_counts[-1] == 64
        assert dec.counts[-1] == 64 * 64

    def test_level_one_box(self):
        dec = build_levels(UNIT1, 1, 1.9)
        np.testing.assert_allclose(dec.subdomain(1, 1).box[0], [-0.45, 1.45])

    def test_half_width_rule(self):
        dec = build_levels(UNIT2, 4, 2.3)
        for l in range(2, 5):
            n = 2 ** (l - 1)
            np.testing.assert_allclose(dec.levels[l - 1].half_widths, (2.3 / 2) / (n - 1))

    def test_affine_mapping_to_box(self):
        dec = build_levels([[2.0, 6.0]], 2, 1.9)
        np.testing.assert_allclose(dec.subdomain(2, 2).box[0], [2.0 + 4 * 0.05, 2.0 + 4 * 1.95])

    def test_strictly_increasing_counts(self):
        c = build_levels(UNIT2, 5, 1.9).counts
        assert all(a < b for a, b in zip(c, c[1:]))
        assert c == [2 ** (2 * l) for l in range(5)]

    @pytest.mark.parametrize("delta", [1.0, 0.5])
    def test_non_overlapping_rejected(self, delta):
        with pytest.raises(ValueError, match="non-overlapping"):
            build_levels(UNIT1, 2, delta)

    def test_zero_levels_rejected(self):
        with pytest.raises(ValueError):
            build_levels(UNIT1, 0, 1.9)

    def test_summary_csv(self):
        text = build_levels(UNIT2, 2, 1.9).summary_csv().splitlines()
        assert text[0] == "level,j,mu_1,mu_2,sigma_1,sigma_2"
        assert len(text) == 1 + 1 + 4


class TestRawWindow:
    def test_center_value(self):
        s = build_levels(UNIT1, 2, 1.9).subdomain(2, 2)
        assert raw_window(s, s.center) == 4.0

    def test_face_is_zero(self):
        s = build_levels(UNIT1, 2, 1.9).subdomain(2, 1)
        assert raw_window(s, np.array([0.95])) == 0.0
        assert raw_window(s, np.array([1.3])) == 0.0

    def test_level_one_is_one(self, rng):
        s = build_levels(UNIT2, 2, 1.9).subdomain(1, 1)
        np.testing.assert_array_equal(raw_window(s, rng.uniform(-5, 5, (30, 2))), 1.0)

    def test_derivative_vanishes_at_faces(self):
        s = build_levels(UNIT1, 3, 1.9).subdomain(3, 2)
        lo, hi = s.box[0]
        h = 1e-6
        for face, side in ((lo, 1.0), (hi, -1.0)):
            slope = (raw_window(s, np.array([face + side * h])) - 0.0) / h
            assert abs(slope) < 1e-8

    @settings(max_examples=50, deadline=None)
    @given(x=st.floats(-1.0, 2.0), y=st.floats(-1.0, 2.0))
    def test_support_consistency(self, x, y):
        dec = build_levels(UNIT2, 3, 1.9)
        pt = np.array([x, y])
        for s in dec.subdomains(3):
            inside = bool(np.all(np.abs(pt - s.center) < s.half_width))
            assert (raw_window(s, pt) > 0.0) == inside


class TestPartitionOfUnity:
    @pytest.mark.parametrize("d", [1, 2])
    @pytest.mark.parametrize("delta", [1.1, 1.9, 2.7])
    def test_sum_is_one(self, d, delta):
        rng = np.random.default_rng(d * 10 + int(delta * 10))
        dec = build_levels([[0.0, 1.0]] * d, 4, delta)
        x = rng.uniform(0, 1, (10_000, d))
        for l in range(1, 5):
            np.testing.assert_allclose(pou_windows(dec, l, x).sum(axis=0), 1.0, atol=1e-12)

    def test_single_window_matches_level_evaluation(self, rng):
        dec = build_levels(UNIT2, 3, 1.9)
        x = rng.uniform(0, 1, (300, 2))
        all_w = pou_windows(dec, 3, x)
        for j in range(1, 17):
            np.testing.assert_allclose(pou_window(dec, 3, j, x), all_w[j - 1], rtol=1e-15)

    def test_midpoint_symmetry(self):
        dec = build_levels(UNIT1, 2, 1.9)
        assert pou_window(dec, 2, 1, np.array([0.5])) == 0.5
        assert pou_window(dec, 2, 2, np.array([0.5])) == 0.5

    def test_values_in_unit_interval(self, rng):
        dec = build_levels(UNIT2, 3, 1.5)
        x = rng.uniform(0, 1, (500, 2))
        for j in range(1, 17):
            w = pou_window(dec, 3, j, x)
            assert np.all((w >= 0) & (w <= 1))

    def test_level_one_identically_one(self, rng):
        dec = build_levels(UNIT2, 2, 1.9)
        np.testing.assert_array_equal(pou_window(dec, 1, 1, rng.uniform(0, 1, (40, 2))), 1.0)

    def test_outside_covered_region_raises(self):
        dec = build_levels(UNIT1, 2, 1.9)
        with pytest.raises(ValueError):
            pou_window(dec, 2, 1, np.array([5.0]))

    def test_jet_derivatives_sum_to_zero(self, rng):
        dec = build_levels(UNIT2, 3, 1.9)
        x = rng.uniform(0, 1, (200, 2))
        jet = pou_window_jet(dec, 3, x)
        np.testing.assert_allclose(jet.value.sum(axis=0), 1.0, atol=1e-12)
        np.testing.assert_allclose(jet.d1.sum(axis=1), 0.0, atol=1e-9)
        np.testing.assert_allclose(jet.d2.sum(axis=1), 0.0, atol=1e-7)


class TestActiveMap:
    def test_both_active_in_overlap(self):
        dec = build_levels(UNIT1, 2, 1.9)
        assert build_active_map(dec, np.array([[0.5]])).entry(0) == [(1, 1), (2, 1), (2, 2)]

    def test_only_first_near_left_edge(self):
        dec = build_levels(UNIT1, 2, 1.9)
        assert build_active_map(dec, np.array([[0.01]])).entry(0) == [(1, 1), (2, 1)]

    def test_level_one_covers_everything(self, rng):
        dec = build_levels(UNIT2, 1, 1.9)
        amap = build_active_map(dec, rng.uniform(0, 1, (25, 2)))
        assert all(e == [(1, 1)] for e in amap.entries())

    def test_face_points_inactive(self):
        dec = build_levels(UNIT1, 2, 1.9)
        # 0.05 sits exactly on the left face of subdomain 2
        assert build_active_map(dec, np.array([[0.05]])).entry(0) == [(1, 1), (2, 1)]

    def test_pairs_iff_positive_window(self, rng):
        dec = build_levels(UNIT2, 3, 1.7)
        x = np.concatenate([rng.uniform(0, 1, (300, 2)), np.linspace(0, 1, 41)[:, None].repeat(2, 1)])
        amap = build_active_map(dec, x)
        for i in range(x.shape[0]):
            expect = [(l, j) for l in range(1, 4) for j in range(1, dec.counts[l - 1] + 1)
                      if raw_window(dec.subdomain(l, j), x[i]) > 0]
            assert amap.entry(i) == expect

    def test_every_point_active_on_every_level(self, rng):
        dec = build_levels(UNIT2, 4, 1.9)
        amap = build_active_map(dec, rng.uniform(0, 1, (500, 2)))
        for e in amap.entries():
            assert {l for l, _ in e} == {1, 2, 3, 4}

    def test_full_map_lists_everything(self):
        dec = build_levels(UNIT1, 3, 1.9)
        assert len(full_active_map(dec, np.array([[0.2]])).entry(0)) == 1 + 2 + 4


class TestNormalizeInput:
    def test_center_to_origin(self):
        s = build_levels(UNIT2, 3, 1.9).subdomain(3, 6)
        np.testing.assert_array_equal(normalize_input(s, s.center), [0.0, 0.0])

    def test_corner(self):
        s = build_levels(UNIT2, 2, 1.9).subdomain(2, 4)
        corner = s.center + np.array([1, -1]) * s.half_width
        np.testing.assert_allclose(normalize_input(s, corner), [1.0, -1.0])

    def test_overlap_point(self):
        s = build_levels(UNIT1, 2, 1.9).subdomain(2, 2)
        np.testing.assert_allclose(normalize_input(s, np.array([0.5])), [(0.5 - 1.0) / 0.95])
        assert abs(normalize_input(s, np.array([0.5]))[0] + 0.5263) < 1e-4


def test_custom_per_dim_counts():
    dec = build_decomposition(UNIT2, [1, 8, 64], 1.9)
    assert dec.counts == [1, 64, 4096]
