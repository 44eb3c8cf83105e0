"""Geometry tests: IoU, the overlap-pattern taxonomy, corner-delta codecs.

The IoU oracle rasterizes integer boxes into unit cells and counts; the
pattern tests pin the published taxonomy cases plus the partition property.
"""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from zoomprop import (
    Box,
    CornerDeltas,
    IDEAL_PATTERN,
    InvalidBoxError,
    NUM_PATTERNS,
    apply_deltas,
    classify_overlap_pattern,
    iou,
    iou_matrix,
    roi_relative_corners,
    to_array,
)


def boxes_strategy(lo=-50.0, hi=50.0, min_side=0.5):
    coord = st.floats(lo, hi, allow_nan=False, allow_infinity=False)
    side = st.floats(min_side, hi - lo, allow_nan=False, allow_infinity=False)
    return st.builds(
        lambda x, y, w, h: Box(x, y, x + w, y + h), coord, coord, side, side
    )


def rasterized_iou(a: Box, b: Box) -> float:
    """Pixel-count IoU oracle for integer-coordinate boxes."""

    def cells(box):
        return {
            (i, j)
            for i in range(int(box.x1), int(box.x2))
            for j in range(int(box.y1), int(box.y2))
        }

    ca, cb = cells(a), cells(b)
    return len(ca & cb) / len(ca | cb)


class TestBox:
    def test_degenerate_boxes_rejected(self):
        with pytest.raises(InvalidBoxError):
            Box(0, 0, 0, 10)
        with pytest.raises(InvalidBoxError):
            Box(0, 5, 10, 5)
        with pytest.raises(InvalidBoxError):
            Box(10, 0, 0, 10)

    def test_accessors(self):
        b = Box(2, 3, 10, 7)
        assert (b.width, b.height, b.area) == (8, 4, 32)
        assert b.center == (6, 5)
        assert b.as_tuple() == (2, 3, 10, 7)

    def test_contains_is_non_strict(self):
        outer = Box(0, 0, 10, 10)
        assert outer.contains(Box(0, 0, 10, 10))
        assert outer.contains(Box(0, 2, 5, 10))
        assert not outer.contains(Box(-1, 2, 5, 9))

    def test_clip(self):
        bounds = Box(0, 0, 10, 10)
        assert Box(-5, -5, 5, 5).clip(bounds) == Box(0, 0, 5, 5)
        assert Box(2, 2, 3, 3).clip(bounds) == Box(2, 2, 3, 3)
        assert Box(20, 20, 30, 30).clip(bounds) is None
        assert Box(-5, -5, 0, 0).clip(bounds) is None  # degenerate after clipping


class TestIou:
    def test_identity(self):
        b = Box(3, 4, 17, 9)
        assert iou(b, b) == 1.0

    def test_disjoint(self):
        assert iou(Box(0, 0, 10, 10), Box(20, 20, 30, 30)) == 0.0

    def test_quarter_overlap(self):
        # intersection 5x5 = 25, union 100 + 100 - 25 = 175
        assert iou(Box(0, 0, 10, 10), Box(5, 5, 15, 15)) == pytest.approx(25 / 175)

    def test_matches_rasterization_oracle(self):
        rng = np.random.default_rng(7)
        for _ in range(200):
            x1, y1 = rng.integers(0, 20, size=2)
            a = Box(x1, y1, x1 + rng.integers(1, 15), y1 + rng.integers(1, 15))
            x1, y1 = rng.integers(0, 20, size=2)
            b = Box(x1, y1, x1 + rng.integers(1, 15), y1 + rng.integers(1, 15))
            if iou(a, b) == 0:
                assert rasterized_iou(a, b) == 0
            else:
                assert iou(a, b) == pytest.approx(rasterized_iou(a, b), abs=0)

    @given(boxes_strategy(), boxes_strategy())
    def test_symmetric_and_bounded(self, a, b):
        v = iou(a, b)
        assert iou(b, a) == v
        assert 0.0 <= v <= 1.0

    def test_iou_matrix_matches_scalar(self):
        rng = np.random.default_rng(3)
        boxes_a = []
        boxes_b = []
        for _ in range(6):
            x1, y1 = rng.uniform(0, 30, size=2)
            boxes_a.append(Box(x1, y1, x1 + rng.uniform(1, 20), y1 + rng.uniform(1, 20)))
            x1, y1 = rng.uniform(0, 30, size=2)
            boxes_b.append(Box(x1, y1, x1 + rng.uniform(1, 20), y1 + rng.uniform(1, 20)))
        mat = iou_matrix(to_array(boxes_a), to_array(boxes_b))
        for i, a in enumerate(boxes_a):
            for j, b in enumerate(boxes_b):
                assert mat[i, j] == pytest.approx(iou(a, b))


class TestOverlapPattern:
    def test_below_low_is_unassigned(self):
        # contained but tiny: iou = 100/10000 = 0.01 < 0.1
        assert classify_overlap_pattern(Box(0, 0, 100, 100), Box(10, 10, 20, 20)) is None

    def test_ideal_category(self):
        assert classify_overlap_pattern(Box(0, 0, 100, 100), Box(0, 0, 100, 100)) == IDEAL_PATTERN

    def test_mutual_overlap_quadrants(self):
        roi = Box(0, 0, 100, 100)
        # iou = 1600/18400 ~ 0.087 < 0.1
        assert classify_overlap_pattern(roi, Box(60, 60, 160, 160)) is None
        # iou = 3600/16400 ~ 0.2195, mutual overlap, center below-right
        assert classify_overlap_pattern(roi, Box(40, 40, 140, 140)) == 11

    def test_contains_quadrants(self):
        roi = Box(0, 0, 100, 100)
        # gt fully inside roi, iou = 1600/10000 = 0.16
        assert classify_overlap_pattern(roi, Box(5, 5, 45, 45)) == 0  # upper-left
        assert classify_overlap_pattern(roi, Box(55, 5, 95, 45)) == 1  # upper-right
        assert classify_overlap_pattern(roi, Box(5, 55, 45, 95)) == 2  # bottom-left
        assert classify_overlap_pattern(roi, Box(55, 55, 95, 95)) == 3  # bottom-right

    def test_contained_by_object(self):
        roi = Box(40, 40, 60, 60)
        # roi inside gt, iou = 400/3600 ~ 0.111; gt center below-right of roi center
        assert classify_overlap_pattern(roi, Box(35, 35, 95, 95)) == 4 + 3

    def test_center_ties_break_toward_upper_left(self):
        roi = Box(0, 0, 100, 100)
        # concentric: gt center equals roi center exactly
        assert classify_overlap_pattern(roi, Box(20, 20, 80, 80)) == 0
        # equal y (tie -> upper), greater x -> right
        assert classify_overlap_pattern(roi, Box(40, 20, 100, 80)) == 1

    def test_boundary_thresholds(self):
        roi = Box(0, 0, 10, 10)
        # iou exactly 0.1 is retained (non-strict low threshold)
        gt = Box(0, 0, 10, 1)
        assert iou(roi, gt) == pytest.approx(0.1)
        assert classify_overlap_pattern(roi, gt) is not None
        # iou exactly 0.7 stays a positional pattern (strictly above enters ideal)
        gt = Box(0, 0, 10, 7)
        assert iou(roi, gt) == pytest.approx(0.7)
        assert classify_overlap_pattern(roi, gt) != IDEAL_PATTERN

    def test_partition_property(self):
        rng = np.random.default_rng(11)
        seen = set()
        for _ in range(2000):
            x1, y1 = rng.uniform(0, 80, size=2)
            roi = Box(x1, y1, x1 + rng.uniform(1, 60), y1 + rng.uniform(1, 60))
            x1, y1 = rng.uniform(0, 80, size=2)
            gt = Box(x1, y1, x1 + rng.uniform(1, 60), y1 + rng.uniform(1, 60))
            score = iou(roi, gt)
            pattern = classify_overlap_pattern(roi, gt)
            if score < 0.1:
                assert pattern is None
            elif score > 0.7:
                assert pattern == IDEAL_PATTERN
            else:
                assert pattern in range(12)
                seen.add(pattern)
        assert NUM_PATTERNS == 13


class TestCornerDeltas:
    def test_zero_offset(self):
        assert roi_relative_corners(Box(0, 0, 10, 10), Box(0, 0, 10, 10)).as_array().tolist() == [0, 0, 0, 0]

    def test_half_shift(self):
        d = roi_relative_corners(Box(0, 0, 10, 10), Box(5, 5, 15, 15))
        assert d.as_array().tolist() == [0.5, 0.5, 0.5, 0.5]

    def test_rectangular_roi(self):
        d = roi_relative_corners(Box(100, 100, 300, 200), Box(150, 120, 350, 220))
        assert d.as_array().tolist() == [0.25, 0.2, 0.25, 0.2]

    def test_apply_identity(self):
        assert apply_deltas(Box(0, 0, 10, 10), CornerDeltas(0, 0, 0, 0)) == Box(0, 0, 10, 10)

    def test_apply_half_shift(self):
        assert apply_deltas(Box(0, 0, 10, 10), CornerDeltas(0.5, 0.5, 0.5, 0.5)) == Box(5, 5, 15, 15)

    def test_apply_degenerate_raises(self):
        with pytest.raises(InvalidBoxError):
            apply_deltas(Box(0, 0, 10, 10), CornerDeltas(1.0, 0.0, -1.0, 0.0))

    @settings(max_examples=200)
    @given(boxes_strategy(), boxes_strategy())
    def test_round_trip(self, roi, target):
        decoded = apply_deltas(roi, roi_relative_corners(roi, target))
        for got, want in zip(decoded.as_tuple(), target.as_tuple()):
            assert got == pytest.approx(want, rel=1e-9, abs=1e-9)
