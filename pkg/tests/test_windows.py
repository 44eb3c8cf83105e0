"""Window-generation tests against an exact-arithmetic enumeration oracle."""

from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from zoomprop import Box, EmptyResultError, Frame, WindowSpec, sliding_windows
from zoomprop.windows import (
    COARSE_SPEC,
    COVER_SPEC,
    DENSE_SPEC,
    MIN_WINDOW_SIDE,
    coarse_windows,
    cover_regions,
    dense_windows,
)


def oracle_windows(frame: Frame, spec: WindowSpec):
    """Enumerate windows with exact Fraction arithmetic (independent route)."""

    def round_half_up(x: Fraction) -> int:
        whole, rem = divmod(x, 1)
        return int(whole) + (1 if rem * 2 >= 1 else 0)

    shorter = min(frame.width, frame.height)
    out = []
    for ratio in sorted(spec.side_ratios, reverse=True):
        side = round_half_up(Fraction(ratio).limit_denominator(10**9) * Fraction(shorter))
        if side < MIN_WINDOW_SIDE:
            continue
        stride = Fraction(spec.step_fraction).limit_denominator(10**9) * side
        axes = []
        for origin, extent in ((frame.x, frame.width), (frame.y, frame.height)):
            span = Fraction(extent - side)
            axis = []
            k = 0
            while k * stride <= span:
                p = origin + round_half_up(k * stride)
                if p not in axis:
                    axis.append(p)
                k += 1
            if spec.flush_edges:
                p = origin + round_half_up(span)
                if p not in axis:
                    axis.append(p)
            axes.append(axis)
        xs, ys = axes
        for y in sorted(ys):
            for x in sorted(xs):
                out.append(Box(x, y, x + side, y + side))
    seen = set()
    unique = []
    for box in out:
        if box.as_tuple() not in seen:
            seen.add(box.as_tuple())
            unique.append(box)
    return unique


def sides_of(windows):
    return sorted({int(w.width) for w in windows}, reverse=True)


class TestSlidingWindows:
    def test_full_frame_single_window(self):
        frame = Frame.of_image(100, 100)
        got = sliding_windows(frame, WindowSpec((1.0,), 1.0))
        assert got == [Box(0, 0, 100, 100)]

    def test_coarse_sides_and_strides_square_frame(self):
        windows = coarse_windows(Frame.of_image(1200, 1200))
        assert sides_of(windows) == [600, 300]
        xs_600 = sorted({w.x1 for w in windows if w.width == 600})
        xs_300 = sorted({w.x1 for w in windows if w.width == 300})
        assert xs_600 == [0, 150, 300, 450, 600]
        assert xs_300[:3] == [0, 75, 150]

    def test_cover_count_square_frame(self):
        assert len(cover_regions(Frame.of_image(1200, 1200))) == 49

    def test_shorter_side_rule(self):
        windows = coarse_windows(Frame.of_image(100, 50))
        # shorter side 50: sides round(25) and round(12.5) -> 25, 13
        assert sides_of(windows) == [25, 13]

    def test_counts_match_oracle_on_random_frames(self):
        import numpy as np

        rng = np.random.default_rng(5)
        for _ in range(10):
            frame = Frame.of_image(int(rng.integers(64, 3000)), int(rng.integers(64, 3000)))
            for spec in (COARSE_SPEC, DENSE_SPEC, COVER_SPEC):
                got = sliding_windows(frame, spec)
                want = oracle_windows(frame, spec)
                assert [w.as_tuple() for w in got] == [w.as_tuple() for w in want]

    def test_offset_frame_positions_shift_with_origin(self):
        base = sliding_windows(Frame.of_image(400, 400), COVER_SPEC)
        moved = sliding_windows(Frame(x=37, y=53, width=400, height=400), COVER_SPEC)
        assert len(base) == len(moved)
        for a, b in zip(base, moved):
            assert (b.x1 - a.x1, b.y1 - a.y1) == (37, 53)

    def test_all_windows_inside_frame_and_square(self):
        frame = Frame.of_image(1777, 913)
        for spec in (COARSE_SPEC, DENSE_SPEC, COVER_SPEC):
            for w in sliding_windows(frame, spec):
                assert w.x1 >= 0 and w.y1 >= 0 and w.x2 <= 1777 and w.y2 <= 913
                assert w.width == w.height

    def test_emission_order(self):
        windows = dense_windows(Frame.of_image(640, 480))
        sizes = [w.width for w in windows]
        assert sizes == sorted(sizes, reverse=True)
        for size in set(sizes):
            group = [(w.y1, w.x1) for w in windows if w.width == size]
            assert group == sorted(group)

    def test_too_small_frame_raises(self):
        with pytest.raises(EmptyResultError):
            sliding_windows(Frame.of_image(60, 60), WindowSpec((1 / 16,), 0.25))

    def test_smaller_scales_skipped_not_fatal(self):
        # shorter side 100: 1/16 -> 6px (skipped), 1/2 -> 50px (kept)
        windows = sliding_windows(Frame.of_image(100, 100), WindowSpec((0.5, 1 / 16), 0.25))
        assert sides_of(windows) == [50]

    def test_flush_edges_toggle(self):
        # side 30, grid positions {0, 30, 60}; flush adds 70 on both axes
        frame = Frame.of_image(100, 100)
        grid_only = sliding_windows(frame, WindowSpec((0.3,), 1.0, flush_edges=False))
        with_flush = sliding_windows(frame, WindowSpec((0.3,), 1.0))
        assert {w.x1 for w in grid_only} == {0, 30, 60}
        assert {w.x1 for w in with_flush} == {0, 30, 60, 70}
        assert {w.as_tuple() for w in grid_only} < {w.as_tuple() for w in with_flush}

    def test_spec_validation(self):
        with pytest.raises(ValueError):
            WindowSpec((), 0.25)
        with pytest.raises(ValueError):
            WindowSpec((0.5,), 0.0)
        with pytest.raises(ValueError):
            WindowSpec((1.5,), 0.25)


class TestFamilies:
    @settings(max_examples=60, deadline=None)
    @given(st.integers(200, 2600), st.integers(200, 2600))
    def test_dense_superset_of_coarse(self, width, height):
        frame = Frame.of_image(width, height)
        coarse = {w.as_tuple() for w in coarse_windows(frame)}
        dense = {w.as_tuple() for w in dense_windows(frame)}
        assert coarse <= dense

    @settings(max_examples=60, deadline=None)
    @given(st.integers(2, 160))
    def test_cover_subset_of_coarse_on_grid_aligned_frames(self, k):
        shorter = 16 * k
        frame = Frame.of_image(shorter + 8, shorter)
        cover = {w.as_tuple() for w in cover_regions(frame)}
        coarse = {w.as_tuple() for w in coarse_windows(frame)}
        assert cover <= coarse

    def test_dense_much_denser_at_scene_scale(self):
        frame = Frame.of_image(2400, 1800)
        ratio = len(dense_windows(frame)) / len(coarse_windows(frame))
        assert ratio > 4

    def test_frame_validation(self):
        with pytest.raises(ValueError):
            Frame.of_image(0, 10)
        box = Box(3, 4, 10, 12)
        assert Frame.of_box(box).as_box() == box
