"""Content-independent sliding-window generation.

Window families are defined relative to the frame they slide over: each scale
is a fraction of the frame's shorter side, and the stride is a fraction of the
window side.  The same machinery generates the coarse and dense search grids
over a whole image and, with the coarse spec, the fine grid inside a selected
zoom region.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List

from .boxes import Box
from .errors import EmptyResultError

MIN_WINDOW_SIDE = 8


@dataclass(frozen=True)
class WindowSpec:
    """Square sliding-window family.

    Attributes:
        side_ratios: window side as a fraction of the frame's shorter side.
        step_fraction: stride as a fraction of the window side.
        flush_edges: add a final window flush against the far edge when the
            grid does not end exactly at the boundary.
    """

    side_ratios: tuple[float, ...]
    step_fraction: float
    flush_edges: bool = True

    def __post_init__(self):
        if not self.side_ratios:
            raise ValueError("side_ratios must be non-empty")
        if any(not 0.0 < r <= 1.0 for r in self.side_ratios):
            raise ValueError(f"side_ratios must lie in (0, 1], got {self.side_ratios}")
        if not 0.0 < self.step_fraction <= 1.0:
            raise ValueError(f"step_fraction must lie in (0, 1], got {self.step_fraction}")


@dataclass(frozen=True)
class Frame:
    """Rectangular region windows are generated in: origin plus extent."""

    x: float
    y: float
    width: float
    height: float

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0:
            raise ValueError(f"frame extent must be positive, got {self.width}x{self.height}")

    @classmethod
    def of_image(cls, width: float, height: float) -> "Frame":
        return cls(0.0, 0.0, width, height)

    @classmethod
    def of_box(cls, box: Box) -> "Frame":
        return cls(box.x1, box.y1, box.width, box.height)

    def as_box(self) -> Box:
        return Box(self.x, self.y, self.x + self.width, self.y + self.height)


COARSE_SPEC = WindowSpec(side_ratios=(1 / 2, 1 / 4), step_fraction=1 / 4)
DENSE_SPEC = WindowSpec(side_ratios=(1 / 2, 1 / 4, 1 / 8, 1 / 16), step_fraction=1 / 4)
COVER_SPEC = WindowSpec(side_ratios=(1 / 4,), step_fraction=1 / 2)


def _round_half_up(x: float) -> int:
    return math.floor(x + 0.5)


def _axis_positions(origin: float, extent: float, side: int, stride: float, flush: bool) -> List[float]:
    """Grid offsets along one axis, rounded to integer pixels and deduplicated."""
    span = extent - side
    last = math.floor(span / stride + 1e-9)
    positions = []
    seen = set()
    for k in range(last + 1):
        p = origin + _round_half_up(k * stride)
        if p not in seen:
            seen.add(p)
            positions.append(p)
    if flush:
        p = origin + _round_half_up(span)
        if p not in seen:
            positions.append(p)
    return positions


def sliding_windows(frame: Frame, spec: WindowSpec) -> List[Box]:
    """Generate square windows over a frame at every configured scale.

    Window sides are rounded to whole pixels; scales whose rounded side falls
    below ``MIN_WINDOW_SIDE`` pixels are skipped.  Emission order is
    deterministic: scales from largest to smallest, then row-major by (y, x).

    Raises:
        EmptyResultError: when every scale produces windows smaller than the
            minimum side.
    """
    shorter = min(frame.width, frame.height)
    windows: List[Box] = []
    seen: set[tuple[float, float, float, float]] = set()
    for ratio in sorted(spec.side_ratios, reverse=True):
        side = _round_half_up(ratio * shorter)
        if side < MIN_WINDOW_SIDE:
            continue
        stride = spec.step_fraction * side
        xs = _axis_positions(frame.x, frame.width, side, stride, spec.flush_edges)
        ys = _axis_positions(frame.y, frame.height, side, stride, spec.flush_edges)
        for y in ys:
            for x in xs:
                box = Box(x, y, x + side, y + side)
                key = box.as_tuple()
                if key not in seen:
                    seen.add(key)
                    windows.append(box)
    if not windows:
        raise EmptyResultError(
            f"no scale in {spec.side_ratios} yields windows of at least "
            f"{MIN_WINDOW_SIDE}px on a {frame.width}x{frame.height} frame"
        )
    return windows


def coarse_windows(frame: Frame) -> List[Box]:
    """Coarse search grid: sides 1/2 and 1/4 of the shorter side, stride 1/4 side."""
    return sliding_windows(frame, COARSE_SPEC)


def dense_windows(frame: Frame) -> List[Box]:
    """Dense search grid: the coarse scales plus 1/8 and 1/16 of the shorter side."""
    return sliding_windows(frame, DENSE_SPEC)


def cover_regions(frame: Frame) -> List[Box]:
    """Zoom-candidate cover: side 1/4 of the shorter side, stride half the side.

    On frames whose shorter side is divisible by 16 these are a subset of the
    coarse windows.
    """
    return sliding_windows(frame, COVER_SPEC)
