"""Axis-aligned box arithmetic, the overlap-pattern taxonomy, and corner encoding.

Boxes are rectangles in pixel coordinates, stored as top-left and bottom-right
corners.  Every region, proposal, and ground-truth annotation in the package is
a :class:`Box`.

The overlap-pattern taxonomy assigns one of 13 categories to a (region, object)
pair: three inclusion modes (region contains object, region contained by
object, mutual partial overlap) crossed with four center quadrants, plus one
category for near-ideal overlap.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import InvalidBoxError

NUM_PATTERNS = 13
IDEAL_PATTERN = 12

# Pattern index = 4 * inclusion + quadrant for partial overlaps.
INCLUSION_CONTAINS = 0
INCLUSION_CONTAINED = 1
INCLUSION_MUTUAL = 2

DEFAULT_PATTERN_LOW = 0.1
DEFAULT_PATTERN_HIGH = 0.7


@dataclass(frozen=True)
class Box:
    """Axis-aligned rectangle with strictly positive width and height.

    Attributes:
        x1, y1: top-left corner in pixels.
        x2, y2: bottom-right corner in pixels.
    """

    x1: float
    y1: float
    x2: float
    y2: float

    def __post_init__(self):
        if not (self.x1 < self.x2 and self.y1 < self.y2):
            raise InvalidBoxError(
                f"degenerate box ({self.x1}, {self.y1}, {self.x2}, {self.y2})"
            )

    @property
    def width(self) -> float:
        return self.x2 - self.x1

    @property
    def height(self) -> float:
        return self.y2 - self.y1

    @property
    def area(self) -> float:
        return self.width * self.height

    @property
    def center(self) -> tuple[float, float]:
        return (0.5 * (self.x1 + self.x2), 0.5 * (self.y1 + self.y2))

    def contains(self, other: "Box") -> bool:
        """Non-strict containment; shared edges count."""
        return (
            self.x1 <= other.x1
            and self.y1 <= other.y1
            and other.x2 <= self.x2
            and other.y2 <= self.y2
        )

    def clip(self, bounds: "Box") -> Optional["Box"]:
        """Intersect with ``bounds``; None when the result would be degenerate."""
        x1 = max(self.x1, bounds.x1)
        y1 = max(self.y1, bounds.y1)
        x2 = min(self.x2, bounds.x2)
        y2 = min(self.y2, bounds.y2)
        if x1 < x2 and y1 < y2:
            return Box(x1, y1, x2, y2)
        return None

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.x1, self.y1, self.x2, self.y2)


def intersection_area(a: Box, b: Box) -> float:
    w = min(a.x2, b.x2) - max(a.x1, b.x1)
    h = min(a.y2, b.y2) - max(a.y1, b.y1)
    if w <= 0.0 or h <= 0.0:
        return 0.0
    return w * h


def iou(a: Box, b: Box) -> float:
    """Intersection-over-union of two boxes; 0 when disjoint, 1 when identical."""
    inter = intersection_area(a, b)
    if inter == 0.0:
        return 0.0
    return inter / (a.area + b.area - inter)


def to_array(boxes: Sequence[Box]) -> np.ndarray:
    """Stack boxes into an (N, 4) float array of (x1, y1, x2, y2) rows."""
    if len(boxes) == 0:
        return np.zeros((0, 4), dtype=np.float64)
    return np.array([b.as_tuple() for b in boxes], dtype=np.float64)


def iou_matrix(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Pairwise IoU between two (N, 4) and (M, 4) corner arrays.

    Returns:
        (N, M) matrix; rows index ``a``, columns index ``b``.
    """
    a = np.asarray(a, dtype=np.float64).reshape(-1, 4)
    b = np.asarray(b, dtype=np.float64).reshape(-1, 4)
    area_a = (a[:, 2] - a[:, 0]) * (a[:, 3] - a[:, 1])
    area_b = (b[:, 2] - b[:, 0]) * (b[:, 3] - b[:, 1])
    lt = np.maximum(a[:, None, :2], b[None, :, :2])
    rb = np.minimum(a[:, None, 2:], b[None, :, 2:])
    wh = np.clip(rb - lt, 0.0, None)
    inter = wh[:, :, 0] * wh[:, :, 1]
    union = area_a[:, None] + area_b[None, :] - inter
    out = np.zeros_like(inter)
    np.divide(inter, union, out=out, where=inter > 0.0)
    return out


def classify_overlap_pattern(
    roi: Box,
    gt: Box,
    low: float = DEFAULT_PATTERN_LOW,
    high: float = DEFAULT_PATTERN_HIGH,
) -> Optional[int]:
    """Assign the overlap-pattern index for a (region, object) pair.

    Overlap below ``low`` is considered too small to carry signal and yields
    None.  Overlap above ``high`` falls into the reserved ideal category.  The
    remaining pairs are classified by inclusion mode and by the quadrant of the
    object center relative to the region center, with ties broken toward
    upper/left.

    Args:
        roi: the region under consideration.
        gt: the object box.
        low: minimum IoU for a pattern to be assigned (inclusive).
        high: IoU above which the pair is in the ideal category (exclusive).

    Returns:
        Pattern index in [0, 12], or None when IoU < ``low``.
    """
    if not low < high:
        raise ValueError(f"thresholds must satisfy low < high, got {low}, {high}")
    score = iou(roi, gt)
    if score < low:
        return None
    if score > high:
        return IDEAL_PATTERN
    if roi.contains(gt):
        inclusion = INCLUSION_CONTAINS
    elif gt.contains(roi):
        inclusion = INCLUSION_CONTAINED
    else:
        inclusion = INCLUSION_MUTUAL
    rcx, rcy = roi.center
    gcx, gcy = gt.center
    quadrant = (2 if gcy > rcy else 0) + (1 if gcx > rcx else 0)
    return 4 * inclusion + quadrant


@dataclass(frozen=True)
class CornerDeltas:
    """Corner offsets of a target box in a region's normalized frame."""

    dx1: float
    dy1: float
    dx2: float
    dy2: float

    def as_array(self) -> np.ndarray:
        return np.array([self.dx1, self.dy1, self.dx2, self.dy2], dtype=np.float64)


def roi_relative_corners(roi: Box, target: Box) -> CornerDeltas:
    """Encode a target box as corner offsets normalized by the region size."""
    w = roi.width
    h = roi.height
    return CornerDeltas(
        (target.x1 - roi.x1) / w,
        (target.y1 - roi.y1) / h,
        (target.x2 - roi.x2) / w,
        (target.y2 - roi.y2) / h,
    )


def apply_deltas(roi: Box, deltas: CornerDeltas) -> Box:
    """Decode corner offsets back into an absolute box.

    Exact inverse of :func:`roi_relative_corners`.  The result is not clipped;
    callers clip to image bounds where needed.

    Raises:
        InvalidBoxError: when the decoded corners are degenerate.
    """
    w = roi.width
    h = roi.height
    return Box(
        roi.x1 + deltas.dx1 * w,
        roi.y1 + deltas.dy1 * h,
        roi.x2 + deltas.dx2 * w,
        roi.y2 + deltas.dy2 * h,
    )
