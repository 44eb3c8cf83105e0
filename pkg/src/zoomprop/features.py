"""Feature images, fixed-grid RoI max pooling, and the feature file format.

A feature image is the abstract output of a convolutional backbone: a C x H x W
grid of values with a spatial stride that maps feature cells back to image
pixels.  Here the grid comes from a file or from the synthetic renderer.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Union

import numpy as np

from .boxes import Box
from .errors import FormatError, OutOfBoundsError

FEATURE_MAGIC = b"FIMG"
FEATURE_VERSION = 1
_HEADER = struct.Struct("<4sIIIIf")

# Reject absurd headers before allocating: 2^28 cells is ~1 GiB of f32.
_MAX_CELLS = 1 << 28


@dataclass
class FeatureImage:
    """C x H x W feature grid with a pixel stride.

    ``data`` is float32, channel-major.  A grid of H x W cells at stride ``s``
    covers an image of roughly (W * s) x (H * s) pixels.
    """

    data: np.ndarray
    stride: float

    def __post_init__(self):
        self.data = np.ascontiguousarray(self.data, dtype=np.float32)
        if self.data.ndim != 3 or min(self.data.shape) < 1:
            raise ValueError(f"data must be (C, H, W) with positive dims, got {self.data.shape}")
        if not self.stride > 0:
            raise ValueError(f"stride must be positive, got {self.stride}")

    @property
    def channels(self) -> int:
        return self.data.shape[0]

    @property
    def height(self) -> int:
        return self.data.shape[1]

    @property
    def width(self) -> int:
        return self.data.shape[2]

    def extent(self) -> tuple[float, float]:
        """Approximate covered image size in pixels, (width, height)."""
        return (self.width * self.stride, self.height * self.stride)


def image_to_feature_rect(roi: Box, stride: float, height: int, width: int) -> tuple[int, int, int, int]:
    """Map a pixel-space box to the feature-cell rectangle it touches.

    The top-left cell is the floor of the coordinates over the stride and the
    bottom-right is the ceiling, clamped to the grid; the result always spans
    at least one cell per axis.

    Returns:
        (cx1, cy1, cx2, cy2) cell indices, exclusive on the bottom-right.

    Raises:
        OutOfBoundsError: when the box lies entirely outside the feature extent.
    """
    if (
        roi.x2 <= 0.0
        or roi.y2 <= 0.0
        or roi.x1 >= width * stride
        or roi.y1 >= height * stride
    ):
        raise OutOfBoundsError(
            f"roi {roi.as_tuple()} outside feature extent {width * stride}x{height * stride}"
        )
    cx1 = max(0, int(np.floor(roi.x1 / stride)))
    cy1 = max(0, int(np.floor(roi.y1 / stride)))
    cx2 = min(width, int(np.ceil(roi.x2 / stride)))
    cy2 = min(height, int(np.ceil(roi.y2 / stride)))
    return cx1, cy1, cx2, cy2


def _bin_starts(n_cells: int, grid: int) -> np.ndarray:
    # Bin i spans cells [floor(i*n/G), floor((i+1)*n/G)); reduceat resolves an
    # empty span to the single cell at its start index, which is the intended
    # nearest-cell widening.
    return (np.arange(grid, dtype=np.int64) * n_cells) // grid


def roi_pool(feat: FeatureImage, roi: Box, grid: int) -> np.ndarray:
    """Max-pool the feature cells under a box into a fixed-length vector.

    The box's cell rectangle is split into a ``grid`` x ``grid`` lattice of
    near-equal bins; each output value is the max over one bin of one channel.

    Returns:
        Float array of length channels * grid * grid, channel-major with bins
        in row-major order inside each channel.
    """
    if grid < 1:
        raise ValueError(f"grid must be >= 1, got {grid}")
    cx1, cy1, cx2, cy2 = image_to_feature_rect(roi, feat.stride, feat.height, feat.width)
    patch = feat.data[:, cy1:cy2, cx1:cx2]
    rows = _bin_starts(cy2 - cy1, grid)
    cols = _bin_starts(cx2 - cx1, grid)
    pooled = np.maximum.reduceat(patch, rows, axis=1)
    pooled = np.maximum.reduceat(pooled, cols, axis=2)
    return pooled.reshape(-1).astype(np.float64)


def save_features(feat: FeatureImage, path: Union[str, Path]) -> None:
    """Write a feature image to its binary file format (lossless)."""
    header = _HEADER.pack(
        FEATURE_MAGIC, FEATURE_VERSION, feat.channels, feat.height, feat.width, feat.stride
    )
    payload = feat.data.astype("<f4").tobytes()
    Path(path).write_bytes(header + payload)


def load_features(path: Union[str, Path]) -> FeatureImage:
    """Read a feature image written by :func:`save_features`.

    Raises:
        FormatError: on bad magic, version, dimensions, or a truncated payload.
    """
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise FormatError(f"{path}: file shorter than header")
    magic, version, channels, height, width, stride = _HEADER.unpack_from(raw)
    if magic != FEATURE_MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    if version != FEATURE_VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    if min(channels, height, width) < 1 or channels * height * width > _MAX_CELLS:
        raise FormatError(f"{path}: bad dimensions {channels}x{height}x{width}")
    if not np.isfinite(stride) or stride <= 0:
        raise FormatError(f"{path}: bad stride {stride}")
    expected = channels * height * width * 4
    payload = raw[_HEADER.size:]
    if len(payload) != expected:
        raise FormatError(f"{path}: payload is {len(payload)} bytes, expected {expected}")
    data = np.frombuffer(payload, dtype="<f4").reshape(channels, height, width)
    return FeatureImage(data=data.copy(), stride=float(stride))
