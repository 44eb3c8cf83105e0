"""Synthetic scenes and a deterministic feature renderer.

Scenes mimic high-resolution photographs where small objects cluster inside
larger context regions: a few cluster centers each collect several small
boxes, plus a couple of large boxes placed anywhere.  The renderer stands in
for a convolutional backbone, emitting a feature grid in which channel 0 is
an objectness signal, channels 1-4 encode normalized offsets to the nearest
box's corners, channel 5 encodes the box scale, and everything rides on
Gaussian noise.  Both steps are pure functions of their seeds.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from .boxes import Box, iou
from .errors import (
    DimensionMismatchError,
    FormatError,
    GenerationFailureError,
    InvalidBoxError,
)
from .features import FeatureImage

# Aspect ratios (width/height) of the two object categories; both keep
# area = side^2 so "side" stays the scale parameter.
CATEGORY_ASPECTS = {"car": 2.0, "person": 0.4}

INFLUENCE_FACTOR = 1.5
MIN_OBJECT_SIDE = 8.0
_PLACEMENT_RETRIES = 100
_INFORMATIVE_CHANNELS = 6


@dataclass(frozen=True)
class SceneObject:
    box: Box
    category: str


@dataclass
class Scene:
    """A generated image: size in pixels plus ground-truth objects."""

    width: int
    height: int
    objects: List[SceneObject] = field(default_factory=list)
    cluster_centers: List[Tuple[float, float]] = field(default_factory=list)

    @property
    def gt_boxes(self) -> List[Box]:
        return [obj.box for obj in self.objects]


@dataclass
class SynthConfig:
    """Scene-generation and rendering parameters (desk-scale defaults)."""

    width_range: Tuple[int, int] = (2400, 2400)
    height_range: Tuple[int, int] = (1800, 1800)
    clusters: int = 3
    objects_per_cluster: int = 3
    large_objects: int = 2
    small_side_frac: Tuple[float, float] = (1.0 / 64.0, 1.0 / 16.0)
    large_side_frac: Tuple[float, float] = (1.0 / 8.0, 1.0 / 3.0)
    max_object_iou: float = 0.3
    cluster_radius_frac: float = 1.0 / 8.0
    noise_sigma: float = 0.1
    seed: int = 0

    def __post_init__(self):
        for name in ("width_range", "height_range", "small_side_frac", "large_side_frac"):
            lo, hi = getattr(self, name)
            if not (0 < lo <= hi):
                raise ValueError(f"{name} must satisfy 0 < low <= high, got ({lo}, {hi})")
        if min(self.clusters, self.objects_per_cluster, self.large_objects) < 0:
            raise ValueError("object counts must be non-negative")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be non-negative")


def _object_box(cx: float, cy: float, side: float, category: str, width: int, height: int) -> Optional[Box]:
    """Box of area side^2 with the category's aspect, shifted fully inside the image."""
    aspect = CATEGORY_ASPECTS[category]
    w = side * math.sqrt(aspect)
    h = side / math.sqrt(aspect)
    if w < MIN_OBJECT_SIDE or h < MIN_OBJECT_SIDE or w > width or h > height:
        return None
    cx = min(max(cx, w / 2), width - w / 2)
    cy = min(max(cy, h / 2), height - h / 2)
    return Box(cx - w / 2, cy - h / 2, cx + w / 2, cy + h / 2)


def gen_scene(config: SynthConfig, seed=None) -> Scene:
    """Generate one scene deterministically from the seed.

    Cluster centers land uniformly in the image; each cluster's small objects
    land within the cluster radius; large objects land anywhere.  A candidate
    overlapping an accepted box with IoU above ``config.max_object_iou`` is
    resampled, with a bounded retry budget.

    Raises:
        GenerationFailureError: when an object cannot be placed within the
            retry budget.
    """
    rng = np.random.default_rng(config.seed if seed is None else seed)
    width = int(rng.integers(config.width_range[0], config.width_range[1] + 1))
    height = int(rng.integers(config.height_range[0], config.height_range[1] + 1))
    shorter = min(width, height)
    radius = config.cluster_radius_frac * shorter
    categories = sorted(CATEGORY_ASPECTS)

    centers = [
        (float(rng.uniform(0, width)), float(rng.uniform(0, height)))
        for _ in range(config.clusters)
    ]
    objects: List[SceneObject] = []

    def place(side_range: Tuple[float, float], around: Optional[Tuple[float, float]]) -> SceneObject:
        for _ in range(_PLACEMENT_RETRIES):
            side = float(rng.uniform(side_range[0], side_range[1])) * shorter
            category = categories[int(rng.integers(len(categories)))]
            if around is None:
                cx = float(rng.uniform(0, width))
                cy = float(rng.uniform(0, height))
            else:
                angle = float(rng.uniform(0, 2 * math.pi))
                dist = float(rng.uniform(0, radius))
                cx = around[0] + dist * math.cos(angle)
                cy = around[1] + dist * math.sin(angle)
            box = _object_box(cx, cy, side, category, width, height)
            if box is None:
                continue
            if all(iou(box, existing.box) <= config.max_object_iou for existing in objects):
                return SceneObject(box, category)
        raise GenerationFailureError(
            f"could not place an object after {_PLACEMENT_RETRIES} retries "
            f"(image {width}x{height}, {len(objects)} objects placed)"
        )

    for center in centers:
        for _ in range(config.objects_per_cluster):
            objects.append(place(config.small_side_frac, center))
    for _ in range(config.large_objects):
        objects.append(place(config.large_side_frac, None))
    return Scene(width=width, height=height, objects=objects, cluster_centers=centers)


def render_features(
    scene: Scene, channels: int = 16, stride: float = 16.0, sigma: float = 0.1, seed=0
) -> FeatureImage:
    """Render a scene into a feature image.

    The full grid is first filled with Gaussian noise(0, sigma) — drawn before
    any box is consulted, so the noise field is independent of scene content.
    Then, for each cell whose center lies within 1.5x the side of its nearest
    ground-truth box (side = sqrt(area), distance = rectangle distance):

        channel 0 += 1 inside the box, else 1 - d / (1.5 * side)
        channels 1-4 += (box corner - cell center) / side, clipped to [-2, 2]
        channel 5 += log(side / stride)

    Raises:
        DimensionMismatchError: when channels < 6.
    """
    if channels < _INFORMATIVE_CHANNELS:
        raise DimensionMismatchError(f"renderer needs >= {_INFORMATIVE_CHANNELS} channels, got {channels}")
    if stride <= 0:
        raise ValueError("stride must be positive")
    height = math.ceil(scene.height / stride)
    width = math.ceil(scene.width / stride)
    rng = np.random.default_rng(seed)
    if sigma > 0:
        data = rng.normal(0.0, sigma, size=(channels, height, width))
    else:
        data = np.zeros((channels, height, width))

    boxes = scene.gt_boxes
    if boxes:
        cx = (np.arange(width) + 0.5) * stride
        cy = (np.arange(height) + 0.5) * stride
        dists = np.empty((len(boxes), height, width))
        for b, box in enumerate(boxes):
            dx = np.maximum(np.maximum(box.x1 - cx, cx - box.x2), 0.0)
            dy = np.maximum(np.maximum(box.y1 - cy, cy - box.y2), 0.0)
            dists[b] = np.hypot(dy[:, None], dx[None, :])
        nearest = dists.argmin(axis=0)
        grid_x = np.broadcast_to(cx[None, :], (height, width))
        grid_y = np.broadcast_to(cy[:, None], (height, width))
        for b, box in enumerate(boxes):
            side = math.sqrt(box.area)
            reach = INFLUENCE_FACTOR * side
            mask = (nearest == b) & (dists[b] <= reach)
            if not mask.any():
                continue
            d = dists[b][mask]
            data[0][mask] += np.where(d == 0.0, 1.0, 1.0 - d / reach)
            for ch, corner in enumerate((box.x1, box.y1, box.x2, box.y2), start=1):
                center = grid_x if ch % 2 == 1 else grid_y
                data[ch][mask] += np.clip((corner - center[mask]) / side, -2.0, 2.0)
            data[5][mask] += math.log(side / stride)
    return FeatureImage(data=data.astype(np.float32), stride=float(stride))


def write_annotations(items: Sequence[Tuple[str, Scene]], path: Union[str, Path]) -> None:
    """Write one JSON line per scene: image id, size, and labeled boxes."""
    with open(path, "w") as fh:
        for image_id, scene in items:
            record = {
                "image_id": image_id,
                "width": scene.width,
                "height": scene.height,
                "boxes": [
                    {
                        "x1": obj.box.x1,
                        "y1": obj.box.y1,
                        "x2": obj.box.x2,
                        "y2": obj.box.y2,
                        "class": obj.category,
                    }
                    for obj in scene.objects
                ],
            }
            fh.write(json.dumps(record) + "\n")


def read_annotations(path: Union[str, Path]) -> List[Tuple[str, Scene]]:
    """Read scenes back from the JSON-lines annotation file.

    Cluster centers are generation bookkeeping and are not persisted.
    """
    items: List[Tuple[str, Scene]] = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
                objects = [
                    SceneObject(Box(b["x1"], b["y1"], b["x2"], b["y2"]), b["class"])
                    for b in record["boxes"]
                ]
                scene = Scene(width=int(record["width"]), height=int(record["height"]), objects=objects)
                items.append((record["image_id"], scene))
            except (KeyError, TypeError, ValueError, InvalidBoxError) as exc:
                raise FormatError(f"{path}:{lineno}: bad annotation record: {exc}") from exc
    return items
