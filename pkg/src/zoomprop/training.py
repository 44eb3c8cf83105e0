"""Mini-batch SGD training of the proposal head on pooled-feature datasets.

A training image bundles the pooled vectors and labels of its candidate
regions.  Candidates are the coarse sliding windows plus the ground-truth
boxes and a few jittered copies of each, so every overlap pattern in the
taxonomy shows up with reasonable frequency.  Each SGD batch draws an equal
number of regions from a fixed number of images, keeping at least a quarter
of each draw on regions with an assigned pattern when enough exist.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from .boxes import Box
from .errors import DimensionMismatchError, InsufficientDataError
from .features import FeatureImage, roi_pool
from .network import (
    BatchLabels,
    HeadConfig,
    ProposalHead,
    loss_and_gradients,
    make_labels,
)
from .windows import Frame, coarse_windows

JITTER_COUNT = 3
JITTER_FRACTION = 0.25
_JITTER_ATTEMPTS = 8

# Fraction of each per-image draw reserved for regions with an assigned
# pattern, when the image has any.
POSITIVE_FRACTION = 0.25


@dataclass
class TrainingImage:
    """Pooled features (N, input_dim) and stacked labels for one image's regions."""

    features: np.ndarray
    labels: BatchLabels
    positives: np.ndarray = field(init=False)
    negatives: np.ndarray = field(init=False)

    def __post_init__(self):
        assigned = self.labels.weights.sum(axis=1) > 0
        self.positives = np.flatnonzero(assigned)
        self.negatives = np.flatnonzero(~assigned)

    @property
    def count(self) -> int:
        return self.features.shape[0]


def training_rois(
    frame: Frame,
    gts: Sequence[Box],
    rng: np.random.Generator,
    jitter_count: int = JITTER_COUNT,
    jitter_fraction: float = JITTER_FRACTION,
) -> List[Box]:
    """Candidate regions for one image: coarse windows, ground truths, jittered copies.

    Jitter shifts each corner independently by up to ``jitter_fraction`` of
    the box side per axis, clipped to the frame; degenerate draws are retried
    a few times and then dropped.
    """
    rois = list(coarse_windows(frame))
    bounds = frame.as_box()
    for gt in gts:
        rois.append(gt)
        for _ in range(jitter_count):
            for _ in range(_JITTER_ATTEMPTS):
                dx1, dx2 = rng.uniform(-jitter_fraction, jitter_fraction, size=2) * gt.width
                dy1, dy2 = rng.uniform(-jitter_fraction, jitter_fraction, size=2) * gt.height
                x1, y1 = gt.x1 + dx1, gt.y1 + dy1
                x2, y2 = gt.x2 + dx2, gt.y2 + dy2
                if x1 >= x2 or y1 >= y2:
                    continue
                clipped = Box(x1, y1, x2, y2).clip(bounds)
                if clipped is not None:
                    rois.append(clipped)
                    break
    return rois


def build_training_image(
    feat: FeatureImage,
    gts: Sequence[Box],
    frame: Optional[Frame] = None,
    grid: int = 4,
    rng: Optional[np.random.Generator] = None,
) -> TrainingImage:
    """Pool and label the training regions of one image."""
    if frame is None:
        width, height = feat.extent()
        frame = Frame.of_image(width, height)
    if rng is None:
        rng = np.random.default_rng(0)
    rois = training_rois(frame, gts, rng)
    features = np.stack([roi_pool(feat, roi, grid) for roi in rois])
    labels = BatchLabels.stack([make_labels(roi, gts) for roi in rois])
    return TrainingImage(features=features, labels=labels)


def _select_rois(image: TrainingImage, count: int, rng: np.random.Generator) -> np.ndarray:
    """Draw region indices from one image, biased toward assigned patterns.

    Draws without replacement where the strata allow it, with replacement when
    an image is short on regions.
    """
    want_pos = int(count * POSITIVE_FRACTION)
    take_pos = min(want_pos, image.positives.size)
    chosen = []
    if take_pos:
        chosen.append(rng.choice(image.positives, size=take_pos, replace=False))
    need = count - take_pos
    pool = image.negatives if image.negatives.size else np.arange(image.count)
    if need:
        chosen.append(rng.choice(pool, size=need, replace=need > pool.size))
    return np.concatenate(chosen) if chosen else np.empty(0, dtype=np.intp)


def train(
    images: Sequence[TrainingImage], config: HeadConfig
) -> Tuple[ProposalHead, List[Tuple[int, float]]]:
    """Run mini-batch SGD with momentum and weight decay.

    Each iteration samples ``images_per_batch`` distinct images uniformly,
    draws ``batch_size / images_per_batch`` regions from each, and applies

        v = momentum * v - lr * (grad + weight_decay * param);  param += v.

    Returns:
        The trained head and the loss history as (iteration, batch loss)
        pairs, 1-indexed.

    Raises:
        InsufficientDataError: fewer non-empty images than images_per_batch.
        DimensionMismatchError: pooled width differs from config.input_dim.
    """
    usable = [im for im in images if im.count > 0]
    if len(usable) < config.images_per_batch:
        raise InsufficientDataError(
            f"need {config.images_per_batch} non-empty images, got {len(usable)}"
        )
    for im in usable:
        if im.features.shape[1] != config.input_dim:
            raise DimensionMismatchError(
                f"training features have width {im.features.shape[1]}, "
                f"config.input_dim is {config.input_dim}"
            )
    rng = np.random.default_rng(config.seed)
    head = ProposalHead.initialize(config, rng)
    velocity = {name: np.zeros_like(param) for name, param in head.parameters()}
    per_image = config.batch_size // config.images_per_batch
    history: List[Tuple[int, float]] = []
    for iteration in range(1, config.iterations + 1):
        picks = rng.choice(len(usable), size=config.images_per_batch, replace=False)
        xs, ls = [], []
        for i in picks:
            sel = _select_rois(usable[i], per_image, rng)
            xs.append(usable[i].features[sel])
            ls.append(usable[i].labels.take(sel))
        x = np.concatenate(xs)
        labels = BatchLabels(
            zoom=np.concatenate([l.zoom for l in ls]),
            conf=np.concatenate([l.conf for l in ls]),
            targets=np.concatenate([l.targets for l in ls]),
            weights=np.concatenate([l.weights for l in ls]),
        )
        value, grads = loss_and_gradients(head, x, labels, config.box_loss_weight)
        history.append((iteration, value))
        for name, param in head.parameters():
            v = velocity[name]
            v *= config.momentum
            v -= config.learning_rate * (grads[name] + config.weight_decay * param)
            param += v
    return head, history


def write_loss_history(history: Sequence[Tuple[int, float]], path: Union[str, Path]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["iteration", "loss"])
        for iteration, value in history:
            writer.writerow([iteration, repr(float(value))])


def read_loss_history(path: Union[str, Path]) -> List[Tuple[int, float]]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0] != ["iteration", "loss"]:
        raise ValueError(f"{path}: expected header iteration,loss")
    return [(int(it), float(value)) for it, value in rows[1:]]


def moving_average(values: Sequence[float], window: int) -> np.ndarray:
    """Trailing moving average; entry i averages the window ending at i."""
    values = np.asarray(values, dtype=np.float64)
    if window < 1 or values.size < window:
        raise ValueError("window must be in [1, len(values)]")
    sums = np.cumsum(values)
    out = np.empty(values.size - window + 1)
    out[0] = sums[window - 1]
    out[1:] = sums[window:] - sums[:-window]
    return out / window
