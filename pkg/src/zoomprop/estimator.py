"""A scikit-learn style wrapper around training and proposal generation.

``ZoomProposalEstimator.fit`` takes feature images with their ground-truth
boxes, builds the pooled training set, and trains the head; ``predict`` runs
the zoom-gated pipeline per image; ``score`` reports mean proposal recall.
The class follows the scikit-learn estimator contract (constructor stores
hyperparameters verbatim, ``get_params``/``set_params`` work, fitted state
lives in trailing-underscore attributes), so it composes with model-selection
utilities.
"""

from __future__ import annotations

from typing import List, Optional, Sequence, Tuple

import numpy as np
from sklearn.base import BaseEstimator

from .boxes import Box
from .errors import InsufficientDataError
from .features import FeatureImage
from .network import HeadConfig
from .pipeline import PROPOSERS, PipelineConfig, ScoredBox, propose
from .training import build_training_image, train
from .evaluation import recall
from .windows import Frame


def check_feature_images(X) -> List[FeatureImage]:
    """Validate that X is a non-empty sequence of FeatureImage."""
    if isinstance(X, FeatureImage):
        raise TypeError("X must be a sequence of FeatureImage, not a single image")
    items = list(X)
    if not items:
        raise InsufficientDataError("X is empty")
    for i, item in enumerate(items):
        if not isinstance(item, FeatureImage):
            raise TypeError(f"X[{i}] is {type(item).__name__}, expected FeatureImage")
    return items


def check_box_lists(y, length: int) -> List[List[Box]]:
    """Validate that y is a sequence of per-image Box lists matching X."""
    items = [list(boxes) for boxes in y]
    if len(items) != length:
        raise ValueError(f"X has {length} images but y has {len(items)} entries")
    for i, boxes in enumerate(items):
        for box in boxes:
            if not isinstance(box, Box):
                raise TypeError(f"y[{i}] contains {type(box).__name__}, expected Box")
    return items


def _frames(
    X: Sequence[FeatureImage], image_sizes: Optional[Sequence[Tuple[float, float]]]
) -> List[Frame]:
    if image_sizes is None:
        return [Frame.of_image(*feat.extent()) for feat in X]
    sizes = list(image_sizes)
    if len(sizes) != len(X):
        raise ValueError(f"image_sizes has {len(sizes)} entries for {len(X)} images")
    return [Frame.of_image(w, h) for w, h in sizes]


class ZoomProposalEstimator(BaseEstimator):
    """Learn and run zoom-gated object-proposal generation.

    Parameters mirror the head, training, and pipeline configurations; see
    ``HeadConfig`` and ``PipelineConfig``.  ``X`` is a list of FeatureImage
    and ``y`` a list of ground-truth Box lists.  Pixel image sizes default to
    each feature image's extent and can be overridden with ``image_sizes``.
    """

    def __init__(
        self,
        hidden_dim: int = 64,
        learning_rate: float = 0.01,
        momentum: float = 0.9,
        weight_decay: float = 5e-4,
        batch_size: int = 128,
        images_per_batch: int = 2,
        iterations: int = 2000,
        box_loss_weight: float = 1.0,
        pool_grid: int = 4,
        zoom_threshold: float = 0.5,
        conf_threshold: float = 0.001,
        max_zoom_regions: int = 8,
        proposer: str = "coarse_sliding",
        dedupe_iou: float = 0.95,
        zoom_enabled: bool = True,
        iou_min: float = 0.5,
        seed: int = 0,
    ):
        self.hidden_dim = hidden_dim
        self.learning_rate = learning_rate
        self.momentum = momentum
        self.weight_decay = weight_decay
        self.batch_size = batch_size
        self.images_per_batch = images_per_batch
        self.iterations = iterations
        self.box_loss_weight = box_loss_weight
        self.pool_grid = pool_grid
        self.zoom_threshold = zoom_threshold
        self.conf_threshold = conf_threshold
        self.max_zoom_regions = max_zoom_regions
        self.proposer = proposer
        self.dedupe_iou = dedupe_iou
        self.zoom_enabled = zoom_enabled
        self.iou_min = iou_min
        self.seed = seed

    def _head_config(self, input_dim: int) -> HeadConfig:
        return HeadConfig(
            input_dim=input_dim,
            hidden_dim=self.hidden_dim,
            learning_rate=self.learning_rate,
            momentum=self.momentum,
            weight_decay=self.weight_decay,
            batch_size=self.batch_size,
            images_per_batch=self.images_per_batch,
            iterations=self.iterations,
            box_loss_weight=self.box_loss_weight,
            seed=self.seed,
        )

    def _pipeline_config(self) -> PipelineConfig:
        if self.proposer not in PROPOSERS:
            raise ValueError(f"unknown proposer {self.proposer!r}")
        return PipelineConfig(
            zoom_threshold=self.zoom_threshold,
            conf_threshold=self.conf_threshold,
            max_zoom_regions=self.max_zoom_regions,
            proposer=self.proposer,
            pool_grid=self.pool_grid,
            dedupe_iou=self.dedupe_iou,
            zoom_enabled=self.zoom_enabled,
        )

    def fit(self, X, y, image_sizes=None) -> "ZoomProposalEstimator":
        """Build pooled training sets from (X, y) and train the head."""
        X = check_feature_images(X)
        y = check_box_lists(y, len(X))
        frames = _frames(X, image_sizes)
        input_dim = X[0].channels * self.pool_grid * self.pool_grid
        rng = np.random.default_rng(self.seed)
        images = [
            build_training_image(feat, gts, frame=frame, grid=self.pool_grid, rng=rng)
            for feat, gts, frame in zip(X, y, frames)
        ]
        head, history = train(images, self._head_config(input_dim))
        self.head_ = head
        self.loss_history_ = history
        self.n_features_in_ = input_dim
        return self

    def predict(self, X, image_sizes=None) -> List[List[ScoredBox]]:
        """Generate scored proposals for each feature image."""
        self._require_fitted()
        X = check_feature_images(X)
        frames = _frames(X, image_sizes)
        cfg = self._pipeline_config()
        return [propose(feat, frame, self.head_, cfg)[0] for feat, frame in zip(X, frames)]

    def score(self, X, y, image_sizes=None) -> float:
        """Mean recall of predicted proposals against ground truth."""
        X = check_feature_images(X)
        y = check_box_lists(y, len(X))
        predictions = self.predict(X, image_sizes)
        values = [
            recall([sb.box for sb in proposals], gts, iou_min=self.iou_min)
            for proposals, gts in zip(predictions, y)
        ]
        return float(np.mean(values))

    def _require_fitted(self) -> None:
        if not hasattr(self, "head_"):
            raise AttributeError("estimator is not fitted; call fit first")
