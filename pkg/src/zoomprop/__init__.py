"""Zoom-gated object-proposal generation on feature images.

The package trains a small multi-head network over RoI-pooled features to
(a) flag regions worth zooming into and (b) predict corrected bounding boxes
per overlap pattern, then runs a two-branch proposal pipeline whose fine
search is gated by the zoom signal.  Synthetic scenes with a deterministic
feature renderer stand in for a convolutional backbone.
"""

from .boxes import (
    Box,
    CornerDeltas,
    IDEAL_PATTERN,
    NUM_PATTERNS,
    apply_deltas,
    classify_overlap_pattern,
    iou,
    iou_matrix,
    roi_relative_corners,
    to_array,
)
from .errors import (
    DimensionMismatchError,
    EmptyResultError,
    FormatError,
    GenerationFailureError,
    InsufficientDataError,
    InvalidBoxError,
    ModelMismatchError,
    NonFiniteError,
    OutOfBoundsError,
    ZoomPropError,
)
from .estimator import ZoomProposalEstimator
from .evaluation import CurvePoint, read_curve_csv, recall, sweep, write_curve_csv
from .features import (
    FeatureImage,
    image_to_feature_rect,
    load_features,
    roi_pool,
    save_features,
)
from .network import (
    HeadConfig,
    HeadOutput,
    ProposalHead,
    RoiLabels,
    load_model,
    loss,
    make_labels,
    save_model,
)
from .pipeline import (
    CostCounters,
    PipelineConfig,
    ScoredBox,
    dense_baseline,
    propose,
    raw_dense_proposals,
    read_proposals_csv,
    write_proposals_csv,
)
from .synth import (
    Scene,
    SceneObject,
    SynthConfig,
    gen_scene,
    read_annotations,
    render_features,
    write_annotations,
)
from .training import TrainingImage, build_training_image, train, training_rois
from .windows import (
    Frame,
    WindowSpec,
    coarse_windows,
    cover_regions,
    dense_windows,
    sliding_windows,
)

__version__ = "0.1.0"

__all__ = [
    "Box",
    "CornerDeltas",
    "CostCounters",
    "CurvePoint",
    "DimensionMismatchError",
    "EmptyResultError",
    "FeatureImage",
    "FormatError",
    "Frame",
    "GenerationFailureError",
    "HeadConfig",
    "HeadOutput",
    "IDEAL_PATTERN",
    "InsufficientDataError",
    "InvalidBoxError",
    "ModelMismatchError",
    "NUM_PATTERNS",
    "NonFiniteError",
    "OutOfBoundsError",
    "PipelineConfig",
    "ProposalHead",
    "RoiLabels",
    "Scene",
    "SceneObject",
    "ScoredBox",
    "SynthConfig",
    "TrainingImage",
    "WindowSpec",
    "ZoomPropError",
    "ZoomProposalEstimator",
    "apply_deltas",
    "build_training_image",
    "classify_overlap_pattern",
    "coarse_windows",
    "cover_regions",
    "dense_baseline",
    "dense_windows",
    "gen_scene",
    "image_to_feature_rect",
    "iou",
    "iou_matrix",
    "load_features",
    "load_model",
    "loss",
    "make_labels",
    "propose",
    "raw_dense_proposals",
    "read_annotations",
    "read_curve_csv",
    "read_proposals_csv",
    "recall",
    "render_features",
    "roi_pool",
    "roi_relative_corners",
    "save_features",
    "save_model",
    "sliding_windows",
    "sweep",
    "to_array",
    "train",
    "training_rois",
    "write_annotations",
    "write_curve_csv",
    "write_proposals_csv",
]
