"""The zoom-in proposal pipeline.

Proposals come from two branches: a coarse whole-image branch (set A) and a
fine branch (set B) run only inside regions the network's zoom indicator
selects.  Every window in the union is scored by the head; each overlap
pattern confident enough emits a corrected box (set C), and near-duplicate
emissions are suppressed.  A dense single-branch baseline provides the
reference cost, and counters report work in backbone-independent units:
windows generated, regions pooled, head evaluations.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from .boxes import Box, iou_matrix, to_array
from .errors import (
    EmptyResultError,
    FormatError,
    InvalidBoxError,
    ModelMismatchError,
)
from .features import FeatureImage, roi_pool
from .network import ProposalHead
from .windows import Frame, coarse_windows, cover_regions, dense_windows

PROPOSER_COARSE = "coarse_sliding"
PROPOSER_DENSE = "dense_sliding"
PROPOSER_EXTERNAL = "external_file"
PROPOSERS = (PROPOSER_COARSE, PROPOSER_DENSE, PROPOSER_EXTERNAL)

PROVENANCE_COARSE = "A-coarse"
PROVENANCE_ZOOM = "B-zoom"
PROVENANCE_PREDICTED = "C-predicted"
_PROVENANCES = (PROVENANCE_COARSE, PROVENANCE_ZOOM, PROVENANCE_PREDICTED)

PROPOSALS_HEADER = ["image_id", "x1", "y1", "x2", "y2", "score", "provenance"]
EXTERNAL_HEADER = PROPOSALS_HEADER[:5]


@dataclass
class PipelineConfig:
    """Knobs of the proposal pipeline.

    ``zoom_enabled=False`` removes the zoom branch entirely (no cover regions
    are generated or evaluated), which with the dense proposer makes
    :func:`propose` coincide with :func:`dense_baseline`.
    """

    zoom_threshold: float = 0.5
    conf_threshold: float = 0.001
    max_zoom_regions: int = 8
    proposer: str = PROPOSER_COARSE
    pool_grid: int = 4
    dedupe_iou: float = 0.95
    zoom_enabled: bool = True
    external_boxes: Optional[Sequence[Box]] = None

    def __post_init__(self):
        if not 0 < self.zoom_threshold <= 1 or not 0 < self.conf_threshold <= 1:
            raise ValueError("thresholds must lie in (0, 1]")
        if self.max_zoom_regions < 0:
            raise ValueError("max_zoom_regions must be non-negative")
        if self.proposer not in PROPOSERS:
            raise ValueError(f"unknown proposer {self.proposer!r}; pick one of {PROPOSERS}")
        if self.pool_grid < 1:
            raise ValueError("pool_grid must be positive")
        if not 0 < self.dedupe_iou <= 1:
            raise ValueError("dedupe_iou must lie in (0, 1]")
        if self.proposer == PROPOSER_EXTERNAL and self.external_boxes is None:
            raise ValueError("external_file proposer requires external_boxes")


@dataclass(frozen=True)
class ScoredBox:
    box: Box
    score: float
    provenance: str = PROVENANCE_PREDICTED


@dataclass
class CostCounters:
    """Work accounting in hardware-independent units."""

    windows_generated: int = 0
    rois_pooled: int = 0
    scnet_evaluations: int = 0
    zoom_regions_selected: int = 0

    def add(self, other: "CostCounters") -> None:
        self.windows_generated += other.windows_generated
        self.rois_pooled += other.rois_pooled
        self.scnet_evaluations += other.scnet_evaluations
        self.zoom_regions_selected += other.zoom_regions_selected


@dataclass
class Emissions:
    """Raw per-pattern emissions before confidence filtering and dedupe.

    Kept as flat arrays so sweeps can re-filter at many thresholds without
    re-running the pipeline: filtering these rows at a confidence threshold
    and then deduplicating reproduces :func:`propose` at that threshold
    exactly (the confidence gate is the only threshold-dependent step).
    """

    boxes: np.ndarray  # (M, 4)
    scores: np.ndarray  # (M,)
    provenance: np.ndarray  # (M,) indices into _PROVENANCES

    @classmethod
    def empty(cls) -> "Emissions":
        return cls(np.empty((0, 4)), np.empty(0), np.empty(0, dtype=np.intp))


def _check_model(head: ProposalHead, feat: FeatureImage, cfg: PipelineConfig) -> None:
    expected = feat.channels * cfg.pool_grid * cfg.pool_grid
    if head.input_dim != expected:
        raise ModelMismatchError(
            f"head expects input_dim {head.input_dim} but pooling yields {expected} "
            f"({feat.channels} channels x {cfg.pool_grid}x{cfg.pool_grid} grid)"
        )


def _proposer_windows(cfg: PipelineConfig, frame: Frame) -> List[Box]:
    """Candidate windows of the configured proposer inside a frame."""
    if cfg.proposer == PROPOSER_EXTERNAL:
        bounds = frame.as_box()
        return [box for box in cfg.external_boxes if bounds.contains(box)]
    maker = coarse_windows if cfg.proposer == PROPOSER_COARSE else dense_windows
    try:
        return maker(frame)
    except EmptyResultError:
        return []


def _forward_all(head: ProposalHead, feat: FeatureImage, rois: Sequence[Box], grid: int):
    pooled = np.stack([roi_pool(feat, roi, grid) for roi in rois])
    return head.forward_batch(pooled)


def _emit(
    head: ProposalHead,
    feat: FeatureImage,
    image: Frame,
    rois: Sequence[Box],
    provenance: np.ndarray,
    grid: int,
) -> Emissions:
    """Score every window and decode one candidate box per overlap pattern.

    Decoded corners are clipped to the image; boxes degenerate after clipping
    are dropped (a threshold-independent rule, so sweeps stay exact).
    """
    if not rois:
        return Emissions.empty()
    _, conf, deltas = _forward_all(head, feat, rois, grid)
    n, k = conf.shape
    roi_arr = to_array(rois)
    w = (roi_arr[:, 2] - roi_arr[:, 0])[:, None, None]
    h = (roi_arr[:, 3] - roi_arr[:, 1])[:, None, None]
    scale = np.concatenate([w, h, w, h], axis=2)
    decoded = roi_arr[:, None, :] + deltas * scale
    bounds = image.as_box()
    decoded[..., 0] = np.clip(decoded[..., 0], bounds.x1, bounds.x2)
    decoded[..., 1] = np.clip(decoded[..., 1], bounds.y1, bounds.y2)
    decoded[..., 2] = np.clip(decoded[..., 2], bounds.x1, bounds.x2)
    decoded[..., 3] = np.clip(decoded[..., 3], bounds.y1, bounds.y2)
    valid = (decoded[..., 0] < decoded[..., 2]) & (decoded[..., 1] < decoded[..., 3])
    rows, cols = np.nonzero(valid)
    return Emissions(
        boxes=decoded[rows, cols],
        scores=conf[rows, cols],
        provenance=np.repeat(provenance, k).reshape(n, k)[rows, cols],
    )


def dedupe(
    boxes: np.ndarray, scores: np.ndarray, iou_threshold: float, _chunk: int = 256
) -> np.ndarray:
    """Indices that survive near-duplicate suppression, by descending score.

    Boxes are visited by (score descending, original index ascending); a box
    is dropped when it overlaps an already-kept box with IoU above the
    threshold.  Exact coordinate duplicates are collapsed first, and the
    pairwise checks run on chunks so large emission sets stay in vectorized
    numpy rather than a per-box Python loop.
    """
    m = boxes.shape[0]
    if m == 0:
        return np.empty(0, dtype=np.intp)
    order = np.lexsort((np.arange(m), -scores))
    if iou_threshold >= 1.0:
        return order  # iou can never exceed 1, so nothing is suppressed
    # Exact duplicates: the first visit in score order wins.
    _, first = np.unique(boxes[order], axis=0, return_index=True)
    first.sort()
    candidates = order[first]

    kept: List[np.ndarray] = []
    kept_blocks: List[np.ndarray] = []
    for start in range(0, candidates.size, _chunk):
        block_idx = candidates[start : start + _chunk]
        block = boxes[block_idx]
        if kept_blocks:
            cross = iou_matrix(block, np.concatenate(kept_blocks))
            suppressed = (cross > iou_threshold).any(axis=1)
        else:
            suppressed = np.zeros(block_idx.size, dtype=bool)
        local = iou_matrix(block, block)
        keep_mask = np.zeros(block_idx.size, dtype=bool)
        for r in range(block_idx.size):
            if suppressed[r]:
                continue
            if r and (local[r, :r][keep_mask[:r]] > iou_threshold).any():
                continue
            keep_mask[r] = True
        if keep_mask.any():
            kept.append(block_idx[keep_mask])
            kept_blocks.append(block[keep_mask])
    if not kept:
        return np.empty(0, dtype=np.intp)
    return np.concatenate(kept)


def finalize(emissions: Emissions, conf_threshold: float, dedupe_iou: float) -> List[ScoredBox]:
    """Confidence-filter raw emissions and suppress near-duplicates."""
    mask = emissions.scores >= conf_threshold
    boxes = emissions.boxes[mask]
    scores = emissions.scores[mask]
    provenance = emissions.provenance[mask]
    keep = dedupe(boxes, scores, dedupe_iou)
    return [
        ScoredBox(
            box=Box(*(float(v) for v in boxes[i])),
            score=float(scores[i]),
            provenance=_PROVENANCES[int(provenance[i])],
        )
        for i in keep
    ]


def collect_emissions(
    feat: FeatureImage, image: Frame, head: ProposalHead, cfg: PipelineConfig
) -> Tuple[Emissions, CostCounters]:
    """Run both branches and return raw emissions plus cost counters.

    Branch A runs the configured proposer over the whole image.  When zooming
    is enabled, every cover region is pooled and scored; regions whose zoom
    indicator clears the threshold are kept (highest first, capped), and
    branch B reruns the proposer inside each.  Windows appearing in both
    branches are evaluated once and attributed to branch A.
    """
    _check_model(head, feat, cfg)
    counters = CostCounters()
    branch_a = _proposer_windows(cfg, image)
    counters.windows_generated += len(branch_a)

    branch_b: List[Box] = []
    if cfg.zoom_enabled:
        covers = cover_regions(image)
        counters.windows_generated += len(covers)
        counters.rois_pooled += len(covers)
        counters.scnet_evaluations += len(covers)
        zoom, _, _ = _forward_all(head, feat, covers, cfg.pool_grid)
        above = np.flatnonzero(zoom >= cfg.zoom_threshold)
        ranked = above[np.lexsort((above, -zoom[above]))][: cfg.max_zoom_regions]
        counters.zoom_regions_selected = len(ranked)
        for idx in ranked:
            region = covers[int(idx)]
            branch_b.extend(_proposer_windows(cfg, Frame.of_box(region)))
        counters.windows_generated += len(branch_b)

    union: Dict[tuple, int] = {}
    rois: List[Box] = []
    provenance: List[int] = []
    for source, windows in ((0, branch_a), (1, branch_b)):
        for box in windows:
            key = box.as_tuple()
            if key not in union:
                union[key] = source
                rois.append(box)
                provenance.append(source)
    counters.rois_pooled += len(rois)
    counters.scnet_evaluations += len(rois)
    emissions = _emit(head, feat, image, rois, np.asarray(provenance, dtype=np.intp), cfg.pool_grid)
    return emissions, counters


def propose(
    feat: FeatureImage, image: Frame, head: ProposalHead, cfg: PipelineConfig
) -> Tuple[List[ScoredBox], CostCounters]:
    """Full zoom-gated proposal generation for one image."""
    emissions, counters = collect_emissions(feat, image, head, cfg)
    return finalize(emissions, cfg.conf_threshold, cfg.dedupe_iou), counters


def collect_dense_emissions(
    feat: FeatureImage, image: Frame, head: ProposalHead, cfg: PipelineConfig
) -> Tuple[Emissions, CostCounters]:
    """Single-branch reference: dense windows everywhere, no zoom gating."""
    _check_model(head, feat, cfg)
    counters = CostCounters()
    try:
        windows = dense_windows(image)
    except EmptyResultError:
        windows = []
    counters.windows_generated = len(windows)
    counters.rois_pooled = len(windows)
    counters.scnet_evaluations = len(windows)
    provenance = np.zeros(len(windows), dtype=np.intp)
    return _emit(head, feat, image, windows, provenance, cfg.pool_grid), counters


def dense_baseline(
    feat: FeatureImage, image: Frame, head: ProposalHead, cfg: PipelineConfig
) -> Tuple[List[ScoredBox], CostCounters]:
    """Dense sliding windows with box prediction and no zoom branch."""
    emissions, counters = collect_dense_emissions(feat, image, head, cfg)
    return finalize(emissions, cfg.conf_threshold, cfg.dedupe_iou), counters


def raw_dense_proposals(image: Frame) -> Tuple[List[ScoredBox], CostCounters]:
    """Dense windows used directly as proposals, with no learned prediction."""
    try:
        windows = dense_windows(image)
    except EmptyResultError:
        windows = []
    counters = CostCounters(windows_generated=len(windows))
    return [ScoredBox(box=w, score=1.0, provenance=PROVENANCE_COARSE) for w in windows], counters


def write_proposals_csv(
    rows: Sequence[Tuple[str, ScoredBox]], path: Union[str, Path]
) -> None:
    """Write proposals as CSV: image_id,x1,y1,x2,y2,score,provenance."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(PROPOSALS_HEADER)
        for image_id, sb in rows:
            writer.writerow(
                [
                    image_id,
                    repr(sb.box.x1),
                    repr(sb.box.y1),
                    repr(sb.box.x2),
                    repr(sb.box.y2),
                    repr(sb.score),
                    sb.provenance,
                ]
            )


def read_proposals_csv(path: Union[str, Path]) -> Dict[str, List[ScoredBox]]:
    """Read a proposals CSV, grouped by image id.

    Accepts the full seven-column format or the five-column external format
    (no score/provenance); external rows default to score 1 and the
    predicted-set provenance tag.

    Raises:
        FormatError: unknown header or malformed row.
    """
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        rows = [row for row in reader if row]
    if not rows or rows[0] not in (PROPOSALS_HEADER, EXTERNAL_HEADER):
        raise FormatError(f"{path}: expected header {','.join(PROPOSALS_HEADER)} (or the 5-column external form)")
    has_score = rows[0] == PROPOSALS_HEADER
    out: Dict[str, List[ScoredBox]] = {}
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) != len(rows[0]):
            raise FormatError(f"{path}:{lineno}: expected {len(rows[0])} columns, got {len(row)}")
        try:
            box = Box(float(row[1]), float(row[2]), float(row[3]), float(row[4]))
            score = float(row[5]) if has_score else 1.0
        except (ValueError, InvalidBoxError) as exc:
            raise FormatError(f"{path}:{lineno}: {exc}") from exc
        provenance = row[6] if has_score else PROVENANCE_PREDICTED
        if provenance not in _PROVENANCES:
            raise FormatError(f"{path}:{lineno}: unknown provenance {provenance!r}")
        out.setdefault(row[0], []).append(ScoredBox(box=box, score=score, provenance=provenance))
    return out
