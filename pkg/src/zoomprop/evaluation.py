"""Recall evaluation and operating-curve sweeps.

Recall is the fraction of ground-truth boxes matched by at least one proposal
at a minimum IoU (default 0.5).  A sweep runs a proposal strategy over a
dataset at several confidence thresholds and reports, per threshold, the mean
recall together with summed cost counters and emitted-proposal counts — the
raw material for cost-versus-reliability curves.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import List, Sequence, Tuple, Union

import numpy as np

from .boxes import Box, iou_matrix, to_array
from .errors import FormatError
from .features import FeatureImage
from .network import ProposalHead
from .pipeline import (
    CostCounters,
    Emissions,
    PipelineConfig,
    ScoredBox,
    collect_dense_emissions,
    collect_emissions,
    finalize,
    raw_dense_proposals,
)
from .windows import Frame

MATCHING_EXISTENCE = "existence"
MATCHING_GREEDY = "greedy"

STRATEGY_ZOOM = "zoom"
STRATEGY_DENSE = "dense"
STRATEGY_DENSE_RAW = "dense-raw"
STRATEGIES = (STRATEGY_ZOOM, STRATEGY_DENSE, STRATEGY_DENSE_RAW)

CURVE_HEADER = [
    "strategy",
    "threshold",
    "recall",
    "windows_generated",
    "rois_pooled",
    "scnet_evaluations",
    "proposals_emitted",
]


def recall(
    proposals: Sequence[Box],
    gts: Sequence[Box],
    iou_min: float = 0.5,
    matching: str = MATCHING_EXISTENCE,
) -> float:
    """Fraction of ground truths matched by a proposal at IoU >= iou_min.

    Existence matching lets one proposal cover several ground truths; greedy
    matching assigns each proposal (in list order) to its best still-unmatched
    ground truth, so matches are one-to-one.  Empty ground truth counts as
    fully recalled by convention.
    """
    if not 0 < iou_min <= 1:
        raise ValueError("iou_min must lie in (0, 1]")
    if matching not in (MATCHING_EXISTENCE, MATCHING_GREEDY):
        raise ValueError(f"unknown matching mode {matching!r}")
    if not gts:
        return 1.0
    if not proposals:
        return 0.0
    overlaps = iou_matrix(to_array(gts), to_array(proposals))
    if matching == MATCHING_EXISTENCE:
        matched = (overlaps >= iou_min).any(axis=1)
        return float(matched.sum()) / len(gts)
    remaining = np.ones(len(gts), dtype=bool)
    matched_count = 0
    for j in range(len(proposals)):
        column = np.where(remaining, overlaps[:, j], -1.0)
        best = int(column.argmax())
        if column[best] >= iou_min:
            remaining[best] = False
            matched_count += 1
    return matched_count / len(gts)


@dataclass
class CurvePoint:
    """One operating point of a strategy."""

    threshold: float
    recall: float
    cost: CostCounters
    proposals_emitted: int


DatasetItem = Tuple[FeatureImage, Frame, Sequence[Box]]


def sweep(
    dataset: Sequence[DatasetItem],
    head: ProposalHead,
    cfg: PipelineConfig,
    thresholds: Sequence[float],
    strategy: str = STRATEGY_ZOOM,
    iou_min: float = 0.5,
    matching: str = MATCHING_EXISTENCE,
) -> List[CurvePoint]:
    """Evaluate one strategy at several confidence thresholds.

    Each image's raw emissions are collected once and re-filtered per
    threshold, which reproduces running the pipeline at every threshold
    exactly (only the confidence gate depends on the threshold; the cost
    counters do not).  Points come back sorted by threshold ascending.
    """
    if not thresholds:
        raise ValueError("thresholds must be non-empty")
    if strategy not in STRATEGIES:
        raise ValueError(f"unknown strategy {strategy!r}; pick one of {STRATEGIES}")

    per_image: List[Tuple[Emissions, Sequence[Box]]] = []
    raw: List[Tuple[List[ScoredBox], Sequence[Box]]] = []
    total_cost = CostCounters()
    for feat, frame, gts in dataset:
        if strategy == STRATEGY_ZOOM:
            emissions, counters = collect_emissions(feat, frame, head, cfg)
            per_image.append((emissions, gts))
        elif strategy == STRATEGY_DENSE:
            emissions, counters = collect_dense_emissions(feat, frame, head, cfg)
            per_image.append((emissions, gts))
        else:
            proposals, counters = raw_dense_proposals(frame)
            raw.append((proposals, gts))
        total_cost.add(counters)

    points = []
    for threshold in sorted(thresholds):
        recalls = []
        emitted = 0
        if strategy == STRATEGY_DENSE_RAW:
            for proposals, gts in raw:
                recalls.append(recall([sb.box for sb in proposals], gts, iou_min, matching))
                emitted += len(proposals)
        else:
            for emissions, gts in per_image:
                final = finalize(emissions, threshold, cfg.dedupe_iou)
                recalls.append(recall([sb.box for sb in final], gts, iou_min, matching))
                emitted += len(final)
        points.append(
            CurvePoint(
                threshold=threshold,
                recall=float(np.mean(recalls)) if recalls else 1.0,
                cost=CostCounters(**vars(total_cost)),
                proposals_emitted=emitted,
            )
        )
    return points


def write_curve_csv(
    curves: Sequence[Tuple[str, Sequence[CurvePoint]]], path: Union[str, Path]
) -> None:
    """Write labeled curve points as CSV, one row per (strategy, threshold)."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CURVE_HEADER)
        for strategy, points in curves:
            for p in points:
                writer.writerow(
                    [
                        strategy,
                        repr(float(p.threshold)),
                        repr(float(p.recall)),
                        p.cost.windows_generated,
                        p.cost.rois_pooled,
                        p.cost.scnet_evaluations,
                        p.proposals_emitted,
                    ]
                )


def read_curve_csv(path: Union[str, Path]) -> List[Tuple[str, CurvePoint]]:
    """Parse a curve CSV back into labeled points.

    Raises:
        FormatError: unknown header or malformed row.
    """
    with open(path, newline="") as fh:
        rows = [row for row in csv.reader(fh) if row]
    if not rows or rows[0] != CURVE_HEADER:
        raise FormatError(f"{path}: expected header {','.join(CURVE_HEADER)}")
    out: List[Tuple[str, CurvePoint]] = []
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) != len(CURVE_HEADER):
            raise FormatError(f"{path}:{lineno}: expected {len(CURVE_HEADER)} columns")
        try:
            point = CurvePoint(
                threshold=float(row[1]),
                recall=float(row[2]),
                cost=CostCounters(
                    windows_generated=int(row[3]),
                    rois_pooled=int(row[4]),
                    scnet_evaluations=int(row[5]),
                ),
                proposals_emitted=int(row[6]),
            )
        except ValueError as exc:
            raise FormatError(f"{path}:{lineno}: {exc}") from exc
        out.append((row[0], point))
    return out
