"""The trainable head over pooled region features.

Two fully connected hidden layers with rectified-linear activations feed three
output heads: a scalar zoom score (sigmoid), one confidence per overlap
pattern (sigmoid), and four corner deltas per pattern (identity).  The zoom
score predicts that the region holds an object occupying less than 10% of its
area; the pattern heads predict a corrected bounding box conditioned on how
the region overlaps its best-matching object.

Everything here is plain float64 numpy: forward pass, multi-task loss, and
analytic gradients, so training is deterministic and checkable against finite
differences.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Sequence, Union

import numpy as np

from .boxes import (
    Box,
    CornerDeltas,
    DEFAULT_PATTERN_HIGH,
    DEFAULT_PATTERN_LOW,
    NUM_PATTERNS,
    classify_overlap_pattern,
    iou,
    roi_relative_corners,
)
from .errors import DimensionMismatchError, FormatError, NonFiniteError

MODEL_MAGIC = b"SCNT"
MODEL_VERSION = 1

# A contained object below this fraction of the region area marks the region
# as worth zooming into.
SMALL_OBJECT_AREA_FRAC = 0.1

_PROB_EPS = 1e-7


@dataclass
class HeadConfig:
    """Architecture and SGD hyperparameters for the proposal head."""

    input_dim: int
    hidden_dim: int = 64
    num_patterns: int = NUM_PATTERNS
    learning_rate: float = 0.01
    momentum: float = 0.9
    weight_decay: float = 5e-4
    batch_size: int = 128
    images_per_batch: int = 2
    iterations: int = 2000
    box_loss_weight: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.input_dim < 1 or self.hidden_dim < 1 or self.num_patterns < 1:
            raise ValueError("input_dim, hidden_dim, and num_patterns must be positive")
        if self.batch_size % self.images_per_batch != 0:
            raise ValueError(
                f"batch_size {self.batch_size} not divisible by "
                f"images_per_batch {self.images_per_batch}"
            )
        if self.iterations < 0:
            raise ValueError("iterations must be non-negative")


@dataclass
class HeadOutput:
    """Per-region prediction: zoom score, K confidences, K corner-delta rows."""

    zoom: float
    conf: np.ndarray
    deltas: np.ndarray

    def delta(self, pattern: int) -> CornerDeltas:
        d = self.deltas[pattern]
        return CornerDeltas(float(d[0]), float(d[1]), float(d[2]), float(d[3]))


@dataclass
class RoiLabels:
    """Training target for one region.

    At most one pattern carries a positive delta weight; the remaining delta
    rows are dummies with zero learning weight.
    """

    zoom: float
    conf: np.ndarray
    targets: np.ndarray
    weights: np.ndarray

    @classmethod
    def empty(cls, num_patterns: int = NUM_PATTERNS) -> "RoiLabels":
        return cls(
            zoom=0.0,
            conf=np.zeros(num_patterns),
            targets=np.zeros((num_patterns, 4)),
            weights=np.zeros(num_patterns),
        )


def make_labels(
    roi: Box,
    gts: Sequence[Box],
    low: float = DEFAULT_PATTERN_LOW,
    high: float = DEFAULT_PATTERN_HIGH,
    num_patterns: int = NUM_PATTERNS,
) -> RoiLabels:
    """Build the training target for a region from ground-truth boxes.

    The zoom label is 1 iff some ground truth is contained in the region with
    area below 10% of the region area.  The pattern label comes from the
    ground truth maximizing IoU with the region; when a pattern is assigned,
    its confidence label, corner-delta target, and delta weight are set.
    """
    labels = RoiLabels.empty(num_patterns)
    if not gts:
        return labels
    roi_area = roi.area
    for gt in gts:
        if roi.contains(gt) and gt.area < SMALL_OBJECT_AREA_FRAC * roi_area:
            labels.zoom = 1.0
            break
    best = max(gts, key=lambda gt: iou(roi, gt))
    pattern = classify_overlap_pattern(roi, best, low=low, high=high)
    if pattern is not None:
        labels.conf[pattern] = 1.0
        labels.targets[pattern] = roi_relative_corners(roi, best).as_array()
        labels.weights[pattern] = 1.0
    return labels


@dataclass
class BatchLabels:
    """Stacked labels for a mini-batch."""

    zoom: np.ndarray  # (B,)
    conf: np.ndarray  # (B, K)
    targets: np.ndarray  # (B, K, 4)
    weights: np.ndarray  # (B, K)

    @classmethod
    def stack(cls, labels: Sequence[RoiLabels]) -> "BatchLabels":
        return cls(
            zoom=np.array([l.zoom for l in labels], dtype=np.float64),
            conf=np.stack([l.conf for l in labels]).astype(np.float64),
            targets=np.stack([l.targets for l in labels]).astype(np.float64),
            weights=np.stack([l.weights for l in labels]).astype(np.float64),
        )

    def take(self, idx: np.ndarray) -> "BatchLabels":
        return BatchLabels(self.zoom[idx], self.conf[idx], self.targets[idx], self.weights[idx])


PARAM_NAMES = ("w1", "b1", "w2", "b2", "zoom_w", "zoom_b", "conf_w", "conf_b", "delta_w", "delta_b")


class ProposalHead:
    """The head network: parameters plus forward pass.

    Weight matrices are stored (fan_in, fan_out); biases are row vectors.
    """

    def __init__(self, input_dim: int, hidden_dim: int, num_patterns: int = NUM_PATTERNS):
        self.input_dim = input_dim
        self.hidden_dim = hidden_dim
        self.num_patterns = num_patterns
        k = num_patterns
        self.w1 = np.zeros((input_dim, hidden_dim))
        self.b1 = np.zeros(hidden_dim)
        self.w2 = np.zeros((hidden_dim, hidden_dim))
        self.b2 = np.zeros(hidden_dim)
        self.zoom_w = np.zeros((hidden_dim, 1))
        self.zoom_b = np.zeros(1)
        self.conf_w = np.zeros((hidden_dim, k))
        self.conf_b = np.zeros(k)
        self.delta_w = np.zeros((hidden_dim, 4 * k))
        self.delta_b = np.zeros(4 * k)

    @classmethod
    def initialize(cls, config: HeadConfig, rng: Optional[np.random.Generator] = None) -> "ProposalHead":
        """Scaled-uniform weights (zero biases) so sigmoid heads start near 0.5."""
        if rng is None:
            rng = np.random.default_rng(config.seed)
        head = cls(config.input_dim, config.hidden_dim, config.num_patterns)
        for name in ("w1", "w2", "zoom_w", "conf_w", "delta_w"):
            w = getattr(head, name)
            a = np.sqrt(6.0 / (w.shape[0] + w.shape[1]))
            setattr(head, name, rng.uniform(-a, a, size=w.shape))
        return head

    def parameters(self) -> List[tuple[str, np.ndarray]]:
        return [(name, getattr(self, name)) for name in PARAM_NAMES]

    def copy(self) -> "ProposalHead":
        other = ProposalHead(self.input_dim, self.hidden_dim, self.num_patterns)
        for name, value in self.parameters():
            setattr(other, name, value.copy())
        return other

    def _check_input(self, x: np.ndarray) -> None:
        if x.shape[-1] != self.input_dim:
            raise DimensionMismatchError(
                f"pooled vector has length {x.shape[-1]}, head expects {self.input_dim}"
            )

    def forward_batch(self, x: np.ndarray, with_cache: bool = False):
        """Run the head on (B, input_dim) inputs.

        Returns:
            (zoom (B,), conf (B, K), deltas (B, K, 4)) and, when requested,
            the activation cache used by backprop.
        """
        x = np.asarray(x, dtype=np.float64)
        self._check_input(x)
        h1 = np.maximum(x @ self.w1 + self.b1, 0.0)
        h2 = np.maximum(h1 @ self.w2 + self.b2, 0.0)
        zoom_logit = h2 @ self.zoom_w + self.zoom_b
        conf_logit = h2 @ self.conf_w + self.conf_b
        delta = h2 @ self.delta_w + self.delta_b
        zoom = _sigmoid(zoom_logit[:, 0])
        conf = _sigmoid(conf_logit)
        deltas = delta.reshape(-1, self.num_patterns, 4)
        outputs = (zoom, conf, deltas)
        if with_cache:
            return outputs, {
                "x": x,
                "h1": h1,
                "h2": h2,
                "zoom_logit": zoom_logit,
                "conf_logit": conf_logit,
            }
        return outputs

    def forward(self, pooled: np.ndarray) -> HeadOutput:
        """Run the head on a single pooled vector."""
        zoom, conf, deltas = self.forward_batch(np.asarray(pooled, dtype=np.float64)[None, :])
        return HeadOutput(zoom=float(zoom[0]), conf=conf[0], deltas=deltas[0])


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z, dtype=np.float64)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _xent_from_logits(z: np.ndarray, y: np.ndarray) -> np.ndarray:
    # max(z,0) - z*y + log(1 + exp(-|z|)) is the overflow-safe cross-entropy.
    return np.maximum(z, 0.0) - z * y + np.log1p(np.exp(-np.abs(z)))


def smooth_l1(x: np.ndarray) -> np.ndarray:
    """0.5 x^2 inside the unit interval, |x| - 0.5 outside."""
    x = np.asarray(x, dtype=np.float64)
    ax = np.abs(x)
    return np.where(ax < 1.0, 0.5 * x * x, ax - 0.5)


def smooth_l1_grad(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    return np.where(np.abs(x) < 1.0, x, np.sign(x))


def binary_xent(p: float, y: float) -> float:
    """Cross-entropy of a probability against a binary label, clamped for safety."""
    p = min(max(p, _PROB_EPS), 1.0 - _PROB_EPS)
    return -(y * np.log(p) + (1.0 - y) * np.log(1.0 - p))


def loss(out: HeadOutput, labels: RoiLabels, box_weight: float = 1.0) -> tuple[float, HeadOutput]:
    """Multi-task loss for one region and its gradient with respect to the outputs.

    Total = per-pattern confidence cross-entropies + zoom cross-entropy +
    box_weight * weighted smooth-L1 over the assigned pattern's corner deltas.

    Returns:
        (scalar loss, gradient packaged in the output layout).

    Raises:
        NonFiniteError: when any output or label value is not finite.
    """
    values = np.concatenate([[out.zoom], out.conf, out.deltas.ravel(), labels.targets.ravel()])
    if not np.all(np.isfinite(values)):
        raise NonFiniteError("loss inputs contain NaN or infinity")
    conf = np.clip(out.conf, _PROB_EPS, 1.0 - _PROB_EPS)
    zoom = min(max(out.zoom, _PROB_EPS), 1.0 - _PROB_EPS)
    resid = out.deltas - labels.targets
    total = (
        float(np.sum(-(labels.conf * np.log(conf) + (1.0 - labels.conf) * np.log(1.0 - conf))))
        + binary_xent(zoom, labels.zoom)
        + box_weight * float(np.sum(labels.weights[:, None] * smooth_l1(resid)))
    )
    grad = HeadOutput(
        zoom=float((zoom - labels.zoom) / (zoom * (1.0 - zoom))),
        conf=(conf - labels.conf) / (conf * (1.0 - conf)),
        deltas=box_weight * labels.weights[:, None] * smooth_l1_grad(resid),
    )
    return total, grad


def batch_loss(head: ProposalHead, x: np.ndarray, labels: BatchLabels, box_weight: float = 1.0) -> float:
    """Mean multi-task loss over a batch, computed from logits."""
    (zoom, conf, deltas), cache = head.forward_batch(x, with_cache=True)
    del zoom, conf
    zl = cache["zoom_logit"][:, 0]
    cl = cache["conf_logit"]
    resid = deltas - labels.targets
    per_sample = (
        _xent_from_logits(zl, labels.zoom)
        + _xent_from_logits(cl, labels.conf).sum(axis=1)
        + box_weight * (labels.weights[:, :, None] * smooth_l1(resid)).sum(axis=(1, 2))
    )
    return float(per_sample.mean())


def loss_and_gradients(
    head: ProposalHead, x: np.ndarray, labels: BatchLabels, box_weight: float = 1.0
) -> tuple[float, dict[str, np.ndarray]]:
    """Mean batch loss plus analytic gradients for every parameter."""
    (zoom, conf, deltas), cache = head.forward_batch(x, with_cache=True)
    b = x.shape[0]
    zl = cache["zoom_logit"][:, 0]
    cl = cache["conf_logit"]
    h1, h2 = cache["h1"], cache["h2"]
    resid = deltas - labels.targets

    total = float(
        (
            _xent_from_logits(zl, labels.zoom)
            + _xent_from_logits(cl, labels.conf).sum(axis=1)
            + box_weight * (labels.weights[:, :, None] * smooth_l1(resid)).sum(axis=(1, 2))
        ).mean()
    )

    d_zl = ((zoom - labels.zoom) / b)[:, None]
    d_cl = (conf - labels.conf) / b
    d_dl = (box_weight * labels.weights[:, :, None] * smooth_l1_grad(resid) / b).reshape(b, -1)

    grads: dict[str, np.ndarray] = {
        "zoom_w": h2.T @ d_zl,
        "zoom_b": d_zl.sum(axis=0),
        "conf_w": h2.T @ d_cl,
        "conf_b": d_cl.sum(axis=0),
        "delta_w": h2.T @ d_dl,
        "delta_b": d_dl.sum(axis=0),
    }
    g2 = d_zl @ head.zoom_w.T + d_cl @ head.conf_w.T + d_dl @ head.delta_w.T
    g2 *= h2 > 0.0
    grads["w2"] = h1.T @ g2
    grads["b2"] = g2.sum(axis=0)
    g1 = g2 @ head.w2.T
    g1 *= h1 > 0.0
    grads["w1"] = cache["x"].T @ g1
    grads["b1"] = g1.sum(axis=0)
    return total, grads


def _pack_tensor(arr: np.ndarray) -> bytes:
    mat = np.atleast_2d(np.asarray(arr, dtype=np.float64))
    rows, cols = mat.shape
    return struct.pack("<II", rows, cols) + mat.astype("<f4").tobytes()


def save_model(head: ProposalHead, path: Union[str, Path]) -> None:
    """Write head parameters to the binary model format (float32 payload)."""
    blob = struct.pack(
        "<4sIIII", MODEL_MAGIC, MODEL_VERSION, head.input_dim, head.hidden_dim, head.num_patterns
    )
    for _, value in head.parameters():
        blob += _pack_tensor(value)
    Path(path).write_bytes(blob)


def load_model(path: Union[str, Path]) -> ProposalHead:
    """Read a head written by :func:`save_model`.

    Raises:
        FormatError: on bad magic/version or on tensor shapes inconsistent
            with the header dimensions.
    """
    raw = Path(path).read_bytes()
    head_struct = struct.Struct("<4sIIII")
    if len(raw) < head_struct.size:
        raise FormatError(f"{path}: file shorter than header")
    magic, version, input_dim, hidden_dim, k = head_struct.unpack_from(raw)
    if magic != MODEL_MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    if version != MODEL_VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    if min(input_dim, hidden_dim, k) < 1:
        raise FormatError(f"{path}: bad dimensions {input_dim}/{hidden_dim}/{k}")
    head = ProposalHead(input_dim, hidden_dim, k)
    offset = head_struct.size
    for name, value in head.parameters():
        if offset + 8 > len(raw):
            raise FormatError(f"{path}: truncated before tensor {name}")
        rows, cols = struct.unpack_from("<II", raw, offset)
        offset += 8
        expected = np.atleast_2d(value).shape
        if (rows, cols) != expected:
            raise FormatError(f"{path}: tensor {name} is {rows}x{cols}, expected {expected}")
        nbytes = rows * cols * 4
        if offset + nbytes > len(raw):
            raise FormatError(f"{path}: truncated inside tensor {name}")
        mat = np.frombuffer(raw, dtype="<f4", count=rows * cols, offset=offset)
        offset += nbytes
        setattr(head, name, mat.astype(np.float64).reshape(value.shape))
    if offset != len(raw):
        raise FormatError(f"{path}: {len(raw) - offset} trailing bytes")
    return head
