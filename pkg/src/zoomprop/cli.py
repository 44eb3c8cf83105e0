"""Command-line interface: gen, train, propose, eval, sweep.

Every command reads a flat configuration assembled from built-in defaults, an
optional ``key = value`` config file ('#' starts a comment), and command-line
flags, in that precedence order.  The effective configuration is echoed
before any work so runs are reproducible from their logs.  Output files are
written atomically (write to a temp name, then rename).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .errors import ZoomPropError
from .evaluation import (
    STRATEGIES,
    STRATEGY_DENSE,
    STRATEGY_DENSE_RAW,
    STRATEGY_ZOOM,
    CurvePoint,
    recall,
    sweep,
    write_curve_csv,
)
from .features import FeatureImage, load_features, save_features
from .network import HeadConfig, load_model, save_model
from .pipeline import (
    PROPOSER_COARSE,
    PROPOSER_EXTERNAL,
    CostCounters,
    PipelineConfig,
    ScoredBox,
    dense_baseline,
    propose,
    raw_dense_proposals,
    read_proposals_csv,
    write_proposals_csv,
)
from .synth import Scene, SynthConfig, gen_scene, read_annotations, render_features, write_annotations
from .training import build_training_image, train, write_loss_history
from .windows import Frame

CLI_STRATEGY_EXTERNAL = "external"
CLI_STRATEGIES = STRATEGIES + (CLI_STRATEGY_EXTERNAL,)

MANIFEST_NAME = "manifest.json"
ANNOTATIONS_NAME = "annotations.jsonl"

DEFAULTS: Dict[str, object] = {
    "data_dir": "data",
    "count": 20,
    "seed": 0,
    "image_width": 2400,
    "image_height": 1800,
    "clusters": 3,
    "objects_per_cluster": 3,
    "large_objects": 2,
    "noise_sigma": 0.1,
    "channels": 16,
    "stride": 16.0,
    "pool_grid": 4,
    "hidden_dim": 64,
    "learning_rate": 0.01,
    "momentum": 0.9,
    "weight_decay": 0.0005,
    "batch_size": 128,
    "images_per_batch": 2,
    "iterations": 2000,
    "box_loss_weight": 1.0,
    "model_path": "model.scnt",
    "loss_path": "loss.csv",
    "proposals_path": "proposals.csv",
    "curve_path": "curve.csv",
    "strategy": STRATEGY_ZOOM,
    "strategies": "zoom,dense,dense-raw",
    "external_path": "",
    "zoom_threshold": 0.5,
    "conf_threshold": 0.001,
    "max_zoom_regions": 8,
    "dedupe_iou": 0.95,
    "iou_min": 0.5,
    "matching": "existence",
    "thresholds": "0.001,0.01,0.05,0.1,0.3,0.5",
}


def _coerce(key: str, raw: str) -> object:
    default = DEFAULTS[key]
    try:
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
    except ValueError as exc:
        raise ValueError(f"config key {key!r}: {exc}") from exc
    return raw


def parse_config_file(path: Path) -> Dict[str, object]:
    """Parse flat ``key = value`` lines; '#' comments; unknown keys error."""
    values: Dict[str, object] = {}
    for lineno, line in enumerate(path.read_text().splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected key = value")
        raw_key, raw_value = (part.strip() for part in line.split("=", 1))
        key = raw_key.replace("-", "_")
        if key not in DEFAULTS:
            raise ValueError(f"{path}:{lineno}: unknown config key {raw_key!r}")
        values[key] = _coerce(key, raw_value)
    return values


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="flat key = value configuration file")
    for key, default in DEFAULTS.items():
        flag = "--" + key.replace("_", "-")
        kind = type(default) if isinstance(default, (int, float)) else str
        common.add_argument(flag, type=kind, default=None, help=f"default: {default}")
    parser = argparse.ArgumentParser(
        prog="zoomprop",
        description="Zoom-gated object-proposal generation on synthetic feature images.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("gen", parents=[common], help="generate a synthetic dataset")
    sub.add_parser("train", parents=[common], help="train the proposal head")
    sub.add_parser("propose", parents=[common], help="emit proposals for a dataset")
    sub.add_parser("eval", parents=[common], help="score a proposals file against annotations")
    sub.add_parser("sweep", parents=[common], help="trace cost/recall curves over thresholds")
    return parser


def effective_config(args: argparse.Namespace) -> Dict[str, object]:
    config = dict(DEFAULTS)
    if args.config is not None:
        config.update(parse_config_file(args.config))
    for key in DEFAULTS:
        value = getattr(args, key)
        if value is not None:
            config[key] = value
    return config


def _echo(config: Dict[str, object]) -> None:
    print("# effective config")
    for key in sorted(config):
        print(f"{key.replace('_', '-')} = {config[key]}")


def _atomic_write(path: Path, write: Callable[[Path], None]) -> None:
    tmp = path.with_name(path.name + ".tmp")
    write(tmp)
    os.replace(tmp, path)


def _parse_floats(text: str, key: str) -> List[float]:
    try:
        values = [float(part) for part in text.split(",") if part.strip()]
    except ValueError as exc:
        raise ValueError(f"config key {key!r}: {exc}") from exc
    if not values:
        raise ValueError(f"config key {key!r} is empty")
    return values


def _load_dataset(config: Dict[str, object]) -> List[Tuple[str, Scene, FeatureImage, Frame]]:
    data_dir = Path(str(config["data_dir"]))
    annotations = data_dir / ANNOTATIONS_NAME
    if not annotations.exists():
        raise FileNotFoundError(f"missing annotations file: {annotations}")
    dataset = []
    for image_id, scene in read_annotations(annotations):
        feature_path = data_dir / f"{image_id}.fimg"
        if not feature_path.exists():
            raise FileNotFoundError(f"missing feature file: {feature_path}")
        feat = load_features(feature_path)
        dataset.append((image_id, scene, feat, Frame.of_image(scene.width, scene.height)))
    return dataset


def _pipeline_config(config: Dict[str, object], **overrides) -> PipelineConfig:
    kwargs = dict(
        zoom_threshold=float(config["zoom_threshold"]),
        conf_threshold=float(config["conf_threshold"]),
        max_zoom_regions=int(config["max_zoom_regions"]),
        proposer=PROPOSER_COARSE,
        pool_grid=int(config["pool_grid"]),
        dedupe_iou=float(config["dedupe_iou"]),
    )
    kwargs.update(overrides)
    return PipelineConfig(**kwargs)


def cmd_gen(config: Dict[str, object]) -> int:
    data_dir = Path(str(config["data_dir"]))
    data_dir.mkdir(parents=True, exist_ok=True)
    count = int(config["count"])
    seed = int(config["seed"])
    synth = SynthConfig(
        width_range=(int(config["image_width"]), int(config["image_width"])),
        height_range=(int(config["image_height"]), int(config["image_height"])),
        clusters=int(config["clusters"]),
        objects_per_cluster=int(config["objects_per_cluster"]),
        large_objects=int(config["large_objects"]),
        noise_sigma=float(config["noise_sigma"]),
        seed=seed,
    )
    ids = [f"scene_{i:04d}" for i in range(count)]
    items = []
    for i, image_id in enumerate(ids):
        scene = gen_scene(synth, seed=[seed, i, 0])
        feat = render_features(
            scene,
            channels=int(config["channels"]),
            stride=float(config["stride"]),
            sigma=float(config["noise_sigma"]),
            seed=[seed, i, 1],
        )
        _atomic_write(data_dir / f"{image_id}.fimg", lambda p, f=feat: save_features(f, p))
        items.append((image_id, scene))
    _atomic_write(data_dir / ANNOTATIONS_NAME, lambda p: write_annotations(items, p))
    manifest = json.dumps({"seed": seed, "count": count, "ids": ids}, indent=2) + "\n"
    _atomic_write(data_dir / MANIFEST_NAME, lambda p: p.write_text(manifest))
    print(f"wrote {count} scenes to {data_dir}")
    return 0


def cmd_train(config: Dict[str, object]) -> int:
    dataset = _load_dataset(config)
    grid = int(config["pool_grid"])
    seed = int(config["seed"])
    rng = np.random.default_rng([seed, 1])
    images = [
        build_training_image(feat, scene.gt_boxes, frame=frame, grid=grid, rng=rng)
        for _, scene, feat, frame in dataset
    ]
    input_dim = int(config["channels"]) * grid * grid
    head_config = HeadConfig(
        input_dim=input_dim,
        hidden_dim=int(config["hidden_dim"]),
        learning_rate=float(config["learning_rate"]),
        momentum=float(config["momentum"]),
        weight_decay=float(config["weight_decay"]),
        batch_size=int(config["batch_size"]),
        images_per_batch=int(config["images_per_batch"]),
        iterations=int(config["iterations"]),
        box_loss_weight=float(config["box_loss_weight"]),
        seed=seed,
    )
    head, history = train(images, head_config)
    _atomic_write(Path(str(config["model_path"])), lambda p: save_model(head, p))
    _atomic_write(Path(str(config["loss_path"])), lambda p: write_loss_history(history, p))
    last = history[-1][1] if history else float("nan")
    print(f"trained {head_config.iterations} iterations on {len(images)} images; final batch loss {last:.6f}")
    print(f"model: {config['model_path']}  loss history: {config['loss_path']}")
    return 0


def _external_boxes(config: Dict[str, object]) -> Dict[str, List[ScoredBox]]:
    path = str(config["external_path"])
    if not path:
        raise ValueError("strategy 'external' requires external-path")
    return read_proposals_csv(path)


def cmd_propose(config: Dict[str, object]) -> int:
    strategy = str(config["strategy"])
    if strategy not in CLI_STRATEGIES:
        raise ValueError(f"unknown strategy {strategy!r}; pick one of {CLI_STRATEGIES}")
    dataset = _load_dataset(config)
    head = load_model(Path(str(config["model_path"])))
    external = _external_boxes(config) if strategy == CLI_STRATEGY_EXTERNAL else {}
    rows: List[Tuple[str, ScoredBox]] = []
    total = CostCounters()
    for image_id, _, feat, frame in dataset:
        if strategy == STRATEGY_DENSE_RAW:
            proposals, counters = raw_dense_proposals(frame)
        elif strategy == STRATEGY_DENSE:
            proposals, counters = dense_baseline(feat, frame, head, _pipeline_config(config))
        elif strategy == CLI_STRATEGY_EXTERNAL:
            boxes = [sb.box for sb in external.get(image_id, [])]
            cfg = _pipeline_config(config, proposer=PROPOSER_EXTERNAL, external_boxes=boxes)
            proposals, counters = propose(feat, frame, head, cfg)
        else:
            proposals, counters = propose(feat, frame, head, _pipeline_config(config))
        rows.extend((image_id, sb) for sb in proposals)
        total.add(counters)
    _atomic_write(Path(str(config["proposals_path"])), lambda p: write_proposals_csv(rows, p))
    print(
        f"proposals: {len(rows)} rows -> {config['proposals_path']}\n"
        f"counters: windows_generated={total.windows_generated} rois_pooled={total.rois_pooled} "
        f"scnet_evaluations={total.scnet_evaluations} zoom_regions_selected={total.zoom_regions_selected}"
    )
    return 0


def cmd_eval(config: Dict[str, object]) -> int:
    dataset = _load_dataset(config)
    proposals_path = Path(str(config["proposals_path"]))
    if not proposals_path.exists():
        raise FileNotFoundError(f"missing proposals file: {proposals_path}")
    by_image = read_proposals_csv(proposals_path)
    iou_min = float(config["iou_min"])
    matching = str(config["matching"])
    values = []
    emitted = 0
    for image_id, scene, _, _ in dataset:
        proposals = [sb.box for sb in by_image.get(image_id, [])]
        emitted += len(proposals)
        value = recall(proposals, scene.gt_boxes, iou_min=iou_min, matching=matching)
        values.append(value)
        print(f"recall {image_id} = {value:.4f}")
    mean = float(np.mean(values)) if values else 1.0
    print(f"mean recall = {mean:.4f} over {len(values)} images")
    point = CurvePoint(
        threshold=float(config["conf_threshold"]),
        recall=mean,
        cost=CostCounters(),
        proposals_emitted=emitted,
    )
    curve_path = Path(str(config["curve_path"]))
    _atomic_write(curve_path, lambda p: write_curve_csv([(str(config["strategy"]), [point])], p))
    print(f"curve: {curve_path}")
    return 0


def cmd_sweep(config: Dict[str, object]) -> int:
    strategies = [s.strip() for s in str(config["strategies"]).split(",") if s.strip()]
    for strategy in strategies:
        if strategy not in STRATEGIES:
            raise ValueError(f"unknown sweep strategy {strategy!r}; pick from {STRATEGIES}")
    thresholds = _parse_floats(str(config["thresholds"]), "thresholds")
    dataset = _load_dataset(config)
    head = load_model(Path(str(config["model_path"])))
    items = [(feat, frame, scene.gt_boxes) for _, scene, feat, frame in dataset]
    cfg = _pipeline_config(config)
    iou_min = float(config["iou_min"])
    matching = str(config["matching"])
    curves = []
    for strategy in strategies:
        points = sweep(items, head, cfg, thresholds, strategy, iou_min=iou_min, matching=matching)
        curves.append((strategy, points))
        for p in points:
            print(
                f"{strategy} threshold={p.threshold:g} recall={p.recall:.4f} "
                f"rois_pooled={p.cost.rois_pooled} proposals={p.proposals_emitted}"
            )
    curve_path = Path(str(config["curve_path"]))
    _atomic_write(curve_path, lambda p: write_curve_csv(curves, p))
    print(f"curve: {curve_path}")
    return 0


COMMANDS: Dict[str, Callable[[Dict[str, object]], int]] = {
    "gen": cmd_gen,
    "train": cmd_train,
    "propose": cmd_propose,
    "eval": cmd_eval,
    "sweep": cmd_sweep,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = effective_config(args)
        _echo(config)
        return COMMANDS[args.command](config)
    except (ZoomPropError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
