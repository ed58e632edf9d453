"""Command-line front end: batch tools over the toolkit's file formats.

Subcommands::

    eval-detection     VOC-style AP/mAP between two detection JSONL files
    eval-segmentation  pixel metrics between two directories of label PNGs
    nms                per-record non-maximum suppression, JSONL to stdout
    decode             raw detector outputs -> detection JSONL
    visualize          draw boxes or a segmentation overlay onto a PNG
    transform flip     seeded random flip of an image + its boxes

Exit codes: 0 success, 1 internal error, 2 input format error,
3 input consistency error.
"""

from __future__ import annotations

import argparse
import json
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from .core import BBoxSet, voc_color_palette
from .datasets import (
    ConsistencyError,
    DetectionRecord,
    FormatError,
    read_detections,
    read_image,
    read_label_map,
    read_raw_outputs,
    write_detections,
    write_image,
)
from .evaluation import (
    DetectionGroundTruth,
    confusion_matrix,
    eval_detection_voc,
    segmentation_scores,
)
from .postprocess import (
    AnchorConfig,
    DefaultBoxConfig,
    FasterRCNNDecoder,
    FeatureMapSpec,
    ProposalParams,
    RawDetectorOutput,
    SSDDecoder,
    generate_default_boxes,
    non_maximum_suppression,
)
from .transforms import flip_bbox, random_flip
from .visualization import RenderStyle, vis_bbox, vis_semantic_segmentation

__all__ = ["main"]


def _pct(value: float) -> str:
    return "n/a" if np.isnan(value) else f"{100.0 * value:.2f}"


def _jsonable(value):
    if value is None or isinstance(value, (str, int, bool)):
        return value
    if isinstance(value, float):
        return None if np.isnan(value) else value
    if isinstance(value, dict):
        return {k: _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple, np.ndarray)):
        return [_jsonable(v) for v in value]
    if isinstance(value, (np.floating, np.integer)):
        return _jsonable(value.item())
    raise TypeError(f"cannot serialize {type(value)}")


def _write_json_report(path, report: dict) -> None:
    Path(path).write_text(json.dumps(_jsonable(report), indent=2) + "\n", encoding="utf-8")


def _records_by_id(records, path) -> dict[str, DetectionRecord]:
    by_id = {}
    for record in records:
        if record.image_id in by_id:
            raise FormatError(f"{path}: duplicate image_id {record.image_id!r}")
        by_id[record.image_id] = record
    return by_id


def _check_same_ids(pred_ids, gt_ids) -> None:
    only_pred = sorted(pred_ids - gt_ids)
    only_gt = sorted(gt_ids - pred_ids)
    if only_pred or only_gt:
        raise ConsistencyError(
            "image_id sets differ: "
            f"only in pred {only_pred[:20]}, only in gt {only_gt[:20]}"
        )


def _cmd_eval_detection(args) -> int:
    pred_records = read_detections(args.pred)
    gt_records = read_detections(args.gt)
    pred_by_id = _records_by_id(pred_records, args.pred)
    gt_by_id = _records_by_id(gt_records, args.gt)
    _check_same_ids(set(pred_by_id), set(gt_by_id))
    preds, gts = [], []
    for record in gt_records:
        pred = pred_by_id[record.image_id]
        if pred.scores is None:
            raise FormatError(f"{args.pred}: record {record.image_id!r} lacks scores")
        preds.append(pred.to_bbox_set())
        gts.append(DetectionGroundTruth(BBoxSet(record.boxes, record.labels), record.difficult))
    result = eval_detection_voc(
        preds, gts, iou_thresh=args.iou_thresh, mode=args.metric, jobs=args.jobs
    )
    for cls in sorted(result.ap):
        print(f"AP class {cls}: {_pct(result.ap[cls])}")
    print(f"mAP: {_pct(result.mean_ap)}")
    if args.json:
        _write_json_report(
            args.json,
            {
                "metric": args.metric,
                "iou_thresh": args.iou_thresh,
                "ap": {str(cls): result.ap[cls] for cls in sorted(result.ap)},
                "map": result.mean_ap,
            },
        )
    return 0


def _cmd_eval_segmentation(args) -> int:
    pred_dir, gt_dir = Path(args.pred), Path(args.gt)
    pred_stems = {p.stem for p in pred_dir.glob("*.png")}
    gt_stems = {p.stem for p in gt_dir.glob("*.png")}
    only_pred = sorted(pred_stems - gt_stems)
    only_gt = sorted(gt_stems - pred_stems)
    if only_pred or only_gt:
        raise ConsistencyError(
            f"stems differ: only in pred {only_pred[:20]}, only in gt {only_gt[:20]}"
        )
    matrix = np.zeros((args.num_classes, args.num_classes), dtype=np.int64)
    for stem in sorted(pred_stems):
        pred_map = read_label_map(pred_dir / f"{stem}.png")
        gt_map = read_label_map(gt_dir / f"{stem}.png")
        matrix += confusion_matrix(pred_map, gt_map, args.num_classes)
    scores = segmentation_scores(matrix)
    print(f"pixel accuracy: {_pct(scores.pixel_accuracy)}")
    print(f"mean class accuracy: {_pct(scores.mean_class_accuracy)}")
    print(f"mean IoU: {_pct(scores.mean_iou)}")
    if args.json:
        _write_json_report(
            args.json,
            {
                "n_class": args.num_classes,
                "pixel_accuracy": scores.pixel_accuracy,
                "mean_class_accuracy": scores.mean_class_accuracy,
                "mean_iou": scores.mean_iou,
                "class_accuracy": scores.class_accuracy,
                "iou": scores.iou,
            },
        )
    return 0


def _cmd_nms(args) -> int:
    records = read_detections(args.input)
    for record in records:
        if record.scores is None:
            raise FormatError(f"{args.input}: record {record.image_id!r} lacks scores")
        keep = non_maximum_suppression(record.to_bbox_set(), args.thresh, args.limit)
        filtered = DetectionRecord(
            image_id=record.image_id,
            boxes=record.boxes[keep],
            labels=record.labels[keep],
            scores=record.scores[keep],
            difficult=None if record.difficult is None else record.difficult[keep],
        )
        line = {
            "image_id": filtered.image_id,
            "boxes": [[float(v) for v in row] for row in filtered.boxes],
            "labels": [int(v) for v in filtered.labels],
            "scores": [float(v) for v in filtered.scores],
        }
        if filtered.difficult is not None:
            line["difficult"] = [bool(v) for v in filtered.difficult]
        print(json.dumps(line, ensure_ascii=False))
    return 0


def _require(config: dict, key: str, where: str):
    if key not in config:
        raise FormatError(f"{where}: missing config key {key!r}")
    return config[key]


def _load_config(path) -> dict:
    try:
        config = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: invalid JSON: {exc}") from exc
    if not isinstance(config, dict):
        raise FormatError(f"{path}: config must be a JSON object")
    return config


def _ssd_decoder(config: dict, where: str, score_thresh: float, nms_thresh: float) -> SSDDecoder:
    try:
        maps = tuple(
            FeatureMapSpec(
                grid=int(fm["grid"]),
                step=float(fm["step"]),
                min_size=float(fm["min_size"]),
                max_size=float(fm["max_size"]),
                aspect_ratios=tuple(float(a) for a in fm.get("aspect_ratios", [])),
            )
            for fm in _require(config, "feature_maps", where)
        )
        cfg = DefaultBoxConfig(
            image_size=float(_require(config, "image_size", where)), feature_maps=maps
        )
        variances = tuple(float(v) for v in config.get("variances", (0.1, 0.2)))
        if len(variances) != 2:
            raise ValueError("variances must hold exactly two values")
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"{where}: {exc}") from exc
    return SSDDecoder(
        defaults=generate_default_boxes(cfg),
        variances=variances,
        score_thresh=score_thresh,
        nms_thresh=nms_thresh,
    )


def _frcnn_decoder(
    config: dict, where: str, score_thresh: float, nms_thresh: float
) -> FasterRCNNDecoder:
    try:
        mean = tuple(float(v) for v in config.get("loc_normalize_mean", (0.0, 0.0, 0.0, 0.0)))
        std = tuple(float(v) for v in config.get("loc_normalize_std", (0.1, 0.1, 0.2, 0.2)))
        if len(mean) != 4 or len(std) != 4:
            raise ValueError("loc normalization needs 4 values per coordinate")
        if "anchor" in config:
            a = config["anchor"]
            AnchorConfig(
                base_size=float(a.get("base_size", 16)),
                ratios=tuple(float(r) for r in a.get("ratios", (0.5, 1.0, 2.0))),
                scales=tuple(float(s) for s in a.get("scales", (8.0, 16.0, 32.0))),
                feature_stride=int(a.get("feature_stride", 16)),
            )
        if "proposal" in config:
            p = config["proposal"]
            ProposalParams(
                n_pre_nms=int(p.get("n_pre_nms", 6000)),
                n_post_nms=int(p.get("n_post_nms", 300)),
                nms_thresh=float(p.get("nms_thresh", 0.7)),
                min_size=float(p.get("min_size", 16)),
            )
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"{where}: {exc}") from exc
    return FasterRCNNDecoder(
        loc_normalize_mean=mean,
        loc_normalize_std=std,
        score_thresh=score_thresh,
        nms_thresh=nms_thresh,
    )


def _cmd_decode(args) -> int:
    raws = read_raw_outputs(args.raw)
    config = _load_config(args.config)
    nms_thresh = args.nms_thresh
    if nms_thresh is None:
        nms_thresh = 0.45 if args.arch == "ssd" else 0.3
    if args.arch == "ssd":
        decoder = _ssd_decoder(config, args.config, args.score_thresh, nms_thresh)
    else:
        decoder = _frcnn_decoder(config, args.config, args.score_thresh, nms_thresh)

    def decode_one(raw) -> DetectionRecord:
        rois = None if raw.rois is None else BBoxSet(raw.rois)
        try:
            det = decoder(RawDetectorOutput(raw.locs, raw.confs, rois), raw.image_size)
        except ValueError as exc:
            raise FormatError(f"image_id {raw.image_id!r}: {exc}") from exc
        return DetectionRecord(
            image_id=raw.image_id, boxes=det.boxes, labels=det.labels, scores=det.scores
        )

    if args.jobs > 1 and len(raws) > 1:
        with ThreadPoolExecutor(max_workers=args.jobs) as pool:
            out_records = list(pool.map(decode_one, raws))
    else:
        out_records = [decode_one(raw) for raw in raws]
    write_detections(args.out, out_records)
    return 0


def _read_names(path) -> list[str]:
    names = [line.strip() for line in Path(path).read_text(encoding="utf-8").splitlines()]
    names = [n for n in names if n]
    if not names:
        raise FormatError(f"{path}: no class names")
    return names


def _pick_record(records, path, image_path) -> DetectionRecord:
    if len(records) == 1:
        return records[0]
    stem = Path(image_path).stem
    for record in records:
        if record.image_id == stem:
            return record
    raise FormatError(f"{path}: no record with image_id {stem!r}")


def _cmd_visualize(args) -> int:
    img = read_image(args.image)
    names = _read_names(args.names)
    palette = voc_color_palette(min(len(names), 256))
    if args.boxes:
        record = _pick_record(read_detections(args.boxes), args.boxes, args.image)
        style = RenderStyle(draw_score=not args.no_score)
        out = vis_bbox(img, record.to_bbox_set(), names, palette, style)
    else:
        seg = read_label_map(args.segmap)
        style = RenderStyle(alpha=args.alpha)
        out = vis_semantic_segmentation(img, seg, palette, style)
    write_image(args.out, out)
    return 0


def _cmd_transform_flip(args) -> int:
    img = read_image(args.image)
    record = _pick_record(read_detections(args.boxes), args.boxes, args.image)
    rng = np.random.default_rng(args.seed)
    flipped, params = random_flip(img, x_random=True, y_random=False, rng=rng)
    bbox = flip_bbox(record.to_bbox_set(), (img.shape[1], img.shape[2]), params)
    write_image(f"{args.out_prefix}.png", flipped)
    write_detections(f"{args.out_prefix}.jsonl", [replace(record, boxes=bbox.boxes)])
    print(json.dumps({"x_flip": params.x_flip, "y_flip": params.y_flip}))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cvkit", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("eval-detection", help="VOC-style detection evaluation")
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--iou-thresh", type=float, default=0.5)
    p.add_argument("--metric", choices=("voc07", "area"), default="voc07")
    p.add_argument("--json", default=None)
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=_cmd_eval_detection)

    p = sub.add_parser("eval-segmentation", help="segmentation pixel metrics")
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--num-classes", type=int, required=True)
    p.add_argument("--json", default=None)
    p.set_defaults(func=_cmd_eval_segmentation)

    p = sub.add_parser("nms", help="suppress overlapping boxes per record")
    p.add_argument("--input", required=True)
    p.add_argument("--thresh", type=float, required=True)
    p.add_argument("--limit", type=int, default=None)
    p.set_defaults(func=_cmd_nms)

    p = sub.add_parser("decode", help="decode raw detector outputs")
    p.add_argument("--raw", required=True)
    p.add_argument("--arch", choices=("ssd", "frcnn"), required=True)
    p.add_argument("--config", required=True)
    p.add_argument("--score-thresh", type=float, default=0.05)
    p.add_argument("--nms-thresh", type=float, default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=_cmd_decode)

    p = sub.add_parser("visualize", help="render boxes or a segmentation overlay")
    p.add_argument("--image", required=True)
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--boxes", default=None)
    group.add_argument("--segmap", default=None)
    p.add_argument("--names", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--alpha", type=float, default=0.5)
    p.add_argument("--no-score", action="store_true")
    p.set_defaults(func=_cmd_visualize)

    p = sub.add_parser("transform", help="apply a seeded transform to image + boxes")
    tsub = p.add_subparsers(dest="transform_command", required=True)
    flip = tsub.add_parser("flip", help="random horizontal flip")
    flip.add_argument("--image", required=True)
    flip.add_argument("--boxes", required=True)
    flip.add_argument("--seed", type=int, required=True)
    flip.add_argument("--out-prefix", required=True)
    flip.set_defaults(func=_cmd_transform_flip)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except FormatError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ConsistencyError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # pragma: no cover - defensive
        print(f"internal error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
