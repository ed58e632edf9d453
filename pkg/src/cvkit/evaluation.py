"""Detection and segmentation evaluation.

Detection follows the PASCAL-VOC protocol: greedy one-to-one matching of
score-ranked predictions to ground truth at an IoU threshold, difficult
objects neither rewarded nor penalized, and AP summarized either by the
VOC2007 11-point rule or by the area under the monotonized
precision/recall envelope.

Segmentation metrics all derive from a single C x C confusion matrix, so
per-image matrices can be summed before scoring.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .core import BBoxSet
from .postprocess import bbox_iou

__all__ = [
    "DetectionGroundTruth",
    "MatchResult",
    "PRCurve",
    "DetectionEval",
    "SegmentationScores",
    "match_detections",
    "precision_recall",
    "average_precision",
    "eval_detection_voc",
    "confusion_matrix",
    "segmentation_scores",
]


@dataclass(frozen=True)
class DetectionGroundTruth:
    """Ground truth for one image: labeled boxes plus optional difficult flags."""

    bbox: BBoxSet
    difficult: np.ndarray | None = None

    def __post_init__(self):
        if self.bbox.labels is None:
            raise ValueError("ground-truth boxes need labels")
        if self.difficult is not None:
            difficult = np.array(self.difficult, dtype=bool, copy=True).reshape(-1)
            if len(difficult) != len(self.bbox):
                raise ValueError(
                    f"{len(difficult)} difficult flags for {len(self.bbox)} boxes"
                )
            difficult.flags.writeable = False
            object.__setattr__(self, "difficult", difficult)

    def difficult_mask(self) -> np.ndarray:
        if self.difficult is None:
            return np.zeros(len(self.bbox), dtype=bool)
        return self.difficult


@dataclass(frozen=True)
class MatchResult:
    """Pooled per-class matching outcomes.

    ``flags`` values: 1 = true positive, 0 = false positive,
    -1 = ignored (matched a difficult ground-truth box).
    """

    scores: dict[int, np.ndarray]
    flags: dict[int, np.ndarray]
    n_positive: dict[int, int]

    @property
    def classes(self) -> list[int]:
        return sorted(self.n_positive)


@dataclass(frozen=True)
class PRCurve:
    """Cumulative precision/recall per class; recall is None when the
    class has no ground truth (its AP is undefined)."""

    precision: dict[int, np.ndarray]
    recall: dict[int, np.ndarray | None]

    @property
    def classes(self) -> list[int]:
        return sorted(self.precision)


@dataclass(frozen=True)
class DetectionEval:
    ap: dict[int, float]
    mean_ap: float


def _match_single_image(
    pred: BBoxSet, gt: DetectionGroundTruth, iou_thresh: float
) -> tuple[dict, dict, dict]:
    if pred.labels is None or pred.scores is None:
        raise ValueError("predictions need labels and scores")
    difficult = gt.difficult_mask()
    scores_out: dict[int, np.ndarray] = {}
    flags_out: dict[int, np.ndarray] = {}
    n_pos: dict[int, int] = {}
    classes = set(pred.labels.tolist()) | set(gt.bbox.labels.tolist())
    for cls in classes:
        p_sel = np.flatnonzero(pred.labels == cls)
        g_sel = np.flatnonzero(gt.bbox.labels == cls)
        n_pos[cls] = int(np.count_nonzero(~difficult[g_sel]))
        cls_scores = pred.scores[p_sel]
        order = np.argsort(-cls_scores, kind="stable")
        cls_scores = cls_scores[order]
        flags = np.empty(len(p_sel), dtype=np.int8)
        if len(g_sel) == 0:
            flags[:] = 0
        else:
            iou = bbox_iou(pred.boxes[p_sel][order], gt.bbox.boxes[g_sel])
            g_difficult = difficult[g_sel]
            matched = np.zeros(len(g_sel), dtype=bool)
            for k in range(len(p_sel)):
                candidates = np.where(matched, -np.inf, iou[k])
                best = int(np.argmax(candidates))
                if candidates[best] >= iou_thresh:
                    matched[best] = True
                    flags[k] = -1 if g_difficult[best] else 1
                else:
                    flags[k] = 0
        scores_out[cls] = cls_scores
        flags_out[cls] = flags
    return scores_out, flags_out, n_pos


def match_detections(preds, gts, iou_thresh: float = 0.5, jobs: int = 1) -> MatchResult:
    """Greedily match predictions to ground truth per image and class.

    Predictions are processed in descending score (ties by input order);
    each matches the not-yet-matched same-class ground-truth box of
    highest IoU when that IoU reaches `iou_thresh`. Matching a difficult
    box consumes it but marks the prediction ignored instead of tp.
    Images are independent, so they may be matched in parallel.
    """
    preds = list(preds)
    gts = list(gts)
    if len(preds) != len(gts):
        raise ValueError(f"{len(preds)} prediction sets but {len(gts)} ground truths")
    if jobs > 1 and len(preds) > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            per_image = list(
                pool.map(lambda pg: _match_single_image(pg[0], pg[1], iou_thresh), zip(preds, gts))
            )
    else:
        per_image = [_match_single_image(p, g, iou_thresh) for p, g in zip(preds, gts)]

    scores: dict[int, list[np.ndarray]] = {}
    flags: dict[int, list[np.ndarray]] = {}
    n_positive: dict[int, int] = {}
    for s, f, n in per_image:
        for cls in s:
            scores.setdefault(cls, []).append(s[cls])
            flags.setdefault(cls, []).append(f[cls])
            n_positive[cls] = n_positive.get(cls, 0) + n[cls]
    empty_f = np.zeros(0, dtype=np.int8)
    return MatchResult(
        scores={c: np.concatenate(v) if v else np.zeros(0) for c, v in scores.items()},
        flags={c: np.concatenate(v) if v else empty_f for c, v in flags.items()},
        n_positive=n_positive,
    )


def precision_recall(match: MatchResult) -> PRCurve:
    """Pool matches over all images into cumulative per-class PR curves.

    Ignored predictions are excluded. Recall is None for classes without
    ground truth.
    """
    precision: dict[int, np.ndarray] = {}
    recall: dict[int, np.ndarray | None] = {}
    for cls in match.classes:
        scores = match.scores.get(cls, np.zeros(0))
        flags = match.flags.get(cls, np.zeros(0, dtype=np.int8))
        order = np.argsort(-scores, kind="stable")
        flags = flags[order]
        flags = flags[flags >= 0]
        tp = np.cumsum(flags == 1)
        fp = np.cumsum(flags == 0)
        precision[cls] = tp / np.maximum(tp + fp, 1)
        n_pos = match.n_positive.get(cls, 0)
        recall[cls] = tp / n_pos if n_pos > 0 else None
    return PRCurve(precision=precision, recall=recall)


def _ap_voc07(prec: np.ndarray, rec: np.ndarray) -> float:
    ap = 0.0
    for t in np.arange(0.0, 1.1, 0.1):
        covered = prec[rec >= t]
        ap += covered.max() if len(covered) else 0.0
    return float(ap / 11.0)


def _ap_area(prec: np.ndarray, rec: np.ndarray) -> float:
    mrec = np.concatenate(([0.0], rec, [1.0]))
    mpre = np.concatenate(([0.0], prec, [0.0]))
    mpre = np.maximum.accumulate(mpre[::-1])[::-1]
    changes = np.flatnonzero(mrec[1:] != mrec[:-1])
    return float(np.sum((mrec[changes + 1] - mrec[changes]) * mpre[changes + 1]))


def average_precision(curve: PRCurve, mode: str = "voc07") -> dict[int, float]:
    """Per-class AP; NaN for classes whose recall is undefined.

    ``voc07`` averages the interpolated max precision at the 11 recall
    thresholds 0.0 .. 1.0; ``area`` integrates the monotonized precision
    envelope over recall.
    """
    if mode not in ("voc07", "area"):
        raise ValueError(f"unknown AP mode {mode!r}")
    ap: dict[int, float] = {}
    for cls in curve.classes:
        rec = curve.recall[cls]
        if rec is None:
            ap[cls] = float("nan")
            continue
        prec = curve.precision[cls]
        if len(prec) == 0:
            ap[cls] = 0.0
        elif mode == "voc07":
            ap[cls] = _ap_voc07(prec, rec)
        else:
            ap[cls] = _ap_area(prec, rec)
    return ap


def eval_detection_voc(
    preds,
    gts,
    iou_thresh: float = 0.5,
    mode: str = "voc07",
    jobs: int = 1,
) -> DetectionEval:
    """Full detection evaluation: match, pool, and summarize to AP / mAP.

    `preds` and `gts` are parallel per-image sequences. The mean skips
    classes with undefined AP (no ground truth anywhere).
    """
    match = match_detections(preds, gts, iou_thresh=iou_thresh, jobs=jobs)
    ap = average_precision(precision_recall(match), mode=mode)
    defined = [v for v in ap.values() if not np.isnan(v)]
    mean_ap = float(np.mean(defined)) if defined else float("nan")
    return DetectionEval(ap=ap, mean_ap=mean_ap)


def confusion_matrix(pred, gt, n_class: int) -> np.ndarray:
    """Accumulate a (gt row, pred column) confusion matrix over one map pair.

    Pixels with ground truth -1 are skipped. Matrices from several images
    can simply be added together.
    """
    pred = np.asarray(pred)
    gt = np.asarray(gt)
    if pred.shape != gt.shape:
        raise ValueError(f"shape mismatch: pred {pred.shape} vs gt {gt.shape}")
    if n_class < 1:
        raise ValueError(f"n_class must be >= 1, got {n_class}")
    if pred.size and (pred.min() < 0 or pred.max() >= n_class):
        raise ValueError(f"pred values must lie in [0, {n_class}), got "
                         f"[{pred.min()}, {pred.max()}]")
    if gt.size and (gt.min() < -1 or gt.max() >= n_class):
        raise ValueError(f"gt values must lie in [-1, {n_class}), got "
                         f"[{gt.min()}, {gt.max()}]")
    mask = gt >= 0
    flat = gt[mask].astype(np.int64) * n_class + pred[mask].astype(np.int64)
    counts = np.bincount(flat, minlength=n_class * n_class)
    return counts.reshape(n_class, n_class)


@dataclass(frozen=True)
class SegmentationScores:
    pixel_accuracy: float
    mean_class_accuracy: float
    mean_iou: float
    class_accuracy: np.ndarray
    iou: np.ndarray


def segmentation_scores(matrix: np.ndarray) -> SegmentationScores:
    """Pixel accuracy, mean per-class accuracy and mean IoU from a confusion matrix.

    Classes with no ground-truth pixels have undefined accuracy (NaN) and
    classes absent from both axes have undefined IoU; the means skip
    undefined entries.
    """
    m = np.asarray(matrix, dtype=np.float64)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"confusion matrix must be square, got {m.shape}")
    total = m.sum()
    if total == 0:
        raise ValueError("confusion matrix has no counts")
    diag = np.diag(m)
    row = m.sum(axis=1)
    col = m.sum(axis=0)
    with np.errstate(invalid="ignore", divide="ignore"):
        class_accuracy = np.where(row > 0, diag / np.maximum(row, 1e-300), np.nan)
        denom = row + col - diag
        iou = np.where(denom > 0, diag / np.maximum(denom, 1e-300), np.nan)
    return SegmentationScores(
        pixel_accuracy=float(diag.sum() / total),
        mean_class_accuracy=float(np.nanmean(class_accuracy)),
        mean_iou=float(np.nanmean(iou)),
        class_accuracy=class_accuracy,
        iou=iou,
    )
