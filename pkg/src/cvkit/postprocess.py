"""Sliding-window detection postprocessing.

Covers the machinery shared by the two dominant one-stage / two-stage
detector families: reference-box generation (anchors tiled over a feature
grid, or multi-scale default boxes), the (t_y, t_x, t_h, t_w) box
regression coding, greedy non-maximum suppression, and the score/NMS
decode stages that turn raw network outputs into labeled detections.

Everything here is pure and reentrant; per-image decoding can be run
concurrently from multiple threads.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import BBoxSet

__all__ = [
    "LOC_SIZE_CLIP",
    "AnchorConfig",
    "ProposalParams",
    "FeatureMapSpec",
    "DefaultBoxConfig",
    "RawDetectorOutput",
    "bbox_iou",
    "non_maximum_suppression",
    "generate_anchor_base",
    "enumerate_shifted_anchors",
    "loc2bbox",
    "bbox2loc",
    "rpn_proposals",
    "generate_default_boxes",
    "ssd300_config",
    "multibox_decode",
    "frcnn_head_decode",
    "SSDDecoder",
    "FasterRCNNDecoder",
    "predict",
]

# size offsets are clipped to this magnitude before exponentiation, so a
# hostile raw output cannot overflow exp()
LOC_SIZE_CLIP = math.log(1000.0 / 16.0)


def _boxes_of(b) -> np.ndarray:
    if isinstance(b, BBoxSet):
        return b.boxes
    arr = np.asarray(b, dtype=np.float64)
    if arr.size == 0:
        return arr.reshape(0, 4)
    return arr.reshape(-1, 4)


def bbox_iou(a, b) -> np.ndarray:
    """Pairwise intersection-over-union, shape ``(len(a), len(b))``.

    Pairs whose union has zero area get IoU 0. Accepts BBoxSet or plain
    (N, 4) arrays.
    """
    pa = _boxes_of(a)
    pb = _boxes_of(b)
    top_left = np.maximum(pa[:, None, :2], pb[None, :, :2])
    bottom_right = np.minimum(pa[:, None, 2:], pb[None, :, 2:])
    wh = np.clip(bottom_right - top_left, 0.0, None)
    inter = wh[:, :, 0] * wh[:, :, 1]
    area_a = (pa[:, 2] - pa[:, 0]) * (pa[:, 3] - pa[:, 1])
    area_b = (pb[:, 2] - pb[:, 0]) * (pb[:, 3] - pb[:, 1])
    union = area_a[:, None] + area_b[None, :] - inter
    with np.errstate(invalid="ignore", divide="ignore"):
        iou = np.where(union > 0, inter / np.where(union > 0, union, 1.0), 0.0)
    return iou


def non_maximum_suppression(bbox, thresh: float, limit: int | None = None) -> np.ndarray:
    """Greedy NMS; returns kept indices into the input, in processing order.

    Boxes are processed in descending score (ties by ascending input
    index; input order when there are no scores). A box is kept iff its
    IoU with every previously kept box is strictly below `thresh`, so a
    boundary IoU equal to `thresh` suppresses. Stops once `limit` boxes
    are kept.
    """
    if not 0.0 < thresh <= 1.0:
        raise ValueError(f"thresh must be in (0, 1], got {thresh}")
    boxes = _boxes_of(bbox)
    n = len(boxes)
    if n == 0:
        return np.zeros(0, dtype=np.int64)
    scores = bbox.scores if isinstance(bbox, BBoxSet) else None
    if scores is not None:
        order = np.argsort(-scores, kind="stable")
    else:
        order = np.arange(n)
    suppressed = np.zeros(n, dtype=bool)
    keep = []
    for i in order:
        if suppressed[i]:
            continue
        keep.append(i)
        if limit is not None and len(keep) >= limit:
            break
        iou = bbox_iou(boxes[i : i + 1], boxes)[0]
        suppressed |= iou >= thresh
    return np.asarray(keep, dtype=np.int64)


@dataclass(frozen=True)
class AnchorConfig:
    """Anchor grid for a region-proposal stage."""

    base_size: float = 16.0
    ratios: tuple[float, ...] = (0.5, 1.0, 2.0)
    scales: tuple[float, ...] = (8.0, 16.0, 32.0)
    feature_stride: int = 16

    def __post_init__(self):
        if not self.ratios or not self.scales:
            raise ValueError("ratios and scales must be non-empty")
        if any(r <= 0 for r in self.ratios) or any(s <= 0 for s in self.scales):
            raise ValueError("ratios and scales must be > 0")


def generate_anchor_base(cfg: AnchorConfig) -> BBoxSet:
    """Reference anchors centered at (base_size/2, base_size/2).

    Anchor (ratio r, scale s) spans h = base*s*sqrt(r), w = base*s/sqrt(r);
    ordering is ratios-major, scales-minor.
    """
    cy = cx = cfg.base_size / 2.0
    boxes = np.empty((len(cfg.ratios) * len(cfg.scales), 4))
    k = 0
    for r in cfg.ratios:
        for s in cfg.scales:
            h = cfg.base_size * s * math.sqrt(r)
            w = cfg.base_size * s / math.sqrt(r)
            boxes[k] = (cy - h / 2.0, cx - w / 2.0, cy + h / 2.0, cx + w / 2.0)
            k += 1
    return BBoxSet(boxes)


def enumerate_shifted_anchors(base: BBoxSet, feature_stride: float, grid: tuple[int, int]) -> BBoxSet:
    """Tile `base` anchors over a feature grid.

    Cell (i, j) translates every base anchor by (i*stride, j*stride);
    output is row-major over cells with base order within each cell.
    """
    grid_h, grid_w = grid
    shift_y = np.arange(grid_h) * feature_stride
    shift_x = np.arange(grid_w) * feature_stride
    ys, xs = np.meshgrid(shift_y, shift_x, indexing="ij")
    shifts = np.stack([ys, xs, ys, xs], axis=-1).reshape(-1, 1, 4)
    anchors = (shifts + base.boxes[None, :, :]).reshape(-1, 4)
    return BBoxSet(anchors)


def loc2bbox(src, loc, size_clip: float = LOC_SIZE_CLIP) -> np.ndarray:
    """Apply (t_y, t_x, t_h, t_w) offsets to reference boxes.

    Centers move linearly in units of the reference size, sizes scale by
    exp of the offset: cy' = t_y*h + cy, h' = h*exp(t_h) (same for x/w).
    t_h and t_w are clipped to ``[-size_clip, size_clip]`` first.
    """
    src_boxes = _boxes_of(src)
    loc = np.asarray(loc, dtype=np.float64).reshape(-1, 4)
    if len(src_boxes) != len(loc):
        raise ValueError(f"{len(src_boxes)} boxes but {len(loc)} offset rows")
    h = src_boxes[:, 2] - src_boxes[:, 0]
    w = src_boxes[:, 3] - src_boxes[:, 1]
    cy = src_boxes[:, 0] + 0.5 * h
    cx = src_boxes[:, 1] + 0.5 * w
    ty, tx = loc[:, 0], loc[:, 1]
    th = np.clip(loc[:, 2], -size_clip, size_clip)
    tw = np.clip(loc[:, 3], -size_clip, size_clip)
    out_cy = ty * h + cy
    out_cx = tx * w + cx
    out_h = h * np.exp(th)
    out_w = w * np.exp(tw)
    return np.stack(
        [
            out_cy - 0.5 * out_h,
            out_cx - 0.5 * out_w,
            out_cy + 0.5 * out_h,
            out_cx + 0.5 * out_w,
        ],
        axis=1,
    )


def bbox2loc(src, dst) -> np.ndarray:
    """Encode `dst` boxes relative to `src` reference boxes (inverse of loc2bbox)."""
    src_boxes = _boxes_of(src)
    dst_boxes = _boxes_of(dst)
    if len(src_boxes) != len(dst_boxes):
        raise ValueError(f"{len(src_boxes)} src boxes but {len(dst_boxes)} dst boxes")
    h = src_boxes[:, 2] - src_boxes[:, 0]
    w = src_boxes[:, 3] - src_boxes[:, 1]
    if np.any(h <= 0) or np.any(w <= 0):
        raise ValueError("src boxes must have positive height and width")
    dh = dst_boxes[:, 2] - dst_boxes[:, 0]
    dw = dst_boxes[:, 3] - dst_boxes[:, 1]
    if np.any(dh <= 0) or np.any(dw <= 0):
        raise ValueError("dst boxes must have positive height and width")
    cy = src_boxes[:, 0] + 0.5 * h
    cx = src_boxes[:, 1] + 0.5 * w
    dcy = dst_boxes[:, 0] + 0.5 * dh
    dcx = dst_boxes[:, 1] + 0.5 * dw
    return np.stack(
        [(dcy - cy) / h, (dcx - cx) / w, np.log(dh / h), np.log(dw / w)],
        axis=1,
    )


@dataclass(frozen=True)
class ProposalParams:
    """Test-time constants for the proposal filtering stage."""

    n_pre_nms: int = 6000
    n_post_nms: int = 300
    nms_thresh: float = 0.7
    min_size: float = 16.0

    def __post_init__(self):
        if self.n_post_nms > self.n_pre_nms:
            raise ValueError("n_post_nms must be <= n_pre_nms")
        if not 0.0 < self.nms_thresh <= 1.0:
            raise ValueError(f"nms_thresh must be in (0, 1], got {self.nms_thresh}")


def _clip_to_image(boxes: np.ndarray, image_size: tuple[float, float]) -> np.ndarray:
    h, w = image_size
    out = np.empty_like(boxes)
    out[:, 0::2] = np.clip(boxes[:, 0::2], 0.0, h)
    out[:, 1::2] = np.clip(boxes[:, 1::2], 0.0, w)
    return out


def rpn_proposals(
    anchors: BBoxSet,
    objectness: np.ndarray,
    locs: np.ndarray,
    image_size: tuple[float, float],
    params: ProposalParams = ProposalParams(),
) -> BBoxSet:
    """Turn per-anchor objectness + offsets into scored region proposals.

    Decodes every anchor, clips to the image, drops boxes smaller than
    ``min_size`` on either side, keeps the ``n_pre_nms`` best by
    objectness, suppresses at ``nms_thresh`` and returns at most
    ``n_post_nms`` proposals with their objectness as scores.
    """
    objectness = np.asarray(objectness, dtype=np.float64).reshape(-1)
    boxes = loc2bbox(anchors, locs)
    if len(objectness) != len(boxes):
        raise ValueError(f"{len(boxes)} anchors but {len(objectness)} objectness scores")
    boxes = _clip_to_image(boxes, image_size)
    hs = boxes[:, 2] - boxes[:, 0]
    ws = boxes[:, 3] - boxes[:, 1]
    keep = np.flatnonzero((hs >= params.min_size) & (ws >= params.min_size))
    boxes, scores = boxes[keep], objectness[keep]
    order = np.argsort(-scores, kind="stable")[: params.n_pre_nms]
    candidates = BBoxSet(boxes[order], scores=scores[order])
    kept = non_maximum_suppression(candidates, params.nms_thresh, limit=params.n_post_nms)
    return candidates.select(kept)


@dataclass(frozen=True)
class FeatureMapSpec:
    """One multibox feature map: a grid of default-box groups."""

    grid: int
    step: float
    min_size: float
    max_size: float
    aspect_ratios: tuple[float, ...] = ()

    def boxes_per_cell(self) -> int:
        return 2 + 2 * len(self.aspect_ratios)


@dataclass(frozen=True)
class DefaultBoxConfig:
    """Square-image multibox layout across several feature maps."""

    image_size: float
    feature_maps: tuple[FeatureMapSpec, ...]

    def __post_init__(self):
        if not self.feature_maps:
            raise ValueError("at least one feature map is required")
        for fm in self.feature_maps:
            if fm.grid < 1:
                raise ValueError(f"grid must be >= 1, got {fm.grid}")
            if not 0 < fm.min_size < fm.max_size <= self.image_size:
                raise ValueError(
                    f"need 0 < min_size < max_size <= image_size, got "
                    f"({fm.min_size}, {fm.max_size}) for image_size {self.image_size}"
                )


def ssd300_config() -> DefaultBoxConfig:
    """The standard 300-pixel six-map layout (8732 boxes).

    The last feature map's upper size is capped at the image size rather
    than the conventional 315 so the config honors its own bounds.
    """
    grids = (38, 19, 10, 5, 3, 1)
    steps = (8, 16, 32, 64, 100, 300)
    sizes = (30, 60, 111, 162, 213, 264, 300)
    ratios = ((2.0,), (2.0, 3.0), (2.0, 3.0), (2.0, 3.0), (2.0,), (2.0,))
    maps = tuple(
        FeatureMapSpec(grid=g, step=s, min_size=sizes[k], max_size=sizes[k + 1], aspect_ratios=r)
        for k, (g, s, r) in enumerate(zip(grids, steps, ratios))
    )
    return DefaultBoxConfig(image_size=300, feature_maps=maps)


def generate_default_boxes(cfg: DefaultBoxConfig) -> BBoxSet:
    """Enumerate default boxes in pixel coordinates of the configured image.

    Per cell, centered at ((i+0.5)*step, (j+0.5)*step): a square of side
    min_size, a square of side sqrt(min_size*max_size), then per aspect
    ratio a, the (h, w) = (s/sqrt(a), s*sqrt(a)) box followed by its
    transpose. Cells are row-major; maps appear in config order.
    """
    chunks = []
    for fm in cfg.feature_maps:
        s = fm.min_size
        sizes = [(s, s), (math.sqrt(s * fm.max_size),) * 2]
        for a in fm.aspect_ratios:
            root = math.sqrt(a)
            sizes.append((s / root, s * root))
            sizes.append((s * root, s / root))
        hw = np.asarray(sizes, dtype=np.float64)
        centers = (np.arange(fm.grid) + 0.5) * fm.step
        cy, cx = np.meshgrid(centers, centers, indexing="ij")
        ctr = np.stack([cy, cx], axis=-1).reshape(-1, 1, 2)
        lo = ctr - hw[None, :, :] / 2.0
        hi = ctr + hw[None, :, :] / 2.0
        chunks.append(np.concatenate([lo, hi], axis=2).reshape(-1, 4))
    return BBoxSet(np.concatenate(chunks, axis=0))


@dataclass(frozen=True)
class RawDetectorOutput:
    """Raw per-reference-box network outputs awaiting decoding.

    ``confs`` has one row per reference box and one column per class,
    column 0 being background. ``locs`` is (N, 4) for single-offset
    decoders and (N, n_class, 4) for per-class heads, which also carry
    the regions being classified in ``rois``.
    """

    locs: np.ndarray
    confs: np.ndarray
    rois: BBoxSet | None = None

    def __post_init__(self):
        object.__setattr__(self, "locs", np.asarray(self.locs, dtype=np.float64))
        object.__setattr__(self, "confs", np.asarray(self.confs, dtype=np.float64))


def _softmax(x: np.ndarray) -> np.ndarray:
    z = x - x.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def _check_finite(name: str, arr: np.ndarray) -> None:
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")


def _per_class_suppress(
    boxes_for_class,
    scores: np.ndarray,
    n_fg_class: int,
    score_thresh: float,
    nms_thresh: float,
) -> BBoxSet:
    """Shared decode tail: threshold, per-class NMS, ascending-class concat.

    `boxes_for_class(c)` returns the clipped candidate boxes for
    foreground class c (1-based); labels are reported 0-based with the
    background channel dropped.
    """
    out_boxes, out_labels, out_scores = [], [], []
    for c in range(1, n_fg_class + 1):
        class_boxes = boxes_for_class(c)
        class_scores = scores[:, c]
        mask = np.flatnonzero(class_scores > score_thresh)
        if len(mask) == 0:
            continue
        cand = BBoxSet(class_boxes[mask], scores=class_scores[mask])
        kept = non_maximum_suppression(cand, nms_thresh)
        picked = mask[kept]
        out_boxes.append(class_boxes[picked])
        out_labels.append(np.full(len(picked), c - 1, dtype=np.int64))
        out_scores.append(class_scores[picked])
    if not out_boxes:
        return BBoxSet.empty(with_labels=True, with_scores=True)
    return BBoxSet(
        np.concatenate(out_boxes),
        np.concatenate(out_labels),
        np.concatenate(out_scores),
    )


def multibox_decode(
    raw: RawDetectorOutput,
    defaults: BBoxSet,
    variances: tuple[float, float] = (0.1, 0.2),
    score_thresh: float = 0.05,
    nms_thresh: float = 0.45,
    image_size: tuple[float, float] = (300.0, 300.0),
) -> BBoxSet:
    """Decode single-shot multibox outputs into labeled detections.

    Offsets are scaled by the (center, size) variances before the box
    coding is applied against the default boxes; confidences are
    softmax-normalized per row. Each foreground class is thresholded and
    suppressed independently, and classes are concatenated ascending.
    """
    locs = raw.locs
    confs = raw.confs
    if locs.ndim != 2 or locs.shape[1] != 4:
        raise ValueError(f"locs must be (N, 4), got {locs.shape}")
    if confs.ndim != 2 or confs.shape[1] < 2:
        raise ValueError(f"confs must be (N, n_class >= 2), got {confs.shape}")
    if not (len(locs) == len(confs) == len(defaults)):
        raise ValueError(
            f"inconsistent lengths: {len(locs)} locs, {len(confs)} confs, "
            f"{len(defaults)} default boxes"
        )
    _check_finite("locs", locs)
    _check_finite("confs", confs)
    sigma_c, sigma_s = variances
    effective = locs * np.array([sigma_c, sigma_c, sigma_s, sigma_s])
    decoded = _clip_to_image(loc2bbox(defaults, effective), image_size)
    scores = _softmax(confs)
    n_fg = confs.shape[1] - 1
    return _per_class_suppress(lambda c: decoded, scores, n_fg, score_thresh, nms_thresh)


def frcnn_head_decode(
    rois: BBoxSet,
    raw: RawDetectorOutput,
    loc_normalize: tuple = ((0.0, 0.0, 0.0, 0.0), (0.1, 0.1, 0.2, 0.2)),
    score_thresh: float = 0.05,
    nms_thresh: float = 0.3,
    image_size: tuple[float, float] = (600.0, 600.0),
) -> BBoxSet:
    """Decode a per-class box-regression head over proposal regions.

    ``raw.locs`` must be (R, n_class, 4), one offset quadruple per roi
    per class including background; offsets are de-normalized as
    ``loc * std + mean`` per coordinate before decoding. Thresholding and
    NMS run per foreground class as in :func:`multibox_decode`.
    """
    locs = raw.locs
    confs = raw.confs
    if confs.ndim != 2 or confs.shape[1] < 2:
        raise ValueError(f"confs must be (R, n_class >= 2), got {confs.shape}")
    n_class = confs.shape[1]
    if locs.shape != (len(rois), n_class, 4):
        raise ValueError(
            f"locs must be ({len(rois)}, {n_class}, 4), got {locs.shape}"
        )
    if len(confs) != len(rois):
        raise ValueError(f"{len(rois)} rois but {len(confs)} conf rows")
    _check_finite("locs", locs)
    _check_finite("confs", confs)
    mean = np.asarray(loc_normalize[0], dtype=np.float64)
    std = np.asarray(loc_normalize[1], dtype=np.float64)
    locs = locs * std + mean
    decoded = np.stack(
        [_clip_to_image(loc2bbox(rois, locs[:, c, :]), image_size) for c in range(n_class)],
        axis=1,
    )
    scores = _softmax(confs)
    return _per_class_suppress(
        lambda c: decoded[:, c, :], scores, n_class - 1, score_thresh, nms_thresh
    )


@dataclass(frozen=True)
class SSDDecoder:
    """A configured multibox decode stage usable with :func:`predict`."""

    defaults: BBoxSet
    variances: tuple[float, float] = (0.1, 0.2)
    score_thresh: float = 0.05
    nms_thresh: float = 0.45

    def __call__(self, raw: RawDetectorOutput, image_size: tuple[float, float]) -> BBoxSet:
        return multibox_decode(
            raw,
            self.defaults,
            variances=self.variances,
            score_thresh=self.score_thresh,
            nms_thresh=self.nms_thresh,
            image_size=image_size,
        )


@dataclass(frozen=True)
class FasterRCNNDecoder:
    """A configured per-class head decode stage usable with :func:`predict`."""

    loc_normalize_mean: tuple[float, float, float, float] = (0.0, 0.0, 0.0, 0.0)
    loc_normalize_std: tuple[float, float, float, float] = (0.1, 0.1, 0.2, 0.2)
    score_thresh: float = 0.05
    nms_thresh: float = 0.3

    def __call__(self, raw: RawDetectorOutput, image_size: tuple[float, float]) -> BBoxSet:
        if raw.rois is None:
            raise ValueError("raw output lacks the rois required by the head decoder")
        return frcnn_head_decode(
            raw.rois,
            raw,
            loc_normalize=(self.loc_normalize_mean, self.loc_normalize_std),
            score_thresh=self.score_thresh,
            nms_thresh=self.nms_thresh,
            image_size=image_size,
        )


def predict(decoder, raws, sizes) -> list[BBoxSet]:
    """Decode a batch of raw outputs; result i depends only on input i."""
    raws = list(raws)
    sizes = list(sizes)
    if len(raws) != len(sizes):
        raise ValueError(f"{len(raws)} raw outputs but {len(sizes)} image sizes")
    return [decoder(raw, size) for raw, size in zip(raws, sizes)]
