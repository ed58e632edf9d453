"""Shared data representations used across the toolkit.

Conventions enforced everywhere:

* images are RGB ``numpy`` arrays shaped ``(3, H, W)`` with float values
  in ``[0, 255]``;
* bounding boxes are ``(y_min, x_min, y_max, x_max)`` in continuous pixel
  coordinates (y before x, matching the channel/height/width axis order);
* box area is ``(y_max - y_min) * (x_max - x_min)`` with no pixel "+1";
* segmentation maps are ``(H, W)`` integer arrays where ``-1`` means
  "ignore this pixel".
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "BBoxSet",
    "ColorPalette",
    "validate_bbox_set",
    "voc_color_palette",
    "as_image",
]


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr.flags.writeable = False
    return arr


def as_image(data) -> np.ndarray:
    """Coerce `data` to a (3, H, W) float64 image array, validating shape and range."""
    img = np.asarray(data, dtype=np.float64)
    if img.ndim != 3 or img.shape[0] != 3:
        raise ValueError(f"image must have shape (3, H, W), got {img.shape}")
    if img.shape[1] < 1 or img.shape[2] < 1:
        raise ValueError(f"image must be at least 1x1, got {img.shape}")
    if not np.all(np.isfinite(img)):
        raise ValueError("image contains non-finite values")
    if img.min() < 0 or img.max() > 255:
        raise ValueError("image values must lie in [0, 255]")
    return img


@dataclass(frozen=True)
class BBoxSet:
    """A set of N bounding boxes with optional per-box labels and scores.

    ``boxes`` is (N, 4) float64 in (y_min, x_min, y_max, x_max) order.
    Construction checks structure only (shapes and parallel lengths);
    value-level invariants are reported by :func:`validate_bbox_set` so
    that diagnostics can be run on untrusted data.
    """

    boxes: np.ndarray
    labels: np.ndarray | None = None
    scores: np.ndarray | None = None

    def __post_init__(self):
        boxes = np.array(self.boxes, dtype=np.float64, copy=True)
        if boxes.size == 0:
            boxes = boxes.reshape(0, 4)
        if boxes.ndim != 2 or boxes.shape[1] != 4:
            raise ValueError(f"boxes must have shape (N, 4), got {boxes.shape}")
        object.__setattr__(self, "boxes", _frozen(boxes))
        n = len(boxes)
        if self.labels is not None:
            labels = np.array(self.labels, dtype=np.int64, copy=True).reshape(-1)
            if len(labels) != n:
                raise ValueError(f"{len(labels)} labels for {n} boxes")
            object.__setattr__(self, "labels", _frozen(labels))
        if self.scores is not None:
            scores = np.array(self.scores, dtype=np.float64, copy=True).reshape(-1)
            if len(scores) != n:
                raise ValueError(f"{len(scores)} scores for {n} boxes")
            object.__setattr__(self, "scores", _frozen(scores))

    def __len__(self) -> int:
        return len(self.boxes)

    def select(self, indices) -> "BBoxSet":
        """Return the subset at `indices` (any numpy fancy index), preserving order."""
        return BBoxSet(
            self.boxes[indices],
            None if self.labels is None else self.labels[indices],
            None if self.scores is None else self.scores[indices],
        )

    @staticmethod
    def empty(with_labels: bool = False, with_scores: bool = False) -> "BBoxSet":
        return BBoxSet(
            np.zeros((0, 4)),
            np.zeros(0, dtype=np.int64) if with_labels else None,
            np.zeros(0) if with_scores else None,
        )


@dataclass(frozen=True)
class ColorPalette:
    """Per-class RGB colors; ``colors`` is (n_class, 3) uint8."""

    colors: np.ndarray

    def __post_init__(self):
        colors = np.array(self.colors, dtype=np.uint8, copy=True)
        if colors.ndim != 2 or colors.shape[1] != 3:
            raise ValueError(f"colors must have shape (n_class, 3), got {colors.shape}")
        if len(colors) < 1:
            raise ValueError("palette needs at least one color")
        head = colors[:256]
        if len({tuple(c) for c in head}) != len(head):
            raise ValueError("palette colors must be distinct for class indices < 256")
        object.__setattr__(self, "colors", _frozen(colors))

    @property
    def n_class(self) -> int:
        return len(self.colors)


def validate_bbox_set(bbox: BBoxSet, image_size: tuple[int, int]) -> list[str]:
    """Check value-level invariants of `bbox` against an image of `image_size`.

    Returns one human-readable description per violation; an empty list
    means the set is well formed and every coordinate lies inside
    ``[0, height] x [0, width]``.
    """
    height, width = image_size
    violations = []
    for i, (y_min, x_min, y_max, x_max) in enumerate(bbox.boxes):
        if not np.all(np.isfinite([y_min, x_min, y_max, x_max])):
            violations.append(f"box {i}: non-finite coordinates")
            continue
        if y_min > y_max:
            violations.append(f"box {i}: y_min > y_max")
        if x_min > x_max:
            violations.append(f"box {i}: x_min > x_max")
        if y_min < 0:
            violations.append(f"box {i}: y_min is negative")
        if x_min < 0:
            violations.append(f"box {i}: x_min is negative")
        if y_max > height:
            violations.append(f"box {i}: y_max exceeds height")
        if x_max > width:
            violations.append(f"box {i}: x_max exceeds width")
    if bbox.labels is not None:
        for i, label in enumerate(bbox.labels):
            if label < 0:
                violations.append(f"box {i}: negative label")
    if bbox.scores is not None:
        for i, score in enumerate(bbox.scores):
            if not np.isfinite(score) or score < 0 or score > 1:
                violations.append(f"box {i}: score outside [0, 1]")
    return violations


def voc_color_palette(n_class: int) -> ColorPalette:
    """The PASCAL VOC colormap for `n_class` classes (1..256).

    Bit k of the class index lands in bit ``7 - k // 3`` of channel
    ``k % 3``, which spreads nearby indices into visually distinct colors.
    """
    if not 1 <= n_class <= 256:
        raise ValueError(f"n_class must be in [1, 256], got {n_class}")
    colors = np.zeros((n_class, 3), dtype=np.uint8)
    for i in range(n_class):
        for k in range(8):
            if (i >> k) & 1:
                colors[i, k % 3] |= 1 << (7 - k // 3)
    return ColorPalette(colors)
