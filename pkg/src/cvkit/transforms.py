"""Coupled image / annotation transforms.

Every function is pure and takes an explicit random source where
randomness is involved, so augmentation pipelines are reproducible and
unit-testable. Image transforms return new arrays; box transforms return
new :class:`~cvkit.core.BBoxSet` values.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import BBoxSet

__all__ = [
    "FlipParams",
    "resize_image",
    "random_flip",
    "flip_image",
    "flip_bbox",
    "resize_bbox",
    "translate_bbox",
    "crop_bbox",
    "TransformDataset",
]


@dataclass(frozen=True)
class FlipParams:
    """Axis-flip decisions taken by :func:`random_flip`."""

    x_flip: bool = False
    y_flip: bool = False


def resize_image(img: np.ndarray, out_size: tuple[int, int]) -> np.ndarray:
    """Bilinear resize to ``out_size = (height, width)``.

    Sampling uses half-pixel centers: output position p maps to input
    position ``(p + 0.5) * (in / out) - 0.5``, clamped to the valid range.
    An identity resize returns the image bit-exactly.
    """
    out_h, out_w = int(out_size[0]), int(out_size[1])
    if out_h < 1 or out_w < 1:
        raise ValueError(f"out_size must be >= 1, got {out_size}")
    img = np.asarray(img, dtype=np.float64)
    in_h, in_w = img.shape[1], img.shape[2]

    def axis_coords(n_in, n_out):
        pos = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
        pos = np.clip(pos, 0.0, n_in - 1)
        lo = np.floor(pos).astype(np.int64)
        lo = np.minimum(lo, n_in - 1)
        hi = np.minimum(lo + 1, n_in - 1)
        return lo, hi, pos - lo

    y0, y1, wy = axis_coords(in_h, out_h)
    x0, x1, wx = axis_coords(in_w, out_w)
    # lerp as a + w*(b - a): exact for w == 0 and for constant images
    rows = img[:, y0, :] + wy[None, :, None] * (img[:, y1, :] - img[:, y0, :])
    out = rows[:, :, x0] + wx[None, None, :] * (rows[:, :, x1] - rows[:, :, x0])
    return out


def flip_image(img: np.ndarray, x_flip: bool = False, y_flip: bool = False) -> np.ndarray:
    """Mirror `img` along the enabled axes; always returns a fresh array."""
    out = np.asarray(img)
    if y_flip:
        out = out[:, ::-1, :]
    if x_flip:
        out = out[:, :, ::-1]
    return out.copy()


def random_flip(
    img: np.ndarray,
    x_random: bool = False,
    y_random: bool = False,
    rng: np.random.Generator | None = None,
) -> tuple[np.ndarray, FlipParams]:
    """Flip each enabled axis with probability 1/2 and report the decisions.

    One uniform draw is consumed per enabled axis, x axis first; an axis
    flips when its draw is < 0.5. `rng` is required whenever any axis is
    enabled.
    """
    if (x_random or y_random) and rng is None:
        raise ValueError("rng is required when a random axis is enabled")
    x_flip = bool(x_random and rng.random() < 0.5)
    y_flip = bool(y_random and rng.random() < 0.5)
    params = FlipParams(x_flip=x_flip, y_flip=y_flip)
    return flip_image(img, x_flip=x_flip, y_flip=y_flip), params


def flip_bbox(bbox: BBoxSet, size: tuple[int, int], params: FlipParams) -> BBoxSet:
    """Mirror boxes inside an image of ``size = (height, width)``.

    An x flip maps ``x_min -> width - x_max`` and ``x_max -> width - x_min``
    (and analogously for y), matching what :func:`flip_image` does to the
    pixels the boxes cover.
    """
    if not params.x_flip and not params.y_flip:
        return bbox
    height, width = size
    boxes = bbox.boxes.copy()
    if params.y_flip:
        y_min = height - boxes[:, 2]
        y_max = height - boxes[:, 0]
        boxes[:, 0], boxes[:, 2] = y_min, y_max
    if params.x_flip:
        x_min = width - boxes[:, 3]
        x_max = width - boxes[:, 1]
        boxes[:, 1], boxes[:, 3] = x_min, x_max
    return BBoxSet(boxes, bbox.labels, bbox.scores)


def resize_bbox(bbox: BBoxSet, in_size: tuple[int, int], out_size: tuple[int, int]) -> BBoxSet:
    """Scale box coordinates from `in_size` to `out_size` (height, width)."""
    y_scale = out_size[0] / in_size[0]
    x_scale = out_size[1] / in_size[1]
    boxes = bbox.boxes * np.array([y_scale, x_scale, y_scale, x_scale])
    return BBoxSet(boxes, bbox.labels, bbox.scores)


def translate_bbox(bbox: BBoxSet, dy: float, dx: float) -> BBoxSet:
    """Shift all boxes by (dy, dx)."""
    return BBoxSet(bbox.boxes + np.array([dy, dx, dy, dx]), bbox.labels, bbox.scores)


def crop_bbox(
    bbox: BBoxSet,
    region: tuple[float, float, float, float],
    allow_outside_center: bool = True,
) -> tuple[BBoxSet, np.ndarray]:
    """Clip boxes to `region` and express them in region coordinates.

    A box survives iff its clipped area is > 0 and, unless
    `allow_outside_center`, its original center lies inside the region
    (closed intervals, so a center on the region boundary counts as
    inside). Returns the surviving boxes plus their input indices in
    order.
    """
    ry0, rx0, ry1, rx1 = region
    if ry0 > ry1 or rx0 > rx1:
        raise ValueError(f"malformed region {region}")
    boxes = bbox.boxes
    clipped = np.empty_like(boxes)
    clipped[:, 0] = np.clip(boxes[:, 0], ry0, ry1) - ry0
    clipped[:, 1] = np.clip(boxes[:, 1], rx0, rx1) - rx0
    clipped[:, 2] = np.clip(boxes[:, 2], ry0, ry1) - ry0
    clipped[:, 3] = np.clip(boxes[:, 3], rx0, rx1) - rx0
    area = (clipped[:, 2] - clipped[:, 0]) * (clipped[:, 3] - clipped[:, 1])
    keep = area > 0
    if not allow_outside_center:
        cy = (boxes[:, 0] + boxes[:, 2]) / 2
        cx = (boxes[:, 1] + boxes[:, 3]) / 2
        keep &= (cy >= ry0) & (cy <= ry1) & (cx >= rx0) & (cx <= rx1)
    kept_indices = np.flatnonzero(keep)
    cropped = BBoxSet(
        clipped[keep],
        None if bbox.labels is None else bbox.labels[kept_indices],
        None if bbox.scores is None else bbox.scores[kept_indices],
    )
    return cropped, kept_indices


class TransformDataset:
    """Lazily apply a function to every sample of an array-like dataset.

    ``TransformDataset(base, f)[i]`` returns ``f(base[i])``; the base
    dataset is never mutated, and with a deterministic `f` repeated
    access yields identical samples. Wrappers nest, composing functions
    innermost-first.
    """

    def __init__(self, base, transform):
        self._base = base
        self._transform = transform

    def __len__(self) -> int:
        return len(self._base)

    def __getitem__(self, index: int):
        return self._transform(self._base[index])
