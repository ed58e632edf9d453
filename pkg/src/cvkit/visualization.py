"""Deterministic rendering of detections and segmentation maps.

Everything is drawn directly into pixel arrays (no plotting backend), so
identical inputs always produce bit-identical images.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import BBoxSet, ColorPalette
from .font import GLYPH_HEIGHT, render_text

__all__ = ["RenderStyle", "vis_bbox", "vis_semantic_segmentation"]

_TAG_PAD = 1
_TAG_HEIGHT = GLYPH_HEIGHT + 2 * _TAG_PAD


@dataclass(frozen=True)
class RenderStyle:
    """Rendering knobs: box border thickness, overlay opacity, score tags."""

    border_width: int = 3
    alpha: float = 0.5
    draw_score: bool = True

    def __post_init__(self):
        if self.border_width < 1:
            raise ValueError(f"border_width must be >= 1, got {self.border_width}")
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must be in [0, 1], got {self.alpha}")


def _round_half_up(v: float) -> int:
    return int(np.floor(v + 0.5))


def _fill(img: np.ndarray, y0: int, x0: int, y1: int, x1: int, color: np.ndarray) -> None:
    h, w = img.shape[1], img.shape[2]
    y0, y1 = max(y0, 0), min(y1, h)
    x0, x1 = max(x0, 0), min(x1, w)
    if y0 < y1 and x0 < x1:
        img[:, y0:y1, x0:x1] = color[:, None, None]


def _paint_ring(img, y0, x0, y1, x1, bw, color) -> None:
    iy0, iy1 = y0 + bw, y1 - bw
    ix0, ix1 = x0 + bw, x1 - bw
    if iy0 >= iy1 or ix0 >= ix1:
        _fill(img, y0, x0, y1, x1, color)
        return
    _fill(img, y0, x0, iy0, x1, color)
    _fill(img, iy1, x0, y1, x1, color)
    _fill(img, iy0, x0, iy1, ix0, color)
    _fill(img, iy0, ix1, iy1, x1, color)


def _paint_tag(img, y0: int, x0: int, text: str, color: np.ndarray) -> None:
    mask = render_text(text)
    tag_w = mask.shape[1] + 2 * _TAG_PAD
    top = y0 - _TAG_HEIGHT
    if top < 0:
        top = y0
    _fill(img, top, x0, top + _TAG_HEIGHT, x0 + tag_w, color)
    luminance = 0.299 * color[0] + 0.587 * color[1] + 0.114 * color[2]
    ink = np.zeros(3) if luminance >= 128 else np.full(3, 255.0)
    h, w = img.shape[1], img.shape[2]
    ys, xs = np.nonzero(mask)
    ys = ys + top + _TAG_PAD
    xs = xs + x0 + _TAG_PAD
    ok = (ys >= 0) & (ys < h) & (xs >= 0) & (xs < w)
    img[:, ys[ok], xs[ok]] = ink[:, None]


def vis_bbox(
    img: np.ndarray,
    bbox: BBoxSet,
    names: list[str],
    palette: ColorPalette,
    style: RenderStyle = RenderStyle(),
) -> np.ndarray:
    """Draw labeled boxes over a copy of `img`.

    Each box gets a ``border_width``-thick rectangle ring in its class
    color, drawn inside the box's rounded integer bounds and clipped to
    the image. When scores are present and ``draw_score`` is on, a
    "name: 0.XX" tag is drawn on a filled strip above the top-left
    corner, or below it when there is no room above. Boxes are painted in
    input order, so later boxes draw over earlier ones.
    """
    if bbox.labels is None:
        raise ValueError("boxes need labels to be visualized")
    if len(bbox) and bbox.labels.max() >= len(names):
        raise ValueError(
            f"label {bbox.labels.max()} out of range for {len(names)} class names"
        )
    if len(bbox) and (bbox.labels.min() < 0 or bbox.labels.max() >= palette.n_class):
        raise ValueError("labels out of range of the palette")
    out = np.asarray(img, dtype=np.float64).copy()
    for i in range(len(bbox)):
        y_min, x_min, y_max, x_max = bbox.boxes[i]
        label = int(bbox.labels[i])
        color = palette.colors[label].astype(np.float64)
        y0, x0 = _round_half_up(y_min), _round_half_up(x_min)
        y1, x1 = _round_half_up(y_max), _round_half_up(x_max)
        _paint_ring(out, y0, x0, y1, x1, style.border_width, color)
        if style.draw_score and bbox.scores is not None:
            text = f"{names[label]}: {bbox.scores[i]:.2f}"
            _paint_tag(out, y0, x0, text, color)
    return out


def vis_semantic_segmentation(
    img: np.ndarray,
    segmap: np.ndarray,
    palette: ColorPalette,
    style: RenderStyle = RenderStyle(),
) -> np.ndarray:
    """Blend class colors over `img`: out = (1-alpha)*img + alpha*color.

    Blended pixels are rounded to the nearest integer value; ignore
    pixels (class -1) pass the input through untouched, as does the
    whole image when alpha is 0.
    """
    img = np.asarray(img, dtype=np.float64)
    seg = np.asarray(segmap)
    if img.shape[1:] != seg.shape:
        raise ValueError(f"image {img.shape[1:]} and segmap {seg.shape} sizes differ")
    if seg.size and (seg.min() < -1 or seg.max() >= palette.n_class):
        raise ValueError(
            f"segmap values must lie in [-1, {palette.n_class}), got "
            f"[{seg.min()}, {seg.max()}]"
        )
    out = img.copy()
    if style.alpha == 0:
        return out
    mask = seg >= 0
    if not mask.any():
        return out
    colors = palette.colors[seg[mask]].astype(np.float64).T
    out[:, mask] = np.rint((1.0 - style.alpha) * img[:, mask] + style.alpha * colors)
    return out
