"""Array-like datasets over local files plus the toolkit's file formats.

Formats:

* detection records: JSON Lines, one object per line with keys
  ``image_id``, ``boxes`` ((y_min, x_min, y_max, x_max) rows), ``labels``
  and optional ``scores`` / ``difficult``; floats survive a round trip
  bit-exactly (shortest-repr serialization);
* raw detector outputs: a JSON array or JSONL of objects with
  ``image_id``, ``image_size`` ([h, w]), ``locs``, ``confs`` and, for
  per-class heads, ``rois``;
* rasters: 8-bit PNG, RGB for images and grayscale for label maps where
  value 255 means "ignore" and becomes -1 in memory.

Datasets validate what they can at open time (file presence, PNG
headers) but decode pixels lazily on access; samples are re-read per
access, so concurrent reads are safe.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Protocol

import numpy as np
from PIL import Image, UnidentifiedImageError

from .core import BBoxSet

__all__ = [
    "FormatError",
    "ConsistencyError",
    "Dataset",
    "DetectionRecord",
    "RawOutputRecord",
    "read_detections",
    "write_detections",
    "read_raw_outputs",
    "read_image",
    "write_image",
    "read_label_map",
    "write_label_map",
    "open_detection_dataset",
    "open_segmentation_dataset",
]


class FormatError(ValueError):
    """A file does not parse or violates its schema."""


class ConsistencyError(ValueError):
    """Files parse individually but disagree with each other."""


class Dataset(Protocol):
    def __len__(self) -> int: ...

    def __getitem__(self, index: int): ...


@dataclass(frozen=True)
class DetectionRecord:
    """One image's worth of boxes in the JSONL annotation/prediction format."""

    image_id: str
    boxes: np.ndarray
    labels: np.ndarray
    scores: np.ndarray | None = None
    difficult: np.ndarray | None = None

    def __post_init__(self):
        boxes = np.array(self.boxes, dtype=np.float64, copy=True).reshape(-1, 4)
        labels = np.array(self.labels, dtype=np.int64, copy=True).reshape(-1)
        object.__setattr__(self, "boxes", boxes)
        object.__setattr__(self, "labels", labels)
        if len(labels) != len(boxes):
            raise FormatError(f"{len(labels)} labels for {len(boxes)} boxes")
        if self.scores is not None:
            scores = np.array(self.scores, dtype=np.float64, copy=True).reshape(-1)
            if len(scores) != len(boxes):
                raise FormatError(f"{len(scores)} scores for {len(boxes)} boxes")
            object.__setattr__(self, "scores", scores)
        if self.difficult is not None:
            difficult = np.array(self.difficult, dtype=bool, copy=True).reshape(-1)
            if len(difficult) != len(boxes):
                raise FormatError(f"{len(difficult)} difficult flags for {len(boxes)} boxes")
            object.__setattr__(self, "difficult", difficult)

    def to_bbox_set(self) -> BBoxSet:
        return BBoxSet(self.boxes, self.labels, self.scores)


def _parse_detection_obj(obj, where: str) -> DetectionRecord:
    if not isinstance(obj, dict):
        raise FormatError(f"{where}: expected a JSON object, got {type(obj).__name__}")
    if "image_id" not in obj:
        raise FormatError(f"{where}: missing image_id")
    image_id = obj["image_id"]
    if not isinstance(image_id, str):
        raise FormatError(f"{where}: image_id must be a string")
    boxes = obj.get("boxes", [])
    labels = obj.get("labels", [])
    for box in boxes:
        if not isinstance(box, (list, tuple)) or len(box) != 4:
            raise FormatError(f"{where}: each box must be a list of 4 numbers")
    try:
        return DetectionRecord(
            image_id=image_id,
            boxes=np.asarray(boxes, dtype=np.float64).reshape(-1, 4),
            labels=labels,
            scores=obj.get("scores"),
            difficult=obj.get("difficult"),
        )
    except (TypeError, ValueError) as exc:
        raise FormatError(f"{where}: {exc}") from exc


def read_detections(path) -> list[DetectionRecord]:
    """Parse a detection-record JSONL file; errors name the offending line."""
    path = Path(path)
    records = []
    with path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            where = f"{path}:{lineno}"
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise FormatError(f"{where}: invalid JSON: {exc}") from exc
            records.append(_parse_detection_obj(obj, where))
    return records


def _record_to_obj(record: DetectionRecord) -> dict:
    obj = {
        "image_id": record.image_id,
        "boxes": [[float(v) for v in row] for row in record.boxes],
        "labels": [int(v) for v in record.labels],
    }
    if record.scores is not None:
        obj["scores"] = [float(v) for v in record.scores]
    if record.difficult is not None:
        obj["difficult"] = [bool(v) for v in record.difficult]
    return obj


def write_detections(path, records) -> None:
    """Write detection records as JSONL, keys in canonical order."""
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        for record in records:
            fh.write(json.dumps(_record_to_obj(record), ensure_ascii=False))
            fh.write("\n")


@dataclass(frozen=True)
class RawOutputRecord:
    """Raw detector outputs for one image, as stored on disk."""

    image_id: str
    image_size: tuple[int, int]
    locs: np.ndarray
    confs: np.ndarray
    rois: np.ndarray | None = None


def _parse_raw_obj(obj, where: str) -> RawOutputRecord:
    if not isinstance(obj, dict):
        raise FormatError(f"{where}: expected a JSON object")
    if "image_id" not in obj:
        raise FormatError(f"{where}: missing image_id")
    image_id = obj["image_id"]
    where = f"{where} (image_id {image_id!r})"
    size = obj.get("image_size")
    if not isinstance(size, (list, tuple)) or len(size) != 2 or min(size) < 1:
        raise FormatError(f"{where}: image_size must be [height, width] >= 1")
    try:
        locs = np.asarray(obj["locs"], dtype=np.float64)
        confs = np.asarray(obj["confs"], dtype=np.float64)
        rois = None
        if obj.get("rois") is not None:
            rois = np.asarray(obj["rois"], dtype=np.float64)
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"{where}: {exc}") from exc
    if confs.ndim != 2 or confs.shape[1] < 2:
        raise FormatError(f"{where}: confs must be (N, n_class >= 2), got {confs.shape}")
    if rois is None:
        if locs.ndim != 2 or locs.shape[1] != 4:
            raise FormatError(f"{where}: locs must be (N, 4), got {locs.shape}")
        if len(locs) != len(confs):
            raise FormatError(
                f"{where}: {len(locs)} loc rows but {len(confs)} conf rows"
            )
    else:
        if rois.ndim != 2 or rois.shape[1] != 4:
            raise FormatError(f"{where}: rois must be (R, 4), got {rois.shape}")
        expected = (len(rois), confs.shape[1], 4)
        if locs.shape != expected:
            raise FormatError(f"{where}: locs must be {expected}, got {locs.shape}")
        if len(confs) != len(rois):
            raise FormatError(f"{where}: {len(rois)} rois but {len(confs)} conf rows")
    return RawOutputRecord(
        image_id=image_id,
        image_size=(int(size[0]), int(size[1])),
        locs=locs,
        confs=confs,
        rois=rois,
    )


def read_raw_outputs(path) -> list[RawOutputRecord]:
    """Parse raw detector outputs from a JSON array or JSONL file."""
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    stripped = text.lstrip()
    if stripped.startswith("["):
        try:
            objs = json.loads(text)
        except json.JSONDecodeError as exc:
            raise FormatError(f"{path}: invalid JSON: {exc}") from exc
        return [_parse_raw_obj(obj, f"{path}[{i}]") for i, obj in enumerate(objs)]
    records = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        where = f"{path}:{lineno}"
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise FormatError(f"{where}: invalid JSON: {exc}") from exc
        records.append(_parse_raw_obj(obj, where))
    return records


def read_image(path) -> np.ndarray:
    """Decode an RGB PNG to a (3, H, W) float64 array in [0, 255]."""
    try:
        with Image.open(path) as im:
            rgb = im.convert("RGB")
            arr = np.asarray(rgb, dtype=np.uint8)
    except UnidentifiedImageError as exc:
        raise FormatError(f"{path}: not a decodable image: {exc}") from exc
    return arr.transpose(2, 0, 1).astype(np.float64)


def write_image(path, img: np.ndarray) -> None:
    """Write a (3, H, W) float image in [0, 255] as an 8-bit RGB PNG."""
    arr = np.asarray(img, dtype=np.float64)
    if arr.ndim != 3 or arr.shape[0] != 3:
        raise ValueError(f"image must have shape (3, H, W), got {arr.shape}")
    data = np.clip(np.rint(arr), 0, 255).astype(np.uint8).transpose(1, 2, 0)
    Image.fromarray(data, mode="RGB").save(path, format="PNG")


def read_label_map(path) -> np.ndarray:
    """Decode an 8-bit grayscale label PNG; pixel 255 becomes ignore (-1)."""
    try:
        with Image.open(path) as im:
            if im.mode != "L":
                raise FormatError(f"{path}: label image must be 8-bit grayscale, mode is {im.mode}")
            arr = np.asarray(im, dtype=np.int64)
    except UnidentifiedImageError as exc:
        raise FormatError(f"{path}: not a decodable image: {exc}") from exc
    return np.where(arr == 255, -1, arr)


def write_label_map(path, segmap: np.ndarray) -> None:
    """Write a (H, W) integer label map as grayscale PNG, -1 stored as 255."""
    seg = np.asarray(segmap)
    if seg.ndim != 2:
        raise ValueError(f"label map must be 2-D, got shape {seg.shape}")
    if seg.size and (seg.min() < -1 or seg.max() > 254):
        raise ValueError("label values must lie in [-1, 254]")
    data = np.where(seg < 0, 255, seg).astype(np.uint8)
    Image.fromarray(data, mode="L").save(path, format="PNG")


def _check_png_header(path: Path) -> None:
    try:
        with Image.open(path) as im:
            if im.format != "PNG":
                raise FormatError(f"{path}: expected PNG, got {im.format}")
    except UnidentifiedImageError as exc:
        raise FormatError(f"{path}: not a decodable image: {exc}") from exc


class DetectionFolderDataset:
    """Detection samples from ``root/images/*.png`` + ``root/annotations.jsonl``.

    Sample i is ``(image, bbox_set, difficult)`` following the order of
    the annotation file. Image headers are checked when the dataset is
    opened; pixel data is decoded per access.
    """

    def __init__(self, root):
        root = Path(root)
        self._records = read_detections(root / "annotations.jsonl")
        seen = set()
        for record in self._records:
            if record.image_id in seen:
                raise ConsistencyError(f"duplicate image_id {record.image_id!r}")
            seen.add(record.image_id)
        self._paths = []
        for record in self._records:
            path = root / "images" / f"{record.image_id}.png"
            if not path.is_file():
                raise ConsistencyError(f"missing image file for image_id {record.image_id!r}: {path}")
            _check_png_header(path)
            self._paths.append(path)

    def __len__(self) -> int:
        return len(self._records)

    def __getitem__(self, index: int):
        record = self._records[index]
        img = read_image(self._paths[index])
        difficult = record.difficult
        if difficult is None:
            difficult = np.zeros(len(record.boxes), dtype=bool)
        return img, record.to_bbox_set(), difficult

    @property
    def records(self) -> list[DetectionRecord]:
        return list(self._records)


class SegmentationFolderDataset:
    """Segmentation samples from ``root/images/*.png`` + ``root/labels/*.png``.

    Stems must match one-to-one; samples are ordered by ascending stem.
    """

    def __init__(self, root):
        root = Path(root)
        image_stems = {p.stem: p for p in sorted((root / "images").glob("*.png"))}
        label_stems = {p.stem: p for p in sorted((root / "labels").glob("*.png"))}
        missing_labels = sorted(set(image_stems) - set(label_stems))
        missing_images = sorted(set(label_stems) - set(image_stems))
        if missing_labels or missing_images:
            raise ConsistencyError(
                f"unmatched stems: images without labels {missing_labels[:20]}, "
                f"labels without images {missing_images[:20]}"
            )
        self._stems = sorted(image_stems)
        self._images = [image_stems[s] for s in self._stems]
        self._labels = [label_stems[s] for s in self._stems]
        for path in self._images + self._labels:
            _check_png_header(path)

    def __len__(self) -> int:
        return len(self._stems)

    def __getitem__(self, index: int):
        return read_image(self._images[index]), read_label_map(self._labels[index])

    @property
    def stems(self) -> list[str]:
        return list(self._stems)


def open_detection_dataset(root) -> DetectionFolderDataset:
    return DetectionFolderDataset(root)


def open_segmentation_dataset(root) -> SegmentationFolderDataset:
    return SegmentationFolderDataset(root)
