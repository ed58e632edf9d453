#!/usr/bin/env python3
"""Generate a small synthetic dataset for exercising the pipeline.

Creates, under the output directory:

    detection/images/*.png + detection/annotations.jsonl
    raw.jsonl        raw detector outputs aligned with the config below
    ssd.json         decode config (one 2x2 feature map, 8 default boxes)
    segmentation/pred/*.png + segmentation/gt/*.png
    names.txt

The raw outputs are handcrafted so that decoding recovers the annotated
boxes, which makes the demo pipeline end in a perfect mAP.
"""

import argparse
import json
from pathlib import Path

import numpy as np

import cvkit as ck
from cvkit.datasets import DetectionRecord, write_detections, write_image, write_label_map

CONFIG = {
    "image_size": 100,
    "variances": [0.1, 0.2],
    "feature_maps": [
        {"grid": 2, "step": 50, "min_size": 20, "max_size": 40, "aspect_ratios": []}
    ],
}
NAMES = ["square", "blob"]


def _noise_image(rng):
    return rng.integers(0, 256, size=(3, 100, 100)).astype(np.float64)


def build(out: Path, n_images: int, seed: int) -> None:
    rng = np.random.default_rng(seed)
    det = out / "detection"
    (det / "images").mkdir(parents=True, exist_ok=True)
    out.mkdir(parents=True, exist_ok=True)
    (out / "ssd.json").write_text(json.dumps(CONFIG, indent=2))
    (out / "names.txt").write_text("".join(n + "\n" for n in NAMES))

    defaults = ck.generate_default_boxes(
        ck.DefaultBoxConfig(
            image_size=100,
            feature_maps=(ck.FeatureMapSpec(grid=2, step=50, min_size=20, max_size=40),),
        )
    )
    strong = float(np.log(19))
    annotations, raw_records = [], []
    for i in range(n_images):
        image_id = f"im{i:03d}"
        img = _noise_image(rng)
        # pick one default box per class and paint its interior so the
        # "detections" correspond to visible structure
        picks = rng.choice(len(defaults), size=2, replace=False)
        boxes, labels = [], []
        for cls, k in enumerate(picks):
            y0, x0, y1, x1 = (int(round(v)) for v in defaults.boxes[k])
            img[cls, max(y0, 0) : y1, max(x0, 0) : x1] = 255.0
            boxes.append(defaults.boxes[k].tolist())
            labels.append(cls)
        write_image(det / "images" / f"{image_id}.png", img)
        annotations.append(DetectionRecord(image_id, boxes, labels))
        confs = np.zeros((len(defaults), len(NAMES) + 1))
        confs[:, 0] = 6.0
        for cls, k in enumerate(picks):
            confs[k] = 0.0
            confs[k, cls + 1] = strong
        raw_records.append(
            {
                "image_id": image_id,
                "image_size": [100, 100],
                "locs": np.zeros((len(defaults), 4)).tolist(),
                "confs": confs.tolist(),
            }
        )
    write_detections(det / "annotations.jsonl", annotations)
    (out / "raw.jsonl").write_text("".join(json.dumps(r) + "\n" for r in raw_records))

    seg_pred = out / "segmentation" / "pred"
    seg_gt = out / "segmentation" / "gt"
    seg_pred.mkdir(parents=True, exist_ok=True)
    seg_gt.mkdir(parents=True, exist_ok=True)
    for i in range(n_images):
        # same spatial size as the detection images so overlays line up
        gt = rng.integers(0, len(NAMES), size=(100, 100))
        gt[:10, :10] = -1
        noise = rng.uniform(size=(100, 100)) < 0.1
        pred = np.where(noise, rng.integers(0, len(NAMES), size=(100, 100)), np.maximum(gt, 0))
        write_label_map(seg_gt / f"im{i:03d}.png", gt)
        write_label_map(seg_pred / f"im{i:03d}.png", pred)


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--out", type=Path, default=Path("demo_data"))
    parser.add_argument("--images", type=int, default=8)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()
    build(args.out, args.images, args.seed)
    print(f"demo data written to {args.out}")


if __name__ == "__main__":
    main()
