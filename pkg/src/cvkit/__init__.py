"""cvkit: detection/segmentation pipeline toolkit.

Image convention: RGB float arrays shaped (3, H, W) with values in
[0, 255]. Box convention: (y_min, x_min, y_max, x_max) in continuous
pixel coordinates.
"""

from .core import BBoxSet, ColorPalette, validate_bbox_set, voc_color_palette
from .datasets import (
    ConsistencyError,
    DetectionRecord,
    FormatError,
    RawOutputRecord,
    open_detection_dataset,
    open_segmentation_dataset,
    read_detections,
    read_image,
    read_label_map,
    read_raw_outputs,
    write_detections,
    write_image,
    write_label_map,
)
from .evaluation import (
    DetectionGroundTruth,
    confusion_matrix,
    eval_detection_voc,
    match_detections,
    average_precision,
    precision_recall,
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
    bbox2loc,
    bbox_iou,
    enumerate_shifted_anchors,
    frcnn_head_decode,
    generate_anchor_base,
    generate_default_boxes,
    loc2bbox,
    multibox_decode,
    non_maximum_suppression,
    predict,
    rpn_proposals,
    ssd300_config,
)
from .transforms import (
    FlipParams,
    TransformDataset,
    crop_bbox,
    flip_bbox,
    flip_image,
    random_flip,
    resize_bbox,
    resize_image,
    translate_bbox,
)
from .visualization import RenderStyle, vis_bbox, vis_semantic_segmentation

__version__ = "0.1.0"
