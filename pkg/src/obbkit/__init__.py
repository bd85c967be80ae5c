"""Rotation-aware sponsor visibility analytics for OBB logo detections."""

from .errors import ConfigError, DataError, GeometryError, ObbkitError, ParseError
from .evaluation import EvalResult, MatchRecord, average_precision, evaluate, iou_threshold_histogram, match_frame
from .formats import (
    ClassMap,
    Detection,
    FrameMeta,
    GroundTruth,
    iter_detections,
    load_class_map,
    load_split,
    parse_obb_label_line,
    serialize_obb_label_line,
)
from .geometry import (
    RectAA,
    clip_areas_to_rect,
    clip_to_rect,
    convex_intersection,
    enclosing_hbb,
    iou_obb,
    normalize_quad,
    obb_orientation_deg,
    polygon_area,
    quad_from_rect,
)
from .losses import AnchorTargets, LossParams, bce_soft, cls_loss, focal_loss, total_loss, vfl, vfl_grad
from .metrics import (
    BrandMetrics,
    ExposureTimeline,
    FrameCoverage,
    aggregate_brand,
    build_timeline,
    frame_coverage,
    temporal_filter,
)
from .tightness import TRBinStat, TRSample, bin_by_orientation, compare_gt_pred_tr, tightness_ratio, tr_rect_closed_form

__version__ = "0.1.0"

__all__ = [
    "AnchorTargets",
    "BrandMetrics",
    "ClassMap",
    "ConfigError",
    "DataError",
    "Detection",
    "EvalResult",
    "ExposureTimeline",
    "FrameCoverage",
    "FrameMeta",
    "GeometryError",
    "GroundTruth",
    "LossParams",
    "MatchRecord",
    "ObbkitError",
    "ParseError",
    "RectAA",
    "TRBinStat",
    "TRSample",
    "aggregate_brand",
    "average_precision",
    "bce_soft",
    "bin_by_orientation",
    "build_timeline",
    "clip_areas_to_rect",
    "clip_to_rect",
    "cls_loss",
    "compare_gt_pred_tr",
    "convex_intersection",
    "enclosing_hbb",
    "evaluate",
    "focal_loss",
    "frame_coverage",
    "iou_obb",
    "iou_threshold_histogram",
    "iter_detections",
    "load_class_map",
    "load_split",
    "match_frame",
    "normalize_quad",
    "obb_orientation_deg",
    "parse_obb_label_line",
    "polygon_area",
    "quad_from_rect",
    "serialize_obb_label_line",
    "temporal_filter",
    "tightness_ratio",
    "total_loss",
    "tr_rect_closed_form",
    "vfl",
    "vfl_grad",
]
