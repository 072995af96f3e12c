"""Evaluation harness and human-in-the-loop alert simulator for full-frame
person re-identification (FF-PRID) pipelines."""

from .core import (
    EvalParams,
    MetricValue,
    Outcome,
    OutcomeCounts,
    ScoredGalleryItem,
    aggregate,
    classify_outcome,
    finding_rate,
    true_validation_rate,
)
from .errors import ValidationError
from .geometry import (
    BoundingBox,
    DetectionEvalReport,
    DetectionRecord,
    GroundTruthBox,
    average_precision,
    evaluate_detections,
    f1_score,
    iou,
    match_detections,
    precision_recall_f1,
)

__version__ = "0.1.0"

__all__ = [
    "BoundingBox",
    "DetectionEvalReport",
    "DetectionRecord",
    "EvalParams",
    "GroundTruthBox",
    "MetricValue",
    "Outcome",
    "OutcomeCounts",
    "ScoredGalleryItem",
    "ValidationError",
    "aggregate",
    "average_precision",
    "classify_outcome",
    "evaluate_detections",
    "f1_score",
    "finding_rate",
    "iou",
    "match_detections",
    "precision_recall_f1",
    "true_validation_rate",
    "__version__",
]
