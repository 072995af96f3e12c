"""Axis-aligned box geometry and pedestrian-detection evaluation.

Boxes are half-open real rectangles (no pixel-grid rounding); area is
(brx - ulx) * (bry - uly). Detection/ground-truth matching is greedy by
descending confidence, one-to-one per frame. Average precision uses
all-point interpolation over the precision envelope.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional, Sequence

from .errors import ValidationError


@dataclass(frozen=True)
class BoundingBox:
    """Axis-aligned pixel rectangle: upper-left (ulx, uly), bottom-right (brx, bry)."""

    ulx: float
    uly: float
    brx: float
    bry: float

    def __post_init__(self):
        if not (self.ulx < self.brx and self.uly < self.bry):
            raise ValidationError(
                f"invalid box ({self.ulx}, {self.uly}, {self.brx}, {self.bry}): "
                "requires ulx < brx and uly < bry"
            )

    @property
    def area(self) -> float:
        return (self.brx - self.ulx) * (self.bry - self.uly)

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.ulx, self.uly, self.brx, self.bry)


@dataclass(frozen=True)
class DetectionRecord:
    """One detected person box in one frame.

    det_index disambiguates detections within a frame and is the ``d`` part
    of the gallery item id ``f{frame}_d{det_index}``.
    """

    frame: int
    det_index: int
    bbox: BoundingBox
    confidence: float
    crop: Optional[str] = None

    def __post_init__(self):
        if self.frame < 0:
            raise ValidationError(f"negative frame index {self.frame}")
        if self.det_index < 0:
            raise ValidationError(f"negative det_index {self.det_index}")
        if not 0.0 <= self.confidence <= 1.0:
            raise ValidationError(
                f"confidence {self.confidence} outside [0, 1] "
                f"(frame {self.frame}, det {self.det_index})"
            )

    @property
    def item_id(self) -> str:
        return f"f{self.frame}_d{self.det_index}"


@dataclass(frozen=True)
class GroundTruthBox:
    """A ground-truth box with its identity, localized to one frame."""

    identity: str
    bbox: BoundingBox


def iou(a: BoundingBox, b: BoundingBox) -> float:
    """Intersection over union of two boxes; 0 when disjoint, 1 iff identical."""
    ix = min(a.brx, b.brx) - max(a.ulx, b.ulx)
    iy = min(a.bry, b.bry) - max(a.uly, b.uly)
    if ix <= 0.0 or iy <= 0.0:
        return 0.0
    inter = ix * iy
    return inter / (a.area + b.area - inter)


@dataclass(frozen=True)
class MatchPair:
    det_index: int  # position in the detections list
    gt_index: int  # position in the ground-truth list
    iou: float


@dataclass(frozen=True)
class FrameMatching:
    """One-to-one detection/ground-truth matching for a single frame."""

    frame: int
    pairs: tuple[MatchPair, ...]
    unmatched_detections: tuple[int, ...]
    unmatched_ground_truths: tuple[int, ...]


def match_detections(
    dets: Sequence[DetectionRecord],
    gts: Sequence[GroundTruthBox],
    iou_threshold: float,
) -> FrameMatching:
    """Greedily match detections to ground-truth boxes within one frame.

    Detections are visited in descending confidence (ties keep input order);
    each takes the still-unmatched ground truth of highest IoU, provided that
    IoU >= iou_threshold. Every record must share the same frame index.
    """
    frames = {d.frame for d in dets}
    if len(frames) > 1:
        raise ValidationError(f"mixed frame indices in detections: {sorted(frames)}")
    frame = frames.pop() if frames else -1

    order = sorted(range(len(dets)), key=lambda i: (-dets[i].confidence, i))
    gt_taken = [False] * len(gts)
    pairs = []
    unmatched_dets = []
    for i in order:
        best_j, best_iou = -1, 0.0
        for j, gt in enumerate(gts):
            if gt_taken[j]:
                continue
            v = iou(dets[i].bbox, gt.bbox)
            if v > best_iou:
                best_j, best_iou = j, v
        if best_j >= 0 and best_iou >= iou_threshold:
            gt_taken[best_j] = True
            pairs.append(MatchPair(det_index=i, gt_index=best_j, iou=best_iou))
        else:
            unmatched_dets.append(i)
    unmatched_gts = [j for j, taken in enumerate(gt_taken) if not taken]
    return FrameMatching(
        frame=frame,
        pairs=tuple(sorted(pairs, key=lambda p: p.det_index)),
        unmatched_detections=tuple(sorted(unmatched_dets)),
        unmatched_ground_truths=tuple(unmatched_gts),
    )


def f1_score(precision: float, recall: float) -> float:
    """Harmonic mean of precision and recall; 0 when both are 0."""
    if precision + recall == 0.0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


@dataclass(frozen=True)
class DetectionEvalReport:
    """Precision / recall / F1 / AP over a set of frames, plus the raw matchings.

    ``ap`` is None when there is no ground truth at all. Zero-denominator
    precision/recall are reported as 0.0 and named in ``zero_division`` so
    batch runs never abort on degenerate frames.
    """

    precision: float
    recall: float
    f1: float
    ap: Optional[float]
    true_positives: int
    false_positives: int
    false_negatives: int
    zero_division: tuple[str, ...] = ()
    frame_matchings: tuple[FrameMatching, ...] = field(default=(), repr=False)
    # TP/FP flags in global confidence order, for precision/recall traces
    ranked_tp_labels: tuple[bool, ...] = field(default=(), repr=False)


def precision_recall_f1(matchings: Iterable[FrameMatching]) -> DetectionEvalReport:
    """Aggregate per-frame matchings into precision, recall and F1 (AP unset)."""
    matchings = tuple(matchings)
    tp = sum(len(m.pairs) for m in matchings)
    fp = sum(len(m.unmatched_detections) for m in matchings)
    fn = sum(len(m.unmatched_ground_truths) for m in matchings)
    zero = []
    if tp + fp == 0:
        precision = 0.0
        zero.append("precision")
    else:
        precision = tp / (tp + fp)
    if tp + fn == 0:
        recall = 0.0
        zero.append("recall")
    else:
        recall = tp / (tp + fn)
    return DetectionEvalReport(
        precision=precision,
        recall=recall,
        f1=f1_score(precision, recall),
        ap=None,
        true_positives=tp,
        false_positives=fp,
        false_negatives=fn,
        zero_division=tuple(zero),
        frame_matchings=matchings,
    )


def average_precision(tp_labels: Sequence[bool], total_gt: int) -> Optional[float]:
    """All-point interpolated AP of confidence-ranked detections.

    tp_labels holds one True (TP) / False (FP) flag per detection, already
    sorted by descending confidence. Returns None when total_gt == 0.
    """
    if total_gt < 0:
        raise ValidationError(f"total_gt must be >= 0, got {total_gt}")
    if total_gt == 0:
        return None
    if not tp_labels:
        return 0.0
    # precision/recall after each rank
    precisions = []
    recalls = []
    ctp = 0
    for rank, is_tp in enumerate(tp_labels, start=1):
        if is_tp:
            ctp += 1
        precisions.append(ctp / rank)
        recalls.append(ctp / total_gt)
    # precision envelope, right to left
    envelope = list(precisions)
    for i in range(len(envelope) - 2, -1, -1):
        envelope[i] = max(envelope[i], envelope[i + 1])
    ap = 0.0
    prev_recall = 0.0
    for r, p in zip(recalls, envelope):
        if r > prev_recall:
            ap += (r - prev_recall) * p
            prev_recall = r
    return ap


def evaluate_detections(
    detections: Sequence[DetectionRecord],
    gt_boxes_by_frame: Mapping[int, Sequence[GroundTruthBox]],
    iou_threshold: float = 0.5,
) -> DetectionEvalReport:
    """Full detection evaluation: per-frame matching, P/R/F1, and AP.

    Frames present in either input are evaluated; frames with ground truth
    and no detection contribute false negatives and vice versa.
    """
    dets_by_frame: dict[int, list[DetectionRecord]] = {}
    for det in detections:
        dets_by_frame.setdefault(det.frame, []).append(det)
    frames = sorted(set(dets_by_frame) | set(gt_boxes_by_frame))

    matchings = []
    labeled: list[tuple[DetectionRecord, bool]] = []
    for frame in frames:
        frame_dets = dets_by_frame.get(frame, [])
        matching = match_detections(
            frame_dets, tuple(gt_boxes_by_frame.get(frame, ())), iou_threshold
        )
        if not frame_dets:  # match_detections cannot infer the frame index
            matching = FrameMatching(
                frame=frame,
                pairs=(),
                unmatched_detections=(),
                unmatched_ground_truths=matching.unmatched_ground_truths,
            )
        matchings.append(matching)
        matched_pos = {p.det_index for p in matching.pairs}
        for pos, det in enumerate(frame_dets):
            labeled.append((det, pos in matched_pos))

    report = precision_recall_f1(matchings)
    total_gt = report.true_positives + report.false_negatives
    labeled.sort(key=lambda t: (-t[0].confidence, t[0].frame, t[0].det_index))
    labels = tuple(flag for _, flag in labeled)
    ap = average_precision(labels, total_gt)
    return DetectionEvalReport(
        precision=report.precision,
        recall=report.recall,
        f1=report.f1,
        ap=ap,
        true_positives=report.true_positives,
        false_positives=report.false_positives,
        false_negatives=report.false_negatives,
        zero_division=report.zero_division,
        frame_matchings=report.frame_matchings,
        ranked_tp_labels=labels,
    )


def precision_recall_points(
    tp_labels: Sequence[bool], total_gt: int
) -> list[tuple[float, float]]:
    """(recall, precision) point per rank of a confidence-sorted labeling."""
    points = []
    ctp = 0
    for rank, is_tp in enumerate(tp_labels, start=1):
        if is_tp:
            ctp += 1
        recall = ctp / total_gt if total_gt else 0.0
        points.append((recall, ctp / rank))
    return points
