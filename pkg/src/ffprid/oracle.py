"""Brute-force re-implementation of the evaluation, used as a test oracle.

This module deliberately re-derives everything — presence, gallery labels,
ranking, thresholding — from the raw files with plain loops and no shared
evaluation code, so it can cross-check the engine. Keep it dumb: clarity
over speed, no reuse of engine or labeling internals.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Optional, Sequence

from .core import MetricValue, OutcomeCounts
from .dataio import PathLike, UNKNOWN_IDENTITY, UNLABELABLE_IDENTITY
from .errors import ValidationError


def _read_lines(path: Path):
    with path.open(encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if line:
                yield line_no, line


def _load_json_lines(path: Path):
    for line_no, line in _read_lines(path):
        try:
            record = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ValidationError(f"{path}:{line_no}: invalid JSON: {exc}") from exc
        yield line_no, record


def _load_ground_truth(path: Path):
    """Returns (frames_by_id, boxes_by_id_frame, blind_spans).

    frames_by_id: identity -> set of frames where the person appears.
    boxes_by_id_frame: (identity, frame) -> (ulx, uly, brx, bry), only for
    frames where a box is actually known.
    blind_spans: list of (first, end) intervals from compact records, where
    the person is present but the box is unknown off the first frame.
    id_order: identities in first-appearance order (labeling tie order).
    """
    frames_by_id: dict[str, set[int]] = {}
    boxes: dict[tuple[str, int], tuple[float, float, float, float]] = {}
    blind_spans: list[tuple[int, int]] = []
    id_order: list[str] = []

    head = path.read_text(encoding="utf-8").lstrip()[:1]
    if head == "{":
        for line_no, record in _load_json_lines(path):
            identity = record["id"]
            frame = record["frame"]
            box = tuple(float(v) for v in record["bbox"])
            if (identity, frame) in boxes:
                raise ValidationError(
                    f"{path}:{line_no}: duplicate record for identity "
                    f"{identity} frame {frame}"
                )
            if identity not in frames_by_id:
                frames_by_id[identity] = set()
                id_order.append(identity)
            frames_by_id[identity].add(frame)
            boxes[(identity, frame)] = box
    else:
        with path.open(encoding="utf-8", newline="") as fh:
            reader = csv.reader(fh)
            next(reader)  # header
            for line_no, row in enumerate(reader, start=2):
                if not row or (len(row) == 1 and not row[0].strip()):
                    continue
                identity = row[0].strip()
                fr, s = int(row[1]), int(row[2])
                if s < 1:
                    raise ValidationError(f"{path}:{line_no}: frame count < 1")
                box = tuple(float(v) for v in row[3:7])
                if identity not in frames_by_id:
                    frames_by_id[identity] = set()
                    id_order.append(identity)
                span = set(range(fr, fr + s))
                if frames_by_id[identity] & span:
                    raise ValidationError(
                        f"{path}:{line_no}: identity {identity} overlaps itself"
                    )
                frames_by_id[identity] |= span
                boxes[(identity, fr)] = box
                if s > 1:
                    blind_spans.append((fr + 1, fr + s))
    return frames_by_id, boxes, blind_spans, id_order


def _load_detections(path: Path):
    detections = []
    seen = set()
    for line_no, record in _load_json_lines(path):
        frame = record["frame"]
        det_index = record["det_index"]
        if (frame, det_index) in seen:
            raise ValidationError(
                f"{path}:{line_no}: duplicate detection f{frame}_d{det_index}"
            )
        seen.add((frame, det_index))
        box = tuple(float(v) for v in record["bbox"])
        detections.append((frame, det_index, box))
    return detections


def _load_scores(path: Path, query_id: str) -> dict[str, float]:
    sims: dict[str, float] = {}
    for line_no, record in _load_json_lines(path):
        if record["query_id"] != query_id:
            continue
        similarity = record["similarity"]
        if not 0.0 <= similarity <= 1.0:
            raise ValidationError(
                f"{path}:{line_no}: similarity {similarity} outside [0, 1] "
                f"for item {record['item_id']}"
            )
        if record["item_id"] in sims:
            raise ValidationError(
                f"{path}:{line_no}: duplicate score for item {record['item_id']}"
            )
        sims[record["item_id"]] = float(similarity)
    return sims


def _box_iou(a, b) -> float:
    ix = min(a[2], b[2]) - max(a[0], b[0])
    iy = min(a[3], b[3]) - max(a[1], b[1])
    if ix <= 0 or iy <= 0:
        return 0.0
    inter = ix * iy
    area_a = (a[2] - a[0]) * (a[3] - a[1])
    area_b = (b[2] - b[0]) * (b[3] - b[1])
    return inter / (area_a + area_b - inter)


def brute_force_metrics(
    gt_path: PathLike,
    detections_path: PathLike,
    scores_path: PathLike,
    query_id: str,
    params,
    iou_threshold: float = 0.5,
    total_frames: Optional[int] = None,
) -> tuple[OutcomeCounts, MetricValue, MetricValue]:
    """Classify every {query, segment} pair by direct enumeration.

    params carries tau/beta/eta (any object with those attributes works).
    """
    gt_path, det_path, scores_path = (
        Path(gt_path), Path(detections_path), Path(scores_path),
    )
    frames_by_id, boxes, blind_spans, id_order = _load_ground_truth(gt_path)
    detections = _load_detections(det_path)
    sims = _load_scores(scores_path, query_id)

    if total_frames is None:
        total_frames = 0
        for frames in frames_by_id.values():
            total_frames = max(total_frames, max(frames) + 1)
        for frame, _, _ in detections:
            total_frames = max(total_frames, frame + 1)
        if total_frames == 0:
            raise ValidationError("cannot derive the frame count from empty inputs")

    # label every detection by scanning ground-truth boxes on its frame
    labels = []
    for frame, det_index, box in detections:
        best_identity = None
        best_iou = 0.0
        for identity in id_order:
            gt_box = boxes.get((identity, frame))
            if gt_box is None:
                continue
            value = _box_iou(box, gt_box)
            if value > best_iou:
                best_identity, best_iou = identity, value
        if best_identity is not None and best_iou >= iou_threshold:
            label = best_identity
        elif any(first <= frame < end for first, end in blind_spans):
            label = UNLABELABLE_IDENTITY
        else:
            label = UNKNOWN_IDENTITY
        labels.append(label)

    query_frames = frames_by_id.get(query_id, set())

    tc = tmc = fs = fc = ts = 0
    start = 0
    while start < total_frames:
        end = min(start + params.tau, total_frames)

        present = any(start <= f < end for f in query_frames)

        gallery = []  # (similarity, frame, det_index, label)
        for (frame, det_index, _), label in zip(detections, labels):
            if start <= frame < end:
                item_id = f"f{frame}_d{det_index}"
                if item_id in sims:
                    gallery.append((sims[item_id], frame, det_index, label))

        alert = False
        if gallery:
            highest = gallery[0][0]
            for sim, _, _, _ in gallery:
                if sim > highest:
                    highest = sim
            alert = highest >= params.beta

        if alert:
            ranked = sorted(gallery, key=lambda g: (-g[0], g[1], g[2]))
            in_top = any(label == query_id for _, _, _, label in ranked[: params.eta])
            if present and in_top:
                tc += 1
            elif present:
                tmc += 1
            else:
                fc += 1
        else:
            if present:
                fs += 1
            else:
                ts += 1
        start = end

    counts = OutcomeCounts(tc=tc, tmc=tmc, fs=fs, fc=fc, ts=ts)
    fr = MetricValue(tc / (tc + tmc + fs)) if tc + tmc + fs else MetricValue(None)
    tvr = MetricValue(tc / (tc + tmc + fc)) if tc + tmc + fc else MetricValue(None)
    return counts, fr, tvr


def brute_force_world(
    gt_path: PathLike,
    detections_path: PathLike,
    scores_path: PathLike,
    queries: Sequence[str],
    params,
    iou_threshold: float = 0.5,
    total_frames: Optional[int] = None,
) -> tuple[OutcomeCounts, MetricValue, MetricValue]:
    """Sum brute-force counts over a query set (each query one trial)."""
    total = OutcomeCounts()
    for query in queries:
        counts, _, _ = brute_force_metrics(
            gt_path, detections_path, scores_path, query, params,
            iou_threshold=iou_threshold, total_frames=total_frames,
        )
        total = total + counts
    tc, tmc, fs, fc = total.tc, total.tmc, total.fs, total.fc
    fr = MetricValue(tc / (tc + tmc + fs)) if tc + tmc + fs else MetricValue(None)
    tvr = MetricValue(tc / (tc + tmc + fc)) if tc + tmc + fc else MetricValue(None)
    return total, fr, tvr
