"""End-to-end evaluation: per-segment galleries, outcome classification,
parameter sweeps, and report emission.

The gallery of a segment contains every detection whose frame falls in the
segment (no cross-frame deduplication). A detection lacking a similarity
record for a query is excluded from that query's gallery with a coverage
warning rather than assumed to score 0, which would silently deflate alert
rates. Each query is an independent trial: the evaluation universe is the
cross product {queries} x {segments}.
"""

from __future__ import annotations

import csv
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .core import (
    EvalParams,
    MetricValue,
    Outcome,
    OutcomeCounts,
    ScoredGalleryItem,
    aggregate,
    classify_outcome,
    finding_rate,
    rank_gallery,
    true_validation_rate,
)
from .dataio import (
    GroundTruthTrack,
    LabelCoverage,
    LabeledDetection,
    PathLike,
    RESERVED_IDENTITIES,
    ScoreRecord,
    Segment,
    derive_total_frames,
    label_gallery,
    segment_timeline,
)
from .errors import ValidationError
from .geometry import BoundingBox, DetectionRecord

SWEEP_CSV_HEADER = "tau,beta,eta,tc,tmc,fs,fc,ts,fr,tvr"

_NO_MATCH_RANK = 2**31  # sentinel: no query-identity item in the gallery
_EMPTY_GALLERY_SIM = -1.0  # sentinel below any beta in [0, 1]


@dataclass(frozen=True)
class SegmentResult:
    """Outcome of one {query, segment} evaluation."""

    segment: Segment
    query_id: str
    outcome: Outcome
    max_similarity: Optional[float]
    top_eta: tuple[ScoredGalleryItem, ...]


@dataclass(frozen=True)
class PipelineResult:
    params: EvalParams
    queries: tuple[str, ...]
    total_frames: int
    segment_results: tuple[SegmentResult, ...]
    counts: OutcomeCounts
    fr: MetricValue
    tvr: MetricValue
    label_coverage: LabelCoverage
    warnings: tuple[str, ...]


@dataclass(frozen=True)
class SweepResult:
    """One (tau, beta, eta) grid cell."""

    tau: int
    beta: float
    eta: int
    counts: OutcomeCounts
    fr: MetricValue
    tvr: MetricValue


def _check_queries(queries: Sequence[str]):
    if not queries:
        raise ValidationError("query set is empty")
    reserved = [q for q in queries if q in RESERVED_IDENTITIES]
    if reserved:
        raise ValidationError(f"reserved identity labels cannot be queries: {reserved}")
    dupes = {q for q in queries if list(queries).count(q) > 1}
    if dupes:
        raise ValidationError(f"duplicate query ids: {sorted(dupes)}")


def _check_score_references(
    scores: Sequence[ScoreRecord], detections: Sequence[DetectionRecord]
):
    known = {d.item_id for d in detections}
    dangling = sorted({s.item_id for s in scores if s.item_id not in known})
    if dangling:
        shown = ", ".join(dangling[:10])
        more = f" (+{len(dangling) - 10} more)" if len(dangling) > 10 else ""
        raise ValidationError(
            f"scores reference unknown detections: {shown}{more}"
        )


def _scores_by_query(scores: Sequence[ScoreRecord]) -> dict[str, dict[str, float]]:
    table: dict[str, dict[str, float]] = {}
    for s in scores:
        table.setdefault(s.query_id, {})[s.item_id] = s.similarity
    return table


def _presence_intervals(
    tracks: Sequence[GroundTruthTrack],
) -> dict[str, list[tuple[int, int]]]:
    intervals: dict[str, list[tuple[int, int]]] = {}
    for t in tracks:
        intervals.setdefault(t.identity, []).append((t.first_frame, t.end_frame))
    return intervals


def _present(intervals: list[tuple[int, int]], segment: Segment) -> bool:
    return any(
        max(first, segment.start_frame) < min(end, segment.end_frame)
        for first, end in intervals
    )


def _bucket_by_segment(
    labeled: Sequence[LabeledDetection], segments: Sequence[Segment], tau: int,
    total_frames: int,
) -> list[list[LabeledDetection]]:
    buckets: list[list[LabeledDetection]] = [[] for _ in segments]
    for item in labeled:
        frame = item.detection.frame
        if not 0 <= frame < total_frames:
            raise ValidationError(
                f"detection {item.item_id} lies outside the frame "
                f"universe [0, {total_frames})"
            )
        buckets[frame // tau].append(item)
    for bucket in buckets:
        bucket.sort(key=lambda it: (it.detection.frame, it.detection.det_index))
    return buckets


def _coverage_warnings(
    queries: Sequence[str],
    intervals: dict[str, list[tuple[int, int]]],
    sims_by_query: dict[str, dict[str, float]],
    num_detections: int,
) -> list[str]:
    warnings = []
    for q in queries:
        if q not in intervals:
            warnings.append(
                f"query {q}: no ground-truth track; treated as absent in every segment"
            )
        sims = sims_by_query.get(q)
        if not sims:
            warnings.append(f"query {q}: no similarity records; all galleries empty")
        elif len(sims) < num_detections:
            missing = num_detections - len(sims)
            warnings.append(
                f"query {q}: {missing} detections lacked similarity scores "
                "and were excluded"
            )
    return warnings


def run_pipeline(
    tracks: Sequence[GroundTruthTrack],
    detections: Sequence[DetectionRecord],
    scores: Sequence[ScoreRecord],
    queries: Sequence[str],
    params: EvalParams,
    iou_threshold: float = 0.5,
    total_frames: Optional[int] = None,
) -> PipelineResult:
    """Evaluate every {query, segment} pair at a single (tau, beta, eta)."""
    _check_queries(queries)
    _check_score_references(scores, detections)
    labeled, coverage = label_gallery(detections, tracks, iou_threshold)
    if total_frames is None:
        total_frames = derive_total_frames(tracks, detections)
    segments = segment_timeline(total_frames, params.tau)
    buckets = _bucket_by_segment(labeled, segments, params.tau, total_frames)
    sims_by_query = _scores_by_query(scores)
    intervals = _presence_intervals(tracks)
    warnings = _coverage_warnings(queries, intervals, sims_by_query, len(detections))

    results = []
    for query in queries:
        sims = sims_by_query.get(query, {})
        query_intervals = intervals.get(query, [])
        for segment in segments:
            gallery = [
                ScoredGalleryItem(
                    item_id=item.item_id,
                    frame=item.detection.frame,
                    bbox=item.detection.bbox,
                    similarity=sims[item.item_id],
                    true_identity=item.true_identity,
                    crop=item.detection.crop,
                )
                for item in buckets[segment.index]
                if item.item_id in sims
            ]
            present = _present(query_intervals, segment)
            outcome = classify_outcome(present, gallery, query, params)
            ranked = rank_gallery(gallery)
            results.append(
                SegmentResult(
                    segment=segment,
                    query_id=query,
                    outcome=outcome,
                    max_similarity=ranked[0].similarity if ranked else None,
                    top_eta=tuple(ranked[: params.eta]),
                )
            )

    counts = aggregate(r.outcome for r in results)
    return PipelineResult(
        params=params,
        queries=tuple(queries),
        total_frames=total_frames,
        segment_results=tuple(results),
        counts=counts,
        fr=finding_rate(counts),
        tvr=true_validation_rate(counts),
        label_coverage=coverage,
        warnings=tuple(warnings),
    )


def beta_grid(start: float, end: float, steps: int) -> list[float]:
    """Inclusive linear beta grid, rounded to 6 significant digits.

    The rounding matches the CSV float format, so exported grids re-parse
    to the exact in-memory values.
    """
    if steps < 1:
        raise ValidationError(f"beta steps must be >= 1, got {steps}")
    if not (0.0 <= start <= end <= 1.0):
        raise ValidationError(
            f"beta grid must satisfy 0 <= start <= end <= 1, got [{start}, {end}]"
        )
    if steps == 1:
        return [float(f"{start:.6g}")]
    span = end - start
    return [float(f"{start + i * span / (steps - 1):.6g}") for i in range(steps)]


def _pair_summaries(
    query: str,
    segments: Sequence[Segment],
    buckets: Sequence[Sequence[LabeledDetection]],
    sims: dict[str, float],
    intervals: list[tuple[int, int]],
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-segment (present, max similarity, first-match rank) for one query.

    The rank is the position the first query-identity item would take under
    the deterministic gallery ranking; computing it as 1 + (number of items
    ordered strictly ahead of the best query item) avoids a full sort.
    """
    n = len(segments)
    present = np.zeros(n, dtype=bool)
    max_sim = np.full(n, _EMPTY_GALLERY_SIM, dtype=np.float64)
    rank = np.full(n, _NO_MATCH_RANK, dtype=np.int64)
    for segment in segments:
        i = segment.index
        present[i] = _present(intervals, segment)
        keys = []
        best_match_key = None
        best = _EMPTY_GALLERY_SIM
        for item in buckets[i]:
            sim = sims.get(item.item_id)
            if sim is None:
                continue
            det = item.detection
            key = (-sim, det.frame, det.det_index)
            keys.append(key)
            if sim > best:
                best = sim
            if item.true_identity == query and (
                best_match_key is None or key < best_match_key
            ):
                best_match_key = key
        if keys:
            max_sim[i] = best
        if best_match_key is not None:
            rank[i] = 1 + sum(1 for k in keys if k < best_match_key)
    return present, max_sim, rank


def sweep(
    tracks: Sequence[GroundTruthTrack],
    detections: Sequence[DetectionRecord],
    scores: Sequence[ScoreRecord],
    queries: Sequence[str],
    tau_values: Sequence[int],
    eta_values: Sequence[int],
    beta_values: Sequence[float],
    iou_threshold: float = 0.5,
    total_frames: Optional[int] = None,
    workers: int = 1,
) -> list[SweepResult]:
    """Evaluate the full (tau, beta, eta) grid.

    Returns one SweepResult per triple, ordered lexicographically. The
    per-(tau, query) summaries are independent and may be computed by a
    thread pool; results are identical for any worker count.
    """
    _check_queries(queries)
    if not tau_values or not eta_values or not beta_values:
        raise ValidationError("tau, eta, and beta grids must be non-empty")
    _check_score_references(scores, detections)
    taus = sorted(set(tau_values))
    etas = sorted(set(eta_values))
    betas = sorted(set(beta_values))
    for beta in betas:
        if not 0.0 <= beta <= 1.0:
            raise ValidationError(f"beta {beta} outside [0, 1]")

    labeled, _ = label_gallery(detections, tracks, iou_threshold)
    if total_frames is None:
        total_frames = derive_total_frames(tracks, detections)
    sims_by_query = _scores_by_query(scores)
    intervals = _presence_intervals(tracks)

    segments_by_tau = {tau: segment_timeline(total_frames, tau) for tau in taus}
    buckets_by_tau = {
        tau: _bucket_by_segment(labeled, segments_by_tau[tau], tau, total_frames)
        for tau in taus
    }

    def summarize(task: tuple[int, str]):
        tau, query = task
        return _pair_summaries(
            query,
            segments_by_tau[tau],
            buckets_by_tau[tau],
            sims_by_query.get(query, {}),
            intervals.get(query, []),
        )

    tasks = [(tau, query) for tau in taus for query in queries]
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            summaries = dict(zip(tasks, pool.map(summarize, tasks)))
    else:
        summaries = {task: summarize(task) for task in tasks}

    results = []
    for tau in taus:
        present = np.concatenate([summaries[(tau, q)][0] for q in queries])
        max_sim = np.concatenate([summaries[(tau, q)][1] for q in queries])
        rank = np.concatenate([summaries[(tau, q)][2] for q in queries])
        for beta in betas:
            alert = max_sim >= beta
            for eta in etas:
                hit = rank <= eta
                tc = int(np.count_nonzero(alert & present & hit))
                tmc = int(np.count_nonzero(alert & present & ~hit))
                fs = int(np.count_nonzero(~alert & present))
                fc = int(np.count_nonzero(alert & ~present))
                ts = int(np.count_nonzero(~alert & ~present))
                counts = OutcomeCounts(tc=tc, tmc=tmc, fs=fs, fc=fc, ts=ts)
                results.append(
                    SweepResult(
                        tau=tau, beta=beta, eta=eta, counts=counts,
                        fr=finding_rate(counts), tvr=true_validation_rate(counts),
                    )
                )
    return results


def _fmt(x: float) -> str:
    return f"{x:.6g}"


def _fmt_metric(m: MetricValue) -> str:
    return _fmt(m.value) if m.defined else ""


def export_sweep_csv(results: Sequence[SweepResult], path: PathLike):
    """Write sweep results as CSV (exact header, 6-significant-digit floats,
    undefined metrics as empty fields)."""
    if not results:
        raise ValidationError("no sweep results to export")
    path = Path(path)
    with path.open("w", encoding="utf-8", newline="\n") as fh:
        fh.write(SWEEP_CSV_HEADER + "\n")
        for r in results:
            c = r.counts
            fh.write(
                f"{r.tau},{_fmt(r.beta)},{r.eta},{c.tc},{c.tmc},{c.fs},{c.fc},"
                f"{c.ts},{_fmt_metric(r.fr)},{_fmt_metric(r.tvr)}\n"
            )


def parse_sweep_csv(path: PathLike) -> list[SweepResult]:
    """Re-parse an exported sweep CSV, re-deriving FR/TVR from the counts.

    The file's own fr/tvr fields are checked against the recomputation at
    the 6-significant-digit format, so this doubles as a schema validator.
    """
    path = Path(path)
    results = []
    with path.open(encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or ",".join(h.strip() for h in header) != SWEEP_CSV_HEADER:
            raise ValidationError(
                f"{path}:1: expected header '{SWEEP_CSV_HEADER}'"
            )
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            where = f"{path}:{line_no}"
            if len(row) != 10:
                raise ValidationError(f"{where}: expected 10 fields, got {len(row)}")
            try:
                tau, eta = int(row[0]), int(row[2])
                beta = float(row[1])
                counts = OutcomeCounts(*(int(v) for v in row[3:8]))
            except ValueError as exc:
                raise ValidationError(f"{where}: {exc}") from exc
            fr = finding_rate(counts)
            tvr = true_validation_rate(counts)
            for name, metric, cell in (("fr", fr, row[8]), ("tvr", tvr, row[9])):
                if _fmt_metric(metric) != cell.strip():
                    raise ValidationError(
                        f"{where}: {name} field {cell!r} does not match the "
                        f"counts (expected {_fmt_metric(metric) or 'empty'})"
                    )
            results.append(
                SweepResult(tau=tau, beta=beta, eta=eta, counts=counts, fr=fr, tvr=tvr)
            )
    return results


def _item_to_json(item: ScoredGalleryItem) -> dict:
    return {
        "item_id": item.item_id,
        "frame": item.frame,
        "bbox": list(item.bbox.as_tuple()),
        "similarity": item.similarity,
        "true_identity": item.true_identity,
        "crop": item.crop,
    }


def pipeline_result_to_json(result: PipelineResult) -> dict:
    return {
        "params": {
            "tau": result.params.tau,
            "beta": result.params.beta,
            "eta": result.params.eta,
        },
        "queries": list(result.queries),
        "total_frames": result.total_frames,
        "counts": {
            "tc": result.counts.tc,
            "tmc": result.counts.tmc,
            "fs": result.counts.fs,
            "fc": result.counts.fc,
            "ts": result.counts.ts,
        },
        "fr": result.fr.value,
        "tvr": result.tvr.value,
        "label_coverage": {
            "labeled": result.label_coverage.labeled,
            "unknown": result.label_coverage.unknown,
            "unlabelable": result.label_coverage.unlabelable,
        },
        "warnings": list(result.warnings),
        "segments": [
            {
                "query_id": r.query_id,
                "segment": {
                    "index": r.segment.index,
                    "start_frame": r.segment.start_frame,
                    "end_frame": r.segment.end_frame,
                },
                "outcome": r.outcome.value,
                "max_similarity": r.max_similarity,
                "top": [_item_to_json(item) for item in r.top_eta],
            }
            for r in result.segment_results
        ],
    }


def write_run_results(result: PipelineResult, path: PathLike):
    Path(path).write_text(
        json.dumps(pipeline_result_to_json(result), indent=2) + "\n",
        encoding="utf-8",
    )


def _item_from_json(data: dict) -> ScoredGalleryItem:
    return ScoredGalleryItem(
        item_id=data["item_id"],
        frame=data["frame"],
        bbox=BoundingBox(*data["bbox"]),
        similarity=data["similarity"],
        true_identity=data.get("true_identity"),
        crop=data.get("crop"),
    )


def load_run_results(path: PathLike) -> PipelineResult:
    """Load a run-results JSON file written by write_run_results."""
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: invalid JSON: {exc}") from exc
    try:
        params = EvalParams(
            tau=data["params"]["tau"],
            beta=data["params"]["beta"],
            eta=data["params"]["eta"],
        )
        counts = OutcomeCounts(**data["counts"])
        by_value = {o.value: o for o in Outcome}
        segment_results = tuple(
            SegmentResult(
                segment=Segment(
                    index=s["segment"]["index"],
                    start_frame=s["segment"]["start_frame"],
                    end_frame=s["segment"]["end_frame"],
                ),
                query_id=s["query_id"],
                outcome=by_value[s["outcome"]],
                max_similarity=s["max_similarity"],
                top_eta=tuple(_item_from_json(item) for item in s["top"]),
            )
            for s in data["segments"]
        )
        coverage = LabelCoverage(**data["label_coverage"])
        return PipelineResult(
            params=params,
            queries=tuple(data["queries"]),
            total_frames=data["total_frames"],
            segment_results=segment_results,
            counts=counts,
            fr=MetricValue(data["fr"]),
            tvr=MetricValue(data["tvr"]),
            label_coverage=coverage,
            warnings=tuple(data["warnings"]),
        )
    except (KeyError, TypeError) as exc:
        raise ValidationError(f"{path}: malformed run results: {exc}") from exc
