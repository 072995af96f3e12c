"""Seeded synthetic worlds: ground truth, an imperfect detector, and scores.

Generation is a pure function of (seed, config), using NumPy's PCG64
generator (``numpy.random.default_rng``), so two runs with the same inputs
produce bit-identical files. Each identity walks a linear trajectory with a
constant-size box; the simulated detector re-emits ground-truth boxes with
probability 1 - miss_rate plus coordinate jitter, and adds Poisson spurious
boxes per frame at the false-positive rate. A detection's similarity to a
query is drawn uniformly from the match interval iff the detection truly is
that query, else from the non-match interval.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .dataio import (
    GroundTruthTrack,
    PathLike,
    ScoreRecord,
    write_detections,
    write_ground_truth_jsonl,
    write_scores,
)
from .errors import ValidationError
from .geometry import BoundingBox, DetectionRecord

# person box size and trajectory speed ranges, in pixels (per frame for speed)
_PERSON_WIDTH = (28.0, 70.0)
_PERSON_HEIGHT = (70.0, 180.0)
_SPEED = 3.0
# appearance duration as a fraction of the video length
_DURATION_FRAC = (0.02, 0.2)


def _interval(value, name: str) -> tuple[float, float]:
    if not isinstance(value, (list, tuple)) or len(value) != 2:
        raise ValidationError(f"{name} must be a [low, high] pair")
    low, high = float(value[0]), float(value[1])
    if not (0.0 <= low <= high <= 1.0):
        raise ValidationError(f"{name} bounds must satisfy 0 <= low <= high <= 1")
    return (low, high)


@dataclass(frozen=True)
class SyntheticWorldConfig:
    """Knobs of the simulated video, detector, and similarity model."""

    seed: int
    total_frames: int = 1000
    num_identities: int = 10
    queries: tuple[str, ...] = ()  # empty: every identity is a query
    miss_rate: float = 0.0
    false_positive_rate: float = 0.0
    box_jitter: float = 0.0
    match_similarity: tuple[float, float] = (0.7, 1.0)
    nonmatch_similarity: tuple[float, float] = (0.0, 0.6)
    frame_width: int = 1280
    frame_height: int = 720

    def __post_init__(self):
        if self.total_frames < 1:
            raise ValidationError("total_frames must be >= 1")
        if self.num_identities < 1:
            raise ValidationError("num_identities must be >= 1")
        for name in ("miss_rate", "false_positive_rate"):
            rate = getattr(self, name)
            if not 0.0 <= rate <= 1.0:
                raise ValidationError(f"{name} must be in [0, 1], got {rate}")
        if self.box_jitter < 0.0:
            raise ValidationError("box_jitter must be >= 0")
        _interval(self.match_similarity, "match_similarity")
        _interval(self.nonmatch_similarity, "nonmatch_similarity")
        if self.frame_width < 160 or self.frame_height < 240:
            raise ValidationError("frame size must be at least 160x240")

    @classmethod
    def from_dict(cls, data: dict) -> "SyntheticWorldConfig":
        known = {
            "seed", "total_frames", "num_identities", "queries", "miss_rate",
            "false_positive_rate", "box_jitter", "match_similarity",
            "nonmatch_similarity", "frame_width", "frame_height",
        }
        unknown = set(data) - known
        if unknown:
            raise ValidationError(
                f"unknown config keys: {', '.join(sorted(unknown))}"
            )
        if "seed" not in data:
            raise ValidationError("config is missing the required 'seed' key")
        kwargs = dict(data)
        if "queries" in kwargs:
            kwargs["queries"] = tuple(kwargs["queries"])
        for key in ("match_similarity", "nonmatch_similarity"):
            if key in kwargs:
                kwargs[key] = _interval(kwargs[key], key)
        return cls(**kwargs)

    @classmethod
    def from_json(cls, path: PathLike) -> "SyntheticWorldConfig":
        path = Path(path)
        try:
            data = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ValidationError(f"{path}: invalid JSON: {exc}") from exc
        if not isinstance(data, dict):
            raise ValidationError(f"{path}: config must be a JSON object")
        return cls.from_dict(data)

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "total_frames": self.total_frames,
            "num_identities": self.num_identities,
            "queries": list(self.queries),
            "miss_rate": self.miss_rate,
            "false_positive_rate": self.false_positive_rate,
            "box_jitter": self.box_jitter,
            "match_similarity": list(self.match_similarity),
            "nonmatch_similarity": list(self.nonmatch_similarity),
            "frame_width": self.frame_width,
            "frame_height": self.frame_height,
        }


@dataclass(frozen=True)
class SyntheticWorld:
    """A generated world plus the generator's own truth about detections."""

    config: SyntheticWorldConfig
    tracks: tuple[GroundTruthTrack, ...]
    detections: tuple[DetectionRecord, ...]
    scores: tuple[ScoreRecord, ...]
    queries: tuple[str, ...]
    # source identity per detection (None for spurious boxes), aligned with
    # ``detections``; this is generator truth, not the IoU-derived label.
    detection_sources: tuple[Optional[str], ...] = field(repr=False, default=())


def _uniform(rng: np.random.Generator, low: float, high: float) -> float:
    return float(low + rng.random() * (high - low))


def _clamped_box(cx, cy, w, h, width, height) -> BoundingBox:
    cx = min(max(cx, w / 2.0), width - w / 2.0)
    cy = min(max(cy, h / 2.0), height - h / 2.0)
    return BoundingBox(cx - w / 2.0, cy - h / 2.0, cx + w / 2.0, cy + h / 2.0)


def generate_synthetic_world(config: SyntheticWorldConfig) -> SyntheticWorld:
    """Deterministically generate tracks, detections, and similarity scores."""
    rng = np.random.default_rng(config.seed)
    width, height = float(config.frame_width), float(config.frame_height)
    total = config.total_frames

    identities = [f"p{i:03d}" for i in range(1, config.num_identities + 1)]
    tracks = []
    for identity in identities:
        w = _uniform(rng, *_PERSON_WIDTH)
        h = _uniform(rng, *_PERSON_HEIGHT)
        lo = max(1, int(total * _DURATION_FRAC[0]))
        hi = max(lo, int(total * _DURATION_FRAC[1]))
        duration = int(rng.integers(lo, hi + 1))
        duration = min(duration, total)
        first = int(rng.integers(0, total - duration + 1))
        cx = _uniform(rng, w / 2.0, width - w / 2.0)
        cy = _uniform(rng, h / 2.0, height - h / 2.0)
        vx = _uniform(rng, -_SPEED, _SPEED)
        vy = _uniform(rng, -_SPEED, _SPEED)
        frame_boxes = {
            frame: _clamped_box(
                cx + vx * (frame - first), cy + vy * (frame - first), w, h,
                width, height,
            )
            for frame in range(first, first + duration)
        }
        tracks.append(GroundTruthTrack.from_frame_boxes(identity, frame_boxes))

    detections = []
    sources: list[Optional[str]] = []
    jitter = config.box_jitter
    for frame in range(total):
        det_index = 0
        for track in tracks:
            box = track.frame_boxes.get(frame)
            if box is None:
                continue
            missed = rng.random() < config.miss_rate
            offsets = [_uniform(rng, -jitter, jitter) for _ in range(4)]
            confidence = _uniform(rng, 0.5, 1.0)
            if missed:
                continue
            ulx = box.ulx + offsets[0]
            uly = box.uly + offsets[1]
            brx = max(box.brx + offsets[2], ulx + 1.0)
            bry = max(box.bry + offsets[3], uly + 1.0)
            detections.append(
                DetectionRecord(
                    frame=frame, det_index=det_index,
                    bbox=BoundingBox(ulx, uly, brx, bry), confidence=confidence,
                )
            )
            sources.append(track.identity)
            det_index += 1
        for _ in range(int(rng.poisson(config.false_positive_rate))):
            w = _uniform(rng, 20.0, 80.0)
            h = _uniform(rng, 50.0, 180.0)
            cx = _uniform(rng, w / 2.0, width - w / 2.0)
            cy = _uniform(rng, h / 2.0, height - h / 2.0)
            confidence = _uniform(rng, 0.5, 1.0)
            detections.append(
                DetectionRecord(
                    frame=frame, det_index=det_index,
                    bbox=_clamped_box(cx, cy, w, h, width, height),
                    confidence=confidence,
                )
            )
            sources.append(None)
            det_index += 1

    queries = tuple(config.queries) if config.queries else tuple(identities)
    unknown_queries = [q for q in queries if q not in identities]
    if unknown_queries:
        raise ValidationError(
            f"config queries not among generated identities: {unknown_queries}"
        )
    scores = []
    for det, source in zip(detections, sources):
        for query in queries:
            interval = (
                config.match_similarity
                if source == query
                else config.nonmatch_similarity
            )
            scores.append(
                ScoreRecord(
                    query_id=query,
                    item_id=det.item_id,
                    similarity=_uniform(rng, *interval),
                )
            )

    return SyntheticWorld(
        config=config,
        tracks=tuple(tracks),
        detections=tuple(detections),
        scores=tuple(scores),
        queries=queries,
        detection_sources=tuple(sources),
    )


@dataclass(frozen=True)
class WorldPaths:
    ground_truth: Path
    detections: Path
    scores: Path
    config: Path


def write_world(world: SyntheticWorld, out_dir: PathLike) -> WorldPaths:
    """Write a world's files (ground_truth.jsonl, detections.jsonl, scores.jsonl)."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = WorldPaths(
        ground_truth=out_dir / "ground_truth.jsonl",
        detections=out_dir / "detections.jsonl",
        scores=out_dir / "scores.jsonl",
        config=out_dir / "config.json",
    )
    write_ground_truth_jsonl(world.tracks, paths.ground_truth)
    write_detections(world.detections, paths.detections)
    write_scores(world.scores, paths.scores)
    paths.config.write_text(
        json.dumps(world.config.to_dict(), indent=2) + "\n", encoding="utf-8"
    )
    return paths
