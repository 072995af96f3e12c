"""File formats, timeline segmentation, and gallery identity labeling.

Two ground-truth forms are supported:

* compact CSV, one record per track: ``id,fr,s,ulx,uly,brx,bry`` (header
  exactly that) giving the first frame, the frame count, and the initial
  box only. Supports presence evaluation; labeling works only on frame fr.
* full JSON Lines, one object per (frame, identity):
  ``{"frame": int, "id": "...", "bbox": [ulx, uly, brx, bry]}``. Supports
  everything (presence, detection evaluation, gallery labeling).

Detections and similarity scores are JSON Lines (see parse_detections /
parse_scores). All writers emit UTF-8 with LF line endings and repr-exact
floats, so write -> parse round-trips losslessly and identical inputs
produce bit-identical files.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence, Union

from .errors import ValidationError
from .geometry import BoundingBox, DetectionRecord, GroundTruthBox, iou

#: Label for detections whose best ground-truth overlap is below threshold.
UNKNOWN_IDENTITY = "unknown"
#: Label for detections on frames where compact-form tracks hide the ground truth.
UNLABELABLE_IDENTITY = "unlabelable"

RESERVED_IDENTITIES = frozenset({UNKNOWN_IDENTITY, UNLABELABLE_IDENTITY})

GROUND_TRUTH_CSV_HEADER = "id,fr,s,ulx,uly,brx,bry"

PathLike = Union[str, Path]


@dataclass(frozen=True)
class GroundTruthTrack:
    """One person's contiguous appearance: identity, frame extent, and boxes.

    frame_boxes is present for full-form tracks and covers exactly
    [first_frame, first_frame + num_frames); compact tracks carry only the
    initial box.
    """

    identity: str
    first_frame: int
    num_frames: int
    initial_box: BoundingBox
    frame_boxes: Optional[dict[int, BoundingBox]] = None

    def __post_init__(self):
        if not self.identity:
            raise ValidationError("empty track identity")
        if self.identity in RESERVED_IDENTITIES:
            raise ValidationError(f"track identity {self.identity!r} is reserved")
        if self.first_frame < 0:
            raise ValidationError(
                f"track {self.identity}: negative first frame {self.first_frame}"
            )
        if self.num_frames < 1:
            raise ValidationError(
                f"track {self.identity}: frame count must be >= 1, got {self.num_frames}"
            )
        if self.frame_boxes is not None:
            expected = set(range(self.first_frame, self.end_frame))
            if set(self.frame_boxes) != expected:
                raise ValidationError(
                    f"track {self.identity}: per-frame boxes must cover exactly "
                    f"frames [{self.first_frame}, {self.end_frame})"
                )
            if self.frame_boxes[self.first_frame] != self.initial_box:
                raise ValidationError(
                    f"track {self.identity}: initial box disagrees with the "
                    "per-frame box on the first frame"
                )

    @classmethod
    def from_frame_boxes(
        cls, identity: str, frame_boxes: Mapping[int, BoundingBox]
    ) -> "GroundTruthTrack":
        if not frame_boxes:
            raise ValidationError(f"track {identity}: no boxes")
        first = min(frame_boxes)
        return cls(
            identity=identity,
            first_frame=first,
            num_frames=len(frame_boxes),
            initial_box=frame_boxes[first],
            frame_boxes=dict(frame_boxes),
        )

    @property
    def end_frame(self) -> int:
        """Exclusive end of the track's frame interval."""
        return self.first_frame + self.num_frames

    @property
    def has_per_frame_boxes(self) -> bool:
        return self.frame_boxes is not None

    def covers(self, frame: int) -> bool:
        return self.first_frame <= frame < self.end_frame

    def box_at(self, frame: int) -> Optional[BoundingBox]:
        """The track's box on a frame, or None when the compact form hides it."""
        if self.frame_boxes is not None:
            return self.frame_boxes.get(frame)
        return self.initial_box if frame == self.first_frame else None


def _reject_overlapping_tracks(tracks: Sequence[GroundTruthTrack], source: str):
    by_id: dict[str, list[GroundTruthTrack]] = {}
    for track in tracks:
        by_id.setdefault(track.identity, []).append(track)
    for identity, group in by_id.items():
        group = sorted(group, key=lambda t: t.first_frame)
        for a, b in zip(group, group[1:]):
            if b.first_frame < a.end_frame:
                raise ValidationError(
                    f"{source}: identity {identity} appears twice in frame "
                    f"{b.first_frame} (overlapping tracks)"
                )


def _parse_bbox(values, where: str) -> BoundingBox:
    if not isinstance(values, (list, tuple)) or len(values) != 4:
        raise ValidationError(f"{where}: bbox must be [ulx, uly, brx, bry]")
    try:
        coords = [float(v) for v in values]
    except (TypeError, ValueError) as exc:
        raise ValidationError(f"{where}: non-numeric bbox coordinate") from exc
    try:
        return BoundingBox(*coords)
    except ValidationError as exc:
        raise ValidationError(f"{where}: {exc}") from exc


def parse_ground_truth_csv(path: PathLike) -> list[GroundTruthTrack]:
    """Parse the compact one-record-per-track CSV form."""
    path = Path(path)
    tracks = []
    with path.open(encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            return []
        if [h.strip() for h in header] != GROUND_TRUTH_CSV_HEADER.split(","):
            raise ValidationError(
                f"{path}:1: expected header '{GROUND_TRUTH_CSV_HEADER}', "
                f"got {','.join(header)!r}"
            )
        for line_no, row in enumerate(reader, start=2):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            where = f"{path}:{line_no}"
            if len(row) != 7:
                raise ValidationError(f"{where}: expected 7 fields, got {len(row)}")
            identity = row[0].strip()
            try:
                fr = int(row[1])
                s = int(row[2])
            except ValueError as exc:
                raise ValidationError(f"{where}: non-integer frame field") from exc
            bbox = _parse_bbox(row[3:7], where)
            try:
                tracks.append(
                    GroundTruthTrack(
                        identity=identity, first_frame=fr, num_frames=s,
                        initial_box=bbox,
                    )
                )
            except ValidationError as exc:
                raise ValidationError(f"{where}: {exc}") from exc
    _reject_overlapping_tracks(tracks, str(path))
    return tracks


def _iter_jsonl(path: Path):
    with path.open(encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValidationError(f"{path}:{line_no}: invalid JSON: {exc}") from exc
            if not isinstance(record, dict):
                raise ValidationError(f"{path}:{line_no}: expected a JSON object")
            yield line_no, record


def parse_ground_truth_jsonl(path: PathLike) -> list[GroundTruthTrack]:
    """Parse the full per-(frame, identity) JSON Lines form.

    Records of one identity are grouped; each maximal contiguous frame run
    becomes one track (a person leaving and re-entering yields two tracks).
    """
    path = Path(path)
    boxes_by_id: dict[str, dict[int, BoundingBox]] = {}
    for line_no, record in _iter_jsonl(path):
        where = f"{path}:{line_no}"
        try:
            frame = record["frame"]
            identity = record["id"]
            bbox_raw = record["bbox"]
        except KeyError as exc:
            raise ValidationError(f"{where}: missing key {exc}") from exc
        if not isinstance(frame, int) or frame < 0:
            raise ValidationError(f"{where}: frame must be a non-negative integer")
        if not isinstance(identity, str) or not identity:
            raise ValidationError(f"{where}: id must be a non-empty string")
        bbox = _parse_bbox(bbox_raw, where)
        frames = boxes_by_id.setdefault(identity, {})
        if frame in frames:
            raise ValidationError(
                f"{where}: duplicate record for identity {identity} frame {frame}"
            )
        frames[frame] = bbox

    tracks = []
    for identity in boxes_by_id:
        frames = boxes_by_id[identity]
        run: dict[int, BoundingBox] = {}
        prev = None
        for frame in sorted(frames):
            if run and frame != prev + 1:
                tracks.append(GroundTruthTrack.from_frame_boxes(identity, run))
                run = {}
            run[frame] = frames[frame]
            prev = frame
        tracks.append(GroundTruthTrack.from_frame_boxes(identity, run))
    _reject_overlapping_tracks(tracks, str(path))
    return tracks


def parse_ground_truth(path: PathLike) -> list[GroundTruthTrack]:
    """Parse either ground-truth form, sniffing the format from the content."""
    path = Path(path)
    with path.open(encoding="utf-8") as fh:
        head = fh.read(1024).lstrip()
    if head.startswith("{"):
        return parse_ground_truth_jsonl(path)
    return parse_ground_truth_csv(path)


def write_ground_truth_csv(tracks: Sequence[GroundTruthTrack], path: PathLike):
    """Write tracks in the compact form (per-frame boxes, if any, are dropped)."""
    path = Path(path)
    with path.open("w", encoding="utf-8", newline="\n") as fh:
        fh.write(GROUND_TRUTH_CSV_HEADER + "\n")
        for t in tracks:
            b = t.initial_box
            fh.write(
                f"{t.identity},{t.first_frame},{t.num_frames},"
                f"{b.ulx!r},{b.uly!r},{b.brx!r},{b.bry!r}\n"
            )


def write_ground_truth_jsonl(tracks: Sequence[GroundTruthTrack], path: PathLike):
    """Write full-form tracks as JSON Lines; compact tracks are rejected."""
    path = Path(path)
    with path.open("w", encoding="utf-8", newline="\n") as fh:
        for t in tracks:
            if t.frame_boxes is None:
                raise ValidationError(
                    f"track {t.identity} has no per-frame boxes; use the CSV form"
                )
            for frame in sorted(t.frame_boxes):
                fh.write(
                    json.dumps(
                        {
                            "frame": frame,
                            "id": t.identity,
                            "bbox": list(t.frame_boxes[frame].as_tuple()),
                        }
                    )
                    + "\n"
                )


def parse_detections(path: PathLike) -> list[DetectionRecord]:
    """Parse the detections JSON Lines file.

    Records: ``{"frame": int, "det_index": int, "bbox": [...], "confidence":
    float, "crop": "optional/path.png"}``; (frame, det_index) must be unique.
    """
    path = Path(path)
    detections = []
    seen: set[tuple[int, int]] = set()
    for line_no, record in _iter_jsonl(path):
        where = f"{path}:{line_no}"
        try:
            frame = record["frame"]
            det_index = record["det_index"]
            bbox_raw = record["bbox"]
            confidence = record["confidence"]
        except KeyError as exc:
            raise ValidationError(f"{where}: missing key {exc}") from exc
        crop = record.get("crop")
        if not isinstance(frame, int) or not isinstance(det_index, int):
            raise ValidationError(f"{where}: frame and det_index must be integers")
        if not isinstance(confidence, (int, float)):
            raise ValidationError(f"{where}: confidence must be a number")
        if crop is not None and not isinstance(crop, str):
            raise ValidationError(f"{where}: crop must be a string path")
        key = (frame, det_index)
        if key in seen:
            raise ValidationError(
                f"{where}: duplicate detection f{frame}_d{det_index}"
            )
        seen.add(key)
        bbox = _parse_bbox(bbox_raw, where)
        try:
            detections.append(
                DetectionRecord(
                    frame=frame, det_index=det_index, bbox=bbox,
                    confidence=float(confidence), crop=crop,
                )
            )
        except ValidationError as exc:
            raise ValidationError(f"{where}: {exc}") from exc
    return detections


def write_detections(detections: Sequence[DetectionRecord], path: PathLike):
    path = Path(path)
    with path.open("w", encoding="utf-8", newline="\n") as fh:
        for d in detections:
            record = {
                "frame": d.frame,
                "det_index": d.det_index,
                "bbox": list(d.bbox.as_tuple()),
                "confidence": d.confidence,
            }
            if d.crop is not None:
                record["crop"] = d.crop
            fh.write(json.dumps(record) + "\n")


@dataclass(frozen=True)
class ScoreRecord:
    """Similarity of one gallery item (detection) to one query."""

    query_id: str
    item_id: str
    similarity: float


def parse_scores(path: PathLike) -> list[ScoreRecord]:
    """Parse the similarity-scores JSON Lines file.

    Records: ``{"query_id": "...", "item_id": "f{frame}_d{det_index}",
    "similarity": float in [0, 1]}``; (query_id, item_id) must be unique.
    """
    path = Path(path)
    scores = []
    seen: set[tuple[str, str]] = set()
    for line_no, record in _iter_jsonl(path):
        where = f"{path}:{line_no}"
        try:
            query_id = record["query_id"]
            item_id = record["item_id"]
            similarity = record["similarity"]
        except KeyError as exc:
            raise ValidationError(f"{where}: missing key {exc}") from exc
        if not isinstance(query_id, str) or not isinstance(item_id, str):
            raise ValidationError(f"{where}: query_id and item_id must be strings")
        if not isinstance(similarity, (int, float)):
            raise ValidationError(f"{where}: similarity must be a number")
        if not 0.0 <= similarity <= 1.0:
            raise ValidationError(
                f"{where}: similarity {similarity} outside [0, 1] for item {item_id}"
            )
        key = (query_id, item_id)
        if key in seen:
            raise ValidationError(
                f"{where}: duplicate score for query {query_id}, item {item_id}"
            )
        seen.add(key)
        scores.append(
            ScoreRecord(query_id=query_id, item_id=item_id, similarity=float(similarity))
        )
    return scores


def write_scores(scores: Sequence[ScoreRecord], path: PathLike):
    path = Path(path)
    with path.open("w", encoding="utf-8", newline="\n") as fh:
        for s in scores:
            fh.write(
                json.dumps(
                    {
                        "query_id": s.query_id,
                        "item_id": s.item_id,
                        "similarity": s.similarity,
                    }
                )
                + "\n"
            )


@dataclass(frozen=True)
class Segment:
    """Half-open frame interval [start_frame, end_frame) of a video split."""

    index: int
    start_frame: int
    end_frame: int

    def __post_init__(self):
        if self.start_frame < 0 or self.end_frame <= self.start_frame:
            raise ValidationError(
                f"invalid segment [{self.start_frame}, {self.end_frame})"
            )

    @property
    def num_frames(self) -> int:
        return self.end_frame - self.start_frame


def segment_timeline(total_frames: int, tau: int) -> list[Segment]:
    """Split [0, total_frames) into ceil(total/tau) segments of tau frames.

    The last segment may be shorter; it is kept rather than dropped so
    every frame stays in the evaluation universe.
    """
    if total_frames < 1:
        raise ValidationError(f"total_frames must be >= 1, got {total_frames}")
    if tau < 1:
        raise ValidationError(f"tau must be >= 1, got {tau}")
    count = math.ceil(total_frames / tau)
    return [
        Segment(
            index=i,
            start_frame=i * tau,
            end_frame=min((i + 1) * tau, total_frames),
        )
        for i in range(count)
    ]


def query_presence(
    tracks: Sequence[GroundTruthTrack], query_id: str, segment: Segment
) -> bool:
    """True iff the query appears in at least one frame of the segment."""
    return any(
        t.identity == query_id
        and max(t.first_frame, segment.start_frame) < min(t.end_frame, segment.end_frame)
        for t in tracks
    )


@dataclass(frozen=True)
class LabeledDetection:
    """A detection with the ground-truth identity attached by IoU labeling."""

    detection: DetectionRecord
    true_identity: str

    @property
    def item_id(self) -> str:
        return self.detection.item_id


@dataclass(frozen=True)
class LabelCoverage:
    """How many detections got a real label vs. the fallback labels."""

    labeled: int = 0
    unknown: int = 0
    unlabelable: int = 0

    @property
    def total(self) -> int:
        return self.labeled + self.unknown + self.unlabelable


def label_gallery(
    detections: Sequence[DetectionRecord],
    tracks: Sequence[GroundTruthTrack],
    iou_threshold: float = 0.5,
) -> tuple[list[LabeledDetection], LabelCoverage]:
    """Attach ground-truth identities to detections by best-IoU matching.

    A detection takes the identity of the highest-IoU ground-truth box on
    its frame when that IoU >= iou_threshold (ties keep the earlier track).
    Below threshold it is labeled "unknown", unless a compact-form track
    covers the frame without exposing a box there, in which case the ground
    truth is incomplete and the detection is labeled "unlabelable".
    """
    labeled = []
    n_labeled = n_unknown = n_unlabelable = 0
    for det in detections:
        best_identity = None
        best_iou = 0.0
        blind = False
        for track in tracks:
            box = track.box_at(det.frame)
            if box is None:
                if not track.has_per_frame_boxes and track.covers(det.frame):
                    blind = True
                continue
            v = iou(det.bbox, box)
            if v > best_iou:
                best_identity, best_iou = track.identity, v
        if best_identity is not None and best_iou >= iou_threshold:
            identity = best_identity
            n_labeled += 1
        elif blind:
            identity = UNLABELABLE_IDENTITY
            n_unlabelable += 1
        else:
            identity = UNKNOWN_IDENTITY
            n_unknown += 1
        labeled.append(LabeledDetection(detection=det, true_identity=identity))
    return labeled, LabelCoverage(
        labeled=n_labeled, unknown=n_unknown, unlabelable=n_unlabelable
    )


def full_frame_boxes(
    tracks: Sequence[GroundTruthTrack],
) -> dict[int, list[GroundTruthBox]]:
    """Per-frame ground-truth boxes for detection evaluation (full form only)."""
    boxes: dict[int, list[GroundTruthBox]] = {}
    for track in tracks:
        if track.frame_boxes is None:
            raise ValidationError(
                f"track {track.identity} has no per-frame boxes; detection "
                "evaluation needs the full ground-truth form"
            )
        for frame in sorted(track.frame_boxes):
            boxes.setdefault(frame, []).append(
                GroundTruthBox(identity=track.identity, bbox=track.frame_boxes[frame])
            )
    return boxes


@dataclass(frozen=True)
class DatasetCapabilities:
    """Which evaluations the loaded ground-truth file can support."""

    presence_eval: bool
    detection_eval: bool
    complete_gallery_labeling: bool


def dataset_capabilities(tracks: Sequence[GroundTruthTrack]) -> DatasetCapabilities:
    all_full = all(t.has_per_frame_boxes for t in tracks)
    return DatasetCapabilities(
        presence_eval=True,
        detection_eval=all_full,
        complete_gallery_labeling=all_full,
    )


def derive_total_frames(
    tracks: Sequence[GroundTruthTrack],
    detections: Sequence[DetectionRecord] = (),
) -> int:
    """Smallest frame count covering every track and detection."""
    last = 0
    for t in tracks:
        last = max(last, t.end_frame)
    for d in detections:
        last = max(last, d.frame + 1)
    if last == 0:
        raise ValidationError(
            "cannot derive the frame count from empty ground truth and detections"
        )
    return last


def iter_tracks_for_identity(
    tracks: Iterable[GroundTruthTrack], identity: str
) -> list[GroundTruthTrack]:
    return [t for t in tracks if t.identity == identity]
