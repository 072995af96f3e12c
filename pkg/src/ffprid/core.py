"""Per-segment re-identification outcomes and the finding-rate / true-validation-rate metrics.

Every {query, segment} evaluation falls in exactly one of five categories,
driven by two facts: whether the query is actually present in the segment,
and whether the highest gallery similarity reaches the alert threshold
(and, if shown, whether the query is among the top candidates).
"""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

from .errors import ValidationError
from .geometry import BoundingBox


@dataclass(frozen=True)
class EvalParams:
    """The three user-tunable framework parameters.

    tau:  frames per video segment (>= 1)
    beta: similarity threshold for raising an alert, in [0, 1]
    eta:  number of top-ranked candidates shown to the operator (>= 1)
    """

    tau: int
    beta: float
    eta: int

    def __post_init__(self):
        if self.tau < 1:
            raise ValidationError(f"tau must be >= 1, got {self.tau}")
        if not 0.0 <= self.beta <= 1.0:
            raise ValidationError(f"beta must be in [0, 1], got {self.beta}")
        if self.eta < 1:
            raise ValidationError(f"eta must be >= 1, got {self.eta}")


@dataclass(frozen=True)
class ScoredGalleryItem:
    """A detected person crop within a segment, scored against one query.

    item_id follows ``f{frame}_d{det_index}``. true_identity is the
    ground-truth label attached by gallery labeling (None when the item was
    never labeled).
    """

    item_id: str
    frame: int
    bbox: BoundingBox
    similarity: float
    true_identity: Optional[str] = None
    crop: Optional[str] = None


class Outcome(enum.Enum):
    """The five mutually exclusive {query, segment} outcomes."""

    TRUE_CALL = "TC"
    TRUE_MISSED_CALL = "TMC"
    FALSE_SILENCE = "FS"
    FALSE_CALL = "FC"
    TRUE_SILENCE = "TS"


ALERT_OUTCOMES = frozenset(
    {Outcome.TRUE_CALL, Outcome.TRUE_MISSED_CALL, Outcome.FALSE_CALL}
)


@dataclass(frozen=True)
class OutcomeCounts:
    tc: int = 0
    tmc: int = 0
    fs: int = 0
    fc: int = 0
    ts: int = 0

    def __post_init__(self):
        for name in ("tc", "tmc", "fs", "fc", "ts"):
            if getattr(self, name) < 0:
                raise ValidationError(f"negative outcome count {name}")

    @property
    def total(self) -> int:
        return self.tc + self.tmc + self.fs + self.fc + self.ts

    @property
    def alerts(self) -> int:
        """Number of operator solicitations."""
        return self.tc + self.tmc + self.fc

    @property
    def present(self) -> int:
        """Number of pairs where the query was actually in the segment."""
        return self.tc + self.tmc + self.fs

    def __add__(self, other: "OutcomeCounts") -> "OutcomeCounts":
        return OutcomeCounts(
            tc=self.tc + other.tc,
            tmc=self.tmc + other.tmc,
            fs=self.fs + other.fs,
            fc=self.fc + other.fc,
            ts=self.ts + other.ts,
        )


@dataclass(frozen=True)
class MetricValue:
    """A rate in [0, 1], or explicitly undefined when its denominator is empty.

    Undefined is deliberately distinct from 0: "no data" must never read as
    "total failure" in sweep curves.
    """

    value: Optional[float] = None

    def __post_init__(self):
        if self.value is not None and not 0.0 <= self.value <= 1.0:
            raise ValidationError(f"metric value {self.value} outside [0, 1]")

    @property
    def defined(self) -> bool:
        return self.value is not None


_ITEM_ID_RE = re.compile(r"^f\d+_d(\d+)$")


def _rank_key(position: int, item: ScoredGalleryItem) -> tuple:
    # similarity desc, frame asc, detection index asc; falls back to input
    # position when the item id does not carry a detection index.
    m = _ITEM_ID_RE.match(item.item_id)
    det_index = int(m.group(1)) if m else position
    return (-item.similarity, item.frame, det_index)


def rank_gallery(gallery: Sequence[ScoredGalleryItem]) -> list[ScoredGalleryItem]:
    """Deterministic ranking: similarity desc, ties by frame then detection index."""
    return [
        item
        for _, item in sorted(
            enumerate(gallery), key=lambda pair: _rank_key(pair[0], pair[1])
        )
    ]


def classify_outcome(
    query_present: bool,
    gallery: Sequence[ScoredGalleryItem],
    query_identity: str,
    params: EvalParams,
) -> Outcome:
    """Classify one {query, segment} evaluation into its outcome category.

    An alert is raised iff the gallery is non-empty and its maximum
    similarity is >= params.beta (an empty gallery has no score to clear the
    threshold, hence silence). On alert, the outcome depends on whether any
    of the top params.eta ranked items carries the query identity.
    """
    for item in gallery:
        if not 0.0 <= item.similarity <= 1.0:
            raise ValidationError(
                f"similarity {item.similarity} outside [0, 1] for item {item.item_id}"
            )
    alert = bool(gallery) and max(item.similarity for item in gallery) >= params.beta
    if not alert:
        return Outcome.FALSE_SILENCE if query_present else Outcome.TRUE_SILENCE
    if not query_present:
        return Outcome.FALSE_CALL
    top = rank_gallery(gallery)[: params.eta]
    if any(item.true_identity == query_identity for item in top):
        return Outcome.TRUE_CALL
    return Outcome.TRUE_MISSED_CALL


def aggregate(outcomes: Iterable[Outcome]) -> OutcomeCounts:
    """Tally outcomes into counts; the total equals the number of inputs."""
    tally = {outcome: 0 for outcome in Outcome}
    for outcome in outcomes:
        tally[outcome] += 1
    return OutcomeCounts(
        tc=tally[Outcome.TRUE_CALL],
        tmc=tally[Outcome.TRUE_MISSED_CALL],
        fs=tally[Outcome.FALSE_SILENCE],
        fc=tally[Outcome.FALSE_CALL],
        ts=tally[Outcome.TRUE_SILENCE],
    )


def finding_rate(counts: OutcomeCounts) -> MetricValue:
    """TC / (TC + TMC + FS): how often a present query led to a successful find."""
    denom = counts.tc + counts.tmc + counts.fs
    if denom == 0:
        return MetricValue(None)
    return MetricValue(counts.tc / denom)


def true_validation_rate(counts: OutcomeCounts) -> MetricValue:
    """TC / (TC + TMC + FC): how often a raised alert actually showed the query."""
    denom = counts.tc + counts.tmc + counts.fc
    if denom == 0:
        return MetricValue(None)
    return MetricValue(counts.tc / denom)
