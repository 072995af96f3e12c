"""Cumulative Matching Characteristics over ranked galleries.

CMC(k) is the fraction of queries whose first correct-identity gallery item
appears at rank <= k. Queries with no correct item anywhere count in the
denominator (they contribute 0 at every k) and are flagged so closed-set
users can filter them out up front.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from .errors import ValidationError


@dataclass(frozen=True)
class RankedQueryResult:
    """One query with its gallery sorted most-to-least similar.

    ranked_gallery entries are (identity, similarity) pairs; ties keep the
    order in which they were supplied.
    """

    query_identity: str
    ranked_gallery: tuple[tuple[str, float], ...]

    def __post_init__(self):
        sims = [s for _, s in self.ranked_gallery]
        for s in sims:
            if not 0.0 <= s <= 1.0:
                raise ValidationError(
                    f"similarity {s} outside [0, 1] for query {self.query_identity}"
                )
        if any(a < b for a, b in zip(sims, sims[1:])):
            raise ValidationError(
                f"gallery for query {self.query_identity} is not sorted by "
                "descending similarity"
            )

    @classmethod
    def from_scores(
        cls, query_identity: str, scored: Sequence[tuple[str, float]]
    ) -> "RankedQueryResult":
        """Build a result from unsorted (identity, similarity) pairs (stable sort)."""
        ranked = sorted(
            enumerate(scored), key=lambda pair: (-pair[1][1], pair[0])
        )
        return cls(
            query_identity=query_identity,
            ranked_gallery=tuple(entry for _, entry in ranked),
        )

    def first_match_rank(self) -> int | None:
        """1-based rank of the first correct-identity item, None if absent."""
        for rank, (identity, _) in enumerate(self.ranked_gallery, start=1):
            if identity == self.query_identity:
                return rank
        return None


@dataclass(frozen=True)
class CmcCurve:
    """CMC values indexed by rank cutoff k = 1..max_rank (non-decreasing).

    An empty query set yields the undefined marker: no values, defined False.
    never_matched lists the queries with no correct gallery item.
    """

    values: tuple[float, ...]
    num_queries: int
    never_matched: tuple[str, ...] = ()

    @property
    def defined(self) -> bool:
        return self.num_queries > 0


def cmc(results: Sequence[RankedQueryResult], max_rank: int) -> CmcCurve:
    """Compute the CMC curve of a set of ranked query results.

    max_rank must not exceed the smallest gallery, so every cutoff is
    meaningful for every query.
    """
    if max_rank < 1:
        raise ValidationError(f"max_rank must be >= 1, got {max_rank}")
    if not results:
        return CmcCurve(values=(), num_queries=0)
    smallest = min(len(r.ranked_gallery) for r in results)
    if max_rank > smallest:
        raise ValidationError(
            f"max_rank {max_rank} exceeds the smallest gallery ({smallest} items)"
        )
    first_ranks = []
    never_matched = []
    for result in results:
        rank = result.first_match_rank()
        first_ranks.append(rank)
        if rank is None:
            never_matched.append(result.query_identity)
    values = tuple(
        sum(1 for r in first_ranks if r is not None and r <= k) / len(results)
        for k in range(1, max_rank + 1)
    )
    return CmcCurve(
        values=values,
        num_queries=len(results),
        never_matched=tuple(never_matched),
    )
