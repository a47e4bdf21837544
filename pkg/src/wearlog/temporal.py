"""Time primitives: half-open intervals, interval joins, scalar aggregation.

Timestamps are timezone-aware ``datetime`` objects. Ingest normalizes every
timestamp to one configured home timezone, so wall-clock dates elsewhere in
the package can be read straight off the datetime.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass
from datetime import datetime, timedelta
from enum import Enum
from typing import Sequence, TypeVar

from .errors import UnsortedInput

V = TypeVar("V")


@dataclass(frozen=True, order=True)
class Interval:
    """Half-open time interval [start, end); zero length is allowed.

    A point t is inside iff start <= t < end, so back-to-back intervals
    never both claim a boundary sample.
    """

    start: datetime
    end: datetime

    def __post_init__(self):
        if self.start > self.end:
            raise ValueError(f"interval start {self.start} is after end {self.end}")

    def contains(self, t: datetime) -> bool:
        return self.start <= t < self.end

    def overlaps(self, other: "Interval") -> bool:
        return self.start < other.end and other.start < self.end

    @property
    def duration(self) -> timedelta:
        return self.end - self.start

    def duration_minutes(self) -> float:
        return (self.end - self.start).total_seconds() / 60.0


def interval_contains(iv: Interval, t: datetime) -> bool:
    """True iff iv.start <= t < iv.end (half-open membership)."""
    return iv.contains(t)


class Aggregation(str, Enum):
    """How a list of matched sample values collapses to one number."""

    MEDIAN = "median"
    MEAN = "mean"
    MIN = "min"
    MAX = "max"
    COUNT = "count"


def median(values: Sequence[float]) -> float:
    """Sort-based median; even-length lists yield the mean of the middle pair."""
    ordered = sorted(values)
    n = len(ordered)
    if n == 0:
        raise ValueError("median of empty sequence")
    mid = n // 2
    if n % 2:
        return ordered[mid]
    return (ordered[mid - 1] + ordered[mid]) / 2


def aggregate(values: Sequence[float], method: Aggregation):
    """Collapse values per the chosen method; empty input yields None."""
    if not values:
        return None
    if method is Aggregation.MEDIAN:
        return median(values)
    if method is Aggregation.MEAN:
        return sum(values) / len(values)
    if method is Aggregation.MIN:
        return min(values)
    if method is Aggregation.MAX:
        return max(values)
    if method is Aggregation.COUNT:
        return len(values)
    raise ValueError(f"unknown aggregation {method!r}")


def interval_join(
    intervals: Sequence[Interval],
    points: Sequence[tuple[datetime, V]],
) -> dict[int, list[V]]:
    """Match each timestamped point to every interval that contains it.

    Both inputs must be sorted ascending (intervals by start, points by
    instant); UnsortedInput is raised otherwise. Intervals may overlap, so
    one point can land in several. The result maps interval index to the
    matched values in point order and is equivalent to testing every
    (interval, point) pair.
    """
    result: dict[int, list[V]] = {i: [] for i in range(len(intervals))}
    for i in range(1, len(intervals)):
        if intervals[i].start < intervals[i - 1].start:
            raise UnsortedInput(f"intervals out of order at index {i}")

    active: list[tuple[datetime, int]] = []  # (end, index) min-heap
    upcoming = 0
    previous: datetime | None = None
    for t, value in points:
        if previous is not None and t < previous:
            raise UnsortedInput(f"points out of order at instant {t}")
        previous = t
        while upcoming < len(intervals) and intervals[upcoming].start <= t:
            heapq.heappush(active, (intervals[upcoming].end, upcoming))
            upcoming += 1
        while active and active[0][0] <= t:
            heapq.heappop(active)
        for _, idx in active:
            result[idx].append(value)
    return result
