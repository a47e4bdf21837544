"""Streaming parser for the Apple Health export XML.

Extracts HRV (SDNN) samples, resting heart rate, sleep episodes and workouts
from ``export.xml``. Real exports reach gigabytes, so the parser is
event-driven: it walks the document once and never keeps more than the
record currently being converted.
"""

from __future__ import annotations

import math
import xml.etree.ElementTree as ET
from bisect import bisect_left
from dataclasses import dataclass, field, replace
from datetime import datetime, timedelta, timezone
from enum import Enum
from pathlib import Path
from typing import BinaryIO, Callable, Iterable
from zoneinfo import ZoneInfo

from .errors import MalformedRecord, MalformedXml
from .temporal import Interval

ROOT_TAG = "HealthData"
TYPE_HRV_SDNN = "HKQuantityTypeIdentifierHeartRateVariabilitySDNN"
TYPE_RESTING_HR = "HKQuantityTypeIdentifierRestingHeartRate"
TYPE_SLEEP = "HKCategoryTypeIdentifierSleepAnalysis"
WORKOUT_TYPE_PREFIX = "HKWorkoutActivityType"


class SampleKind(Enum):
    HRV_SDNN = "hrv_sdnn"
    RESTING_HEART_RATE = "resting_heart_rate"


class SleepStage(Enum):
    AWAKE = "Awake"
    CORE = "Core"
    DEEP = "Deep"
    REM = "Rem"
    IN_BED_UNSPECIFIED = "InBedUnspecified"


#: Stages that count toward total sleep time; InBedUnspecified is excluded
#: so ambiguous records never inflate sleep totals.
ASLEEP_STAGES = frozenset({SleepStage.CORE, SleepStage.DEEP, SleepStage.REM})

SLEEP_STAGE_BY_VALUE = {
    "HKCategoryValueSleepAnalysisAsleepDeep": SleepStage.DEEP,
    "HKCategoryValueSleepAnalysisAsleepCore": SleepStage.CORE,
    "HKCategoryValueSleepAnalysisAsleepREM": SleepStage.REM,
    "HKCategoryValueSleepAnalysisAwake": SleepStage.AWAKE,
    "HKCategoryValueSleepAnalysisInBed": SleepStage.IN_BED_UNSPECIFIED,
    "HKCategoryValueSleepAnalysisAsleepUnspecified": SleepStage.IN_BED_UNSPECIFIED,
}


@dataclass(frozen=True)
class HealthSample:
    """One timestamped physiological measurement (ms for HRV, bpm for RHR)."""

    kind: SampleKind
    at: datetime
    value: float
    source: str


@dataclass(frozen=True)
class SleepEpisode:
    interval: Interval
    stage: SleepStage
    source: str


@dataclass(frozen=True)
class Workout:
    interval: Interval
    activity: str
    source: str


@dataclass
class HealthBundle:
    """Everything extracted from one export, each list sorted by start time."""

    samples: list[HealthSample] = field(default_factory=list)
    sleep: list[SleepEpisode] = field(default_factory=list)
    workouts: list[Workout] = field(default_factory=list)
    skipped_records: int = 0
    ignored_records: int = 0
    date_range: Interval | None = None

    def hrv_samples(self) -> list[HealthSample]:
        return [s for s in self.samples if s.kind is SampleKind.HRV_SDNN]

    def resting_hr_samples(self) -> list[HealthSample]:
        return [s for s in self.samples if s.kind is SampleKind.RESTING_HEART_RATE]


#: Bytes fed to the XML parser per read. Smaller chunks tighten the bound on
#: how many parsed-ahead elements can exist at once; the default balances
#: throughput against lookahead.
DEFAULT_CHUNK_BYTES = 64 * 1024


@dataclass(frozen=True)
class IngestConfig:
    home_tz: ZoneInfo
    strict: bool = False
    chunk_bytes: int = DEFAULT_CHUNK_BYTES


_OFFSET_CACHE: dict[str, timezone] = {}


def parse_apple_timestamp(text: str) -> datetime:
    """Parse Apple's ``YYYY-MM-DD HH:MM:SS +HHMM`` format, keeping the offset."""
    try:
        tz = _OFFSET_CACHE.get(text[20:])
        if tz is None:
            sign = -1 if text[20] == "-" else 1
            tz = timezone(sign * timedelta(hours=int(text[21:23]), minutes=int(text[23:25])))
            _OFFSET_CACHE[text[20:]] = tz
        return datetime(
            int(text[0:4]), int(text[5:7]), int(text[8:10]),
            int(text[11:13]), int(text[14:16]), int(text[17:19]),
            tzinfo=tz,
        )
    except (ValueError, IndexError):
        pass
    try:
        return datetime.strptime(text, "%Y-%m-%d %H:%M:%S %z")
    except ValueError as exc:
        raise MalformedRecord(f"bad timestamp {text!r}") from exc


def parse_health_export(
    source: str | Path | BinaryIO,
    config: IngestConfig,
    *,
    observer: Callable[[object, int], None] | None = None,
) -> HealthBundle:
    """Single forward pass over an Apple Health export.

    Recognized elements become domain objects; other record types are
    counted as ignored. Records that fail conversion are skipped and counted
    (or fatal in strict mode). ``observer``, when given, is called once per
    emitted object with ``(object, retained_element_count)`` in document
    order; the retained count stays at one because each element is released
    as soon as it has been converted.
    """
    if isinstance(source, (str, Path)):
        with open(source, "rb") as stream:
            return _parse_stream(stream, config, observer)
    return _parse_stream(source, config, observer)


def _parse_stream(stream, config: IngestConfig, observer) -> HealthBundle:
    bundle = HealthBundle()
    first_start: datetime | None = None
    last_end: datetime | None = None
    home_tz = config.home_tz
    root = None
    depth = 0

    parser = ET.XMLPullParser(events=("start", "end"))
    try:
        while True:
            data = stream.read(config.chunk_bytes)
            if not data:
                parser.close()
                break
            parser.feed(data)
            for event, elem in parser.read_events():
                if event == "start":
                    depth += 1
                    if root is None:
                        root = elem
                        if root.tag != ROOT_TAG:
                            raise MalformedXml(f"unexpected root element {root.tag!r}")
                    continue
                depth -= 1
                if depth != 1:
                    continue  # only direct children of the root are records

                obj = None
                start = end = None
                try:
                    if elem.tag == "Record":
                        rtype = elem.get("type")
                        if rtype == TYPE_HRV_SDNN:
                            obj = _quantity_sample(elem, SampleKind.HRV_SDNN, home_tz)
                            start = end = obj.at
                        elif rtype == TYPE_RESTING_HR:
                            obj = _quantity_sample(elem, SampleKind.RESTING_HEART_RATE, home_tz)
                            start = end = obj.at
                        elif rtype == TYPE_SLEEP:
                            obj = _sleep_episode(elem, home_tz)
                            start, end = obj.interval.start, obj.interval.end
                        elif rtype is None:
                            raise MalformedRecord("Record without type attribute")
                        else:
                            bundle.ignored_records += 1
                    elif elem.tag == "Workout":
                        obj = _workout(elem, home_tz)
                        start, end = obj.interval.start, obj.interval.end
                except MalformedRecord:
                    if config.strict:
                        raise
                    bundle.skipped_records += 1

                if obj is not None:
                    if isinstance(obj, HealthSample):
                        bundle.samples.append(obj)
                    elif isinstance(obj, SleepEpisode):
                        bundle.sleep.append(obj)
                    else:
                        bundle.workouts.append(obj)
                    if first_start is None or start < first_start:
                        first_start = start
                    if last_end is None or end > last_end:
                        last_end = end
                    if observer is not None:
                        observer(obj, len(root))

                root.clear()  # release the finished subtree; memory stays flat
    except ET.ParseError as exc:
        raise MalformedXml(str(exc)) from exc
    if root is None:
        raise MalformedXml("empty document")

    bundle.samples.sort(key=lambda s: s.at)
    bundle.sleep.sort(key=lambda e: (e.interval.start, e.interval.end))
    bundle.workouts.sort(key=lambda w: (w.interval.start, w.interval.end))
    if first_start is not None:
        bundle.date_range = Interval(first_start, last_end)
    return bundle


def _required(elem, name: str) -> str:
    value = elem.get(name)
    if value is None:
        raise MalformedRecord(f"{elem.tag} missing {name!r}")
    return value


def _quantity_sample(elem, kind: SampleKind, home_tz) -> HealthSample:
    at = parse_apple_timestamp(_required(elem, "startDate")).astimezone(home_tz)
    try:
        value = float(_required(elem, "value"))
    except ValueError as exc:
        raise MalformedRecord(f"non-numeric value {elem.get('value')!r}") from exc
    if kind is SampleKind.HRV_SDNN:
        if not math.isfinite(value) or value <= 0:
            raise MalformedRecord(f"HRV SDNN out of range: {value}")
    else:
        if not 20 < value < 250:
            raise MalformedRecord(f"resting heart rate out of range: {value}")
    return HealthSample(kind, at, value, elem.get("sourceName", ""))


def _sleep_episode(elem, home_tz) -> SleepEpisode:
    start = parse_apple_timestamp(_required(elem, "startDate")).astimezone(home_tz)
    end = parse_apple_timestamp(_required(elem, "endDate")).astimezone(home_tz)
    if start >= end:
        raise MalformedRecord("sleep episode with non-positive duration")
    stage = SLEEP_STAGE_BY_VALUE.get(
        elem.get("value", ""), SleepStage.IN_BED_UNSPECIFIED
    )
    return SleepEpisode(Interval(start, end), stage, elem.get("sourceName", ""))


def _workout(elem, home_tz) -> Workout:
    start = parse_apple_timestamp(_required(elem, "startDate")).astimezone(home_tz)
    end = parse_apple_timestamp(_required(elem, "endDate")).astimezone(home_tz)
    if start >= end:
        raise MalformedRecord("workout with non-positive duration")
    activity = _required(elem, "workoutActivityType")
    if activity.startswith(WORKOUT_TYPE_PREFIX):
        activity = activity[len(WORKOUT_TYPE_PREFIX):]
    return Workout(Interval(start, end), activity, elem.get("sourceName", ""))


@dataclass(frozen=True)
class SleepReconcilePolicy:
    """Which source wins on overlap, and how close same-stage episodes merge.

    ``preferred_sources`` are substring patterns in priority order; a source
    matching an earlier pattern outranks later ones, and sources matching no
    pattern rank last. Defaults prefer the watch because phone and watch
    both log sleep and the watch data is the richer feed.
    """

    preferred_sources: tuple[str, ...] = ("Watch",)
    merge_tolerance_s: float = 60.0

    def rank(self, source: str) -> int:
        lowered = source.lower()
        for i, pattern in enumerate(self.preferred_sources):
            if pattern.lower() in lowered:
                return i
        return len(self.preferred_sources)


def reconcile_sleep(
    episodes: Iterable[SleepEpisode],
    policy: SleepReconcilePolicy = SleepReconcilePolicy(),
) -> list[SleepEpisode]:
    """Resolve overlaps between sources and merge fragmented episodes.

    Output episodes are pairwise disjoint: where episodes overlap, the
    preferred source keeps its interval and lower-ranked episodes are
    truncated to the uncovered remainder (or dropped entirely). Afterwards,
    same-source same-stage neighbours separated by at most the merge
    tolerance are fused into one episode.
    """
    ranked = sorted(
        episodes,
        key=lambda e: (policy.rank(e.source), e.interval.start, e.interval.end),
    )
    accepted: list[SleepEpisode] = []  # sorted by start, pairwise disjoint
    starts: list[datetime] = []
    for episode in ranked:
        for piece in _uncovered(episode.interval, accepted, starts):
            if piece.start < piece.end:
                idx = bisect_left(starts, piece.start)
                accepted.insert(idx, replace(episode, interval=piece))
                starts.insert(idx, piece.start)
    return _merge_adjacent(accepted, policy.merge_tolerance_s)


def _uncovered(iv: Interval, accepted: list[SleepEpisode], starts) -> list[Interval]:
    """Parts of iv not covered by the accepted (disjoint, sorted) episodes."""
    idx = bisect_left(starts, iv.start)
    if idx > 0 and accepted[idx - 1].interval.end > iv.start:
        idx -= 1
    pieces: list[Interval] = []
    cursor = iv.start
    while idx < len(accepted) and accepted[idx].interval.start < iv.end:
        blocker = accepted[idx].interval
        if blocker.start > cursor:
            pieces.append(Interval(cursor, blocker.start))
        if blocker.end > cursor:
            cursor = blocker.end
        idx += 1
    if cursor < iv.end:
        pieces.append(Interval(cursor, iv.end))
    return pieces


def _merge_adjacent(episodes: list[SleepEpisode], tolerance_s: float) -> list[SleepEpisode]:
    merged: list[SleepEpisode] = []
    for episode in episodes:
        if merged:
            last = merged[-1]
            gap = (episode.interval.start - last.interval.end).total_seconds()
            if (
                episode.source == last.source
                and episode.stage == last.stage
                and 0 <= gap <= tolerance_s
            ):
                merged[-1] = replace(
                    last, interval=Interval(last.interval.start, episode.interval.end)
                )
                continue
        merged.append(episode)
    return merged
