"""Build day-cases from calendar events and enrich them with wearable data.

Three strategies, applied independently and in any combination:

1. event attributes — each calendar event gets the aggregate of the HRV
   samples recorded during its time window;
2. case attributes — each day gets resting heart rate and sleep totals for
   the night attributed to it;
3. derived events — workouts and (consolidated) sleep become events of
   their own.

A case is one home-timezone calendar day; midnight-crossing events stay
with their start date.
"""

from __future__ import annotations

import operator
import re
from bisect import bisect_left
from dataclasses import dataclass, field
from datetime import date, datetime, time, timedelta
from enum import Enum
from typing import Iterable, Sequence
from zoneinfo import ZoneInfo

from .calendar_ingest import CalendarEvent, EventCategory
from .errors import UnknownAttribute
from .health_ingest import ASLEEP_STAGES, HealthBundle, SleepStage
from .temporal import Aggregation, Interval, aggregate, interval_join

ATTR_HRV_MEDIAN = "hrv_median_ms"
ATTR_HRV_COUNT = "hrv_sample_count"
ATTR_RESTING_HR = "resting_hr_bpm"
ATTR_TOTAL_SLEEP = "total_sleep_min"
ATTR_AWAKE = "awake_min"
ATTR_DEEP_SLEEP = "deep_sleep_min"
ATTR_NIGHT_MISSING = "night_missing"
ATTR_IS_WORKDAY = "is_workday"

SLEEP_ACTIVITY = "Sleep"
STAGE_ACTIVITY = {
    SleepStage.DEEP: "Deep Sleep",
    SleepStage.CORE: "Core Sleep",
    SleepStage.REM: "REM Sleep",
    SleepStage.AWAKE: "Awake",
}


class EventOrigin(str, Enum):
    CALENDAR = "Calendar"
    WORKOUT = "Workout"
    SLEEP = "Sleep"


@dataclass
class EnrichedEvent:
    activity: str
    interval: Interval
    origin: EventOrigin
    category: EventCategory | None = None
    attributes: dict[str, object] = field(default_factory=dict)

    def sort_key(self):
        return (self.interval.start, self.interval.end, self.activity)


@dataclass
class Case:
    """One day of the monitored person's life."""

    case_id: date
    events: list[EnrichedEvent] = field(default_factory=list)
    attributes: dict[str, object] = field(default_factory=dict)
    is_workday: bool = False

    def sort_events(self) -> None:
        self.events.sort(key=EnrichedEvent.sort_key)

    def attribute(self, name: str):
        if name == ATTR_IS_WORKDAY:
            return self.is_workday
        return self.attributes.get(name)


@dataclass(frozen=True)
class MatchStats:
    total_events: int
    matched_events: int

    def __post_init__(self):
        if self.matched_events > self.total_events:
            raise ValueError("matched_events exceeds total_events")


@dataclass
class LogSchema:
    event_attrs: dict[str, str] = field(default_factory=dict)
    case_attrs: dict[str, str] = field(default_factory=dict)


@dataclass
class EventLog:
    cases: list[Case] = field(default_factory=list)
    match_stats: MatchStats = MatchStats(0, 0)
    schema: LogSchema = field(default_factory=LogSchema)

    @property
    def total_event_count(self) -> int:
        return sum(len(c.events) for c in self.cases)


_TYPE_ORDER = {"boolean": 0, "int": 1, "float": 2, "string": 3}


def _type_name(value) -> str:
    if isinstance(value, bool):
        return "boolean"
    if isinstance(value, int):
        return "int"
    if isinstance(value, float):
        return "float"
    return "string"


def _widen(current: str | None, incoming: str) -> str:
    if current is None or current == incoming:
        return incoming
    if {current, incoming} == {"int", "float"}:
        return "float"
    return "string"


def build_event_log(cases: list[Case], match_stats: MatchStats) -> EventLog:
    """Assemble the log and declare every attribute in use in the schema."""
    schema = LogSchema()
    for case in cases:
        for name, value in case.attributes.items():
            schema.case_attrs[name] = _widen(schema.case_attrs.get(name), _type_name(value))
        for event in case.events:
            for name, value in event.attributes.items():
                schema.event_attrs[name] = _widen(
                    schema.event_attrs.get(name), _type_name(value)
                )
    schema.case_attrs[ATTR_IS_WORKDAY] = "boolean"
    return EventLog(cases=cases, match_stats=match_stats, schema=schema)


def recompute_match_stats(cases: Iterable[Case]) -> MatchStats:
    total = matched = 0
    for case in cases:
        for event in case.events:
            if event.origin is EventOrigin.CALENDAR:
                total += 1
                if event.attributes.get(ATTR_HRV_COUNT, 0) > 0:
                    matched += 1
    return MatchStats(total, matched)


# --- case segmentation ------------------------------------------------------

def segment_cases(
    events: Sequence[CalendarEvent],
    *,
    has_category_rules: bool = False,
) -> list[Case]:
    """One case per home-timezone date with at least one event.

    Each event is assigned to the date of its start instant. A case counts
    as a workday when it has a Work-categorized event, or any event at all
    when no category rules are configured.
    """
    by_date: dict[date, Case] = {}
    for event in events:
        if event.all_day:
            raise ValueError("segment_cases expects timed events; filter all-day first")
        day = event.interval.start.date()
        case = by_date.get(day)
        if case is None:
            case = by_date[day] = Case(case_id=day)
        case.events.append(
            EnrichedEvent(
                activity=event.subject,
                interval=event.interval,
                origin=EventOrigin.CALENDAR,
                category=event.category,
            )
        )
    cases = [by_date[day] for day in sorted(by_date)]
    for case in cases:
        case.sort_events()
        if has_category_rules:
            case.is_workday = any(
                e.category is EventCategory.WORK for e in case.events
            )
        else:
            case.is_workday = bool(case.events)
    return cases


# --- strategy 1: event attributes -------------------------------------------

def enrich_event_attributes(
    cases: list[Case],
    hrv_samples,
    method: Aggregation = Aggregation.MEDIAN,
) -> MatchStats:
    """Attach the aggregated HRV of each calendar event's time window.

    Events without any overlapping sample keep a zero sample count and no
    aggregate value; no event is ever added or removed.
    """
    events = [
        event
        for case in cases
        for event in case.events
        if event.origin is EventOrigin.CALENDAR
    ]
    intervals = [event.interval for event in events]
    points = [(s.at, s.value) for s in hrv_samples]
    joined = interval_join(intervals, points)
    matched = 0
    for i, event in enumerate(events):
        values = joined[i]
        event.attributes[ATTR_HRV_COUNT] = len(values)
        if values:
            event.attributes[ATTR_HRV_MEDIAN] = aggregate(values, method)
            matched += 1
        else:
            event.attributes.pop(ATTR_HRV_MEDIAN, None)
    return MatchStats(len(events), matched)


# --- strategy 2: case attributes ---------------------------------------------

@dataclass(frozen=True)
class NightPolicy:
    """Which night belongs to which workday.

    The default window [D 18:00, D+1 12:00) attributes the sleep following
    a workday to that workday; ``reverse`` shifts the window one day back so
    the preceding night is attributed instead.
    """

    window_start: time = time(18, 0)
    window_end: time = time(12, 0)
    reverse: bool = False

    def window_for(self, day: date, home_tz: ZoneInfo) -> Interval:
        anchor = day - timedelta(days=1) if self.reverse else day
        start = datetime.combine(anchor, self.window_start, tzinfo=home_tz)
        end = datetime.combine(anchor + timedelta(days=1), self.window_end, tzinfo=home_tz)
        return Interval(start, end)


@dataclass
class CaseAttrStats:
    duplicate_resting_hr: int = 0
    nights_missing: int = 0


def attach_case_attributes(
    cases: list[Case],
    bundle: HealthBundle,
    policy: NightPolicy = NightPolicy(),
    *,
    home_tz: ZoneInfo,
) -> CaseAttrStats:
    """Attach day-level resting heart rate and attributed-night sleep totals.

    ``bundle.sleep`` must already be reconciled (pairwise disjoint). Sleep
    episodes are attributed to a case when they start inside that case's
    night window; their full durations count, InBedUnspecified excluded.
    """
    stats = CaseAttrStats()
    rhr_by_day: dict[date, list] = {}
    for sample in bundle.resting_hr_samples():
        rhr_by_day.setdefault(sample.at.date(), []).append(sample)

    episodes = bundle.sleep
    episode_starts = [e.interval.start for e in episodes]

    for case in cases:
        day_samples = rhr_by_day.get(case.case_id)
        if day_samples:
            if len(day_samples) > 1:
                stats.duplicate_resting_hr += 1
            latest = max(day_samples, key=lambda s: s.at)
            case.attributes[ATTR_RESTING_HR] = latest.value

        window = policy.window_for(case.case_id, home_tz)
        minutes = {stage: 0.0 for stage in SleepStage}
        found = False
        for episode in _episodes_starting_in(episodes, episode_starts, window):
            found = True
            minutes[episode.stage] += episode.interval.duration_minutes()
        case.attributes[ATTR_TOTAL_SLEEP] = sum(minutes[s] for s in ASLEEP_STAGES)
        case.attributes[ATTR_AWAKE] = minutes[SleepStage.AWAKE]
        case.attributes[ATTR_DEEP_SLEEP] = minutes[SleepStage.DEEP]
        if not found:
            case.attributes[ATTR_NIGHT_MISSING] = True
            stats.nights_missing += 1
    return stats


def _episodes_starting_in(episodes, episode_starts, window: Interval):
    lo = bisect_left(episode_starts, window.start)
    for i in range(lo, len(episodes)):
        if episode_starts[i] >= window.end:
            break
        yield episodes[i]


# --- strategy 3: derived events ----------------------------------------------

@dataclass(frozen=True)
class DeriveSelection:
    workouts: bool = True
    sleep: bool = False
    sleep_per_stage: bool = False


def derive_events(
    cases: list[Case],
    bundle: HealthBundle,
    selection: DeriveSelection = DeriveSelection(),
    policy: NightPolicy = NightPolicy(),
    *,
    home_tz: ZoneInfo,
) -> int:
    """Inject workouts and sleep as events of their own; returns count added.

    Workouts land in the case of their start date; nights land in the case
    they are attributed to, either as one consolidated Sleep event spanning
    first episode start to last episode end, or one event per stage episode
    when ``sleep_per_stage`` is set. Workouts and nights on dates without a
    case are dropped rather than creating new cases.
    """
    added = 0
    by_date = {case.case_id: case for case in cases}
    if selection.workouts:
        for workout in bundle.workouts:
            case = by_date.get(workout.interval.start.date())
            if case is None:
                continue
            case.events.append(
                EnrichedEvent(workout.activity, workout.interval, EventOrigin.WORKOUT)
            )
            added += 1
    if selection.sleep:
        episodes = bundle.sleep
        episode_starts = [e.interval.start for e in episodes]
        for case in cases:
            window = policy.window_for(case.case_id, home_tz)
            night = [
                e
                for e in _episodes_starting_in(episodes, episode_starts, window)
                if e.stage is not SleepStage.IN_BED_UNSPECIFIED
            ]
            if not night:
                continue
            if selection.sleep_per_stage:
                for episode in night:
                    case.events.append(
                        EnrichedEvent(
                            STAGE_ACTIVITY[episode.stage],
                            episode.interval,
                            EventOrigin.SLEEP,
                        )
                    )
                    added += 1
            else:
                span = Interval(night[0].interval.start, night[-1].interval.end)
                case.events.append(EnrichedEvent(SLEEP_ACTIVITY, span, EventOrigin.SLEEP))
                added += 1
    for case in cases:
        case.sort_events()
    return added


# --- cohort filtering ---------------------------------------------------------

_OPS = {
    ">=": operator.ge,
    "<=": operator.le,
    "<": operator.lt,
    ">": operator.gt,
    "=": operator.eq,
}

_CLAUSE_RE = re.compile(r"^\s*([A-Za-z_]\w*)\s*(>=|<=|<|>|=)\s*(.+?)\s*$")


def _parse_clause_value(text: str):
    lowered = text.lower()
    if lowered == "true":
        return True
    if lowered == "false":
        return False
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        return text


@dataclass(frozen=True)
class CohortClause:
    attribute: str
    op: str
    value: object

    def holds(self, case: Case) -> bool:
        actual = case.attribute(self.attribute)
        if actual is None:
            return False
        try:
            return _OPS[self.op](actual, self.value)
        except TypeError:
            return False


@dataclass(frozen=True)
class CohortPredicate:
    """Conjunction of threshold clauses over case attributes."""

    clauses: tuple[CohortClause, ...] = ()

    @classmethod
    def parse(cls, text: str) -> "CohortPredicate":
        """Parse e.g. ``"total_sleep_min>=480,awake_min<60"``."""
        clauses = []
        for part in text.split(","):
            if not part.strip():
                continue
            m = _CLAUSE_RE.match(part)
            if not m:
                raise ValueError(f"bad cohort clause {part!r}")
            attribute, op, value = m.groups()
            clauses.append(CohortClause(attribute, op, _parse_clause_value(value)))
        return cls(tuple(clauses))

    def matches(self, case: Case) -> bool:
        return all(clause.holds(case) for clause in self.clauses)


def filter_cohort(log: EventLog, predicate: CohortPredicate) -> EventLog:
    """Keep exactly the cases satisfying all clauses; stats are recomputed."""
    for clause in predicate.clauses:
        if (
            clause.attribute not in log.schema.case_attrs
            and clause.attribute != ATTR_IS_WORKDAY
        ):
            raise UnknownAttribute(f"case attribute {clause.attribute!r} not in schema")
    retained = [case for case in log.cases if predicate.matches(case)]
    return EventLog(
        cases=retained,
        match_stats=recompute_match_stats(retained),
        schema=log.schema,
    )
