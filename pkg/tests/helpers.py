"""Shared builders and independent oracles used across the test modules."""

from __future__ import annotations

from datetime import date, datetime, timedelta
from zoneinfo import ZoneInfo

from wearlog.log_builder import Case, EnrichedEvent, EventOrigin, build_event_log
from wearlog.log_builder import recompute_match_stats
from wearlog.temporal import Interval

AMS = ZoneInfo("Europe/Amsterdam")
UTC = ZoneInfo("UTC")


def dt(year, month, day, hour=0, minute=0, second=0, tz=AMS) -> datetime:
    return datetime(year, month, day, hour, minute, second, tzinfo=tz)


def iv(start: datetime, end: datetime) -> Interval:
    return Interval(start, end)


def brute_force_join(intervals, points):
    """All-pairs reference for interval_join: the naive double loop."""
    return {
        i: [value for at, value in points if interval.start <= at < interval.end]
        for i, interval in enumerate(intervals)
    }


def health_xml(*records: str) -> bytes:
    body = "\n".join(records)
    return (
        '<?xml version="1.0" encoding="UTF-8"?>\n'
        f'<HealthData locale="en_NL">\n{body}\n</HealthData>\n'
    ).encode("utf-8")


def record_xml(
    rtype: str,
    start: str,
    end: str | None = None,
    value: str = "",
    source: str = "Study Watch",
    unit: str | None = None,
) -> str:
    end = end or start
    unit_attr = f' unit="{unit}"' if unit else ""
    return (
        f'<Record type="{rtype}" sourceName="{source}"{unit_attr}'
        f' startDate="{start}" endDate="{end}" value="{value}"/>'
    )


def workout_xml(activity: str, start: str, end: str, source: str = "Study Watch") -> str:
    return (
        f'<Workout workoutActivityType="HKWorkoutActivityType{activity}"'
        f' duration="30" durationUnit="min" sourceName="{source}"'
        f' startDate="{start}" endDate="{end}"/>'
    )


def sleep_xml(stage_value: str, start: str, end: str, source: str = "Study Watch") -> str:
    return record_xml(
        "HKCategoryTypeIdentifierSleepAnalysis", start, end,
        value=stage_value, source=source,
    )


def make_event(
    activity: str,
    start: datetime,
    end: datetime,
    origin: EventOrigin = EventOrigin.CALENDAR,
    category=None,
    **attributes,
) -> EnrichedEvent:
    return EnrichedEvent(
        activity=activity,
        interval=Interval(start, end),
        origin=origin,
        category=category,
        attributes=dict(attributes),
    )


def make_case(case_id: date, events=(), is_workday=True, **attributes) -> Case:
    case = Case(
        case_id=case_id,
        events=list(events),
        attributes=dict(attributes),
        is_workday=is_workday,
    )
    case.sort_events()
    return case


def make_log(*cases: Case):
    ordered = sorted(cases, key=lambda c: c.case_id)
    return build_event_log(ordered, recompute_match_stats(ordered))


def event_structure(log):
    """Comparable snapshot of a log: ids, activities, intervals, attributes."""
    return [
        (
            case.case_id,
            case.is_workday,
            sorted(case.attributes.items()),
            [
                (
                    event.activity,
                    event.interval.start,
                    event.interval.end,
                    event.origin,
                    event.category,
                    sorted(event.attributes.items()),
                )
                for event in case.events
            ],
        )
        for case in log.cases
    ]


def assert_logs_equivalent(left, right, tol=1e-9):
    """Structure equality with numeric tolerance on attribute values."""
    ls, rs = event_structure(left), event_structure(right)
    assert len(ls) == len(rs), (len(ls), len(rs))
    for lcase, rcase in zip(ls, rs):
        assert lcase[0] == rcase[0]
        assert lcase[1] == rcase[1]
        _assert_attrs(lcase[2], rcase[2], tol)
        assert len(lcase[3]) == len(rcase[3])
        for levent, revent in zip(lcase[3], rcase[3]):
            assert levent[:5] == revent[:5], (levent[:5], revent[:5])
            _assert_attrs(levent[5], revent[5], tol)


def _assert_attrs(left, right, tol):
    assert [k for k, _ in left] == [k for k, _ in right], (left, right)
    for (key, lv), (_, rv) in zip(left, right):
        if isinstance(lv, bool) or isinstance(rv, bool):
            assert lv == rv, (key, lv, rv)
        elif isinstance(lv, (int, float)) and isinstance(rv, (int, float)):
            assert abs(lv - rv) <= tol * max(1.0, abs(lv), abs(rv)), (key, lv, rv)
        else:
            assert lv == rv, (key, lv, rv)


def day_plus(base: date, days: int) -> date:
    return base + timedelta(days=days)
