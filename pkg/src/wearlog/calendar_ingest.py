"""Calendar event ingest: Outlook CSV export and ICS files.

Wall-clock times are interpreted in the configured home timezone. Only
concrete (non-recurring) VEVENT occurrences are expanded from ICS input;
recurrence rules are out of scope.
"""

from __future__ import annotations

import csv
import io
import json
import re
from dataclasses import dataclass, field
from datetime import date, datetime, time, timedelta
from enum import Enum
from pathlib import Path
from typing import IO, Iterable
from zoneinfo import ZoneInfo

from .errors import ConfigError, MalformedIcs, MalformedRow, MissingColumn
from .temporal import Interval

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib


class EventCategory(str, Enum):
    WORK = "Work"
    PRIVATE = "Private"
    UNKNOWN = "Unknown"


@dataclass(frozen=True)
class CalendarEvent:
    subject: str
    interval: Interval
    all_day: bool
    category: EventCategory = EventCategory.UNKNOWN


@dataclass(frozen=True)
class SubjectRules:
    """Regex rules that classify subjects into Work or Private."""

    work: tuple[str, ...] = ()
    private: tuple[str, ...] = ()

    @property
    def configured(self) -> bool:
        return bool(self.work or self.private)

    def classify(self, subject: str) -> EventCategory:
        for pattern in self.work:
            if re.search(pattern, subject):
                return EventCategory.WORK
        for pattern in self.private:
            if re.search(pattern, subject):
                return EventCategory.PRIVATE
        return EventCategory.UNKNOWN


@dataclass(frozen=True)
class CsvColumnMap:
    """Column names and formats of the calendar CSV; defaults match Outlook."""

    subject: str = "Subject"
    start_date: str = "Start Date"
    start_time: str = "Start Time"
    end_date: str = "End Date"
    end_time: str = "End Time"
    all_day: str = "All day event"
    date_format: str = "%m/%d/%Y"
    time_format: str = "%I:%M:%S %p"

    def required_columns(self) -> tuple[str, ...]:
        return (
            self.subject, self.start_date, self.start_time,
            self.end_date, self.end_time, self.all_day,
        )

    @classmethod
    def from_file(cls, path: str | Path) -> tuple["CsvColumnMap", SubjectRules]:
        """Load a column map plus optional [rules] section from TOML or JSON."""
        path = Path(path)
        raw = path.read_bytes()
        if path.suffix.lower() == ".json":
            data = json.loads(raw.decode("utf-8"))
        else:
            data = tomllib.loads(raw.decode("utf-8"))
        rules_data = data.pop("rules", {})
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"column map: unknown key {sorted(unknown)[0]!r}")
        rules = SubjectRules(
            work=tuple(rules_data.get("work", ())),
            private=tuple(rules_data.get("private", ())),
        )
        return cls(**data), rules


@dataclass
class CalendarParseResult:
    events: list[CalendarEvent] = field(default_factory=list)
    skipped_rows: int = 0


_TRUTHY = {"true", "yes", "1"}
_FALSY = {"false", "no", "0", ""}


def _parse_flag(text: str) -> bool:
    lowered = text.strip().lower()
    if lowered in _TRUTHY:
        return True
    if lowered in _FALSY:
        return False
    raise MalformedRow(f"unrecognized all-day flag {text!r}")


def _as_text_stream(source: str | Path | IO) -> tuple[IO, bool]:
    if isinstance(source, (str, Path)):
        return open(source, "r", encoding="utf-8-sig", newline=""), True
    if isinstance(source, io.TextIOBase):
        return source, False
    # binary stream; Outlook exports start with a BOM
    return io.TextIOWrapper(source, encoding="utf-8-sig", newline=""), False


def parse_calendar_csv(
    source: str | Path | IO,
    column_map: CsvColumnMap = CsvColumnMap(),
    *,
    home_tz: ZoneInfo,
    rules: SubjectRules = SubjectRules(),
    strict: bool = False,
) -> CalendarParseResult:
    """One CalendarEvent per data row, wall clocks read in the home timezone.

    A missing mapped column is fatal; a row whose dates cannot be parsed is
    skipped and counted (fatal in strict mode).
    """
    stream, owned = _as_text_stream(source)
    try:
        reader = csv.DictReader(stream)
        header = reader.fieldnames or []
        for column in column_map.required_columns():
            if column not in header:
                raise MissingColumn(f"calendar CSV has no column {column!r}")
        result = CalendarParseResult()
        for row in reader:
            try:
                result.events.append(_event_from_row(row, column_map, home_tz, rules))
            except MalformedRow:
                if strict:
                    raise
                result.skipped_rows += 1
        return result
    finally:
        if owned:
            stream.close()


def _event_from_row(row, column_map: CsvColumnMap, home_tz, rules) -> CalendarEvent:
    subject = (row.get(column_map.subject) or "").strip()
    all_day = _parse_flag(row.get(column_map.all_day) or "")
    start = _combine(
        row.get(column_map.start_date), row.get(column_map.start_time),
        column_map, home_tz,
    )
    end = _combine(
        row.get(column_map.end_date), row.get(column_map.end_time),
        column_map, home_tz,
    )
    if end < start:
        raise MalformedRow(f"event {subject!r} ends before it starts")
    category = rules.classify(subject) if rules.configured else EventCategory.UNKNOWN
    return CalendarEvent(subject, Interval(start, end), all_day, category)


def _combine(date_text, time_text, column_map: CsvColumnMap, home_tz) -> datetime:
    if not date_text or time_text is None:
        raise MalformedRow("missing date or time cell")
    try:
        day = datetime.strptime(date_text.strip(), column_map.date_format).date()
        clock = datetime.strptime(time_text.strip(), column_map.time_format).time()
    except ValueError as exc:
        raise MalformedRow(f"unparseable date/time {date_text!r} {time_text!r}") from exc
    return datetime.combine(day, clock, tzinfo=home_tz)


# --- ICS ------------------------------------------------------------------

_ICS_ESCAPES = {"\\\\": "\\", "\\n": "\n", "\\N": "\n", "\\,": ",", "\\;": ";"}


def _unfold_ics(text: str) -> list[str]:
    lines: list[str] = []
    for raw in text.splitlines():
        if raw[:1] in (" ", "\t") and lines:
            lines[-1] += raw[1:]
        else:
            lines.append(raw)
    return lines


def _unescape_ics(value: str) -> str:
    out = []
    i = 0
    while i < len(value):
        pair = value[i : i + 2]
        if pair in _ICS_ESCAPES:
            out.append(_ICS_ESCAPES[pair])
            i += 2
        else:
            out.append(value[i])
            i += 1
    return "".join(out)


def _split_property(line: str) -> tuple[str, dict[str, str], str]:
    head, sep, value = line.partition(":")
    if not sep:
        raise MalformedIcs(f"property line without value: {line!r}")
    name, *param_parts = head.split(";")
    params = {}
    for part in param_parts:
        key, _, val = part.partition("=")
        params[key.upper()] = val
    return name.upper(), params, value


def _parse_ics_datetime(value: str, params: dict[str, str], home_tz) -> tuple[datetime, bool]:
    """Returns (instant in home tz, is_date_only)."""
    value = value.strip()
    if params.get("VALUE") == "DATE" or re.fullmatch(r"\d{8}", value):
        try:
            day = datetime.strptime(value, "%Y%m%d")
        except ValueError as exc:
            raise MalformedIcs(f"bad DATE value {value!r}") from exc
        return day.replace(tzinfo=home_tz), True
    try:
        if value.endswith("Z"):
            moment = datetime.strptime(value[:-1], "%Y%m%dT%H%M%S").replace(
                tzinfo=ZoneInfo("UTC")
            )
        elif "TZID" in params:
            moment = datetime.strptime(value, "%Y%m%dT%H%M%S").replace(
                tzinfo=ZoneInfo(params["TZID"])
            )
        else:
            moment = datetime.strptime(value, "%Y%m%dT%H%M%S").replace(tzinfo=home_tz)
    except (ValueError, KeyError) as exc:
        raise MalformedIcs(f"bad DATE-TIME value {value!r}") from exc
    return moment.astimezone(home_tz), False


def parse_calendar_ics(
    source: str | Path | IO,
    *,
    home_tz: ZoneInfo,
    rules: SubjectRules = SubjectRules(),
    strict: bool = False,
) -> CalendarParseResult:
    """One CalendarEvent per VEVENT; DATE-valued DTSTART means all-day."""
    if isinstance(source, (str, Path)):
        text = Path(source).read_text(encoding="utf-8")
    else:
        data = source.read()
        text = data.decode("utf-8") if isinstance(data, bytes) else data

    result = CalendarParseResult()
    in_event = False
    props: list[tuple[str, dict[str, str], str]] = []
    for line in _unfold_ics(text):
        stripped = line.strip()
        if not stripped:
            continue
        if stripped.upper() == "BEGIN:VEVENT":
            in_event = True
            props = []
            continue
        if stripped.upper() == "END:VEVENT":
            in_event = False
            try:
                result.events.append(_event_from_props(props, home_tz, rules))
            except MalformedIcs:
                if strict:
                    raise
                result.skipped_rows += 1
            continue
        if in_event:
            try:
                props.append(_split_property(line))
            except MalformedIcs:
                if strict:
                    raise
                # tolerated: the damaged property is dropped, the event may
                # still fail later if it was required
    return result


def _event_from_props(props, home_tz, rules) -> CalendarEvent:
    by_name = {}
    for name, params, value in props:
        by_name.setdefault(name, (params, value))
    if "DTSTART" not in by_name:
        raise MalformedIcs("VEVENT without DTSTART")
    start_params, start_value = by_name["DTSTART"]
    start, all_day = _parse_ics_datetime(start_value, start_params, home_tz)
    if "DTEND" in by_name:
        end_params, end_value = by_name["DTEND"]
        end, _ = _parse_ics_datetime(end_value, end_params, home_tz)
    elif all_day:
        end = start + timedelta(days=1)
    else:
        end = start
    if end < start:
        raise MalformedIcs("VEVENT ends before it starts")
    subject = ""
    if "SUMMARY" in by_name:
        subject = _unescape_ics(by_name["SUMMARY"][1])
    category = rules.classify(subject) if rules.configured else EventCategory.UNKNOWN
    return CalendarEvent(subject, Interval(start, end), all_day, category)


# --- filters ---------------------------------------------------------------

def filter_all_day(events: Iterable[CalendarEvent]) -> list[CalendarEvent]:
    """Keep only timed events, preserving order."""
    return [e for e in events if not e.all_day]


def filter_date_range(
    events: Iterable[CalendarEvent],
    first_day: date,
    last_day: date,
    home_tz: ZoneInfo,
) -> list[CalendarEvent]:
    """Keep events whose interval lies within [first_day, last_day] home time."""
    lo = datetime.combine(first_day, time.min, tzinfo=home_tz)
    hi = datetime.combine(last_day + timedelta(days=1), time.min, tzinfo=home_tz)
    return [e for e in events if lo <= e.interval.start and e.interval.end <= hi]
