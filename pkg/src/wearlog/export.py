"""Serialize enriched logs: Disco-friendly CSV, XES, and plot-ready tables.

Activity names coming from the calendar can be pseudonymized before export;
the original-to-pseudonym map is returned separately and never written into
the log itself.
"""

from __future__ import annotations

import csv
import io
import random
import re
import xml.etree.ElementTree as ET
from collections import defaultdict
from dataclasses import dataclass, replace
from datetime import date, datetime
from enum import Enum
from pathlib import Path
from typing import IO, Sequence

from .calendar_ingest import EventCategory
from .errors import SinkWrite, UnknownAttribute
from .log_builder import (
    ATTR_IS_WORKDAY,
    ATTR_HRV_MEDIAN,
    Case,
    CohortPredicate,
    EnrichedEvent,
    EventLog,
    EventOrigin,
    LogSchema,
    build_event_log,
    recompute_match_stats,
)


@dataclass
class PseudonymMap:
    """Deterministic, injective renaming of calendar activity names."""

    mapping: dict[str, str]
    seed: int


def pseudonymize(
    log: EventLog,
    seed: int,
    category_aware: bool = True,
) -> tuple[EventLog, PseudonymMap]:
    """Replace every calendar activity name with ``<Category><n>``.

    Numbering follows first appearance in the seed-shuffled name list, so it
    is stable across runs yet does not leak alphabetical order. Derived
    event names (Walking, Sleep, ...) are kept verbatim. The returned map is
    for the owner's eyes only.
    """
    category_of: dict[str, EventCategory | None] = {}
    for case in log.cases:
        for event in case.events:
            if event.origin is EventOrigin.CALENDAR:
                category_of.setdefault(event.activity, event.category)

    names = sorted(category_of)
    rng = random.Random(seed)
    rng.shuffle(names)
    counters: dict[str, int] = defaultdict(int)
    mapping: dict[str, str] = {}
    for name in names:
        category = category_of[name]
        if category_aware and category is EventCategory.WORK:
            prefix = "Work"
        elif category_aware and category is EventCategory.PRIVATE:
            prefix = "Private"
        else:
            prefix = "Act"
        counters[prefix] += 1
        mapping[name] = f"{prefix}{counters[prefix]}"

    cases = []
    for case in log.cases:
        events = []
        for event in case.events:
            activity = event.activity
            if event.origin is EventOrigin.CALENDAR:
                activity = mapping[activity]
            events.append(
                replace(event, activity=activity, attributes=dict(event.attributes))
            )
        cases.append(
            Case(
                case_id=case.case_id,
                events=events,
                attributes=dict(case.attributes),
                is_workday=case.is_workday,
            )
        )
    renamed = EventLog(cases=cases, match_stats=log.match_stats, schema=log.schema)
    return renamed, PseudonymMap(mapping=mapping, seed=seed)


# --- CSV ---------------------------------------------------------------------

FIXED_COLUMNS = ("case_id", "activity", "start_time", "complete_time", "origin", "category")


def format_float(value: float) -> str:
    """Up to three decimal places, trailing zeros stripped."""
    text = f"{value:.3f}".rstrip("0").rstrip(".")
    return text if text not in ("", "-") else "0"


def _format_cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return format_float(value)
    if isinstance(value, datetime):
        return value.isoformat()
    if isinstance(value, Enum):
        return value.value
    return str(value)


def _csv_columns(schema: LogSchema) -> tuple[list[str], list[str]]:
    event_attrs = sorted(schema.event_attrs)
    case_attrs = sorted(n for n in schema.case_attrs if n != ATTR_IS_WORKDAY)
    return event_attrs, case_attrs


def export_csv(log: EventLog, sink: str | Path | IO) -> int:
    """One row per event, case attributes repeated on every row of the case.

    Returns the number of data rows written. Absent attributes become empty
    cells, never zeros.
    """
    event_attrs, case_attrs = _csv_columns(log.schema)
    header = [*FIXED_COLUMNS, *event_attrs, ATTR_IS_WORKDAY, *case_attrs]
    rows = 0
    try:
        with _text_sink(sink) as stream:
            writer = csv.writer(stream, lineterminator="\n")
            writer.writerow(header)
            for case in log.cases:
                case_cells = [_format_cell(case.attribute(ATTR_IS_WORKDAY))] + [
                    _format_cell(case.attributes.get(name)) for name in case_attrs
                ]
                for event in case.events:
                    writer.writerow(
                        [
                            case.case_id.isoformat(),
                            event.activity,
                            event.interval.start.isoformat(),
                            event.interval.end.isoformat(),
                            event.origin.value,
                            event.category.value if event.category else "",
                            *(_format_cell(event.attributes.get(n)) for n in event_attrs),
                            *case_cells,
                        ]
                    )
                    rows += 1
    except OSError as exc:
        raise SinkWrite(f"cannot write CSV: {exc}") from exc
    return rows


_INT_RE = re.compile(r"^-?\d+$")


def _parse_cell(text: str):
    if text == "":
        return None
    if text == "true":
        return True
    if text == "false":
        return False
    if _INT_RE.match(text):
        return int(text)
    try:
        return float(text)
    except ValueError:
        return text


def import_csv(source: str | Path | IO) -> EventLog:
    """Re-parse a CSV produced by export_csv into an equivalent EventLog."""
    if isinstance(source, (str, Path)):
        stream = open(source, "r", encoding="utf-8", newline="")
        owned = True
    elif isinstance(source, io.TextIOBase):
        stream, owned = source, False
    else:
        stream, owned = io.TextIOWrapper(source, encoding="utf-8", newline=""), False
    try:
        reader = csv.reader(stream)
        try:
            header = next(reader)
        except StopIteration:
            return build_event_log([], recompute_match_stats([]))
        workday_idx = header.index(ATTR_IS_WORKDAY)
        event_attr_names = header[len(FIXED_COLUMNS):workday_idx]
        case_attr_names = header[workday_idx + 1:]
        cases: dict[date, Case] = {}
        for row in reader:
            day = date.fromisoformat(row[0])
            case = cases.get(day)
            if case is None:
                case = cases[day] = Case(
                    case_id=day,
                    is_workday=_parse_cell(row[workday_idx]) is True,
                )
                for name, cell in zip(case_attr_names, row[workday_idx + 1:]):
                    value = _parse_cell(cell)
                    if value is not None:
                        case.attributes[name] = value
            attributes = {}
            for name, cell in zip(event_attr_names, row[len(FIXED_COLUMNS):workday_idx]):
                value = _parse_cell(cell)
                if value is not None:
                    attributes[name] = value
            case.events.append(
                EnrichedEvent(
                    activity=row[1],
                    interval=_interval_from_iso(row[2], row[3]),
                    origin=EventOrigin(row[4]),
                    category=EventCategory(row[5]) if row[5] else None,
                    attributes=attributes,
                )
            )
        ordered = [cases[day] for day in sorted(cases)]
        return build_event_log(ordered, recompute_match_stats(ordered))
    finally:
        if owned:
            stream.close()


def _interval_from_iso(start: str, end: str):
    from .temporal import Interval

    return Interval(datetime.fromisoformat(start), datetime.fromisoformat(end))


# --- XES ----------------------------------------------------------------------

_XES_EXTENSIONS = (
    ("Concept", "concept", "http://www.xes-standard.org/concept.xesext"),
    ("Time", "time", "http://www.xes-standard.org/time.xesext"),
    ("Lifecycle", "lifecycle", "http://www.xes-standard.org/lifecycle.xesext"),
)


class XesEventStyle(str, Enum):
    LIFECYCLE_PAIR = "pair"
    DURATION = "duration"


def _xes_attribute(parent, key: str, value) -> None:
    if isinstance(value, bool):
        ET.SubElement(parent, "boolean", key=key, value="true" if value else "false")
    elif isinstance(value, (int, float)):
        ET.SubElement(parent, "float", key=key, value=format_float(float(value)))
    else:
        ET.SubElement(parent, "string", key=key, value=str(value))


def _xes_timestamp(moment: datetime) -> str:
    return moment.isoformat(timespec="milliseconds")


def export_xes(
    log: EventLog,
    sink: str | Path | IO,
    style: XesEventStyle = XesEventStyle.LIFECYCLE_PAIR,
) -> int:
    """One XES trace per case; returns the trace count.

    Case attributes become trace attributes; numeric attributes are floats.
    Events carry either a start/complete lifecycle pair or a single entry
    with a duration attribute, depending on ``style``.
    """
    root = ET.Element("log", {"xes.version": "2.0", "xes.features": ""})
    for name, prefix, uri in _XES_EXTENSIONS:
        ET.SubElement(root, "extension", name=name, prefix=prefix, uri=uri)
    ET.SubElement(root, "classifier", name="Activity", keys="concept:name")

    event_attrs, case_attrs = _csv_columns(log.schema)
    traces = 0
    for case in log.cases:
        trace = ET.SubElement(root, "trace")
        _xes_attribute(trace, "concept:name", case.case_id.isoformat())
        _xes_attribute(trace, ATTR_IS_WORKDAY, case.is_workday)
        for name in case_attrs:
            if name in case.attributes:
                _xes_attribute(trace, name, case.attributes[name])
        for event in case.events:
            if style is XesEventStyle.LIFECYCLE_PAIR:
                _xes_event(trace, event, event_attrs, "start", event.interval.start)
                _xes_event(trace, event, event_attrs, "complete", event.interval.end)
            else:
                entry = _xes_event(trace, event, event_attrs, "complete", event.interval.start)
                _xes_attribute(entry, "duration_min", event.interval.duration_minutes())
        traces += 1

    tree = ET.ElementTree(root)
    ET.indent(tree)
    try:
        if isinstance(sink, (str, Path)):
            with open(sink, "wb") as stream:
                tree.write(stream, encoding="UTF-8", xml_declaration=True)
        else:
            tree.write(sink, encoding="UTF-8", xml_declaration=True)
    except OSError as exc:
        raise SinkWrite(f"cannot write XES: {exc}") from exc
    return traces


def _xes_event(trace, event: EnrichedEvent, attr_names, transition: str, moment: datetime):
    entry = ET.SubElement(trace, "event")
    _xes_attribute(entry, "concept:name", event.activity)
    ET.SubElement(entry, "date", key="time:timestamp", value=_xes_timestamp(moment))
    _xes_attribute(entry, "lifecycle:transition", transition)
    _xes_attribute(entry, "origin", event.origin.value)
    if event.category is not None:
        _xes_attribute(entry, "category", event.category.value)
    for name in attr_names:
        if name in event.attributes:
            _xes_attribute(entry, name, event.attributes[name])
    return entry


# --- plot data ------------------------------------------------------------------

class PlotView(str, Enum):
    HRV_BY_ACTIVITY_GROUP = "hrv-groups"
    CASE_ATTRS_VS_AVERAGE = "case-vs-average"


DEFAULT_CASE_PLOT_ATTRS = ("resting_hr_bpm", "total_sleep_min", "awake_min", "deep_sleep_min")
BASELINE_LABEL = "all_workdays_mean"


def emit_plot_data(
    log: EventLog,
    view: PlotView,
    sink: str | Path | IO | None = None,
    *,
    group_pattern: str | None = None,
    cohort: CohortPredicate | None = None,
    attributes: Sequence[str] | None = None,
) -> list[list[object]]:
    """Tables behind the two chart styles; rendering happens elsewhere.

    ``hrv-groups``: one row (group, date, hrv_median_ms) per matched event
    whose activity matches ``group_pattern`` (group = first capture group if
    present). ``case-vs-average``: one row of attribute values per cohort
    case, plus a final baseline row of arithmetic means across all workdays.
    """
    if view is PlotView.HRV_BY_ACTIVITY_GROUP:
        rows = _hrv_group_rows(log, group_pattern)
    elif view is PlotView.CASE_ATTRS_VS_AVERAGE:
        rows = _case_vs_average_rows(log, cohort, attributes)
    else:
        raise ValueError(f"unknown view {view!r}")
    if sink is not None:
        try:
            with _text_sink(sink) as stream:
                writer = csv.writer(stream, lineterminator="\n")
                for row in rows:
                    writer.writerow([_format_cell(cell) for cell in row])
        except OSError as exc:
            raise SinkWrite(f"cannot write plot data: {exc}") from exc
    return rows


def _hrv_group_rows(log: EventLog, group_pattern: str | None) -> list[list[object]]:
    matcher = re.compile(group_pattern) if group_pattern else None
    rows: list[list[object]] = [["group", "date", ATTR_HRV_MEDIAN]]
    for case in log.cases:
        for event in case.events:
            value = event.attributes.get(ATTR_HRV_MEDIAN)
            if value is None:
                continue
            if matcher is None:
                group = event.activity
            else:
                m = matcher.search(event.activity)
                if not m:
                    continue
                group = m.group(1) if m.groups() else m.group(0)
            rows.append([group, case.case_id.isoformat(), value])
    return rows


def _case_vs_average_rows(
    log: EventLog,
    cohort: CohortPredicate | None,
    attributes: Sequence[str] | None,
) -> list[list[object]]:
    names = list(attributes) if attributes else list(DEFAULT_CASE_PLOT_ATTRS)
    for name in names:
        if name not in log.schema.case_attrs and name != ATTR_IS_WORKDAY:
            raise UnknownAttribute(f"case attribute {name!r} not in schema")
    selected = [
        case for case in log.cases if cohort is None or cohort.matches(case)
    ]
    rows: list[list[object]] = [["case_id", *names]]
    for case in selected:
        rows.append([case.case_id.isoformat(), *(case.attribute(n) for n in names)])
    workdays = [case for case in log.cases if case.is_workday]
    baseline: list[object] = [BASELINE_LABEL]
    for name in names:
        values = [
            case.attribute(name)
            for case in workdays
            if isinstance(case.attribute(name), (int, float))
            and not isinstance(case.attribute(name), bool)
        ]
        baseline.append(sum(values) / len(values) if values else None)
    rows.append(baseline)
    return rows


# --- shared sink helper -----------------------------------------------------------

class _text_sink:
    """Context manager yielding a text stream for a path or open file."""

    def __init__(self, sink: str | Path | IO):
        self.sink = sink
        self.stream: IO | None = None
        self.owned = False
        self.wrapped = False

    def __enter__(self) -> IO:
        if isinstance(self.sink, (str, Path)):
            self.stream = open(self.sink, "w", encoding="utf-8", newline="")
            self.owned = True
        elif isinstance(self.sink, io.TextIOBase):
            self.stream = self.sink
        else:
            self.stream = io.TextIOWrapper(self.sink, encoding="utf-8", newline="")
            self.wrapped = True
        return self.stream

    def __exit__(self, *exc) -> None:
        if self.owned:
            self.stream.close()
        elif self.wrapped:
            self.stream.flush()
            self.stream.detach()
