"""Pipeline configuration and orchestration: ingest, build, export.

All outputs are written to a temporary file first and renamed into place on
success, so a failing run never leaves partial files behind.
"""

from __future__ import annotations

import json
import os
import tempfile
from dataclasses import dataclass, field, fields, replace
from datetime import date, time
from pathlib import Path
from typing import Callable
from zoneinfo import ZoneInfo, ZoneInfoNotFoundError

from . import calendar_ingest, export, health_ingest, log_builder
from .calendar_ingest import CsvColumnMap, SubjectRules
from .errors import ConfigError
from .export import PlotView, XesEventStyle
from .health_ingest import IngestConfig, SleepReconcilePolicy
from .log_builder import CohortPredicate, DeriveSelection, NightPolicy
from .temporal import Aggregation

HOME_TZ_ENV = "WEARLOG_HOME_TZ"
DEFAULT_HOME_TZ = "Europe/Amsterdam"

STRATEGY_EVENT_ATTRS = "event-attrs"
STRATEGY_CASE_ATTRS = "case-attrs"
STRATEGY_DERIVED = "derived"
ALL_STRATEGIES = (STRATEGY_EVENT_ATTRS, STRATEGY_CASE_ATTRS, STRATEGY_DERIVED)

DERIVE_WORKOUTS = "workouts"
DERIVE_SLEEP = "sleep"


def parse_night_window(text: str) -> tuple[time, time]:
    """Parse ``"18:00..12:00"`` into the (window start, window end) pair."""
    try:
        start_text, end_text = text.split("..")
        return (time.fromisoformat(start_text), time.fromisoformat(end_text))
    except ValueError as exc:
        raise ConfigError(f"night_window: expected HH:MM..HH:MM, got {text!r}") from exc


@dataclass
class PipelineConfig:
    home_tz: str = ""
    health: Path | None = None
    calendar: Path | None = None
    calendar_format: str = "csv"
    column_map: Path | None = None
    from_date: date | None = None
    to_date: date | None = None
    strategies: tuple[str, ...] = ALL_STRATEGIES
    aggregate: str = Aggregation.MEDIAN.value
    night_window: str = "18:00..12:00"
    night_reverse: bool = False
    cohort: str = ""
    derive: tuple[str, ...] = (DERIVE_WORKOUTS, DERIVE_SLEEP)
    sleep_per_stage: bool = False
    pseudonymize: bool = False
    seed: int = 0
    mapping_out: Path | None = None
    strict: bool = False
    sleep_merge_tolerance: float = 60.0
    source_preference: tuple[str, ...] = ("Watch",)
    out_csv: Path | None = None
    out_xes: Path | None = None
    out_plot: Path | None = None
    plot_view: str = PlotView.HRV_BY_ACTIVITY_GROUP.value
    group_pattern: str = ""
    xes_style: str = XesEventStyle.LIFECYCLE_PAIR.value

    def resolved_home_tz(self) -> str:
        return self.home_tz or os.environ.get(HOME_TZ_ENV, "") or DEFAULT_HOME_TZ

    def validate(self) -> None:
        """Check every key before any file is read; name the offender."""
        try:
            ZoneInfo(self.resolved_home_tz())
        except (ZoneInfoNotFoundError, ValueError) as exc:
            raise ConfigError(f"home_tz: unknown timezone {self.resolved_home_tz()!r}") from exc
        if self.calendar is None:
            raise ConfigError("calendar: an input calendar file is required")
        if not Path(self.calendar).is_file():
            raise ConfigError(f"calendar: file not found: {self.calendar}")
        if self.calendar_format not in ("csv", "ics"):
            raise ConfigError(f"calendar_format: must be csv or ics, got {self.calendar_format!r}")
        if self.health is not None and not Path(self.health).is_file():
            raise ConfigError(f"health: file not found: {self.health}")
        if self.column_map is not None and not Path(self.column_map).is_file():
            raise ConfigError(f"column_map: file not found: {self.column_map}")
        for strategy in self.strategies:
            if strategy not in ALL_STRATEGIES:
                raise ConfigError(f"strategy: unknown strategy {strategy!r}")
        needs_health = set(self.strategies) & {STRATEGY_EVENT_ATTRS, STRATEGY_CASE_ATTRS,
                                               STRATEGY_DERIVED}
        if needs_health and self.health is None:
            raise ConfigError("health: required by the selected strategies")
        try:
            Aggregation(self.aggregate)
        except ValueError as exc:
            raise ConfigError(f"aggregate: unknown method {self.aggregate!r}") from exc
        parse_night_window(self.night_window)
        if self.cohort:
            try:
                CohortPredicate.parse(self.cohort)
            except ValueError as exc:
                raise ConfigError(f"cohort: {exc}") from exc
        for kind in self.derive:
            if kind not in (DERIVE_WORKOUTS, DERIVE_SLEEP):
                raise ConfigError(f"derive: unknown selection {kind!r}")
        if self.sleep_merge_tolerance < 0:
            raise ConfigError("sleep_merge_tolerance: must be nonnegative")
        if (self.from_date is None) != (self.to_date is None):
            raise ConfigError("from/to: both bounds are required for a date range")
        if self.from_date is not None and self.to_date < self.from_date:
            raise ConfigError("to: end date precedes start date")
        try:
            PlotView(self.plot_view)
        except ValueError as exc:
            raise ConfigError(f"plot_view: unknown view {self.plot_view!r}") from exc
        try:
            XesEventStyle(self.xes_style)
        except ValueError as exc:
            raise ConfigError(f"xes_style: unknown style {self.xes_style!r}") from exc

    def night_policy(self) -> NightPolicy:
        start, end = parse_night_window(self.night_window)
        return NightPolicy(window_start=start, window_end=end, reverse=self.night_reverse)


_CONFIG_ALIASES = {"from": "from_date", "to": "to_date"}
_PATH_KEYS = {"health", "calendar", "column_map", "mapping_out", "out_csv",
              "out_xes", "out_plot"}
_TUPLE_KEYS = {"strategies", "derive", "source_preference"}


def config_from_mapping(data: dict) -> PipelineConfig:
    """Build a config from a flat key/value document (the config file)."""
    kwargs = {}
    known = {f.name for f in fields(PipelineConfig)}
    for key, value in data.items():
        name = _CONFIG_ALIASES.get(key, key)
        if name not in known:
            raise ConfigError(f"config: unknown key {key!r}")
        if name in ("from_date", "to_date"):
            value = date.fromisoformat(str(value))
        elif name in _PATH_KEYS:
            value = Path(value)
        elif name in _TUPLE_KEYS:
            if isinstance(value, str):
                value = tuple(p.strip() for p in value.split(",") if p.strip())
            else:
                value = tuple(value)
        kwargs[name] = value
    return PipelineConfig(**kwargs)


def load_config_file(path: str | Path) -> PipelineConfig:
    try:
        import tomllib
    except ModuleNotFoundError:
        import tomli as tomllib
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config: file not found: {path}")
    raw = path.read_bytes()
    if path.suffix.lower() == ".json":
        data = json.loads(raw.decode("utf-8"))
    else:
        data = tomllib.loads(raw.decode("utf-8"))
    return config_from_mapping(data)


@dataclass
class RunReport:
    summary: dict = field(default_factory=dict)
    lines: list[str] = field(default_factory=list)

    def add(self, line: str) -> None:
        self.lines.append(line)


def atomic_write(path: Path, write: Callable) -> None:
    """Write via a sibling temp file and rename, so failures leave nothing."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    handle = tempfile.NamedTemporaryFile(
        mode="wb", dir=path.parent, prefix=f".{path.name}.", delete=False
    )
    try:
        with handle:
            write(handle)
        os.replace(handle.name, path)
    except Exception:
        try:
            os.unlink(handle.name)
        except OSError:
            pass
        raise


def run(config: PipelineConfig) -> RunReport:
    """Execute ingest, reconcile, segment, enrich, cohort, pseudonymize, export."""
    config.validate()
    report = RunReport()
    home_tz = ZoneInfo(config.resolved_home_tz())

    column_map, rules = CsvColumnMap(), SubjectRules()
    if config.column_map is not None:
        column_map, rules = CsvColumnMap.from_file(config.column_map)

    bundle = health_ingest.HealthBundle()
    if config.health is not None:
        bundle = health_ingest.parse_health_export(
            config.health, IngestConfig(home_tz=home_tz, strict=config.strict)
        )
        report.add(
            f"health records: {len(bundle.samples)} samples, "
            f"{len(bundle.sleep)} sleep episodes, {len(bundle.workouts)} workouts "
            f"({bundle.skipped_records} skipped, {bundle.ignored_records} ignored)"
        )
    bundle.sleep = health_ingest.reconcile_sleep(
        bundle.sleep,
        SleepReconcilePolicy(
            preferred_sources=config.source_preference,
            merge_tolerance_s=config.sleep_merge_tolerance,
        ),
    )

    if config.calendar_format == "ics":
        parsed = calendar_ingest.parse_calendar_ics(
            config.calendar, home_tz=home_tz, rules=rules, strict=config.strict
        )
    else:
        parsed = calendar_ingest.parse_calendar_csv(
            config.calendar, column_map, home_tz=home_tz, rules=rules,
            strict=config.strict,
        )
    timed = calendar_ingest.filter_all_day(parsed.events)
    if config.from_date is not None:
        timed = calendar_ingest.filter_date_range(
            timed, config.from_date, config.to_date, home_tz
        )
    report.add(
        f"calendar events: {len(parsed.events)} rows, "
        f"{len(parsed.events) - len(timed)} all-day or out of range, "
        f"{len(timed)} timed kept ({parsed.skipped_rows} rows skipped)"
    )

    cases = log_builder.segment_cases(timed, has_category_rules=rules.configured)
    match_stats = log_builder.recompute_match_stats(cases)

    if STRATEGY_EVENT_ATTRS in config.strategies:
        match_stats = log_builder.enrich_event_attributes(
            cases, bundle.hrv_samples(), Aggregation(config.aggregate)
        )
        report.add(
            f"matched {match_stats.matched_events} of {match_stats.total_events} events"
        )
    night_policy = config.night_policy()
    if STRATEGY_CASE_ATTRS in config.strategies:
        attr_stats = log_builder.attach_case_attributes(
            cases, bundle, night_policy, home_tz=home_tz
        )
        if attr_stats.duplicate_resting_hr:
            report.add(
                f"warning: {attr_stats.duplicate_resting_hr} days had duplicate "
                f"resting heart rate samples (last value kept)"
            )
    if STRATEGY_DERIVED in config.strategies:
        selection = DeriveSelection(
            workouts=DERIVE_WORKOUTS in config.derive,
            sleep=DERIVE_SLEEP in config.derive,
            sleep_per_stage=config.sleep_per_stage,
        )
        added = log_builder.derive_events(
            cases, bundle, selection, night_policy, home_tz=home_tz
        )
        report.add(f"derived events added: {added}")

    log = log_builder.build_event_log(cases, match_stats)
    report.add(f"cases built: {len(log.cases)}")

    full_log = log
    if config.cohort:
        log = log_builder.filter_cohort(log, CohortPredicate.parse(config.cohort))
        report.add(f"cases in cohort: {len(log.cases)}")

    mapping = None
    if config.pseudonymize:
        log, mapping = export.pseudonymize(log, config.seed)

    if config.out_csv is not None:
        rows = _write_csv(config.out_csv, log)
        report.add(f"wrote {config.out_csv} ({rows} event rows)")
    if config.out_xes is not None:
        traces = _write_xes(config.out_xes, log, XesEventStyle(config.xes_style))
        report.add(f"wrote {config.out_xes} ({traces} traces)")
    if config.out_plot is not None:
        cohort = CohortPredicate.parse(config.cohort) if config.cohort else None
        plot_log = full_log if config.plot_view == PlotView.CASE_ATTRS_VS_AVERAGE.value else log
        rows = _write_plot(config.out_plot, plot_log, config, cohort)
        report.add(f"wrote {config.out_plot} ({rows} plot rows)")
    if mapping is not None and config.mapping_out is not None:
        payload = json.dumps(
            {"seed": mapping.seed, "mapping": mapping.mapping},
            indent=2, sort_keys=True,
        ).encode("utf-8")
        atomic_write(config.mapping_out, lambda f: f.write(payload))
        report.add(f"wrote {config.mapping_out} (pseudonym map, keep private)")

    report.summary = {
        "health_samples": len(bundle.samples),
        "sleep_episodes": len(bundle.sleep),
        "workouts": len(bundle.workouts),
        "skipped_records": bundle.skipped_records,
        "calendar_rows": len(parsed.events),
        "timed_events": match_stats.total_events,
        "matched_events": match_stats.matched_events,
        "cases": len(full_log.cases),
        "cases_in_cohort": len(log.cases),
    }
    return report


def _write_csv(path: Path, log) -> int:
    rows = 0

    def writer(handle):
        nonlocal rows
        rows = export.export_csv(log, handle)

    atomic_write(path, writer)
    return rows


def _write_xes(path: Path, log, style) -> int:
    traces = 0

    def writer(handle):
        nonlocal traces
        traces = export.export_xes(log, handle, style)

    atomic_write(path, writer)
    return traces


def _write_plot(path: Path, log, config: PipelineConfig, cohort) -> int:
    rows: list = []

    def writer(handle):
        nonlocal rows
        rows = export.emit_plot_data(
            log,
            PlotView(config.plot_view),
            handle,
            group_pattern=config.group_pattern or None,
            cohort=cohort,
        )

    atomic_write(path, writer)
    return len(rows)
