"""Enrich calendar-derived event logs with wearable-device data.

Ingests an Apple Health export and a calendar export, builds one case per
day, applies three enrichment strategies (per-event HRV attributes,
day-level case attributes, derived workout and sleep events) and serializes
the result to Disco-friendly CSV, XES, or plot-ready tables.
"""

from .calendar_ingest import (
    CalendarEvent,
    CsvColumnMap,
    EventCategory,
    SubjectRules,
    filter_all_day,
    filter_date_range,
    parse_calendar_csv,
    parse_calendar_ics,
)
from .errors import (
    ConfigError,
    MalformedIcs,
    MalformedRecord,
    MalformedRow,
    MalformedXml,
    MissingColumn,
    SinkWrite,
    UnknownAttribute,
    UnsortedInput,
    WearlogError,
)
from .export import (
    PlotView,
    PseudonymMap,
    XesEventStyle,
    emit_plot_data,
    export_csv,
    export_xes,
    import_csv,
    pseudonymize,
)
from .fixture_gen import FixtureBundle, FixtureSpec, generate, paper_fixture_spec
from .health_ingest import (
    HealthBundle,
    HealthSample,
    IngestConfig,
    SampleKind,
    SleepEpisode,
    SleepReconcilePolicy,
    SleepStage,
    Workout,
    parse_health_export,
    reconcile_sleep,
)
from .log_builder import (
    Case,
    CohortPredicate,
    DeriveSelection,
    EnrichedEvent,
    EventLog,
    EventOrigin,
    MatchStats,
    NightPolicy,
    attach_case_attributes,
    build_event_log,
    derive_events,
    enrich_event_attributes,
    filter_cohort,
    segment_cases,
)
from .pipeline import PipelineConfig, RunReport, run
from .temporal import Aggregation, Interval, aggregate, interval_contains, interval_join

__version__ = "0.1.0"

__all__ = [
    "Aggregation",
    "CalendarEvent",
    "Case",
    "CohortPredicate",
    "ConfigError",
    "CsvColumnMap",
    "DeriveSelection",
    "EnrichedEvent",
    "EventCategory",
    "EventLog",
    "EventOrigin",
    "FixtureBundle",
    "FixtureSpec",
    "HealthBundle",
    "HealthSample",
    "IngestConfig",
    "Interval",
    "MalformedIcs",
    "MalformedRecord",
    "MalformedRow",
    "MalformedXml",
    "MatchStats",
    "MissingColumn",
    "NightPolicy",
    "PipelineConfig",
    "PlotView",
    "PseudonymMap",
    "RunReport",
    "SampleKind",
    "SinkWrite",
    "SleepEpisode",
    "SleepReconcilePolicy",
    "SleepStage",
    "SubjectRules",
    "UnknownAttribute",
    "UnsortedInput",
    "WearlogError",
    "Workout",
    "XesEventStyle",
    "aggregate",
    "attach_case_attributes",
    "build_event_log",
    "derive_events",
    "emit_plot_data",
    "enrich_event_attributes",
    "export_csv",
    "export_xes",
    "filter_all_day",
    "filter_cohort",
    "filter_date_range",
    "generate",
    "import_csv",
    "interval_contains",
    "interval_join",
    "parse_calendar_csv",
    "parse_calendar_ics",
    "parse_health_export",
    "paper_fixture_spec",
    "pseudonymize",
    "reconcile_sleep",
    "run",
    "segment_cases",
]
