"""Command-line front-end: ingest-check, build, export, fixture, run.

Exit codes: 0 ok, 2 configuration error, 3 input parse failure, 4 write
failure. Flag values override config-file values, which override the
WEARLOG_HOME_TZ environment variable and built-in defaults.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from zoneinfo import ZoneInfo

from . import export as export_mod
from . import fixture_gen, pipeline
from .calendar_ingest import CsvColumnMap, SubjectRules, filter_all_day
from .errors import (
    EXIT_CONFIG,
    EXIT_IO,
    EXIT_OK,
    EXIT_PARSE,
    ConfigError,
    InputParseError,
    SinkWrite,
    UnknownAttribute,
    WearlogError,
)
from .health_ingest import IngestConfig, parse_health_export
from .log_builder import CohortPredicate, filter_cohort
from .pipeline import PipelineConfig, atomic_write


def _add_ingest_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--health", type=Path, help="Apple Health export.xml")
    parser.add_argument("--calendar", type=Path, help="calendar export file")
    parser.add_argument("--calendar-format", choices=("csv", "ics"))
    parser.add_argument("--column-map", type=Path,
                        help="TOML/JSON column map (and subject rules) for the CSV")
    parser.add_argument("--home-tz", help="IANA timezone name, e.g. Europe/Amsterdam")
    parser.add_argument("--from", dest="from_date", help="analysis range start (YYYY-MM-DD)")
    parser.add_argument("--to", dest="to_date", help="analysis range end (YYYY-MM-DD)")
    parser.add_argument("--strict", action="store_true", default=None,
                        help="treat malformed records/rows as fatal")
    parser.add_argument("--sleep-merge-tolerance", type=float, metavar="SECONDS")


def _add_build_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--strategy",
                        help="comma list of event-attrs,case-attrs,derived")
    parser.add_argument("--aggregate", choices=[a.value for a in pipeline.Aggregation])
    parser.add_argument("--night-window", metavar="HH:MM..HH:MM")
    parser.add_argument("--night-reverse", action="store_true", default=None,
                        help="attribute the night before the workday instead of after")
    parser.add_argument("--cohort", metavar="CLAUSES",
                        help='e.g. "total_sleep_min>=480,awake_min<60"')
    parser.add_argument("--derive", help="comma list of workouts,sleep")
    parser.add_argument("--sleep-per-stage", action="store_true", default=None,
                        help="one derived event per sleep stage episode")


def _add_export_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--format", choices=("csv", "xes", "plot"), default="csv")
    parser.add_argument("--view", choices=[v.value for v in export_mod.PlotView])
    parser.add_argument("--group-pattern", metavar="REGEX")
    parser.add_argument("--pseudonymize", action="store_true", default=None)
    parser.add_argument("--seed", type=int)
    parser.add_argument("--mapping-out", type=Path)
    parser.add_argument("--xes-style", choices=[s.value for s in export_mod.XesEventStyle])


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="wearlog",
        description="Enrich calendar event logs with wearable data and export "
                    "process-mining-ready logs.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest-check", help="parse the inputs and print counts")
    _add_ingest_flags(p)

    p = sub.add_parser("build", help="build an enriched event log CSV")
    _add_ingest_flags(p)
    _add_build_flags(p)
    p.add_argument("--out", type=Path, required=True, help="output log CSV path")

    p = sub.add_parser("export", help="re-export a built log as CSV, XES or plot data")
    p.add_argument("--in", dest="in_path", type=Path, required=True,
                   help="log CSV produced by the build subcommand")
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--cohort", metavar="CLAUSES")
    _add_export_flags(p)

    p = sub.add_parser("fixture", help="generate synthetic calendar+health fixtures")
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--spec", type=Path, help="fixture spec TOML/JSON")
    group.add_argument("--preset", choices=("paper",), help="shipped preset")
    p.add_argument("--out", type=Path, required=True, help="output directory")

    p = sub.add_parser("run", help="full pipeline: ingest, build, export")
    p.add_argument("--config", type=Path, help="flat TOML/JSON config file")
    _add_ingest_flags(p)
    _add_build_flags(p)
    _add_export_flags(p)
    p.add_argument("--out-csv", type=Path)
    p.add_argument("--out-xes", type=Path)
    p.add_argument("--out-plot", type=Path)

    return parser


_FLAG_TO_CONFIG = {
    "health": "health",
    "calendar": "calendar",
    "calendar_format": "calendar_format",
    "column_map": "column_map",
    "home_tz": "home_tz",
    "strict": "strict",
    "sleep_merge_tolerance": "sleep_merge_tolerance",
    "aggregate": "aggregate",
    "night_window": "night_window",
    "night_reverse": "night_reverse",
    "cohort": "cohort",
    "sleep_per_stage": "sleep_per_stage",
    "pseudonymize": "pseudonymize",
    "seed": "seed",
    "mapping_out": "mapping_out",
    "view": "plot_view",
    "group_pattern": "group_pattern",
    "xes_style": "xes_style",
    "out_csv": "out_csv",
    "out_xes": "out_xes",
    "out_plot": "out_plot",
}


def _apply_overrides(config: PipelineConfig, args: argparse.Namespace) -> PipelineConfig:
    from datetime import date

    values = vars(args)
    for flag, key in _FLAG_TO_CONFIG.items():
        if values.get(flag) is not None:
            setattr(config, key, values[flag])
    if values.get("from_date") is not None:
        config.from_date = date.fromisoformat(values["from_date"])
    if values.get("to_date") is not None:
        config.to_date = date.fromisoformat(values["to_date"])
    if values.get("strategy"):
        config.strategies = tuple(
            s.strip() for s in values["strategy"].split(",") if s.strip()
        )
    if values.get("derive"):
        config.derive = tuple(s.strip() for s in values["derive"].split(",") if s.strip())
    return config


def _cmd_ingest_check(args) -> int:
    config = _apply_overrides(PipelineConfig(), args)
    home_tz = ZoneInfo(config.resolved_home_tz())
    if config.health is None and config.calendar is None:
        raise ConfigError("health/calendar: nothing to check, give at least one input")
    if config.health is not None:
        bundle = parse_health_export(
            config.health, IngestConfig(home_tz=home_tz, strict=config.strict)
        )
        print(f"health: {len(bundle.hrv_samples())} HRV samples, "
              f"{len(bundle.resting_hr_samples())} resting HR samples, "
              f"{len(bundle.sleep)} sleep episodes, {len(bundle.workouts)} workouts")
        print(f"health: {bundle.skipped_records} skipped, "
              f"{bundle.ignored_records} ignored records")
        if bundle.date_range is not None:
            print(f"health: range {bundle.date_range.start.date()} "
                  f".. {bundle.date_range.end.date()}")
    if config.calendar is not None:
        column_map, rules = CsvColumnMap(), SubjectRules()
        if config.column_map is not None:
            column_map, rules = CsvColumnMap.from_file(config.column_map)
        if config.calendar_format == "ics":
            from .calendar_ingest import parse_calendar_ics

            parsed = parse_calendar_ics(
                config.calendar, home_tz=home_tz, rules=rules, strict=config.strict
            )
        else:
            from .calendar_ingest import parse_calendar_csv

            parsed = parse_calendar_csv(
                config.calendar, column_map, home_tz=home_tz, rules=rules,
                strict=config.strict,
            )
        timed = filter_all_day(parsed.events)
        print(f"calendar: {len(parsed.events)} events, {len(timed)} timed, "
              f"{parsed.skipped_rows} rows skipped")
    return EXIT_OK


def _cmd_build(args) -> int:
    config = _apply_overrides(PipelineConfig(), args)
    config.out_csv = args.out
    report = pipeline.run(config)
    for line in report.lines:
        print(line)
    return EXIT_OK


def _cmd_export(args) -> int:
    log = export_mod.import_csv(args.in_path)
    if args.cohort:
        log = filter_cohort(log, CohortPredicate.parse(args.cohort))
    mapping = None
    if args.pseudonymize:
        log, mapping = export_mod.pseudonymize(log, args.seed or 0)

    if args.format == "csv":
        count = _atomic_export(args.out, lambda f: export_mod.export_csv(log, f))
        print(f"wrote {args.out} ({count} event rows)")
    elif args.format == "xes":
        style = export_mod.XesEventStyle(args.xes_style or "pair")
        count = _atomic_export(args.out, lambda f: export_mod.export_xes(log, f, style))
        print(f"wrote {args.out} ({count} traces)")
    else:
        view = export_mod.PlotView(args.view or export_mod.PlotView.HRV_BY_ACTIVITY_GROUP)
        cohort = CohortPredicate.parse(args.cohort) if args.cohort else None

        def do_plot(handle):
            return export_mod.emit_plot_data(
                log, view, handle,
                group_pattern=args.group_pattern or None, cohort=cohort,
            )

        rows = _atomic_export(args.out, do_plot)
        print(f"wrote {args.out} ({len(rows)} plot rows)")

    if mapping is not None and args.mapping_out is not None:
        payload = json.dumps(
            {"seed": mapping.seed, "mapping": mapping.mapping}, indent=2, sort_keys=True
        ).encode("utf-8")
        atomic_write(args.mapping_out, lambda f: f.write(payload))
        print(f"wrote {args.mapping_out} (pseudonym map, keep private)")
    return EXIT_OK


def _atomic_export(path: Path, exporter):
    result = None

    def writer(handle):
        nonlocal result
        result = exporter(handle)

    atomic_write(path, writer)
    return result


def _cmd_fixture(args) -> int:
    if args.preset == "paper":
        spec = fixture_gen.paper_fixture_spec()
    else:
        spec = fixture_gen.FixtureSpec.from_file(args.spec)
    bundle = fixture_gen.generate(spec)
    paths = bundle.write_to(args.out)
    manifest = bundle.manifest
    print(f"wrote {paths['calendar']} ({manifest['calendar']['timed_events']} timed "
          f"+ {manifest['calendar']['all_day_events']} all-day events)")
    print(f"wrote {paths['health']} ({manifest['health_records']} records)")
    print(f"wrote {paths['manifest']} "
          f"(ground truth: {manifest['calendar']['matched_events']} matched events)")
    return EXIT_OK


def _cmd_run(args) -> int:
    if args.config is not None:
        config = pipeline.load_config_file(args.config)
    else:
        config = PipelineConfig()
    config = _apply_overrides(config, args)
    report = pipeline.run(config)
    for line in report.lines:
        print(line)
    return EXIT_OK


_COMMANDS = {
    "ingest-check": _cmd_ingest_check,
    "build": _cmd_build,
    "export": _cmd_export,
    "fixture": _cmd_fixture,
    "run": _cmd_run,
}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (SinkWrite, OSError) as exc:
        print(f"write error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (InputParseError, UnknownAttribute, ValueError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except WearlogError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE


if __name__ == "__main__":
    sys.exit(main())
