"""Deterministic synthetic calendar + health fixtures with known ground truth.

The generator writes an Outlook-style calendar CSV and an Apple-Health-style
export XML that parse cleanly through the ingest modules, plus a manifest
recording the true matched-event count, per-night sleep totals and workout
placements, so pipeline outputs can be checked exactly. Same seed, same
bytes.
"""

from __future__ import annotations

import csv
import io
import json
import random
from dataclasses import dataclass
from datetime import date, datetime, time, timedelta, timezone
from pathlib import Path
from typing import IO, Iterator
from zoneinfo import ZoneInfo

from .errors import ConfigError

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

APPLE_TS = "%Y-%m-%d %H:%M:%S %z"
SOURCE_NAME = "Study Watch"

WORK_SUBJECTS = (
    "IPO U", "IPO E", "IPO M",
    "Recurrent M", "Recurrent O", "Recurrent F",
    "Team standup", "Project sync", "Client review", "Budget planning",
    "Steering board", "Paper writing session", "Lecture prep", "Grant review",
    "Hiring committee", "Department meeting", "Office hours", "Seminar series",
    "Demo day", "Sprint planning", "Work lunch meeting", "Social drinks at work",
    "1:1 with supervisor", "Thesis supervision", "Review, planning & sync",
)
PRIVATE_SUBJECTS = (
    "Dinner with friends", "Gym class", "Dentist appointment",
    "Movie night", "Family call", "Language course",
)
ALL_DAY_SUBJECTS = (
    "Conference attendance", "Travel day", "Annual leave", "Offsite",
    "Public holiday",
)
WORKOUT_ACTIVITIES = ("Walking", "Running", "Cycling", "Yoga")
WORKOUT_WEIGHTS = (60, 15, 15, 10)

#: Hourly meeting slots; the 12:00 hour stays free for workouts.
EVENT_SLOT_HOURS = (9, 10, 11, 13, 14, 15, 16)
EVENT_DURATIONS_MIN = (25, 30, 45, 50, 55, 60)

CALENDAR_HEADER = (
    "Subject", "Start Date", "Start Time", "End Date", "End Time", "All day event",
)


@dataclass(frozen=True)
class FixtureSpec:
    start_date: date
    end_date: date
    seed: int = 7
    home_tz: str = "Europe/Amsterdam"
    events_per_day: tuple[int, int] = (1, 5)
    total_events: int | None = None
    matched_events: int | None = None
    hrv_coverage: float = 0.7
    all_day_events: int = 0
    mean_total_sleep_min: float = 450.0
    awake_fraction: float = 0.08
    deep_fraction: float = 0.15
    workout_frequency: float = 0.3

    def __post_init__(self):
        if self.end_date < self.start_date:
            raise ConfigError("to: end date precedes start date")
        lo, hi = self.events_per_day
        if not 0 <= lo <= hi:
            raise ConfigError("events_per_day: need 0 <= lo <= hi")
        if hi > len(EVENT_SLOT_HOURS):
            raise ConfigError(
                f"events_per_day: at most {len(EVENT_SLOT_HOURS)} events fit one day"
            )
        if not 0.0 <= self.hrv_coverage <= 1.0:
            raise ConfigError("hrv_coverage: must be within [0, 1]")
        for key in ("mean_total_sleep_min", "awake_fraction", "deep_fraction",
                    "workout_frequency"):
            if getattr(self, key) < 0:
                raise ConfigError(f"{key}: must be nonnegative")

    @classmethod
    def from_mapping(cls, data: dict) -> "FixtureSpec":
        data = dict(data)
        kwargs = {}
        for src, dst in (("from", "start_date"), ("to", "end_date")):
            if src in data:
                kwargs[dst] = date.fromisoformat(str(data.pop(src)))
        if "events_per_day" in data:
            lo, hi = data.pop("events_per_day")
            kwargs["events_per_day"] = (int(lo), int(hi))
        known = set(cls.__dataclass_fields__)
        for key, value in data.items():
            if key not in known:
                raise ConfigError(f"fixture spec: unknown key {key!r}")
            kwargs[key] = value
        missing = {"start_date", "end_date"} - set(kwargs)
        if missing:
            raise ConfigError(f"fixture spec: missing key {sorted(missing)[0]!r}")
        return cls(**kwargs)

    @classmethod
    def from_file(cls, path: str | Path) -> "FixtureSpec":
        path = Path(path)
        raw = path.read_bytes()
        if path.suffix.lower() == ".json":
            data = json.loads(raw.decode("utf-8"))
        else:
            data = tomllib.loads(raw.decode("utf-8"))
        return cls.from_mapping(data)


def paper_fixture_spec() -> FixtureSpec:
    """The shipped preset: eight months with pinned 452/314 event counts."""
    try:
        from importlib.resources import files

        text = files("wearlog").joinpath("presets/paper.toml").read_text("utf-8")
    except (ModuleNotFoundError, FileNotFoundError):
        text = (Path(__file__).parent / "presets" / "paper.toml").read_text("utf-8")
    return FixtureSpec.from_mapping(tomllib.loads(text))


@dataclass
class FixtureBundle:
    calendar_csv: bytes
    health_xml: bytes
    manifest: dict

    def write_to(self, out_dir: str | Path) -> dict[str, Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        paths = {
            "calendar": out / "calendar.csv",
            "health": out / "export.xml",
            "manifest": out / "manifest.json",
        }
        paths["calendar"].write_bytes(self.calendar_csv)
        paths["health"].write_bytes(self.health_xml)
        paths["manifest"].write_text(
            json.dumps(self.manifest, indent=2, sort_keys=True) + "\n", "utf-8"
        )
        return paths


@dataclass(frozen=True)
class _PlannedEvent:
    day: date
    subject: str
    start_wall: datetime  # aware, home tz
    start_abs: datetime   # same instant in UTC
    duration_min: int

    @property
    def end_abs(self) -> datetime:
        return self.start_abs + timedelta(minutes=self.duration_min)


def generate(spec: FixtureSpec) -> FixtureBundle:
    """Produce (calendar CSV bytes, health XML bytes, ground-truth manifest)."""
    rng = random.Random(spec.seed)
    tz = ZoneInfo(spec.home_tz)
    days = _days(spec.start_date, spec.end_date)
    workdays = [d for d in days if d.weekday() < 5]

    events = _plan_events(rng, spec, workdays, tz)
    n_matched = (
        spec.matched_events
        if spec.matched_events is not None
        else round(spec.hrv_coverage * len(events))
    )
    if n_matched > len(events):
        raise ConfigError("matched_events: exceeds the number of timed events")
    order = list(range(len(events)))
    rng.shuffle(order)
    covered = set(order[:n_matched])

    hrv_samples = _plan_hrv(rng, events, covered, days, tz)
    resting_hr = {
        day: (
            _wall(day, 7, rng.randint(15, 55), tz),
            max(42, min(88, round(rng.gauss(56, 4)))),
        )
        for day in days
    }
    nights = {day: _plan_night(rng, spec, day, tz) for day in days}
    workouts = _plan_workouts(rng, spec, workdays, tz)
    all_day_rows = _plan_all_day(rng, spec, days)

    calendar_csv = _calendar_bytes(events, all_day_rows, tz)
    health_xml, health_records = _health_bytes(
        hrv_samples, resting_hr, nights, workouts, tz
    )
    manifest = _manifest(
        spec, events, n_matched, all_day_rows, hrv_samples, resting_hr,
        nights, workouts, health_records, tz,
    )
    return FixtureBundle(calendar_csv, health_xml, manifest)


def _days(first: date, last: date) -> list[date]:
    out = []
    cursor = first
    while cursor <= last:
        out.append(cursor)
        cursor += timedelta(days=1)
    return out


def _wall(day: date, hour: int, minute: int, tz) -> datetime:
    return datetime.combine(day, time(hour, minute), tzinfo=tz)


def _plan_events(rng, spec: FixtureSpec, workdays, tz) -> list[_PlannedEvent]:
    lo, hi = spec.events_per_day
    if spec.total_events is None:
        counts = [rng.randint(lo, hi) for _ in workdays]
    else:
        if not workdays:
            raise ConfigError("from/to: no weekdays in range to place events on")
        if not lo * len(workdays) <= spec.total_events <= hi * len(workdays):
            raise ConfigError(
                "total_events: not reachable with events_per_day over this range"
            )
        counts = [rng.randint(lo, hi) for _ in workdays]
        cycle = list(range(len(workdays)))
        rng.shuffle(cycle)
        diff = spec.total_events - sum(counts)
        i = 0
        while diff != 0:
            idx = cycle[i % len(cycle)]
            i += 1
            if diff > 0 and counts[idx] < hi:
                counts[idx] += 1
                diff -= 1
            elif diff < 0 and counts[idx] > lo:
                counts[idx] -= 1
                diff += 1

    events: list[_PlannedEvent] = []
    for day, count in zip(workdays, counts):
        hours = sorted(rng.sample(EVENT_SLOT_HOURS, count))
        for hour in hours:
            if rng.random() < 0.85:
                subject = rng.choice(WORK_SUBJECTS)
            else:
                subject = rng.choice(PRIVATE_SUBJECTS)
            start_wall = _wall(day, hour, 0, tz)
            events.append(
                _PlannedEvent(
                    day=day,
                    subject=subject,
                    start_wall=start_wall,
                    start_abs=start_wall.astimezone(timezone.utc),
                    duration_min=rng.choice(EVENT_DURATIONS_MIN),
                )
            )
    return events


def _plan_hrv(rng, events, covered, days, tz) -> list[tuple[datetime, float]]:
    """Absolute-time HRV samples: 1-3 inside each covered event, plus
    ambience samples placed strictly outside every event."""
    samples: list[tuple[datetime, float]] = []
    by_day: dict[date, list[_PlannedEvent]] = {}
    for event in events:
        by_day.setdefault(event.day, []).append(event)

    for i, event in enumerate(events):
        if i not in covered:
            continue
        for _ in range(rng.randint(1, 3)):
            offset_s = round(rng.uniform(0.05, 0.92) * event.duration_min * 60)
            samples.append((event.start_abs + timedelta(seconds=offset_s), _hrv_value(rng)))

    # one exceptionally high reading planted on a May IPO U meeting when the
    # range allows it, an easter egg for eyeballing the group plots
    for i, event in enumerate(events):
        if i in covered and event.subject == "IPO U" and event.day.month == 5:
            offset_s = round(0.5 * event.duration_min * 60)
            samples.append((event.start_abs + timedelta(seconds=offset_s), 115.0))
            break

    for day in days:
        day_events = by_day.get(day, [])
        for _ in range(rng.randint(2, 5)):
            for _attempt in range(8):
                at = _wall(day, rng.randint(6, 22), rng.randint(0, 59), tz)
                at_abs = at.astimezone(timezone.utc)
                if not any(e.start_abs <= at_abs < e.end_abs for e in day_events):
                    samples.append((at_abs, _hrv_value(rng)))
                    break
    samples.sort(key=lambda pair: pair[0])
    return samples


def _hrv_value(rng) -> float:
    return round(min(110.0, max(16.0, rng.gauss(45, 12))), 1)


@dataclass(frozen=True)
class _Night:
    chunks: tuple[tuple[str, int], ...]  # (stage name, minutes)
    start_abs: datetime
    total_sleep_min: int
    awake_min: int
    deep_min: int


def _plan_night(rng, spec: FixtureSpec, day: date, tz) -> _Night:
    total = int(round(min(620.0, max(300.0, rng.gauss(spec.mean_total_sleep_min, 45)))))
    deep = min(int(0.3 * total), int(round(total * spec.deep_fraction * rng.uniform(0.7, 1.3))))
    rem = min(int(0.3 * total), int(round(total * 0.22 * rng.uniform(0.7, 1.25))))
    awake = min(90, int(round(total * spec.awake_fraction * rng.uniform(0.4, 1.8))))
    core = total - deep - rem

    others: list[tuple[str, int]] = []
    for stage, amount in (("Deep", deep), ("Rem", rem), ("Awake", awake)):
        if amount <= 0:
            continue
        pieces = 1 if amount < 16 else rng.randint(1, 3)
        others.extend((stage, part) for part in _split(rng, amount, pieces, 5))
    rng.shuffle(others)
    separators = _split(rng, core, len(others) + 1, 5)
    chunks: list[tuple[str, int]] = [("Core", separators[0])]
    for i, other in enumerate(others):
        chunks.append(other)
        chunks.append(("Core", separators[i + 1]))

    start_wall = _wall(day, 22, 0, tz) + timedelta(minutes=rng.randint(0, 105))
    return _Night(
        chunks=tuple(chunks),
        start_abs=start_wall.astimezone(timezone.utc),
        total_sleep_min=total,
        awake_min=awake,
        deep_min=deep,
    )


def _split(rng, total: int, pieces: int, min_part: int) -> list[int]:
    """Random composition of total into the given number of parts."""
    if pieces <= 0:
        return []
    if total < pieces * min_part:
        min_part = max(1, total // pieces)
    extra = total - pieces * min_part
    cuts = sorted(rng.randint(0, extra) for _ in range(pieces - 1))
    bounds = [0, *cuts, extra]
    return [min_part + bounds[i + 1] - bounds[i] for i in range(pieces)]


def _plan_workouts(rng, spec: FixtureSpec, workdays, tz):
    workouts = []
    for day in workdays:
        if rng.random() >= spec.workout_frequency:
            continue
        activity = rng.choices(WORKOUT_ACTIVITIES, weights=WORKOUT_WEIGHTS)[0]
        start_wall = _wall(day, 12, 2 + rng.randint(0, 8), tz)
        duration = rng.randint(20, 45)
        workouts.append((day, activity, start_wall.astimezone(timezone.utc), duration))
    return workouts


def _plan_all_day(rng, spec: FixtureSpec, days):
    if spec.all_day_events == 0:
        return []
    chosen = sorted(rng.sample(days, min(spec.all_day_events, len(days))))
    return [(day, rng.choice(ALL_DAY_SUBJECTS)) for day in chosen]


def _calendar_bytes(events, all_day_rows, tz) -> bytes:
    rows = []
    for event in events:
        start = event.start_wall
        end = start + timedelta(minutes=event.duration_min)
        rows.append((
            start, False, event.subject,
            start.strftime("%m/%d/%Y"), start.strftime("%I:%M:%S %p"),
            end.strftime("%m/%d/%Y"), end.strftime("%I:%M:%S %p"),
        ))
    for day, subject in all_day_rows:
        start = _wall(day, 0, 0, tz)
        end = start + timedelta(days=1)
        rows.append((
            start, True, subject,
            start.strftime("%m/%d/%Y"), "12:00:00 AM",
            end.strftime("%m/%d/%Y"), "12:00:00 AM",
        ))
    rows.sort(key=lambda r: (r[0], r[2]))

    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\r\n")
    writer.writerow(CALENDAR_HEADER)
    for _, all_day, subject, sd, st, ed, et in rows:
        writer.writerow([subject, sd, st, ed, et, "True" if all_day else "False"])
    return buffer.getvalue().encode("utf-8")


def _apple_ts(moment: datetime, tz) -> str:
    return moment.astimezone(tz).strftime(APPLE_TS)


def _health_bytes(hrv_samples, resting_hr, nights, workouts, tz) -> tuple[bytes, int]:
    out: list[str] = ['<?xml version="1.0" encoding="UTF-8"?>', "<HealthData locale=\"en_NL\">"]
    records = 0

    for day in sorted(resting_hr):
        at, bpm = resting_hr[day]
        ts = _apple_ts(at, tz)
        out.append(
            f'  <Record type="HKQuantityTypeIdentifierRestingHeartRate"'
            f' sourceName="{SOURCE_NAME}" unit="count/min"'
            f' startDate="{ts}" endDate="{ts}" value="{bpm}"/>'
        )
        records += 1

    for at_abs, value in hrv_samples:
        ts = _apple_ts(at_abs, tz)
        out.append(
            f'  <Record type="HKQuantityTypeIdentifierHeartRateVariabilitySDNN"'
            f' sourceName="{SOURCE_NAME}" unit="ms"'
            f' startDate="{ts}" endDate="{ts}" value="{value}"/>'
        )
        records += 1

    stage_value = {
        "Deep": "HKCategoryValueSleepAnalysisAsleepDeep",
        "Core": "HKCategoryValueSleepAnalysisAsleepCore",
        "Rem": "HKCategoryValueSleepAnalysisAsleepREM",
        "Awake": "HKCategoryValueSleepAnalysisAwake",
    }
    for day in sorted(nights):
        night = nights[day]
        cursor = night.start_abs
        for stage, minutes in night.chunks:
            end = cursor + timedelta(minutes=minutes)
            out.append(
                f'  <Record type="HKCategoryTypeIdentifierSleepAnalysis"'
                f' sourceName="{SOURCE_NAME}"'
                f' startDate="{_apple_ts(cursor, tz)}" endDate="{_apple_ts(end, tz)}"'
                f' value="{stage_value[stage]}"/>'
            )
            records += 1
            cursor = end

    for _day, activity, start_abs, duration in workouts:
        end = start_abs + timedelta(minutes=duration)
        out.append(
            f'  <Workout workoutActivityType="HKWorkoutActivityType{activity}"'
            f' duration="{duration}" durationUnit="min" sourceName="{SOURCE_NAME}"'
            f' startDate="{_apple_ts(start_abs, tz)}" endDate="{_apple_ts(end, tz)}"/>'
        )
        records += 1

    out.append("</HealthData>")
    out.append("")
    return "\n".join(out).encode("utf-8"), records


def _manifest(
    spec, events, n_matched, all_day_rows, hrv_samples, resting_hr,
    nights, workouts, health_records, tz,
) -> dict:
    night_entries = {}
    for day in sorted(nights):
        night = nights[day]
        episode_sum = sum(minutes for _stage, minutes in night.chunks)
        end_abs = night.start_abs + timedelta(minutes=episode_sum)
        night_entries[day.isoformat()] = {
            "total_sleep_min": night.total_sleep_min,
            "awake_min": night.awake_min,
            "deep_sleep_min": night.deep_min,
            "episode_minutes_sum": episode_sum,
            "episodes": len(night.chunks),
            "first_start": _apple_ts(night.start_abs, tz),
            "last_end": _apple_ts(end_abs, tz),
        }
    return {
        "seed": spec.seed,
        "home_tz": spec.home_tz,
        "from": spec.start_date.isoformat(),
        "to": spec.end_date.isoformat(),
        "calendar": {
            "timed_events": len(events),
            "all_day_events": len(all_day_rows),
            "matched_events": n_matched,
        },
        "health_records": health_records,
        "hrv_samples": len(hrv_samples),
        "resting_hr": {
            day.isoformat(): bpm for day, (_at, bpm) in sorted(resting_hr.items())
        },
        "nights": night_entries,
        "workouts": [
            {
                "date": day.isoformat(),
                "activity": activity,
                "start": _apple_ts(start_abs, tz),
                "end": _apple_ts(start_abs + timedelta(minutes=duration), tz),
            }
            for day, activity, start_abs, duration in workouts
        ],
    }


# --- large-file smoke fixture ---------------------------------------------------

def iter_scale_export(record_count: int, seed: int = 0) -> Iterator[bytes]:
    """Stream an export with the given number of records, most of them of
    types the parser ignores, mirroring the type mix of real exports."""
    del seed  # reserved; the cycle below is already deterministic
    yield b'<?xml version="1.0" encoding="UTF-8"?>\n<HealthData locale="en_US">\n'
    base = datetime(2024, 1, 1, 0, 0, 0, tzinfo=timezone(timedelta(hours=1)))
    chunk: list[str] = []
    for i in range(record_count):
        moment = base + timedelta(seconds=5 * i)
        ts = moment.strftime(APPLE_TS)
        slot = i % 20
        if slot < 15:
            chunk.append(
                f'<Record type="HKQuantityTypeIdentifierStepCount" sourceName="Phone"'
                f' unit="count" startDate="{ts}" endDate="{ts}" value="{10 + i % 90}"/>'
            )
        elif slot < 17:
            chunk.append(
                f'<Record type="HKQuantityTypeIdentifierHeartRateVariabilitySDNN"'
                f' sourceName="{SOURCE_NAME}" unit="ms" startDate="{ts}" endDate="{ts}"'
                f' value="{30 + i % 50}.{i % 10}"/>'
            )
        elif slot < 18:
            chunk.append(
                f'<Record type="HKQuantityTypeIdentifierRestingHeartRate"'
                f' sourceName="{SOURCE_NAME}" unit="count/min" startDate="{ts}"'
                f' endDate="{ts}" value="{45 + i % 30}"/>'
            )
        else:
            end = (moment + timedelta(minutes=30)).strftime(APPLE_TS)
            stage = (
                "HKCategoryValueSleepAnalysisAsleepCore"
                if slot == 18
                else "HKCategoryValueSleepAnalysisAsleepDeep"
            )
            chunk.append(
                f'<Record type="HKCategoryTypeIdentifierSleepAnalysis"'
                f' sourceName="{SOURCE_NAME}" startDate="{ts}" endDate="{end}"'
                f' value="{stage}"/>'
            )
        if len(chunk) >= 2000:
            yield ("\n".join(chunk) + "\n").encode("ascii")
            chunk = []
    if chunk:
        yield ("\n".join(chunk) + "\n").encode("ascii")
    yield b"</HealthData>\n"


def write_scale_export(sink: str | Path | IO, record_count: int, seed: int = 0) -> None:
    if isinstance(sink, (str, Path)):
        with open(sink, "wb") as stream:
            for chunk in iter_scale_export(record_count, seed):
                stream.write(chunk)
    else:
        for chunk in iter_scale_export(record_count, seed):
            sink.write(chunk)
