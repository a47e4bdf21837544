"""Case segmentation, the three enrichment strategies, cohort filtering."""

import copy
import random
from datetime import date, time, timedelta

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from helpers import AMS, brute_force_join, dt, iv, make_case, make_event, make_log
from wearlog.calendar_ingest import CalendarEvent, EventCategory
from wearlog.errors import UnknownAttribute
from wearlog.health_ingest import (
    HealthBundle,
    HealthSample,
    SampleKind,
    SleepEpisode,
    SleepStage,
    Workout,
)
from wearlog.log_builder import (
    ATTR_AWAKE,
    ATTR_DEEP_SLEEP,
    ATTR_HRV_COUNT,
    ATTR_HRV_MEDIAN,
    ATTR_NIGHT_MISSING,
    ATTR_RESTING_HR,
    ATTR_TOTAL_SLEEP,
    Case,
    CohortPredicate,
    DeriveSelection,
    EventOrigin,
    NightPolicy,
    attach_case_attributes,
    build_event_log,
    derive_events,
    enrich_event_attributes,
    filter_cohort,
    recompute_match_stats,
    segment_cases,
)
from wearlog.temporal import Aggregation


def cal(subject, start, end, category=EventCategory.UNKNOWN, all_day=False):
    return CalendarEvent(subject, iv(start, end), all_day, category)


def hrv(at, value):
    return HealthSample(SampleKind.HRV_SDNN, at, value, "Study Watch")


def rhr(at, value):
    return HealthSample(SampleKind.RESTING_HEART_RATE, at, value, "Study Watch")


def sleep(start, end, stage=SleepStage.CORE):
    return SleepEpisode(iv(start, end), stage, "Study Watch")


class TestSegmentCases:
    def test_one_case_per_date(self):
        events = [
            cal("A", dt(2025, 5, 12, 10), dt(2025, 5, 12, 11)),
            cal("B", dt(2025, 5, 13, 10), dt(2025, 5, 13, 11)),
            cal("C", dt(2025, 5, 14, 10), dt(2025, 5, 14, 11)),
        ]
        cases = segment_cases(events)
        assert [c.case_id for c in cases] == [
            date(2025, 5, 12), date(2025, 5, 13), date(2025, 5, 14),
        ]

    def test_midnight_crossing_event_stays_with_start_date(self):
        events = [
            cal("Late", dt(2025, 5, 12, 23, 50), dt(2025, 5, 13, 0, 20)),
            cal("Next", dt(2025, 5, 13, 9), dt(2025, 5, 13, 10)),
        ]
        cases = segment_cases(events)
        assert [c.case_id for c in cases] == [date(2025, 5, 12), date(2025, 5, 13)]
        assert cases[0].events[0].activity == "Late"

    def test_empty_input(self):
        assert segment_cases([]) == []

    def test_all_day_input_rejected(self):
        with pytest.raises(ValueError):
            segment_cases([cal("X", dt(2025, 5, 12), dt(2025, 5, 13), all_day=True)])

    def test_event_ordering_ties_broken_by_end_then_name(self):
        start = dt(2025, 5, 12, 10)
        events = [
            cal("B", start, start + timedelta(hours=1)),
            cal("A", start, start + timedelta(hours=1)),
            cal("C", start, start + timedelta(minutes=30)),
        ]
        (case,) = segment_cases(events)
        assert [e.activity for e in case.events] == ["C", "A", "B"]

    def test_workday_without_rules_any_event_counts(self):
        (case,) = segment_cases([cal("X", dt(2025, 5, 12, 10), dt(2025, 5, 12, 11))])
        assert case.is_workday is True

    def test_workday_with_rules_requires_work_category(self):
        events = [
            cal("Gym", dt(2025, 5, 12, 10), dt(2025, 5, 12, 11), EventCategory.PRIVATE),
            cal("Sync", dt(2025, 5, 13, 10), dt(2025, 5, 13, 11), EventCategory.WORK),
        ]
        cases = segment_cases(events, has_category_rules=True)
        assert [c.is_workday for c in cases] == [False, True]


class TestEnrichEventAttributes:
    def test_median_of_two_samples(self):
        cases = segment_cases([cal("Meet", dt(2025, 5, 12, 10), dt(2025, 5, 12, 11))])
        samples = [hrv(dt(2025, 5, 12, 10, 15), 50.0), hrv(dt(2025, 5, 12, 10, 45), 60.0)]
        stats = enrich_event_attributes(cases, samples)
        event = cases[0].events[0]
        assert event.attributes[ATTR_HRV_MEDIAN] == 55.0
        assert event.attributes[ATTR_HRV_COUNT] == 2
        assert stats.total_events == 1 and stats.matched_events == 1

    def test_zero_matches_leaves_no_median(self):
        cases = segment_cases([cal("Meet", dt(2025, 5, 12, 10), dt(2025, 5, 12, 11))])
        stats = enrich_event_attributes(cases, [hrv(dt(2025, 5, 12, 12), 50.0)])
        event = cases[0].events[0]
        assert ATTR_HRV_MEDIAN not in event.attributes
        assert event.attributes[ATTR_HRV_COUNT] == 0
        assert stats.matched_events == 0

    def test_event_count_is_preserved(self):
        events = [
            cal("A", dt(2025, 5, 12, 9), dt(2025, 5, 12, 10)),
            cal("B", dt(2025, 5, 12, 10), dt(2025, 5, 12, 11)),
            cal("C", dt(2025, 5, 13, 9), dt(2025, 5, 13, 10)),
        ]
        cases = segment_cases(events)
        before = sum(len(c.events) for c in cases)
        enrich_event_attributes(cases, [hrv(dt(2025, 5, 12, 9, 30), 44.0)])
        assert sum(len(c.events) for c in cases) == before

    def test_derived_events_are_not_matched(self):
        case = make_case(
            date(2025, 5, 12),
            [
                make_event("Meet", dt(2025, 5, 12, 10), dt(2025, 5, 12, 11)),
                make_event("Walking", dt(2025, 5, 12, 12), dt(2025, 5, 12, 13),
                           origin=EventOrigin.WORKOUT),
            ],
        )
        stats = enrich_event_attributes([case], [hrv(dt(2025, 5, 12, 12, 30), 70.0)])
        assert stats.total_events == 1
        assert stats.matched_events == 0
        walking = [e for e in case.events if e.origin is EventOrigin.WORKOUT][0]
        assert walking.attributes == {}

    def test_mean_aggregate_still_stored_under_hrv_median(self):
        cases = segment_cases([cal("Meet", dt(2025, 5, 12, 10), dt(2025, 5, 12, 11))])
        samples = [hrv(dt(2025, 5, 12, 10, 15), 50.0), hrv(dt(2025, 5, 12, 10, 45), 70.0)]
        enrich_event_attributes(cases, samples, Aggregation.MEAN)
        assert cases[0].events[0].attributes[ATTR_HRV_MEDIAN] == 60.0

    @settings(max_examples=60, deadline=None)
    @given(
        raw_events=st.lists(
            st.tuples(st.integers(0, 27), st.integers(8, 16), st.integers(10, 120)),
            max_size=25,
        ),
        raw_samples=st.lists(
            st.tuples(st.integers(0, 28 * 24 * 60), st.floats(20, 100)), max_size=60
        ),
    )
    def test_matched_count_equals_brute_force(self, raw_events, raw_samples):
        base = dt(2025, 3, 1)
        events = [
            cal(f"E{i}", base + timedelta(days=d, hours=h),
                base + timedelta(days=d, hours=h, minutes=m))
            for i, (d, h, m) in enumerate(raw_events)
        ]
        samples = [
            hrv(base + timedelta(minutes=offset), value)
            for offset, value in sorted(raw_samples)
        ]
        cases = segment_cases(events)
        stats = enrich_event_attributes(cases, samples)
        ordered = [e.interval for c in cases for e in c.events]
        joined = brute_force_join(ordered, [(s.at, s.value) for s in samples])
        assert stats.matched_events == sum(1 for vals in joined.values() if vals)


class TestAttachCaseAttributes:
    def night_bundle(self):
        return HealthBundle(sleep=[
            sleep(dt(2025, 5, 12, 23, 30), dt(2025, 5, 13, 0, 10), SleepStage.DEEP),
            sleep(dt(2025, 5, 13, 0, 10), dt(2025, 5, 13, 6, 0), SleepStage.CORE),
            sleep(dt(2025, 5, 13, 6, 0), dt(2025, 5, 13, 6, 20), SleepStage.AWAKE),
        ])

    def test_night_totals(self):
        case = make_case(date(2025, 5, 12))
        attach_case_attributes([case], self.night_bundle(), home_tz=AMS)
        assert case.attributes[ATTR_TOTAL_SLEEP] == 390
        assert case.attributes[ATTR_DEEP_SLEEP] == 40
        assert case.attributes[ATTR_AWAKE] == 20
        assert ATTR_NIGHT_MISSING not in case.attributes

    def test_empty_window_flags_night_missing(self):
        case = make_case(date(2025, 6, 1))
        stats = attach_case_attributes([case], self.night_bundle(), home_tz=AMS)
        assert case.attributes[ATTR_TOTAL_SLEEP] == 0
        assert case.attributes[ATTR_AWAKE] == 0
        assert case.attributes[ATTR_DEEP_SLEEP] == 0
        assert case.attributes[ATTR_NIGHT_MISSING] is True
        assert stats.nights_missing == 1

    def test_in_bed_unspecified_excluded_from_totals(self):
        bundle = HealthBundle(sleep=[
            sleep(dt(2025, 5, 12, 23, 0), dt(2025, 5, 12, 23, 30),
                  SleepStage.IN_BED_UNSPECIFIED),
            sleep(dt(2025, 5, 12, 23, 30), dt(2025, 5, 13, 6, 30), SleepStage.CORE),
        ])
        case = make_case(date(2025, 5, 12))
        attach_case_attributes([case], bundle, home_tz=AMS)
        assert case.attributes[ATTR_TOTAL_SLEEP] == 420

    def test_duplicate_resting_hr_last_write_wins_with_warning(self):
        bundle = HealthBundle(samples=[
            rhr(dt(2025, 5, 12, 7, 0), 60.0),
            rhr(dt(2025, 5, 12, 9, 0), 55.0),
        ])
        case = make_case(date(2025, 5, 12))
        stats = attach_case_attributes([case], bundle, home_tz=AMS)
        assert case.attributes[ATTR_RESTING_HR] == 55.0
        assert stats.duplicate_resting_hr == 1

    def test_resting_hr_absent_when_no_sample(self):
        case = make_case(date(2025, 5, 12))
        attach_case_attributes([case], HealthBundle(), home_tz=AMS)
        assert ATTR_RESTING_HR not in case.attributes

    def test_window_boundaries_half_open(self):
        # starts exactly at 18:00 on D are in; starts at 12:00 on D+1 are out
        bundle = HealthBundle(sleep=[
            sleep(dt(2025, 5, 12, 18, 0), dt(2025, 5, 12, 19, 0), SleepStage.CORE),
            sleep(dt(2025, 5, 13, 12, 0), dt(2025, 5, 13, 13, 0), SleepStage.CORE),
        ])
        case = make_case(date(2025, 5, 12))
        attach_case_attributes([case], bundle, home_tz=AMS)
        assert case.attributes[ATTR_TOTAL_SLEEP] == 60

    def test_reverse_policy_attributes_previous_night(self):
        case = make_case(date(2025, 5, 13))
        attach_case_attributes(
            [case], self.night_bundle(), NightPolicy(reverse=True), home_tz=AMS
        )
        assert case.attributes[ATTR_TOTAL_SLEEP] == 390

    def test_custom_window_bounds(self):
        bundle = HealthBundle(sleep=[
            sleep(dt(2025, 5, 12, 20, 0), dt(2025, 5, 12, 21, 0), SleepStage.CORE),
        ])
        case = make_case(date(2025, 5, 12))
        narrow = NightPolicy(window_start=time(21, 0), window_end=time(6, 0))
        attach_case_attributes([case], bundle, narrow, home_tz=AMS)
        assert case.attributes[ATTR_NIGHT_MISSING] is True


class TestDeriveEvents:
    def make_cases(self):
        return segment_cases([
            cal("Morning", dt(2025, 5, 12, 10), dt(2025, 5, 12, 11)),
            cal("Afternoon", dt(2025, 5, 12, 14), dt(2025, 5, 12, 15)),
        ])

    def walking_bundle(self):
        return HealthBundle(workouts=[
            Workout(iv(dt(2025, 5, 12, 12, 10), dt(2025, 5, 12, 12, 40)),
                    "Walking", "Study Watch"),
        ])

    def test_workout_lands_between_meetings(self):
        cases = self.make_cases()
        added = derive_events(cases, self.walking_bundle(),
                              DeriveSelection(workouts=True), home_tz=AMS)
        assert added == 1
        assert [e.activity for e in cases[0].events] == ["Morning", "Walking", "Afternoon"]
        assert cases[0].events[1].origin is EventOrigin.WORKOUT

    def test_nothing_selected_is_identity(self):
        cases = self.make_cases()
        before = copy.deepcopy(cases)
        derive_events(cases, self.walking_bundle(),
                      DeriveSelection(workouts=False, sleep=False), home_tz=AMS)
        assert cases == before

    def test_consolidated_sleep_event_spans_night(self):
        cases = self.make_cases()
        bundle = HealthBundle(sleep=[
            sleep(dt(2025, 5, 12, 23, 30), dt(2025, 5, 13, 0, 10), SleepStage.DEEP),
            sleep(dt(2025, 5, 13, 0, 10), dt(2025, 5, 13, 6, 0), SleepStage.CORE),
            sleep(dt(2025, 5, 13, 6, 0), dt(2025, 5, 13, 6, 20), SleepStage.AWAKE),
        ])
        derive_events(cases, bundle, DeriveSelection(workouts=False, sleep=True),
                      home_tz=AMS)
        sleep_events = [e for e in cases[0].events if e.origin is EventOrigin.SLEEP]
        (event,) = sleep_events
        assert event.activity == "Sleep"
        assert event.interval == iv(dt(2025, 5, 12, 23, 30), dt(2025, 5, 13, 6, 20))

    def test_per_stage_mode_emits_one_event_per_episode(self):
        cases = self.make_cases()
        bundle = HealthBundle(sleep=[
            sleep(dt(2025, 5, 12, 23, 30), dt(2025, 5, 13, 0, 10), SleepStage.DEEP),
            sleep(dt(2025, 5, 13, 0, 10), dt(2025, 5, 13, 6, 0), SleepStage.CORE),
        ])
        derive_events(cases, bundle,
                      DeriveSelection(workouts=False, sleep=True, sleep_per_stage=True),
                      home_tz=AMS)
        names = [e.activity for e in cases[0].events if e.origin is EventOrigin.SLEEP]
        assert names == ["Deep Sleep", "Core Sleep"]

    def test_workout_on_caseless_date_dropped(self):
        cases = self.make_cases()
        bundle = HealthBundle(workouts=[
            Workout(iv(dt(2025, 7, 1, 12), dt(2025, 7, 1, 13)), "Running", "W"),
        ])
        added = derive_events(cases, bundle, DeriveSelection(workouts=True), home_tz=AMS)
        assert added == 0
        assert len(cases) == 1  # no ghost case appears for the workout's date

    def test_calendar_events_unchanged_attribute_for_attribute(self):
        cases = self.make_cases()
        enrich_event_attributes(cases, [hrv(dt(2025, 5, 12, 10, 30), 48.0)])
        before = {
            id(e): (e.activity, e.interval, copy.deepcopy(e.attributes))
            for c in cases for e in c.events
        }
        derive_events(cases, self.walking_bundle(), DeriveSelection(workouts=True),
                      home_tz=AMS)
        after = {
            id(e): (e.activity, e.interval, e.attributes)
            for c in cases for e in c.events if e.origin is EventOrigin.CALENDAR
        }
        assert after == {k: before[k] for k in after}

    def test_every_event_in_exactly_one_case(self):
        cases = self.make_cases()
        bundle = HealthBundle(
            workouts=self.walking_bundle().workouts,
            sleep=[sleep(dt(2025, 5, 12, 23), dt(2025, 5, 13, 6))],
        )
        derive_events(cases, bundle, DeriveSelection(workouts=True, sleep=True),
                      home_tz=AMS)
        ids = [id(e) for c in cases for e in c.events]
        assert len(ids) == len(set(ids))


def sleep_case(day, total, awake):
    return make_case(
        date(2025, 5, day), is_workday=True,
        total_sleep_min=float(total), awake_min=float(awake), deep_sleep_min=30.0,
    )


GOOD_SLEEP = CohortPredicate.parse("total_sleep_min>=480,awake_min<60")


class TestFilterCohort:
    def test_boundary_case_retained(self):
        log = make_log(sleep_case(12, 480, 59))
        assert len(filter_cohort(log, GOOD_SLEEP).cases) == 1

    def test_just_below_sleep_threshold_excluded(self):
        log = make_log(sleep_case(12, 479, 59))
        assert filter_cohort(log, GOOD_SLEEP).cases == []

    def test_awake_at_threshold_excluded(self):
        log = make_log(sleep_case(12, 480, 60))
        assert filter_cohort(log, GOOD_SLEEP).cases == []

    def test_empty_predicate_keeps_everything(self):
        log = make_log(sleep_case(12, 100, 100), sleep_case(13, 10, 300))
        filtered = filter_cohort(log, CohortPredicate())
        assert [c.case_id for c in filtered.cases] == [c.case_id for c in log.cases]

    def test_unknown_attribute_raises(self):
        log = make_log(sleep_case(12, 480, 10))
        with pytest.raises(UnknownAttribute):
            filter_cohort(log, CohortPredicate.parse("no_such_attr>=1"))

    def test_missing_attribute_on_case_fails_clause(self):
        case = make_case(date(2025, 5, 12), total_sleep_min=500.0)
        other = sleep_case(13, 500, 10)
        log = make_log(case, other)
        filtered = filter_cohort(log, GOOD_SLEEP)
        assert [c.case_id for c in filtered.cases] == [date(2025, 5, 13)]

    def test_is_workday_clause(self):
        workday = sleep_case(12, 480, 10)
        weekend = make_case(date(2025, 5, 17), is_workday=False,
                            total_sleep_min=500.0, awake_min=5.0)
        log = make_log(workday, weekend)
        filtered = filter_cohort(log, CohortPredicate.parse("is_workday=true"))
        assert [c.case_id for c in filtered.cases] == [date(2025, 5, 12)]

    def test_match_stats_recomputed(self):
        good = make_case(
            date(2025, 5, 12), total_sleep_min=500.0, awake_min=10.0,
            events=[make_event("A", dt(2025, 5, 12, 10), dt(2025, 5, 12, 11),
                               hrv_sample_count=2, hrv_median_ms=50.0)],
        )
        bad = make_case(
            date(2025, 5, 13), total_sleep_min=100.0, awake_min=10.0,
            events=[make_event("B", dt(2025, 5, 13, 10), dt(2025, 5, 13, 11),
                               hrv_sample_count=1, hrv_median_ms=60.0)],
        )
        log = make_log(good, bad)
        filtered = filter_cohort(log, GOOD_SLEEP)
        assert filtered.match_stats.total_events == 1
        assert filtered.match_stats.matched_events == 1

    def test_parse_rejects_garbage(self):
        with pytest.raises(ValueError):
            CohortPredicate.parse("total_sleep_min !! 480")

    def test_randomized_against_naive_evaluator(self):
        rng = random.Random(42)
        attrs = ["total_sleep_min", "awake_min", "deep_sleep_min"]
        cases = [
            make_case(
                date(2025, 5, 1) + timedelta(days=i),
                total_sleep_min=float(rng.randint(0, 600)),
                awake_min=float(rng.randint(0, 120)),
                deep_sleep_min=float(rng.randint(0, 120)),
            )
            for i in range(40)
        ]
        log = make_log(*cases)
        ops = [">=", "<=", "<", ">", "="]
        for _ in range(50):
            clauses = ",".join(
                f"{rng.choice(attrs)}{rng.choice(ops)}{rng.randint(0, 600)}"
                for _ in range(rng.randint(0, 3))
            )
            predicate = CohortPredicate.parse(clauses)
            expected = [
                c.case_id for c in log.cases
                if all(cl.holds(c) for cl in predicate.clauses)
            ]
            got = [c.case_id for c in filter_cohort(log, predicate).cases]
            assert got == expected


class TestSchema:
    def test_every_used_attribute_declared(self):
        case = make_case(
            date(2025, 5, 12), total_sleep_min=480.0, night_missing=True,
            events=[make_event("A", dt(2025, 5, 12, 10), dt(2025, 5, 12, 11),
                               hrv_sample_count=3, hrv_median_ms=47.5)],
        )
        log = build_event_log([case], recompute_match_stats([case]))
        assert log.schema.event_attrs == {
            "hrv_median_ms": "float", "hrv_sample_count": "int",
        }
        assert log.schema.case_attrs["total_sleep_min"] == "float"
        assert log.schema.case_attrs["night_missing"] == "boolean"
        assert log.schema.case_attrs["is_workday"] == "boolean"

    def test_int_and_float_widen_to_float(self):
        cases = [
            make_case(date(2025, 5, 12), events=[
                make_event("A", dt(2025, 5, 12, 10), dt(2025, 5, 12, 11), x=1)
            ]),
            make_case(date(2025, 5, 13), events=[
                make_event("B", dt(2025, 5, 13, 10), dt(2025, 5, 13, 11), x=1.5)
            ]),
        ]
        log = build_event_log(cases, recompute_match_stats(cases))
        assert log.schema.event_attrs["x"] == "float"

    def test_match_stats_invariant(self):
        with pytest.raises(ValueError):
            from wearlog.log_builder import MatchStats

            MatchStats(total_events=1, matched_events=2)
