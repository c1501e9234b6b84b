import calendar
import datetime as dt
from collections import Counter

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stackctl.model import DEVEL, LATEST, UnknownImageError
from stackctl.planner import rebuild_set, topological_order
from stackctl.schedule import (BASE_OS_UPDATED, SOURCE_CHANGED, ScheduleError, UpstreamEvent,
                               dump_events, format_timestamp, load_upstream, next_build,
                               parse_timestamp, simulate)
from stackctl.tags import parse_tag

UTC = dt.timezone.utc
OCT1 = dt.datetime(2017, 10, 1, tzinfo=UTC)
CHAIN = ["r-ver", "rstudio", "tidyverse", "verse", "geospatial"]


def cron_days(kind, start, days):
    """Oracle: the days in the window on which a cron rule fires, via the calendar module."""
    out = []
    for i in range(days):
        d = start + dt.timedelta(days=i)
        if (kind == "nightly" or (kind == "weekly" and calendar.weekday(d.year, d.month, d.day) == calendar.MONDAY)
                or (kind == "monthly" and d.day == 1)):
            out.append(d)
    return out


def test_versioned_counts(versioned):
    events = simulate(versioned, OCT1, 35)
    per = Counter((e.image, e.tag) for e in events)
    for image in CHAIN:
        assert per[(image, "latest")] == 35
        assert per[(image, "devel")] == 35
    numeric = [k for k in per if k[1] not in ("latest", "devel")]
    assert numeric and all(per[k] == 2 for k in numeric)
    # 3.3.0 and earlier exist for r-ver only
    assert (("r-ver", "3.1.0") in per) and (("verse", "3.1.0") not in per)
    assert {e.timestamp.date() for e in events if e.trigger == "monthly"} == {
        dt.date(2017, 10, 1), dt.date(2017, 11, 1)}


def test_drd_weekly(testing):
    events = simulate(testing, OCT1, 35)
    drd = [e for e in events if e.image == "drd"]
    assert [e.timestamp.date() for e in drd] == [dt.date(2017, 10, d) for d in (2, 9, 16, 23, 30)]
    assert {e.trigger for e in drd} == {"weekly"}
    # nothing else in the testing stack is cron-driven
    assert {e.image for e in events} == {"drd"}


def test_base_os_event_cascades(testing):
    ts = dt.datetime(2017, 10, 10, 6, 30, tzinfo=UTC)
    events = simulate(testing, OCT1, 35, [UpstreamEvent(ts, BASE_OS_UPDATED, "r-base")])
    up = [e for e in events if e.trigger == "upstream"]
    assert [e.image for e in up] == topological_order(testing)
    assert up[0].image == "r-base" and len(up) == 7
    assert {e.timestamp for e in up} == {ts}
    assert {e.source for e in up} == {"base-os-image-updated(r-base)"}
    assert {e.image: e.tag for e in up}["rstudio"] == "testing"


def test_source_change_cascade(versioned):
    ts = dt.datetime(2017, 10, 3, 12, tzinfo=UTC)
    ev = UpstreamEvent(ts, SOURCE_CHANGED, "verse", parse_tag("3.4.1"))
    up = [e for e in simulate(versioned, OCT1, 7, [ev]) if e.trigger == "upstream"]
    assert [(e.image, e.tag) for e in up] == [("verse", "3.4.1"), ("geospatial", "3.4.1")]


def test_sorted_and_unique(versioned):
    events = simulate(versioned, OCT1, 35)
    rank = {n: i for i, n in enumerate(topological_order(versioned))}
    keys = [(e.timestamp, rank[e.image], e.tag) for e in events]
    assert keys == sorted(keys)
    assert len({(e.timestamp, e.image, e.tag) for e in events}) == len(events)


def test_upstream_coinciding_with_cron_keeps_cron(versioned):
    midnight = dt.datetime(2017, 10, 2, tzinfo=UTC)
    events = simulate(versioned, OCT1, 3, [UpstreamEvent(midnight, BASE_OS_UPDATED)])
    at = [e for e in events if e.timestamp == midnight]
    assert len(at) == 10 and {e.trigger for e in at} == {"nightly"}


def test_upstream_errors(versioned):
    with pytest.raises(ScheduleError):
        simulate(versioned, OCT1, 1, [UpstreamEvent(OCT1 + dt.timedelta(days=1), BASE_OS_UPDATED)])
    late, early = (UpstreamEvent(OCT1 + dt.timedelta(hours=h), BASE_OS_UPDATED) for h in (5, 1))
    with pytest.raises(ScheduleError):
        simulate(versioned, OCT1, 1, [late, early])
    with pytest.raises(UnknownImageError):
        simulate(versioned, OCT1, 1, [UpstreamEvent(OCT1, SOURCE_CHANGED, "ghost")])
    with pytest.raises(ScheduleError):
        UpstreamEvent(OCT1, "cosmic-ray")
    with pytest.raises(ScheduleError):
        simulate(versioned, OCT1, 0)


def test_next_build(versioned, testing):
    at = dt.datetime(2017, 10, 15, 13, 0, tzinfo=UTC)
    assert next_build(versioned, "verse", LATEST, at) == dt.datetime(2017, 10, 16, tzinfo=UTC)
    assert next_build(versioned, "verse", parse_tag("3.4.1"), at) == dt.datetime(2017, 11, 1, tzinfo=UTC)
    assert next_build(testing, "drd", LATEST, at) == dt.datetime(2017, 10, 16, tzinfo=UTC)
    assert next_build(testing, "drd", LATEST, dt.datetime(2017, 10, 16, tzinfo=UTC)) == \
        dt.datetime(2017, 10, 23, tzinfo=UTC)
    with pytest.raises(ScheduleError, match="upstream"):
        next_build(testing, "r-base", LATEST, at)
    with pytest.raises(ScheduleError, match="alias"):
        next_build(versioned, "verse", parse_tag("3.4"), at)
    with pytest.raises(ScheduleError, match="no build policy"):
        next_build(testing, "shiny", DEVEL, at)


def test_timestamps_and_jsonl(testing):
    assert parse_timestamp("2017-10-10T06:30Z") == dt.datetime(2017, 10, 10, 6, 30, tzinfo=UTC)
    assert parse_timestamp("2017-10-10T08:30+02:00") == dt.datetime(2017, 10, 10, 6, 30, tzinfo=UTC)
    assert format_timestamp(dt.datetime(2017, 10, 10, 6, 30)) == "2017-10-10T06:30Z"
    text = ('# feed\n{"timestamp": "2017-10-12T00:00Z", "source": "dockerfile-source-changed", "image": "shiny"}\n'
            '\n{"timestamp": "2017-10-10T06:30Z", "source": "base-os-image-updated"}\n')
    evs = load_upstream(text)
    assert [e.source for e in evs] == [BASE_OS_UPDATED, SOURCE_CHANGED]
    assert [e.to_json() for e in evs][1] == {"timestamp": "2017-10-12T00:00Z",
                                             "source": SOURCE_CHANGED, "image": "shiny"}
    out = dump_events(simulate(testing, OCT1, 35, evs))
    assert out == dump_events(simulate(testing, OCT1, 35, evs))
    with pytest.raises(ScheduleError, match="line 1"):
        load_upstream("{not json}\n")


@settings(max_examples=100, deadline=None)
@given(st.dates(dt.date(2016, 1, 1), dt.date(2030, 12, 31)), st.integers(1, 70))
def test_cron_matches_calendar_oracle(versioned, start, days):
    begin = dt.datetime(start.year, start.month, start.day, tzinfo=UTC)
    events = simulate(versioned, begin, days)
    got = Counter((e.image, e.tag, e.trigger) for e in events)
    assert got[("verse", "latest", "nightly")] == len(cron_days("nightly", start, days))
    assert got[("r-ver", "3.1.0", "monthly")] == len(cron_days("monthly", start, days))


@settings(max_examples=100, deadline=None)
@given(st.dates(dt.date(2016, 1, 1), dt.date(2030, 12, 31)), st.integers(1, 70))
def test_weekly_matches_calendar_oracle(testing, start, days):
    begin = dt.datetime(start.year, start.month, start.day, tzinfo=UTC)
    drd = [e.timestamp.date() for e in simulate(testing, begin, days) if e.image == "drd"]
    assert drd == cron_days("weekly", start, days)


@settings(max_examples=100, deadline=None)
@given(st.data())
def test_upstream_cascade_is_rebuild_set(testing, data):
    image = data.draw(st.sampled_from(topological_order(testing)))
    minute = data.draw(st.integers(1, 7 * 24 * 60 - 1))
    ts = OCT1 + dt.timedelta(minutes=minute)
    ev = UpstreamEvent(ts, SOURCE_CHANGED, image)
    up = [e for e in simulate(testing, OCT1, 7, [ev]) if e.timestamp == ts]
    assert {e.image for e in up} == rebuild_set(testing, image)
    assert up[0].image == image
