"""Deterministic simulation of cron and upstream build triggers."""
from __future__ import annotations

import datetime as dt
import json
from dataclasses import dataclass
from typing import Iterable, Optional

from .model import PolicyKind, StackError, StackManifest, Tag, TagKind, UnknownImageError
from .planner import built_tags, rebuild_set, resolve_stack_tag, rolling_tags, topological_order
from .tags import parse_tag

UTC = dt.timezone.utc
BASE_OS_UPDATED = "base-os-image-updated"
SOURCE_CHANGED = "dockerfile-source-changed"
UPSTREAM = "upstream"


class ScheduleError(StackError):
    pass


def parse_timestamp(text: str) -> dt.datetime:
    """ISO date or date-time; naive values are taken as UTC."""
    text = text.strip()
    if text.endswith("Z"):
        text = text[:-1] + "+00:00"
    try:
        ts = dt.datetime.fromisoformat(text)
    except ValueError:
        raise ScheduleError(f"not an ISO timestamp: {text!r}") from None
    return to_utc(ts)


def to_utc(ts: dt.datetime) -> dt.datetime:
    ts = ts.replace(tzinfo=UTC) if ts.tzinfo is None else ts.astimezone(UTC)
    return ts.replace(second=0, microsecond=0)


def format_timestamp(ts: dt.datetime) -> str:
    return to_utc(ts).strftime("%Y-%m-%dT%H:%MZ")


@dataclass(frozen=True)
class UpstreamEvent:
    timestamp: dt.datetime
    source: str
    image: Optional[str] = None
    tag: Optional[Tag] = None

    def __post_init__(self):
        if self.source not in (BASE_OS_UPDATED, SOURCE_CHANGED):
            raise ScheduleError(f"unknown upstream source {self.source!r}")
        if self.source == SOURCE_CHANGED and not self.image:
            raise ScheduleError("a dockerfile-source-changed event needs an image")
        object.__setattr__(self, "timestamp", to_utc(self.timestamp))

    @property
    def label(self) -> str:
        return f"{self.source}({self.image})" if self.image else self.source

    @classmethod
    def from_json(cls, data: dict) -> "UpstreamEvent":
        tag = data.get("tag")
        return cls(parse_timestamp(data["timestamp"]), data["source"], data.get("image"),
                   parse_tag(tag) if tag else None)

    def to_json(self) -> dict:
        out = {"timestamp": format_timestamp(self.timestamp), "source": self.source}
        if self.image:
            out["image"] = self.image
        if self.tag:
            out["tag"] = str(self.tag)
        return out


@dataclass(frozen=True)
class BuildEvent:
    timestamp: dt.datetime
    image: str
    tag: str
    trigger: str
    source: Optional[str] = None

    def to_json(self) -> dict:
        return {"timestamp": format_timestamp(self.timestamp), "image": self.image,
                "tag": self.tag, "trigger": self.trigger, "source": self.source}


def load_upstream(text: str) -> list[UpstreamEvent]:
    """Upstream events from JSON lines; blank lines and ``#`` comments are skipped."""
    out = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        try:
            out.append(UpstreamEvent.from_json(json.loads(line)))
        except (ValueError, KeyError, TypeError) as exc:
            raise ScheduleError(f"upstream line {lineno}: {exc}") from None
    return sorted(out, key=lambda e: e.timestamp)


def dump_events(events: Iterable[BuildEvent]) -> str:
    return "".join(json.dumps(e.to_json(), sort_keys=True) + "\n" for e in events)


def fires(kind: PolicyKind, day: dt.date) -> bool:
    """Whether a cron policy fires at 00:00 UTC on ``day``."""
    if kind is PolicyKind.NIGHTLY:
        return True
    if kind is PolicyKind.WEEKLY:
        return day.weekday() == 0
    if kind is PolicyKind.MONTHLY:
        return day.day == 1
    return False


def next_build(m: StackManifest, image: str, tag: Tag, after: dt.datetime) -> dt.datetime:
    """Earliest cron firing for ``image:tag`` strictly after ``after``."""
    if tag.kind is TagKind.PARTIAL:
        raise ScheduleError(f"partial tag {tag} is an alias and is never built")
    policy = m.image(image).policy_for(tag.kind)
    if policy is None:
        raise ScheduleError(f"{image}:{tag} has no build policy")
    if not policy.kind.is_cron:
        raise ScheduleError(f"{image}:{tag} is only rebuilt on upstream changes")
    day = to_utc(after).date() + dt.timedelta(days=1)
    while not fires(policy.kind, day):
        day += dt.timedelta(days=1)
    return dt.datetime(day.year, day.month, day.day, tzinfo=UTC)


def _upstream_targets(m: StackManifest, ev: UpstreamEvent) -> list[tuple[str, str]]:
    if ev.image is not None and not m.has_image(ev.image):
        raise UnknownImageError(ev.image)
    if ev.source == BASE_OS_UPDATED:
        starts = [ev.image] if ev.image else [n for n, p in m.parents.items() if p is None]
    else:
        starts = [ev.image]
    affected: set[str] = set()
    for s in starts:
        affected |= rebuild_set(m, s)
    targets = []
    for name in topological_order(m, affected):
        if ev.tag is not None:
            resolved = resolve_stack_tag(m, ev.tag)
            if m.available_at(name, resolved):
                targets.append((name, str(ev.tag) if not ev.tag.is_numeric else str(resolved)))
        else:
            targets += [(name, str(t)) for t in rolling_tags(m, name)]
    return targets


def simulate(m: StackManifest, start: dt.datetime, horizon_days: int,
             upstream: Iterable[UpstreamEvent] = ()) -> list[BuildEvent]:
    """Build events in ``[start, start + horizon_days)``.

    Cron policies fire at 00:00 UTC (daily, Mondays, the 1st). Upstream
    events rebuild the affected image and its descendants at the event
    time. Events are ordered by time, then build order.
    """
    if horizon_days < 1:
        raise ScheduleError("horizon must be at least one day")
    start = to_utc(start)
    end = start + dt.timedelta(days=horizon_days)
    order = topological_order(m)
    rank = {n: i for i, n in enumerate(order)}

    cron: list[tuple[str, Tag, PolicyKind]] = []
    for name in order:
        spec = m.image(name)
        for t in built_tags(m, name):
            p = spec.policy_for(t.kind)
            if p is not None and p.kind.is_cron:
                cron.append((name, t, p.kind))

    events: list[BuildEvent] = []
    day = start.date()
    while True:
        midnight = dt.datetime(day.year, day.month, day.day, tzinfo=UTC)
        if midnight >= end:
            break
        if midnight >= start:
            for name, t, kind in cron:
                if fires(kind, day):
                    events.append(BuildEvent(midnight, name, str(t), kind.value))
        day += dt.timedelta(days=1)

    last = None
    for ev in upstream:
        if not start <= ev.timestamp < end:
            raise ScheduleError(f"upstream event at {format_timestamp(ev.timestamp)} is outside the horizon")
        if last is not None and ev.timestamp < last:
            raise ScheduleError("upstream events must be sorted by timestamp")
        last = ev.timestamp
        for name, tag in _upstream_targets(m, ev):
            events.append(BuildEvent(ev.timestamp, name, tag, UPSTREAM, ev.label))

    seen = set()
    out = []
    for e in sorted(events, key=lambda e: (e.timestamp, rank[e.image], e.tag)):
        key = (e.timestamp, e.image, e.tag)
        if key not in seen:
            seen.add(key)
            out.append(e)
    return out


__all__ = ["ScheduleError", "UpstreamEvent", "BuildEvent", "simulate", "next_build", "fires",
           "load_upstream", "dump_events", "parse_timestamp", "format_timestamp",
           "BASE_OS_UPDATED", "SOURCE_CHANGED"]
