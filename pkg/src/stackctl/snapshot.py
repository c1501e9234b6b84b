"""Version -> dated package-repository snapshot and OS base codename."""
from __future__ import annotations

import datetime as dt
from dataclasses import dataclass, replace
from typing import Optional, Sequence, Union

from .model import (CURRENT_DATE, BuildArgs, Channel, CurrentDate, Resolved,
                    SnapshotCalendar, SnapshotDate, StackError, Version)

DEFAULT_REPO_BASE = "https://mran.microsoft.com/snapshot"

Era = tuple[Version, str]


class SnapshotError(StackError):
    pass


@dataclass(frozen=True)
class SnapshotResolution:
    version: Resolved
    snapshot_date: SnapshotDate
    repo_url: str
    os_codename: str

    def concrete_date(self, today: dt.date) -> dt.date:
        return concrete(self.snapshot_date, today)


def concrete(d: SnapshotDate, today: dt.date) -> dt.date:
    return today if d is CURRENT_DATE else d


def snapshot_date(v: Version, cal: SnapshotCalendar) -> SnapshotDate:
    """Last day on which ``v`` was the newest release, never before the archive epoch.

    That day is the release date of the next version in the calendar. The
    newest calendar version has no such day yet and gets CURRENT_DATE.
    """
    versions = cal.versions
    if v not in versions:
        raise SnapshotError(f"version {v} is not in the release calendar")
    i = versions.index(v)
    if i == len(versions) - 1:
        return CURRENT_DATE
    return max(cal.entries[i + 1].release_date, cal.epoch)


def repo_url(d: SnapshotDate, today: dt.date, base: Optional[str] = None) -> str:
    base = (base or DEFAULT_REPO_BASE).rstrip("/")
    return f"{base}/{concrete(d, today).isoformat()}"


def base_os(v: Union[Version, Channel], eras: Sequence[Era]) -> str:
    if not eras:
        raise SnapshotError("no OS eras defined")
    if isinstance(v, Channel):
        return eras[-1][1]
    codename = None
    for min_version, name in eras:
        if min_version <= v:
            codename = name
    if codename is None:
        raise SnapshotError(f"version {v} predates the first OS era ({eras[0][0]})")
    return codename


class SnapshotResolver:
    """Bundles a calendar, era table and repository base for repeated lookups."""

    def __init__(self, calendar: SnapshotCalendar, eras: Sequence[Era],
                 base_url: Optional[str] = None):
        self.calendar = calendar
        self.eras = tuple(eras)
        self.base_url = base_url

    def resolve(self, v: Resolved, today: dt.date) -> SnapshotResolution:
        d = CURRENT_DATE if isinstance(v, Channel) else snapshot_date(v, self.calendar)
        return SnapshotResolution(v, d, repo_url(d, today, self.base_url), base_os(v, self.eras))

    def override(self, base: SnapshotResolution, args: BuildArgs,
                 today: dt.date) -> SnapshotResolution:
        """Apply R_VERSION / BUILD_DATE build arguments on top of ``base``."""
        if args.build_date is not None and args.build_date < self.calendar.epoch:
            raise SnapshotError(
                f"BUILD_DATE {args.build_date} predates the snapshot epoch {self.calendar.epoch}")
        res = base
        if args.r_version is not None and args.r_version != base.version:
            res = self.resolve(args.r_version, today)
        if args.build_date is not None:
            res = replace(res, snapshot_date=args.build_date,
                          repo_url=repo_url(args.build_date, today, self.base_url))
        return res


__all__ = ["DEFAULT_REPO_BASE", "SnapshotError", "SnapshotResolution", "SnapshotResolver",
           "snapshot_date", "repo_url", "base_os", "concrete", "CurrentDate"]
