"""Domain types shared by every stackctl module.

All types are frozen dataclasses; collections are stored as tuples or
frozensets so instances are hashable and safe to share.
"""
from __future__ import annotations

import datetime as dt
import enum
import re
from dataclasses import dataclass, field
from typing import Mapping, Optional, Union

_COMPONENT = r"(?:0|[1-9][0-9]*)"
_VERSION_RE = re.compile(rf"^({_COMPONENT})\.({_COMPONENT})\.({_COMPONENT})$")


class StackError(Exception):
    """Base class for every error raised by stackctl."""


@dataclass(frozen=True, order=True)
class Version:
    major: int
    minor: int
    patch: int

    def __post_init__(self):
        for part in (self.major, self.minor, self.patch):
            if not isinstance(part, int) or isinstance(part, bool) or part < 0:
                raise ValueError(f"version components must be non-negative ints: {self!r}")

    @classmethod
    def parse(cls, text: str) -> "Version":
        m = _VERSION_RE.match(text.strip())
        if not m:
            raise ValueError(f"not a M.m.p version: {text!r}")
        return cls(*(int(g) for g in m.groups()))

    @property
    def parts(self) -> tuple[int, int, int]:
        return (self.major, self.minor, self.patch)

    def __str__(self) -> str:
        return f"{self.major}.{self.minor}.{self.patch}"


class Channel(enum.Enum):
    """Named, non-numeric build channels."""

    LATEST = "latest"
    DEVEL = "devel"
    TESTING = "testing"

    def __str__(self) -> str:
        return self.value


class TagKind(enum.Enum):
    LATEST = "latest"
    DEVEL = "devel"
    TESTING = "testing"
    PARTIAL = "partial"
    EXACT = "exact"


NAMED_KINDS = {TagKind.LATEST: Channel.LATEST, TagKind.DEVEL: Channel.DEVEL,
               TagKind.TESTING: Channel.TESTING}


@dataclass(frozen=True)
class Tag:
    kind: TagKind
    parts: tuple[int, ...] = ()

    def __post_init__(self):
        if self.kind is TagKind.EXACT and len(self.parts) != 3:
            raise ValueError("exact tags carry three components")
        if self.kind is TagKind.PARTIAL and len(self.parts) not in (1, 2):
            raise ValueError("partial tags carry one or two components")
        if self.kind in NAMED_KINDS and self.parts:
            raise ValueError("named tags carry no components")

    @classmethod
    def exact(cls, v: Version) -> "Tag":
        return cls(TagKind.EXACT, v.parts)

    @classmethod
    def partial(cls, *parts: int) -> "Tag":
        return cls(TagKind.PARTIAL, tuple(parts))

    @property
    def is_numeric(self) -> bool:
        return self.kind in (TagKind.PARTIAL, TagKind.EXACT)

    @property
    def version(self) -> Version:
        if self.kind is not TagKind.EXACT:
            raise ValueError(f"{self} is not an exact tag")
        return Version(*self.parts)

    @property
    def channel(self) -> Channel:
        return NAMED_KINDS[self.kind]

    def __str__(self) -> str:
        if self.is_numeric:
            return ".".join(str(p) for p in self.parts)
        return self.kind.value


LATEST = Tag(TagKind.LATEST)
DEVEL = Tag(TagKind.DEVEL)
TESTING = Tag(TagKind.TESTING)

# What a tag resolves to: a concrete version or a named channel.
Resolved = Union[Version, Channel]


class CurrentDate(enum.Enum):
    """Marker for a snapshot that follows the build day."""

    TOKEN = "current"

    def __str__(self) -> str:
        return "current date"


CURRENT_DATE = CurrentDate.TOKEN
SnapshotDate = Union[dt.date, CurrentDate]


@dataclass(frozen=True)
class CalendarEntry:
    version: Version
    release_date: dt.date


@dataclass(frozen=True)
class SnapshotCalendar:
    entries: tuple[CalendarEntry, ...] = ()
    epoch: dt.date = dt.date.min

    def __post_init__(self):
        for a, b in zip(self.entries, self.entries[1:]):
            if not (a.version < b.version and a.release_date < b.release_date):
                raise ValueError(
                    f"calendar entries must increase in version and date: {a.version} -> {b.version}")

    @property
    def versions(self) -> tuple[Version, ...]:
        return tuple(e.version for e in self.entries)

    def release_date(self, v: Version) -> dt.date:
        for e in self.entries:
            if e.version == v:
                return e.release_date
        raise KeyError(v)


@dataclass(frozen=True)
class BuildArgs:
    r_version: Optional[Version] = None
    build_date: Optional[dt.date] = None
    rstudio_version: Optional[str] = None
    pandoc_templates_version: Optional[str] = None

    def is_empty(self) -> bool:
        return all(getattr(self, f) is None for f in BUILD_ARG_NAMES.values())


# Docker ARG name -> BuildArgs field.
BUILD_ARG_NAMES = {
    "R_VERSION": "r_version",
    "BUILD_DATE": "build_date",
    "RSTUDIO_VERSION": "rstudio_version",
    "PANDOC_TEMPLATES_VERSION": "pandoc_templates_version",
}


@dataclass(frozen=True)
class LabelSet:
    license: str = ""
    vcs_url: str = ""
    vendor: str = ""
    extra: tuple[tuple[str, str], ...] = ()

    def as_dict(self, prefix: str = "org.label-schema.") -> dict[str, str]:
        """Rendered label keys; empty core fields are left out."""
        out = {}
        for key, value in (("license", self.license), ("vcs-url", self.vcs_url),
                           ("vendor", self.vendor)):
            if value:
                out[prefix + key] = value
        out.update(self.extra)
        return dict(sorted(out.items()))

    def merged(self, override: "LabelSet") -> "LabelSet":
        extra = dict(self.extra)
        extra.update(override.extra)
        return LabelSet(license=override.license or self.license,
                        vcs_url=override.vcs_url or self.vcs_url,
                        vendor=override.vendor or self.vendor,
                        extra=tuple(sorted(extra.items())))


@dataclass(frozen=True)
class Service:
    name: str
    port: Optional[int] = None

    def __str__(self) -> str:
        return self.name if self.port is None else f"{self.name}:{self.port}"


@dataclass(frozen=True)
class SystemPackage:
    name: str
    channel: Optional[str] = None  # None means the image's default release

    def __str__(self) -> str:
        return self.name if self.channel is None else f"{self.name}/{self.channel}"


@dataclass(frozen=True)
class ImageRef:
    """A parent reference. ``tag`` of None means "same tag as the child"."""

    name: str
    tag: Optional[Tag] = None

    def __str__(self) -> str:
        return self.name if self.tag is None else f"{self.name}:{self.tag}"


class PolicyKind(enum.Enum):
    NIGHTLY = "nightly"
    WEEKLY = "weekly"
    MONTHLY = "monthly"
    ON_UPSTREAM_CHANGE = "upstream"

    @property
    def is_cron(self) -> bool:
        return self is not PolicyKind.ON_UPSTREAM_CHANGE


@dataclass(frozen=True)
class BuildPolicy:
    kind: PolicyKind
    applies_to: frozenset[TagKind]


INHERITED = "inherited"


@dataclass(frozen=True)
class ImageSpec:
    name: str
    parent: Optional[ImageRef] = None
    repository: Optional[str] = None
    base_os_rule: str = INHERITED
    system_packages: tuple[SystemPackage, ...] = ()
    r_packages: tuple[str, ...] = ()
    exposed_args: tuple[str, ...] = ()
    build_args: BuildArgs = field(default_factory=BuildArgs)
    labels: LabelSet = field(default_factory=LabelSet)
    services: tuple[Service, ...] = ()
    compressed_size_mb: float = 0.0
    downloads: Optional[int] = None
    description: str = ""
    source_build: bool = False
    policies: tuple[BuildPolicy, ...] = ()

    def policy_for(self, kind: TagKind) -> Optional[BuildPolicy]:
        for p in self.policies:
            if kind in p.applies_to:
                return p
        return None


@dataclass(frozen=True)
class StackManifest:
    stack_name: str
    images: tuple[ImageSpec, ...]
    calendar: SnapshotCalendar = field(default_factory=SnapshotCalendar)
    # tag string ("3.4.1", "latest", ...) -> names of images built with that tag
    availability: tuple[tuple[str, frozenset[str]], ...] = ()
    os_eras: tuple[tuple[Version, str], ...] = ()
    namespace: str = ""
    os_channel: str = "stable"
    repo_base: Optional[str] = None

    @property
    def image_names(self) -> tuple[str, ...]:
        return tuple(i.name for i in self.images)

    def image(self, name: str) -> ImageSpec:
        for i in self.images:
            if i.name == name:
                return i
        raise UnknownImageError(name)

    def has_image(self, name: str) -> bool:
        return any(i.name == name for i in self.images)

    @property
    def availability_map(self) -> dict[str, frozenset[str]]:
        return dict(self.availability)

    @property
    def tag_universe(self) -> frozenset[Version]:
        out = set()
        for key, _ in self.availability:
            try:
                out.add(Version.parse(key))
            except ValueError:
                continue
        return frozenset(out)

    def universe_for(self, image: str) -> frozenset[Version]:
        """Numeric versions at which ``image`` is built."""
        return frozenset(v for v in self.tag_universe
                         if image in self.availability_map.get(str(v), ()))

    def available_at(self, image: str, key: Union[Version, Channel, str]) -> bool:
        """Whether ``image`` is built under tag ``key``.

        Channels without an availability row are open to every image.
        """
        key = str(key)
        amap = self.availability_map
        if key not in amap:
            try:
                Version.parse(key)
            except ValueError:
                return self.has_image(image)
            return False
        return image in amap[key]

    @property
    def parents(self) -> dict[str, Optional[str]]:
        return {i.name: (i.parent.name if i.parent and self.has_image(i.parent.name) else None)
                for i in self.images}

    @property
    def children(self) -> dict[str, list[str]]:
        out: dict[str, list[str]] = {i.name: [] for i in self.images}
        for i in self.images:
            if i.parent and i.parent.name in out:
                out[i.parent.name].append(i.name)
        return {k: sorted(v) for k, v in out.items()}

    @property
    def root(self) -> str:
        roots = [i.name for i in self.images if self.parents[i.name] is None]
        if len(roots) != 1:
            raise StackError(f"expected exactly one root image, found {roots}")
        return roots[0]

    def image_ref(self, name: str) -> str:
        """Repository name of an image (``rocker/verse``, ``r-base``)."""
        if self.has_image(name):
            spec = self.image(name)
            if spec.repository:
                return spec.repository
        return f"{self.namespace}/{name}" if self.namespace else name


class UnknownImageError(StackError, KeyError):
    def __init__(self, name: str):
        super().__init__(name)
        self.name = name

    def __str__(self) -> str:
        return f"unknown image: {self.name!r}"


def freeze_mapping(m: Mapping[str, object]) -> tuple[tuple[str, frozenset[str]], ...]:
    return tuple(sorted((k, frozenset(v)) for k, v in m.items()))
