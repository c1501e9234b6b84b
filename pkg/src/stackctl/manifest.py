"""Stack manifest text format: parsing, rendering and validation.

The format is line oriented::

    # comment
    [stack]
    name = rocker-versioned
    policy.nightly = latest, devel

    [image r-ver]
    size_mb = 219

    [calendar]
    epoch = 2014-09-17
    3.4.2 = 2017-09-28

    [eras]
    3.0.0 = jessie

    [availability]
    3.4.2 = r-ver, rstudio

See docs/manifest-format.md for every key.
"""
from __future__ import annotations

import datetime as dt
import re
from dataclasses import dataclass, replace
from importlib import resources
from pathlib import Path
from typing import Iterable, Optional, Union

from .model import (BUILD_ARG_NAMES, INHERITED, BuildArgs, BuildPolicy, CalendarEntry,
                    ImageRef, ImageSpec, LabelSet, PolicyKind, Service, SnapshotCalendar,
                    StackError, StackManifest, SystemPackage, TagKind, Version,
                    freeze_mapping)
from .tags import MalformedTagError, parse_tag

_IDENT_RE = re.compile(r"^[A-Za-z0-9][A-Za-z0-9._-]*$")
_HEADER_RE = re.compile(r"^\[\s*([a-z]+)(?:\s+(\S+))?\s*\]$")
CHANNELS = ("testing", "unstable")
OS_CHANNELS = ("stable", "testing")
_TAG_KIND_NAMES = {"latest": TagKind.LATEST, "devel": TagKind.DEVEL,
                   "testing": TagKind.TESTING, "exact": TagKind.EXACT}

ERROR = "error"
WARNING = "warning"


class ManifestError(StackError):
    pass


class ManifestSyntaxError(ManifestError):
    def __init__(self, message: str, line: int, column: int = 1):
        super().__init__(f"line {line}, column {column}: {message}")
        self.line = line
        self.column = column


class CycleError(ManifestError):
    def __init__(self, cycle: list[str]):
        super().__init__("parent cycle: " + " -> ".join(cycle + cycle[:1]))
        self.cycle = cycle


class DanglingParentError(ManifestError):
    def __init__(self, image: str, parent: str):
        super().__init__(f"image {image!r} has unknown parent {parent!r}")
        self.image = image
        self.parent = parent


class DuplicateImageError(ManifestError):
    def __init__(self, name: str, line: int):
        super().__init__(f"line {line}: duplicate image {name!r}")
        self.name = name
        self.line = line


@dataclass(frozen=True)
class Diagnostic:
    severity: str
    image: Optional[str]
    message: str

    def to_json(self) -> dict:
        return {"severity": self.severity, "image": self.image, "message": self.message}

    def __str__(self) -> str:
        where = f"[{self.image}] " if self.image else ""
        return f"{self.severity}: {where}{self.message}"


@dataclass
class _Entry:
    key: str
    value: str
    line: int
    value_col: int
    key_col: int

    def fail(self, message: str) -> ManifestSyntaxError:
        return ManifestSyntaxError(f"{self.key}: {message}", self.line, self.value_col)


@dataclass
class _Section:
    kind: str
    name: Optional[str]
    line: int
    entries: dict


def _split_list(value: str) -> list[str]:
    return [item.strip() for item in value.split(",") if item.strip()]


def _read_sections(text: str) -> list[_Section]:
    sections: list[_Section] = []
    current: Optional[_Section] = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        stripped = raw.strip()
        if not stripped or stripped.startswith("#"):
            continue
        indent = len(raw) - len(raw.lstrip())
        if stripped.startswith("["):
            m = _HEADER_RE.match(stripped)
            if not m:
                raise ManifestSyntaxError(f"malformed section header {stripped!r}", lineno, indent + 1)
            kind, name = m.groups()
            if kind not in ("stack", "image", "calendar", "eras", "availability"):
                raise ManifestSyntaxError(f"unknown section [{kind}]", lineno, indent + 2)
            if (kind == "image") != (name is not None):
                raise ManifestSyntaxError(
                    "[image <name>] needs a name; other sections take none", lineno, indent + 1)
            current = _Section(kind, name, lineno, {})
            sections.append(current)
            continue
        if "=" not in raw:
            raise ManifestSyntaxError("expected 'key = value'", lineno, indent + 1)
        if current is None:
            raise ManifestSyntaxError("entry outside of any section", lineno, indent + 1)
        key_part, _, value_part = raw.partition("=")
        key = key_part.strip()
        if not key:
            raise ManifestSyntaxError("missing key", lineno, indent + 1)
        value = value_part.strip()
        value_col = len(key_part) + 2 + (len(value_part) - len(value_part.lstrip()))
        if key in current.entries:
            raise ManifestSyntaxError(f"duplicate key {key!r}", lineno, indent + 1)
        current.entries[key] = _Entry(key, value, lineno, value_col, indent + 1)
    return sections


def _parse_date(e: _Entry, value: Optional[str] = None) -> dt.date:
    try:
        return dt.date.fromisoformat(value if value is not None else e.value)
    except ValueError:
        raise e.fail(f"not an ISO date: {e.value!r}") from None


def _parse_version(e: _Entry, text: str) -> Version:
    try:
        return Version.parse(text)
    except ValueError:
        raise e.fail(f"not a M.m.p version: {text!r}") from None


def _parse_policies(entries: dict) -> tuple[BuildPolicy, ...]:
    out = []
    for key, e in entries.items():
        if not key.startswith("policy."):
            continue
        try:
            kind = PolicyKind(key[len("policy."):])
        except ValueError:
            raise ManifestSyntaxError(f"unknown policy {key!r}", e.line, e.key_col) from None
        kinds = set()
        for name in _split_list(e.value):
            if name not in _TAG_KIND_NAMES:
                raise e.fail(f"unknown tag kind {name!r} (partial tags are aliases, never built)")
            kinds.add(_TAG_KIND_NAMES[name])
        out.append(BuildPolicy(kind, frozenset(kinds)))
    return tuple(sorted(out, key=lambda p: p.kind.value))


def _parse_labels(entries: dict) -> LabelSet:
    core = {}
    extra = {}
    for key, e in entries.items():
        if not key.startswith("label."):
            continue
        name = key[len("label."):]
        if not e.value:
            raise e.fail("label values must be non-empty")
        if name in ("license", "vcs_url", "vendor"):
            core[name] = e.value
        else:
            extra[name] = e.value
    return LabelSet(extra=tuple(sorted(extra.items())), **core)


_STACK_KEYS = {"name", "namespace", "os_channel", "repo_base"}
_IMAGE_KEYS = {"parent", "repository", "os", "system_packages", "r_packages", "build_args",
               "services", "size_mb", "downloads", "description", "source_build"}


def _check_keys(section: _Section, allowed: set[str]):
    for key, e in section.entries.items():
        if key in allowed or key.startswith("policy.") or key.startswith("label."):
            continue
        raise ManifestSyntaxError(f"unknown key {key!r} in [{section.kind}]", e.line, e.key_col)


def _parse_build_args(e: _Entry) -> tuple[tuple[str, ...], BuildArgs]:
    names = []
    values = {}
    for item in _split_list(e.value):
        name, has_value, value = (s.strip() for s in item.partition("="))
        if name not in BUILD_ARG_NAMES:
            raise e.fail(f"unknown build argument {name!r}")
        names.append(name)
        if has_value:
            field_name = BUILD_ARG_NAMES[name]
            if field_name == "r_version":
                values[field_name] = _parse_version(e, value)
            elif field_name == "build_date":
                values[field_name] = _parse_date(e, value)
            else:
                values[field_name] = value
    return tuple(names), BuildArgs(**values)


def _parse_image(section: _Section, stack_labels: LabelSet,
                 stack_policies: tuple[BuildPolicy, ...]) -> ImageSpec:
    _check_keys(section, _IMAGE_KEYS)
    entries = section.entries
    name = section.name
    if not _IDENT_RE.match(name):
        raise ManifestSyntaxError(f"invalid image name {name!r}", section.line, 8)
    kw: dict = {"name": name}
    if "parent" in entries:
        e = entries["parent"]
        pname, _, ptag = e.value.partition(":")
        try:
            kw["parent"] = ImageRef(pname.strip(), parse_tag(ptag.strip()) if ptag else None)
        except MalformedTagError as exc:
            raise e.fail(str(exc)) from None
    if "repository" in entries:
        kw["repository"] = entries["repository"].value
    if "os" in entries:
        kw["base_os_rule"] = entries["os"].value or INHERITED
    if "system_packages" in entries:
        e = entries["system_packages"]
        pkgs = []
        for item in _split_list(e.value):
            pkg, _, channel = item.partition("/")
            if channel and channel not in CHANNELS:
                raise e.fail(f"unknown apt channel {channel!r}")
            pkgs.append(SystemPackage(pkg, channel or None))
        kw["system_packages"] = tuple(pkgs)
    if "r_packages" in entries:
        kw["r_packages"] = tuple(_split_list(entries["r_packages"].value))
    if "build_args" in entries:
        kw["exposed_args"], kw["build_args"] = _parse_build_args(entries["build_args"])
    if "services" in entries:
        e = entries["services"]
        services = []
        for item in _split_list(e.value):
            sname, has_port, port = item.partition(":")
            if has_port:
                if not port.isdigit() or not 1 <= int(port) <= 65535:
                    raise e.fail(f"service port out of range: {item!r}")
                services.append(Service(sname, int(port)))
            else:
                services.append(Service(sname))
        kw["services"] = tuple(services)
    if "size_mb" in entries:
        e = entries["size_mb"]
        try:
            size = float(e.value)
        except ValueError:
            raise e.fail(f"not a number: {e.value!r}") from None
        if size < 0:
            raise e.fail("size must be non-negative")
        kw["compressed_size_mb"] = size
    if "downloads" in entries:
        e = entries["downloads"]
        if not e.value.isdigit():
            raise e.fail(f"not a count: {e.value!r}")
        kw["downloads"] = int(e.value)
    if "description" in entries:
        kw["description"] = entries["description"].value
    if "source_build" in entries:
        e = entries["source_build"]
        if e.value not in ("true", "false"):
            raise e.fail("expected true or false")
        kw["source_build"] = e.value == "true"
    kw["labels"] = stack_labels.merged(_parse_labels(entries))
    policies = _parse_policies(entries)
    kw["policies"] = policies if policies else stack_policies
    return ImageSpec(**kw)


def load_calendar(text: str, epoch: Optional[dt.date] = None) -> SnapshotCalendar:
    """Parse a ``version<TAB>date`` calendar file."""
    entries = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split("\t") if "\t" in line else line.split()
        if len(parts) != 2:
            raise ManifestSyntaxError("expected 'version<TAB>date'", lineno)
        try:
            entries.append(CalendarEntry(Version.parse(parts[0].strip()),
                                         dt.date.fromisoformat(parts[1].strip())))
        except ValueError as exc:
            raise ManifestSyntaxError(str(exc), lineno) from None
    entries.sort(key=lambda c: c.version)
    return SnapshotCalendar(tuple(entries), epoch or dt.date.min)


def _parse_calendar(section: _Section, base_dir: Optional[Path]) -> SnapshotCalendar:
    epoch = dt.date.min
    entries = {}
    for key, e in section.entries.items():
        if key == "epoch":
            epoch = _parse_date(e)
        elif key == "source":
            if base_dir is None:
                raise e.fail("calendar source files need a manifest path")
            path = base_dir / e.value
            try:
                text = path.read_text(encoding="utf-8")
            except OSError as exc:
                raise e.fail(f"cannot read {path}: {exc.strerror}") from None
            for c in load_calendar(text).entries:
                entries[c.version] = c
        else:
            v = _parse_version(e, key)
            entries[v] = CalendarEntry(v, _parse_date(e))
    try:
        return SnapshotCalendar(tuple(entries[v] for v in sorted(entries)), epoch)
    except ValueError as exc:
        raise ManifestSyntaxError(str(exc), section.line) from None


def _find_cycle(parents: dict[str, Optional[str]]) -> Optional[list[str]]:
    for start in sorted(parents):
        seen: list[str] = []
        node = start
        while node is not None and node in parents:
            if node in seen:
                cycle = seen[seen.index(node):]
                i = cycle.index(min(cycle))
                return cycle[i:] + cycle[:i]
            seen.append(node)
            node = parents[node]
    return None


def parse_manifest(text: str, base_dir: Union[str, Path, None] = None) -> StackManifest:
    """Parse manifest text.

    Raises ManifestSyntaxError, DuplicateImageError, DanglingParentError or
    CycleError. Softer invariants (root count, availability) are reported by
    validate_manifest.
    """
    sections = _read_sections(text)
    base_dir = Path(base_dir) if base_dir is not None else None
    by_kind: dict[str, list[_Section]] = {}
    for s in sections:
        by_kind.setdefault(s.kind, []).append(s)
    for kind in ("stack", "calendar", "eras", "availability"):
        if len(by_kind.get(kind, [])) > 1:
            raise ManifestSyntaxError(f"section [{kind}] appears twice", by_kind[kind][1].line)
    if "stack" not in by_kind:
        raise ManifestSyntaxError("missing [stack] section", 1)
    stack = by_kind["stack"][0]
    _check_keys(stack, _STACK_KEYS)
    if "name" not in stack.entries:
        raise ManifestSyntaxError("[stack] needs a name", stack.line)
    name_entry = stack.entries["name"]
    if not _IDENT_RE.match(name_entry.value):
        raise name_entry.fail("invalid stack name")
    os_channel = stack.entries["os_channel"].value if "os_channel" in stack.entries else "stable"
    if os_channel not in OS_CHANNELS:
        raise stack.entries["os_channel"].fail(f"expected one of {OS_CHANNELS}")
    stack_labels = _parse_labels(stack.entries)
    stack_policies = _parse_policies(stack.entries)

    images = []
    seen = set()
    for s in by_kind.get("image", []):
        if s.name in seen:
            raise DuplicateImageError(s.name, s.line)
        seen.add(s.name)
        images.append(_parse_image(s, stack_labels, stack_policies))
    calendar = (_parse_calendar(by_kind["calendar"][0], base_dir)
                if "calendar" in by_kind else SnapshotCalendar())

    eras = []
    for e in by_kind["eras"][0].entries.values() if "eras" in by_kind else ():
        if not e.value:
            raise e.fail("missing OS codename")
        eras.append((_parse_version(e, e.key), e.value))
    eras.sort()

    availability = {}
    for e in by_kind["availability"][0].entries.values() if "availability" in by_kind else ():
        try:
            parse_tag(e.key)
        except MalformedTagError:
            raise ManifestSyntaxError(f"malformed tag {e.key!r}", e.line, e.key_col) from None
        availability[e.key] = _split_list(e.value)

    if not images:
        raise ManifestSyntaxError("manifest declares no images", stack.line)
    for img in images:
        # A parent pinned to an explicit tag may live outside the stack (e.g. debian:stretch).
        if img.parent and img.parent.name not in seen and img.parent.tag is None:
            raise DanglingParentError(img.name, img.parent.name)
    cycle = _find_cycle({i.name: (i.parent.name if i.parent else None) for i in images})
    if cycle:
        raise CycleError(cycle)

    return StackManifest(
        stack_name=name_entry.value,
        images=tuple(images),
        calendar=calendar,
        availability=freeze_mapping(availability),
        os_eras=tuple(eras),
        namespace=stack.entries["namespace"].value if "namespace" in stack.entries else "",
        os_channel=os_channel,
        repo_base=stack.entries["repo_base"].value if "repo_base" in stack.entries else None,
    )


def load_manifest(path: Union[str, Path]) -> StackManifest:
    path = Path(path)
    return parse_manifest(path.read_text(encoding="utf-8"), base_dir=path.parent)


def fixture_path(name: str) -> Path:
    """Path of a fixture shipped with the package (``rocker-versioned.manifest``, ...)."""
    return Path(str(resources.files("stackctl") / "fixtures" / name))


def _fmt_number(x: float) -> str:
    return str(int(x)) if float(x).is_integer() else repr(x)


def _kind_name(kind: TagKind) -> str:
    return {v: k for k, v in _TAG_KIND_NAMES.items()}[kind]


def render_manifest(m: StackManifest) -> str:
    """Render a manifest; labels and policies are written per image."""
    out = ["[stack]", f"name = {m.stack_name}"]
    if m.namespace:
        out.append(f"namespace = {m.namespace}")
    out.append(f"os_channel = {m.os_channel}")
    if m.repo_base:
        out.append(f"repo_base = {m.repo_base}")
    for img in m.images:
        out += ["", f"[image {img.name}]"]
        if img.description:
            out.append(f"description = {img.description}")
        if img.parent:
            out.append(f"parent = {img.parent}")
        if img.repository:
            out.append(f"repository = {img.repository}")
        if img.base_os_rule != INHERITED:
            out.append(f"os = {img.base_os_rule}")
        if img.source_build:
            out.append("source_build = true")
        if img.system_packages:
            out.append("system_packages = " + ", ".join(str(p) for p in img.system_packages))
        if img.r_packages:
            out.append("r_packages = " + ", ".join(img.r_packages))
        if img.exposed_args:
            items = []
            for name in img.exposed_args:
                value = getattr(img.build_args, BUILD_ARG_NAMES[name])
                items.append(name if value is None else f"{name}={value}")
            out.append("build_args = " + ", ".join(items))
        if img.services:
            out.append("services = " + ", ".join(str(s) for s in img.services))
        out.append(f"size_mb = {_fmt_number(img.compressed_size_mb)}")
        if img.downloads is not None:
            out.append(f"downloads = {img.downloads}")
        for key in ("license", "vcs_url", "vendor"):
            if getattr(img.labels, key):
                out.append(f"label.{key} = {getattr(img.labels, key)}")
        for key, value in img.labels.extra:
            out.append(f"label.{key} = {value}")
        for p in img.policies:
            kinds = sorted(_kind_name(k) for k in p.applies_to)
            out.append(f"policy.{p.kind.value} = " + ", ".join(kinds))
    if m.calendar.entries or m.calendar.epoch != dt.date.min:
        out += ["", "[calendar]"]
        if m.calendar.epoch != dt.date.min:
            out.append(f"epoch = {m.calendar.epoch.isoformat()}")
        out += [f"{c.version} = {c.release_date.isoformat()}" for c in m.calendar.entries]
    if m.os_eras:
        out += ["", "[eras]"] + [f"{v} = {name}" for v, name in m.os_eras]
    if m.availability:
        out += ["", "[availability]"]
        out += [f"{key} = " + ", ".join(sorted(names)) for key, names in m.availability]
    return "\n".join(out) + "\n"


def validate_manifest(m: StackManifest) -> list[Diagnostic]:
    """Check manifest invariants; returns [] for a consistent manifest."""
    diags: list[Diagnostic] = []

    def error(image, message):
        diags.append(Diagnostic(ERROR, image, message))

    names = [i.name for i in m.images]
    for n in sorted({n for n in names if names.count(n) > 1}):
        error(n, "duplicate image name")
    known = set(names)
    for img in m.images:
        if img.parent and img.parent.name not in known and img.parent.tag is None:
            error(img.name, f"unknown parent {img.parent.name!r}")
    cycle = _find_cycle({i.name: (i.parent.name if i.parent else None) for i in m.images})
    if cycle:
        error(cycle[0], "parent cycle: " + " -> ".join(cycle + cycle[:1]))

    roots = sorted(i.name for i in m.images if not (i.parent and i.parent.name in known))
    if len(roots) != 1:
        error(None, f"expected exactly one root image, found {len(roots)}: {', '.join(roots)}")

    for img in m.images:
        for s in img.services:
            if s.port is None:
                error(img.name, f"service {s.name!r} has no port")
            elif not 1 <= s.port <= 65535:
                error(img.name, f"service {s.name!r} port {s.port} out of range")
        if m.os_channel == "stable":
            for p in img.system_packages:
                if p.channel:
                    error(img.name, f"package {p} uses apt channel {p.channel!r} in a stable stack")
        seen_kinds: set[TagKind] = set()
        for p in img.policies:
            for k in sorted(p.applies_to & seen_kinds, key=lambda k: k.value):
                error(img.name, f"tag kind {k.value!r} has more than one build policy")
            seen_kinds |= p.applies_to
        bd = img.build_args.build_date
        if bd is not None and bd < m.calendar.epoch:
            error(img.name, f"BUILD_DATE {bd} predates the snapshot epoch {m.calendar.epoch}")
        for key, value in img.labels.as_dict().items():
            if not value:
                error(img.name, f"label {key!r} is empty")

    amap = m.availability_map
    cal_versions = set(m.calendar.versions)
    for key, imgs in m.availability:
        for n in sorted(imgs - known):
            error(None, f"availability row {key!r} names unknown image {n!r}")
        if not imgs:
            error(None, f"tag {key!r} is in the tag universe but no image is available at it")
    for v in sorted(m.tag_universe):
        if m.calendar.entries and v not in cal_versions:
            error(None, f"version {v} has no release-calendar entry")
        if m.os_eras and v < m.os_eras[0][0]:
            error(None, f"version {v} predates the first OS era")
    for key, imgs in m.availability:
        for img in m.images:
            if img.name not in imgs or not img.parent or img.parent.tag is not None:
                continue
            if img.parent.name in known and img.parent.name not in amap[key]:
                error(img.name, f"available at {key} but its parent {img.parent.name!r} is not")

    for a, b in zip(m.os_eras, m.os_eras[1:]):
        if a[0] == b[0]:
            error(None, f"two OS eras start at {a[0]}")
    return diags


def errors_only(diags: Iterable[Diagnostic]) -> list[Diagnostic]:
    return [d for d in diags if d.severity == ERROR]


def with_image(m: StackManifest, name: str, **changes) -> StackManifest:
    """Copy of ``m`` with one image's fields replaced."""
    return replace(m, images=tuple(replace(i, **changes) if i.name == name else i
                                   for i in m.images))
