"""Tag grammar, partial-tag resolution and post-build alias sets."""
from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Iterable

from .model import (DEVEL, LATEST, NAMED_KINDS, TESTING, Channel, Resolved,
                    StackError, Tag, TagKind, Version)

_TAG_RE = re.compile(r"^(0|[1-9][0-9]*)(?:\.(0|[1-9][0-9]*))?(?:\.(0|[1-9][0-9]*))?$")
_NAMED = {"latest": LATEST, "devel": DEVEL, "testing": TESTING}


class MalformedTagError(StackError, ValueError):
    def __init__(self, text: str):
        super().__init__(f"malformed tag: {text!r}")
        self.text = text


class UnresolvableTagError(StackError, LookupError):
    def __init__(self, tag: Tag, candidates: Iterable[Version] = ()):
        self.tag = tag
        self.candidates = tuple(candidates)
        msg = f"tag {tag} does not resolve"
        if self.candidates:
            msg += "; nearest: " + ", ".join(str(v) for v in self.candidates)
        super().__init__(msg)


@dataclass(frozen=True)
class ResolvedTag:
    requested: Tag
    resolved: Resolved
    image: str

    def __post_init__(self):
        if self.requested.kind is TagKind.EXACT and self.resolved != self.requested.version:
            raise ValueError("exact tags resolve to themselves")
        if self.requested.is_numeric and isinstance(self.resolved, Channel):
            raise ValueError("numeric tags never resolve to a channel")
        if self.requested.kind in (TagKind.DEVEL, TagKind.TESTING) and isinstance(self.resolved, Version):
            raise ValueError("devel/testing never resolve to a version")

    @property
    def reference_tag(self) -> str:
        """The tag string written into FROM lines: exact or a channel name."""
        return str(self.resolved)


def parse_tag(text: str) -> Tag:
    if text in _NAMED:
        return _NAMED[text]
    m = _TAG_RE.match(text)
    if not m:
        raise MalformedTagError(text)
    parts = tuple(int(g) for g in m.groups() if g is not None)
    return Tag(TagKind.EXACT if len(parts) == 3 else TagKind.PARTIAL, parts)


def _matches(tag: Tag, v: Version) -> bool:
    return v.parts[:len(tag.parts)] == tag.parts


def _nearest(tag: Tag, universe: Iterable[Version], k: int = 3) -> list[Version]:
    target = tag.parts + (0,) * (3 - len(tag.parts))

    def distance(v):
        return tuple(abs(a - b) for a, b in zip(v.parts, target))

    return sorted(universe, key=lambda v: (distance(v), v))[:k]


def resolve_tag(tag: Tag, universe: Iterable[Version]) -> Resolved:
    """Resolve ``tag`` against the versions that have built images.

    Named channels other than ``latest`` pass through untouched; ``latest``
    and partial tags pick the newest matching version.
    """
    if tag.kind in (TagKind.DEVEL, TagKind.TESTING):
        return tag.channel
    universe = frozenset(universe)
    if tag.kind is TagKind.LATEST:
        if not universe:
            raise UnresolvableTagError(tag)
        return max(universe)
    matching = [v for v in universe if _matches(tag, v)]
    if not matching:
        raise UnresolvableTagError(tag, _nearest(tag, universe))
    return max(matching)


def resolve_for_image(tag: Tag, universe: Iterable[Version], image: str) -> ResolvedTag:
    """Like resolve_tag, but ``latest`` on a stack without numeric tags is a channel."""
    universe = frozenset(universe)
    if tag.kind is TagKind.LATEST and not universe:
        return ResolvedTag(tag, Channel.LATEST, image)
    return ResolvedTag(tag, resolve_tag(tag, universe), image)


def alias_set(v: Version, universe: Iterable[Version]) -> frozenset[Tag]:
    """Every tag that resolves to ``v``: what a post-build hook should point at it."""
    universe = frozenset(universe)
    if v not in universe:
        raise UnresolvableTagError(Tag.exact(v), _nearest(Tag.exact(v), universe))
    out = {Tag.exact(v)}
    for n in (1, 2):
        prefix = Tag.partial(*v.parts[:n])
        if max(u for u in universe if _matches(prefix, u)) == v:
            out.add(prefix)
    if max(universe) == v:
        out.add(LATEST)
    return frozenset(out)


def candidate_tags(universe: Iterable[Version]) -> set[Tag]:
    """All numeric and named tags that could be asked of ``universe``."""
    out = set(_NAMED.values())
    for v in universe:
        out.add(Tag.exact(v))
        out.add(Tag.partial(v.major))
        out.add(Tag.partial(v.major, v.minor))
    return out


def sort_tags(tags: Iterable[Tag]) -> list[Tag]:
    """Exact, then minor, then major partials, then named; newest first within each."""
    order = {TagKind.EXACT: 0, TagKind.PARTIAL: 1, TagKind.LATEST: 2,
             TagKind.DEVEL: 3, TagKind.TESTING: 4}
    return sorted(tags, key=lambda t: (order[t.kind], -len(t.parts), [-p for p in t.parts]))


__all__ = ["MalformedTagError", "UnresolvableTagError", "ResolvedTag", "parse_tag",
           "resolve_tag", "resolve_for_image", "alias_set", "candidate_tags", "sort_tags",
           "NAMED_KINDS"]
