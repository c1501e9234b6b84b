"""Build order, rebuild sets and incremental sizes over the stack DAG."""
from __future__ import annotations

import heapq
from dataclasses import dataclass
from typing import Iterable, Optional

from .manifest import WARNING, Diagnostic
from .model import (NAMED_KINDS, Resolved, StackError, StackManifest, Tag, TagKind,
                    UnknownImageError)
from .tags import ResolvedTag, resolve_for_image

ROOT_CHANGE = "root-change"
PARENT_CHANGE = "parent-change"
SOURCE_CHANGE = "source-change"
SCHEDULE = "schedule"
REASONS = (ROOT_CHANGE, PARENT_CHANGE, SOURCE_CHANGE, SCHEDULE)


class PlanError(StackError):
    pass


@dataclass(frozen=True)
class PlanStep:
    image: str
    tag: str
    reason: str

    def to_json(self) -> dict:
        return {"image": self.image, "tag": self.tag, "reason": self.reason}


@dataclass(frozen=True)
class BuildPlan:
    steps: tuple[PlanStep, ...]

    def __post_init__(self):
        keys = [(s.image, s.tag) for s in self.steps]
        if len(keys) != len(set(keys)):
            raise PlanError("build plan contains duplicate steps")

    def __len__(self):
        return len(self.steps)

    def to_json(self) -> dict:
        return {"steps": [s.to_json() for s in self.steps]}


def topological_order(m: StackManifest, names: Optional[Iterable[str]] = None) -> list[str]:
    """Parents before children; siblings by name. Restricted to ``names`` if given."""
    keep = set(m.image_names if names is None else names)
    parents = m.parents
    indegree = {n: 0 for n in keep}
    children: dict[str, list[str]] = {n: [] for n in keep}
    for n in keep:
        p = parents.get(n)
        if p in keep:
            indegree[n] += 1
            children[p].append(n)
    ready = [n for n, d in indegree.items() if d == 0]
    heapq.heapify(ready)
    order = []
    while ready:
        n = heapq.heappop(ready)
        order.append(n)
        for c in children[n]:
            indegree[c] -= 1
            if indegree[c] == 0:
                heapq.heappush(ready, c)
    if len(order) != len(keep):
        raise PlanError("image graph has a cycle")
    return order


def resolve_stack_tag(m: StackManifest, tag: Tag) -> Resolved:
    """Resolve a tag against the whole stack's version universe."""
    return resolve_for_image(tag, m.tag_universe, m.stack_name).resolved


def resolve_image_tag(m: StackManifest, image: str, tag: Tag) -> ResolvedTag:
    """Resolve a tag against the versions at which ``image`` is built."""
    m.image(image)
    return resolve_for_image(tag, m.universe_for(image), image)


def build_order(m: StackManifest, tag: Tag) -> list[str]:
    resolved = resolve_stack_tag(m, tag)
    return topological_order(m, [n for n in m.image_names if m.available_at(n, resolved)])


def descendants(m: StackManifest, image: str) -> set[str]:
    children = m.children
    out: set[str] = set()
    stack = list(children[image])
    while stack:
        n = stack.pop()
        if n not in out:
            out.add(n)
            stack.extend(children[n])
    return out


def rebuild_set(m: StackManifest, changed: str) -> set[str]:
    if not m.has_image(changed):
        raise UnknownImageError(changed)
    return {changed} | descendants(m, changed)


def is_ancestor(m: StackManifest, ancestor: str, image: str) -> bool:
    parents = m.parents
    node: Optional[str] = image
    while node is not None:
        if node == ancestor:
            return True
        node = parents[node]
    return False


def incremental_size(m: StackManifest, have: str, want: str) -> float:
    """MB still to download for ``want`` when ``have`` is already pulled."""
    m.image(have)
    m.image(want)
    if not is_ancestor(m, have, want):
        raise PlanError(f"{have!r} is not an ancestor of {want!r}")
    return m.image(want).compressed_size_mb - m.image(have).compressed_size_mb


def size_diagnostics(m: StackManifest) -> list[Diagnostic]:
    out = []
    for img in m.images:
        p = m.parents[img.name]
        if p is not None and img.compressed_size_mb < m.image(p).compressed_size_mb:
            out.append(Diagnostic(
                WARNING, img.name,
                f"cumulative size {img.compressed_size_mb:g} MB is smaller than parent "
                f"{p!r} ({m.image(p).compressed_size_mb:g} MB)"))
    return out


def built_tags(m: StackManifest, image: str) -> list[Tag]:
    """Tags an image is actually built under: covered by a policy and available."""
    spec = m.image(image)
    out = []
    for kind in (TagKind.LATEST, TagKind.DEVEL, TagKind.TESTING):
        if spec.policy_for(kind) and m.available_at(image, NAMED_KINDS[kind]):
            out.append(Tag(kind))
    if spec.policy_for(TagKind.EXACT):
        out += [Tag.exact(v) for v in sorted(m.universe_for(image), reverse=True)]
    return out


def rolling_tags(m: StackManifest, image: str) -> list[Tag]:
    """Built tags that track upstream changes: the named channels."""
    return [t for t in built_tags(m, image) if not t.is_numeric]


def _step_label(m: StackManifest, tag: Tag) -> str:
    # Named tags are built under their own name; numeric ones under the exact version.
    resolved = resolve_stack_tag(m, tag)
    return str(tag) if not tag.is_numeric else str(resolved)


def plan_rebuild(m: StackManifest, changed: str, tag: Optional[Tag] = None) -> BuildPlan:
    """Steps needed after ``changed`` was modified.

    With ``tag`` only that tag is rebuilt (images lacking it are skipped);
    otherwise every image's rolling channel tags are.
    """
    affected = rebuild_set(m, changed)
    resolved = resolve_stack_tag(m, tag) if tag is not None else None
    steps = []
    for name in topological_order(m, affected):
        if name != changed:
            reason = PARENT_CHANGE
        elif m.parents[name] is None:
            reason = ROOT_CHANGE
        else:
            reason = SOURCE_CHANGE
        if resolved is not None:
            if m.available_at(name, resolved):
                steps.append(PlanStep(name, _step_label(m, tag), reason))
            continue
        steps += [PlanStep(name, str(t), reason) for t in rolling_tags(m, name)]
    return BuildPlan(tuple(steps))


def plan_tag(m: StackManifest, tag: Tag) -> BuildPlan:
    """A scheduled build of every image available at ``tag``."""
    label = _step_label(m, tag)
    return BuildPlan(tuple(PlanStep(n, label, SCHEDULE) for n in build_order(m, tag)))


__all__ = ["REASONS", "PlanError", "PlanStep", "BuildPlan", "topological_order",
           "resolve_stack_tag", "resolve_image_tag", "build_order", "rebuild_set",
           "descendants", "incremental_size", "size_diagnostics", "built_tags", "rolling_tags",
           "plan_rebuild", "plan_tag", "is_ancestor"]
