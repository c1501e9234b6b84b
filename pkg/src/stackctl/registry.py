"""Local registry metadata: build records, digests and post-build tag aliasing.

Digests are derived from build inputs rather than image bytes, so a rebuild
with identical inputs gets the same digest. Real registries never see
bit-identical rebuilds; the determinism here is deliberate so builds can be
compared in tests.
"""
from __future__ import annotations

import contextlib
import datetime as dt
import fcntl
import hashlib
import json
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Union

from .dockerfile import RenderedImage
from .model import LabelSet, StackError, Tag, Version
from .schedule import BuildEvent, format_timestamp, parse_timestamp
from .tags import alias_set, parse_tag, sort_tags

SCHEMA_VERSION = 1


class RegistryError(StackError):
    pass


class NotFoundError(RegistryError, LookupError):
    pass


@dataclass
class RegistryRecord:
    image: str
    digest: str
    tags: set[Tag]
    built_at: dt.datetime
    size_mb: float = 0.0
    labels: LabelSet = field(default_factory=LabelSet)
    inputs: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "image": self.image,
            "digest": self.digest,
            "tags": [str(t) for t in sort_tags(self.tags)],
            "built_at": format_timestamp(self.built_at),
            "size_mb": self.size_mb,
            "labels": self.labels.as_dict(),
            "inputs": dict(sorted(self.inputs.items())),
        }

    @classmethod
    def from_json(cls, data: dict) -> "RegistryRecord":
        labels = dict(data.get("labels", {}))
        core = {k: labels.pop("org.label-schema." + k.replace("_", "-"), "")
                for k in ("license", "vcs_url", "vendor")}
        return cls(
            image=data["image"],
            digest=data["digest"],
            tags={parse_tag(t) for t in data["tags"]},
            built_at=parse_timestamp(data["built_at"]),
            size_mb=float(data.get("size_mb", 0.0)),
            labels=LabelSet(extra=tuple(sorted(labels.items())), **core),
            inputs=dict(data.get("inputs", {})),
        )


def compute_digest(rendered: RenderedImage, parent_digest: str) -> str:
    """sha256 over the Dockerfile bytes, the parent's digest and the snapshot date."""
    h = hashlib.sha256()
    for part in (rendered.dockerfile, parent_digest, rendered.canonical_inputs.snapshot_date):
        h.update(part.encode("utf-8"))
        h.update(b"\0")
    return "sha256:" + h.hexdigest()


def _as_tag(tag: Union[Tag, str]) -> Tag:
    return parse_tag(tag) if isinstance(tag, str) else tag


class RegistryStore:
    """In-memory registry state with optional JSON persistence."""

    def __init__(self, records: Iterable[RegistryRecord] = ()):
        self.records: list[RegistryRecord] = list(records)

    # -- persistence -------------------------------------------------------
    @classmethod
    def from_json(cls, data: dict) -> "RegistryStore":
        if not isinstance(data, dict) or data.get("schema") != SCHEMA_VERSION:
            raise RegistryError(f"unsupported registry schema: {data.get('schema') if isinstance(data, dict) else data!r}")
        return cls(RegistryRecord.from_json(r) for r in data.get("records", []))

    def to_json(self) -> dict:
        records = sorted(self.records, key=lambda r: (r.image, r.built_at, r.digest))
        return {"schema": SCHEMA_VERSION, "records": [r.to_json() for r in records]}

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def load(cls, path: Union[str, Path]) -> "RegistryStore":
        path = Path(path)
        if not path.exists():
            return cls()
        try:
            return cls.from_json(json.loads(path.read_text(encoding="utf-8")))
        except json.JSONDecodeError as exc:
            raise RegistryError(f"{path}: not valid JSON ({exc})") from None

    def save(self, path: Union[str, Path]) -> None:
        """Atomically replace ``path`` with the current state."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".", suffix=".tmp")
        try:
            with os.fdopen(fd, "w", encoding="utf-8") as f:
                f.write(self.dumps())
                f.flush()
                os.fsync(f.fileno())
            os.replace(tmp, path)
        except BaseException:
            with contextlib.suppress(FileNotFoundError):
                os.unlink(tmp)
            raise

    @classmethod
    @contextlib.contextmanager
    def open(cls, path: Union[str, Path]) -> Iterator["RegistryStore"]:
        """Load, yield and save under an exclusive lock on ``<path>.lock``."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(str(path) + ".lock", "a") as lock:
            fcntl.flock(lock, fcntl.LOCK_EX)
            try:
                store = cls.load(path)
                yield store
                store.save(path)
            finally:
                fcntl.flock(lock, fcntl.LOCK_UN)

    # -- operations ----------------------------------------------------------
    def for_image(self, image: str) -> list[RegistryRecord]:
        return [r for r in self.records if r.image == image]

    def _attach(self, record: RegistryRecord, tag: Tag) -> bool:
        """Point ``tag`` at ``record``; returns whether it moved."""
        if tag in record.tags:
            return False
        for r in self.for_image(record.image):
            r.tags.discard(tag)
        record.tags.add(tag)
        return True

    def record_build(self, rendered: RenderedImage, event: BuildEvent) -> RegistryRecord:
        """Insert (or refresh) the record for a finished build."""
        if rendered.image != event.image or str(rendered.tag.requested) != event.tag:
            raise RegistryError(
                f"build event {event.image}:{event.tag} does not match rendered "
                f"{rendered.image}:{rendered.tag.requested}")
        # Without a recorded parent build, the parent reference stands in for its digest.
        parent_digest = rendered.canonical_inputs.parent
        if rendered.parent_key is not None:
            with contextlib.suppress(NotFoundError):
                parent_digest = self.query(*rendered.parent_key).digest
        digest = compute_digest(rendered, parent_digest)
        record = next((r for r in self.for_image(rendered.image) if r.digest == digest), None)
        if record is None:
            record = RegistryRecord(rendered.image, digest, set(), event.timestamp,
                                    rendered.size_mb, LabelSet(), {})
            self.records.append(record)
        record.built_at = event.timestamp
        record.inputs = {**rendered.canonical_inputs.to_json(), "parent_digest": parent_digest}
        record.size_mb = rendered.size_mb
        record.labels = rendered.labels
        self._attach(record, _as_tag(event.tag))
        return record

    def retag(self, image: str, version: Version, universe: Iterable[Version]) -> set[Tag]:
        """Post-build hook: move every alias of ``version`` onto its record."""
        record = self.query(image, Tag.exact(version))
        return {t for t in sort_tags(alias_set(version, universe)) if self._attach(record, t)}

    def query(self, image: str, tag: Union[Tag, str]) -> RegistryRecord:
        """The record currently carrying ``tag``; aliases are not re-resolved."""
        tag = _as_tag(tag)
        for r in self.for_image(image):
            if tag in r.tags:
                return r
        raise NotFoundError(f"no record for {image}:{tag}")


__all__ = ["SCHEMA_VERSION", "RegistryError", "NotFoundError", "RegistryRecord",
           "RegistryStore", "compute_digest"]
