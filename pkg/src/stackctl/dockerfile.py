"""Deterministic Dockerfile, apt-pin and launch-command rendering."""
from __future__ import annotations

import datetime as dt
import hashlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence, Union

from .model import (BUILD_ARG_NAMES, INHERITED, BuildArgs, ImageSpec, LabelSet, Service,
                    StackError, StackManifest, Tag, TagKind)
from .planner import build_order, resolve_image_tag
from .snapshot import SnapshotResolution, SnapshotResolver
from .tags import ResolvedTag

PIN_PRIORITIES = {"testing": 900, "unstable": 300}
DEBIAN_MIRROR = "http://deb.debian.org/debian"
PIN_PATH = "/etc/apt/preferences.d/stackctl-pin"
INDENT = "    "


class GenerationError(StackError):
    pass


@dataclass(frozen=True)
class CanonicalInputs:
    """What a build's digest is derived from."""

    parent: str
    snapshot_date: str
    spec_hash: str

    def to_json(self) -> dict:
        return {"parent": self.parent, "snapshot_date": self.snapshot_date,
                "spec_hash": self.spec_hash}


@dataclass(frozen=True)
class RenderedImage:
    image: str
    tag: ResolvedTag
    dockerfile: str
    aux_files: tuple[tuple[str, str], ...]
    canonical_inputs: CanonicalInputs
    size_mb: float = 0.0
    labels: LabelSet = field(default_factory=LabelSet)
    # (image, tag) of the in-stack parent, when there is one
    parent_key: Optional[tuple[str, str]] = None

    @property
    def aux(self) -> dict[str, str]:
        return dict(self.aux_files)


def generate_apt_pin(channels: Iterable[str]) -> str:
    """apt preferences pinning ``testing`` above ``unstable``."""
    channels = set(channels)
    unknown = channels - set(PIN_PRIORITIES)
    if unknown:
        raise GenerationError(f"unknown apt channel(s): {', '.join(sorted(unknown))}")
    stanzas = [f"Package: *\nPin: release a={c}\nPin-Priority: {PIN_PRIORITIES[c]}\n"
               for c in sorted(channels, key=lambda c: -PIN_PRIORITIES[c])]
    return "\n".join(stanzas)


def render_launch_command(image: str, tag: Union[Tag, str, None] = None,
                          services: Iterable[Union[Service, int]] = (),
                          env: Optional[Mapping[str, str]] = None,
                          namespace: str = "rocker") -> str:
    """One-line ``docker run`` invocation. ``latest`` is left implicit."""
    ref = image if "/" in image or not namespace else f"{namespace}/{image}"
    tag_text = str(tag) if tag is not None else "latest"
    if tag_text != "latest":
        ref = f"{ref}:{tag_text}"
    ports = sorted({s.port if isinstance(s, Service) else s for s in services} - {None})
    parts = ["docker", "run"]
    for p in ports:
        parts += ["-p", f"{p}:{p}"]
    for key in sorted(env or {}):
        parts += ["-e", f"{key}={env[key]}"]
    parts.append(ref)
    return " ".join(parts)


def _continued(head: str, items: Sequence[str], tail: Optional[str] = None) -> list[str]:
    """``head \\`` followed by one indented item per line."""
    lines = [head + " \\"]
    for i, item in enumerate(items):
        last = i == len(items) - 1 and tail is None
        lines.append(INDENT + item + ("" if last else " \\"))
    if tail is not None:
        lines.append("  " + tail)
    return lines


def _quote(value: str) -> str:
    return '"' + value.replace("\\", "\\\\").replace('"', '\\"') + '"'


def _arg_defaults(spec: ImageSpec, res: SnapshotResolution, today: dt.date) -> dict[str, Optional[str]]:
    out: dict[str, Optional[str]] = {}
    for name in spec.exposed_args:
        value = getattr(spec.build_args, BUILD_ARG_NAMES[name])
        if name == "R_VERSION":
            value = str(res.version)
        elif name == "BUILD_DATE":
            value = res.concrete_date(today).isoformat()
        out[name] = None if value is None else str(value)
    return out


def _from_reference(m: StackManifest, spec: ImageSpec, res: SnapshotResolution,
                    tag: ResolvedTag) -> str:
    if spec.parent is None:
        codename = spec.base_os_rule if spec.base_os_rule != INHERITED else res.os_codename
        return f"debian:{codename}"
    parent_tag = spec.parent.tag
    if parent_tag is None:
        text = tag.reference_tag
    elif parent_tag.kind is TagKind.PARTIAL:
        raise GenerationError(f"{spec.name}: parent tag {parent_tag} is partial; pin an exact tag")
    else:
        text = str(parent_tag)
    return f"{m.image_ref(spec.parent.name)}:{text}"


def generate_dockerfile(m: StackManifest, spec: ImageSpec, res: SnapshotResolution,
                        tag: ResolvedTag, today: dt.date) -> RenderedImage:
    """Render the Dockerfile for one image at one resolved tag.

    Instruction order is fixed: FROM, ARG, LABEL, ENV, RUN, EXPOSE, CMD.
    """
    channels = sorted({p.channel for p in spec.system_packages if p.channel})
    if channels and m.os_channel == "stable":
        raise GenerationError(
            f"{spec.name}: apt channel(s) {', '.join(channels)} are not allowed in a stable stack")
    for s in spec.services:
        if s.port is None:
            raise GenerationError(f"{spec.name}: service {s.name!r} declares no port")

    parent_ref = _from_reference(m, spec, res, tag)
    lines = [f"FROM {parent_ref}"]

    args = _arg_defaults(spec, res, today)
    for name, value in args.items():
        lines.append(f"ARG {name}" if value is None else f"ARG {name}={value}")

    for key, value in spec.labels.as_dict().items():
        lines.append(f"LABEL {key}={_quote(value)}")

    env = {name: "${%s}" % name for name, value in args.items() if value is not None}
    if "BUILD_DATE" in env:
        base = res.repo_url.rsplit("/", 1)[0]
        env["CRAN"] = f"{base}/${{BUILD_DATE}}"
    else:
        env["CRAN"] = res.repo_url
    for key in sorted(env):
        lines.append(f"ENV {key}={env[key]}")

    if channels:
        os_name = spec.base_os_rule if spec.base_os_rule != INHERITED else res.os_codename
        sources = [c for c in channels if c != os_name]
        pin = generate_apt_pin(channels).rstrip("\n").split("\n")
        cmds = [f'echo "deb {DEBIAN_MIRROR} {c} main" > /etc/apt/sources.list.d/debian-{c}.list'
                for c in sources]
        head = "RUN " + " \\\n  && ".join(cmds) + " \\\n  && printf '%s\\n'" if cmds else "RUN printf '%s\\n'"
        lines += _continued(head, [f"'{p}'" for p in pin], tail=f"> {PIN_PATH}")

    if spec.system_packages:
        pkgs = sorted(str(p) for p in spec.system_packages)
        lines += _continued("RUN apt-get update \\\n  && apt-get install -y --no-install-recommends",
                            pkgs, tail="&& rm -rf /var/lib/apt/lists/*")

    if spec.source_build:
        # Compiling R itself is out of scope; the step is an opaque placeholder.
        lines.append('RUN build-r-from-source "${R_VERSION}"' if "R_VERSION" in args
                     else "RUN build-r-from-source")

    if spec.r_packages:
        pkgs = sorted(spec.r_packages, key=lambda s: (s.lower(), s))
        lines += _continued("RUN install2.r --error --repos ${CRAN}", pkgs)

    services = sorted(spec.services, key=lambda s: (s.port, s.name))
    for s in services:
        lines.append(f"EXPOSE {s.port}")
    if services:
        for s in services:
            lines.append(f"# init-supervised service: {s.name} on port {s.port}")
        lines.append('CMD ["/init"]')

    dockerfile = "\n".join(lines) + "\n"
    aux = []
    if channels:
        aux.append(("apt-preferences", generate_apt_pin(channels)))
    if services:
        launch = render_launch_command(m.image_ref(spec.name), tag.requested, services)
        aux.append(("launch-command.txt", launch + "\n"))
    inputs = CanonicalInputs(
        parent=parent_ref,
        snapshot_date=res.concrete_date(today).isoformat(),
        spec_hash=hashlib.sha256(dockerfile.encode("utf-8")).hexdigest(),
    )
    parent_key = None
    if spec.parent is not None and m.has_image(spec.parent.name):
        parent_key = (spec.parent.name, parent_ref.rsplit(":", 1)[1])
    return RenderedImage(spec.name, tag, dockerfile, tuple(aux), inputs,
                         spec.compressed_size_mb, spec.labels, parent_key)


def resolver_for(m: StackManifest, base_url: Optional[str] = None) -> SnapshotResolver:
    return SnapshotResolver(m.calendar, m.os_eras, base_url or m.repo_base)


def render_image(m: StackManifest, image: str, tag: Tag, today: dt.date,
                 base_url: Optional[str] = None,
                 build_args: Optional[BuildArgs] = None) -> RenderedImage:
    """Resolve, pin and render one image."""
    spec = m.image(image)
    resolved = resolve_image_tag(m, image, tag)
    resolver = resolver_for(m, base_url)
    res = resolver.resolve(resolved.resolved, today)
    res = resolver.override(res, spec.build_args, today)
    if build_args is not None:
        res = resolver.override(res, build_args, today)
    return generate_dockerfile(m, spec, res, resolved, today)


def render_stack(m: StackManifest, tag: Tag, today: dt.date,
                 base_url: Optional[str] = None) -> list[RenderedImage]:
    """Render every image available at ``tag``, in build order."""
    return [render_image(m, name, tag, today, base_url) for name in build_order(m, tag)]


def write_tree(rendered: Iterable[RenderedImage], out_dir: Union[str, Path],
               stack: str) -> list[Path]:
    """Write ``<out>/<stack>/<image>/<tag>/Dockerfile`` plus aux files."""
    written = []
    for r in rendered:
        d = Path(out_dir) / stack / r.image / str(r.tag.requested)
        d.mkdir(parents=True, exist_ok=True)
        for name, text in (("Dockerfile", r.dockerfile),) + r.aux_files:
            path = d / name
            path.write_text(text, encoding="utf-8")
            written.append(path)
    return written


__all__ = ["GenerationError", "CanonicalInputs", "RenderedImage", "generate_apt_pin",
           "render_launch_command", "generate_dockerfile", "render_image", "render_stack",
           "write_tree", "resolver_for", "PIN_PRIORITIES"]
