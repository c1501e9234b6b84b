"""``stackctl`` command-line interface.

Exit status: 0 success, 1 domain failure (invalid manifest, unresolvable
tag, missing record), 2 environmental failure (I/O, unparsable input).
"""
from __future__ import annotations

import argparse
import datetime as dt
import json
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

from . import __version__
from .dockerfile import render_image, resolver_for, write_tree
from .manifest import (CycleError, DanglingParentError, DuplicateImageError, ManifestSyntaxError,
                       errors_only, fixture_path, load_manifest, validate_manifest)
from .model import BUILD_ARG_NAMES, BuildArgs, StackError, StackManifest, Tag, Version
from .planner import build_order, plan_rebuild, plan_tag, resolve_image_tag, size_diagnostics
from .registry import NotFoundError, RegistryError, RegistryStore
from .schedule import BuildEvent, dump_events, load_upstream, parse_timestamp, simulate
from .tags import parse_tag

DEFAULT_MANIFEST = "rocker-versioned"
EXIT_OK, EXIT_DOMAIN, EXIT_ENV = 0, 1, 2


class EnvironmentFailure(Exception):
    """Raised for I/O and parse problems (exit status 2)."""


@dataclass(frozen=True)
class CliConfig:
    manifest_path: Path
    today_override: Optional[dt.date]
    output_dir: Path
    registry_path: Path
    base_repo_url_override: Optional[str]
    format: str = "json"

    @property
    def today(self) -> dt.date:
        return self.today_override or dt.date.today()


def _iso_date(text: str) -> dt.date:
    try:
        return dt.date.fromisoformat(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an ISO date (YYYY-MM-DD): {text!r}") from None


def _manifest_location(text: str) -> Path:
    path = Path(text)
    if path.exists() or path.suffix or "/" in text:
        return path
    return fixture_path(text + ".manifest")


def _global_options(suppress: bool) -> argparse.ArgumentParser:
    # Shared by the top-level parser and every subcommand, so flags work in either position.
    p = argparse.ArgumentParser(add_help=False)
    default = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
    p.add_argument("--manifest", default=default(DEFAULT_MANIFEST),
                   help="manifest file, or the name of a shipped fixture (default: %(default)s)")
    p.add_argument("--today", type=_iso_date, default=default(None),
                   help="date used wherever the clock matters (default: system date)")
    p.add_argument("--out", default=default("out"), help="output directory for generate")
    p.add_argument("--registry", default=default("registry.json"), help="registry store file")
    p.add_argument("--repo-base", default=default(None),
                   help="override the snapshot repository base URL")
    p.add_argument("--format", choices=("json", "table"), default=default("json"))
    return p


def _build_args(values: Sequence[str]) -> Optional[BuildArgs]:
    if not values:
        return None
    kw = {}
    for item in values:
        name, sep, value = item.partition("=")
        if not sep or name not in BUILD_ARG_NAMES:
            raise StackError(f"bad --build-arg {item!r}; expected one of "
                             f"{', '.join(BUILD_ARG_NAMES)} as NAME=VALUE")
        field = BUILD_ARG_NAMES[name]
        if field == "r_version":
            kw[field] = Version.parse(value)
        elif field == "build_date":
            kw[field] = dt.date.fromisoformat(value)
        else:
            kw[field] = value
    return BuildArgs(**kw)


def build_parser() -> argparse.ArgumentParser:
    common = _global_options(suppress=True)
    parser = argparse.ArgumentParser(
        prog="stackctl", parents=[_global_options(suppress=False)],
        description="Versioned container image stack orchestration.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("validate", parents=[common], help="check manifest invariants")

    p = sub.add_parser("resolve", parents=[common], help="resolve a tag to an exact reference")
    p.add_argument("image")
    p.add_argument("tag")

    p = sub.add_parser("snapshot", parents=[common], help="snapshot date and OS for a tag")
    p.add_argument("tag")
    p.add_argument("--image", help="resolve against this image's tags (default: stack root)")
    p.add_argument("--build-arg", action="append", default=[], metavar="NAME=VALUE")

    p = sub.add_parser("generate", parents=[common], help="write Dockerfiles for a tag")
    p.add_argument("tag")
    p.add_argument("--image", action="append", default=[], help="limit to these images")
    p.add_argument("--build-arg", action="append", default=[], metavar="NAME=VALUE")

    p = sub.add_parser("plan", parents=[common], help="rebuild plan for a change or a tag")
    p.add_argument("--changed", help="image whose sources or base changed")
    p.add_argument("--tag", help="restrict to one tag")

    p = sub.add_parser("schedule", parents=[common], help="simulate build triggers")
    p.add_argument("--start", required=True, help="start timestamp (ISO date or date-time, UTC)")
    p.add_argument("--days", type=int, required=True)
    p.add_argument("--upstream", help="JSON-lines file of upstream events")

    reg = sub.add_parser("registry", parents=[common], help="local registry metadata")
    rsub = reg.add_subparsers(dest="registry_command", required=True)
    p = rsub.add_parser("record", parents=[common], help="record builds of images at a tag")
    p.add_argument("tag")
    p.add_argument("images", nargs="*", help="images to record (default: all available)")
    p.add_argument("--at", help="build timestamp (default: --today at 00:00 UTC)")
    p.add_argument("--retag", action="store_true", help="run post-build alias hooks")
    p = rsub.add_parser("retag", parents=[common], help="move alias tags onto a version")
    p.add_argument("image")
    p.add_argument("version")
    p = rsub.add_parser("query", parents=[common], help="record currently carrying a tag")
    p.add_argument("image")
    p.add_argument("tag")
    rsub.add_parser("export", parents=[common], help="print the store as JSON")
    p = rsub.add_parser("import", parents=[common], help="replace the store from a JSON file")
    p.add_argument("file")
    return parser


def _config(args) -> CliConfig:
    return CliConfig(
        manifest_path=_manifest_location(args.manifest),
        today_override=args.today,
        output_dir=Path(args.out),
        registry_path=Path(args.registry),
        base_repo_url_override=args.repo_base,
        format=args.format,
    )


def _load(cfg: CliConfig) -> StackManifest:
    try:
        return load_manifest(cfg.manifest_path)
    except OSError as exc:
        raise EnvironmentFailure(f"cannot read manifest {cfg.manifest_path}: {exc.strerror}") from None
    except ManifestSyntaxError as exc:
        raise EnvironmentFailure(f"{cfg.manifest_path}: {exc}") from None


def _table(rows: Sequence[Sequence[object]], header: Sequence[str]) -> str:
    cells = [[str(c) for c in header]] + [[("" if c is None else str(c)) for c in r] for r in rows]
    widths = [max(len(r[i]) for r in cells) for i in range(len(header))]
    lines = ["  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip() for r in cells]
    return "\n".join(lines) + "\n"


def _emit(cfg: CliConfig, data, rows=None, header=None, out=None):
    out = out or sys.stdout
    if cfg.format == "table" and header is not None:
        out.write(_table(rows, header))
    else:
        out.write(json.dumps(data, indent=2, sort_keys=True) + "\n")


def cmd_validate(cfg: CliConfig, args) -> int:
    try:
        m = _load(cfg)
    except (CycleError, DanglingParentError, DuplicateImageError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        _emit(cfg, {"valid": False, "diagnostics": [
            {"severity": "error", "image": None, "message": str(exc)}]})
        return EXIT_DOMAIN
    diags = validate_manifest(m) + size_diagnostics(m)
    for d in diags:
        print(d, file=sys.stderr)
    valid = not errors_only(diags)
    _emit(cfg, {"valid": valid, "diagnostics": [d.to_json() for d in diags]},
          [(d.severity, d.image, d.message) for d in diags], ("severity", "image", "message"))
    return EXIT_OK if valid else EXIT_DOMAIN


def cmd_resolve(cfg: CliConfig, args) -> int:
    m = _load(cfg)
    resolved = resolve_image_tag(m, args.image, parse_tag(args.tag))
    print(f"{args.image}:{resolved.resolved}")
    return EXIT_OK


def cmd_snapshot(cfg: CliConfig, args) -> int:
    m = _load(cfg)
    image = args.image or m.root
    resolved = resolve_image_tag(m, image, parse_tag(args.tag))
    resolver = resolver_for(m, cfg.base_repo_url_override)
    res = resolver.resolve(resolved.resolved, cfg.today)
    extra = _build_args(args.build_arg)
    if extra is not None:
        res = resolver.override(res, extra, cfg.today)
    data = {
        "image": image,
        "tag": args.tag,
        "version": str(res.version),
        "snapshot_date": str(res.snapshot_date) if not isinstance(res.snapshot_date, dt.date)
        else res.snapshot_date.isoformat(),
        "concrete_date": res.concrete_date(cfg.today).isoformat(),
        "repo_url": res.repo_url,
        "os_codename": res.os_codename,
        "images_with_tag": [n for n in m.image_names if m.available_at(n, resolved.resolved)],
    }
    _emit(cfg, data, [(k, v if not isinstance(v, list) else ", ".join(v)) for k, v in data.items()],
          ("field", "value"))
    return EXIT_OK


def cmd_generate(cfg: CliConfig, args) -> int:
    m = _load(cfg)
    tag = parse_tag(args.tag)
    extra = _build_args(args.build_arg)
    names = args.image or build_order(m, tag)
    rendered = [render_image(m, name, tag, cfg.today, cfg.base_repo_url_override, extra)
                for name in names]
    try:
        paths = write_tree(rendered, cfg.output_dir, m.stack_name)
    except OSError as exc:
        raise EnvironmentFailure(f"cannot write under {cfg.output_dir}: {exc.strerror}") from None
    if cfg.format == "table":
        for p in paths:
            print(p)
    else:
        _emit(cfg, {"written": [str(p) for p in paths]})
    return EXIT_OK


def cmd_plan(cfg: CliConfig, args) -> int:
    m = _load(cfg)
    tag = parse_tag(args.tag) if args.tag else None
    if args.changed:
        plan = plan_rebuild(m, args.changed, tag)
    elif tag is not None:
        plan = plan_tag(m, tag)
    else:
        raise StackError("plan needs --changed and/or --tag")
    _emit(cfg, plan.to_json(), [(i, s.image, s.tag, s.reason) for i, s in enumerate(plan.steps, 1)],
          ("step", "image", "tag", "reason"))
    return EXIT_OK


def cmd_schedule(cfg: CliConfig, args) -> int:
    m = _load(cfg)
    upstream = []
    if args.upstream:
        try:
            upstream = load_upstream(Path(args.upstream).read_text(encoding="utf-8"))
        except OSError as exc:
            raise EnvironmentFailure(f"cannot read {args.upstream}: {exc.strerror}") from None
    events = simulate(m, parse_timestamp(args.start), args.days, upstream)
    if cfg.format == "table":
        sys.stdout.write(_table([(e["timestamp"], e["image"], e["tag"], e["trigger"], e["source"])
                                 for e in (ev.to_json() for ev in events)],
                                ("timestamp", "image", "tag", "trigger", "source")))
    else:
        sys.stdout.write(dump_events(events))
    return EXIT_OK


def _record_summary(cfg: CliConfig, records):
    _emit(cfg, {"records": [r.to_json() for r in records]},
          [(r.image, r.digest, ", ".join(r.to_json()["tags"])) for r in records],
          ("image", "digest", "tags"))


def cmd_registry(cfg: CliConfig, args) -> int:
    sub = args.registry_command
    if sub == "export":
        store = RegistryStore.load(cfg.registry_path)
        sys.stdout.write(store.dumps())
        return EXIT_OK
    if sub == "import":
        try:
            data = json.loads(Path(args.file).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise EnvironmentFailure(f"cannot import {args.file}: {exc}") from None
        imported = RegistryStore.from_json(data)
        with RegistryStore.open(cfg.registry_path) as store:
            store.records = imported.records
        print(f"imported {len(imported.records)} record(s)", file=sys.stderr)
        return EXIT_OK
    if sub == "query":
        record = RegistryStore.load(cfg.registry_path).query(args.image, args.tag)
        if cfg.format == "table":
            print(f"{args.image}:{args.tag} {record.digest}")
        else:
            print(json.dumps(record.to_json(), sort_keys=True))
        return EXIT_OK

    m = _load(cfg)
    if sub == "retag":
        version = Version.parse(args.version)
        with RegistryStore.open(cfg.registry_path) as store:
            moved = store.retag(args.image, version, m.universe_for(args.image))
        _emit(cfg, {"image": args.image, "version": str(version),
                    "moved": sorted(str(t) for t in moved)},
              [(args.image, str(t)) for t in sorted(moved, key=str)], ("image", "moved"))
        return EXIT_OK

    # record
    tag = parse_tag(args.tag)
    at = parse_timestamp(args.at) if args.at else parse_timestamp(cfg.today.isoformat())
    names = args.images or build_order(m, tag)
    records = []
    with RegistryStore.open(cfg.registry_path) as store:
        for name in names:
            # Partial tags are aliases; builds are recorded under the exact version.
            built = tag
            if tag.is_numeric:
                built = Tag.exact(resolve_image_tag(m, name, tag).resolved)
            rendered = render_image(m, name, built, cfg.today, cfg.base_repo_url_override)
            record = store.record_build(rendered, BuildEvent(at, name, str(built), "manual"))
            if args.retag and isinstance(rendered.tag.resolved, Version):
                store.retag(name, rendered.tag.resolved, m.universe_for(name))
            records.append(record)
    _record_summary(cfg, records)
    return EXIT_OK


COMMANDS = {
    "validate": cmd_validate,
    "resolve": cmd_resolve,
    "snapshot": cmd_snapshot,
    "generate": cmd_generate,
    "plan": cmd_plan,
    "schedule": cmd_schedule,
    "registry": cmd_registry,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    cfg = _config(args)
    try:
        return COMMANDS[args.command](cfg, args)
    except EnvironmentFailure as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ENV
    except NotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    except RegistryError as exc:
        # Unreadable or foreign store contents.
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ENV
    except (StackError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ENV


if __name__ == "__main__":
    sys.exit(main())
