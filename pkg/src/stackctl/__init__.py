"""Orchestration for versioned container image stacks.

Parses a declarative stack manifest, resolves partial and named tags,
pins package-repository snapshots, renders Dockerfiles, plans rebuilds,
simulates build triggers and keeps a local registry of build records.
"""
from .dockerfile import (GenerationError, RenderedImage, generate_apt_pin, generate_dockerfile,
                         render_image, render_launch_command, render_stack, write_tree)
from .manifest import (CycleError, DanglingParentError, Diagnostic, DuplicateImageError,
                       ManifestError, ManifestSyntaxError, fixture_path, load_calendar,
                       load_manifest, parse_manifest, render_manifest, validate_manifest)
from .model import (CURRENT_DATE, DEVEL, LATEST, TESTING, BuildArgs, BuildPolicy, Channel,
                    ImageSpec, LabelSet, SnapshotCalendar, StackError, StackManifest, Tag,
                    TagKind, Version)
from .planner import (BuildPlan, PlanStep, build_order, incremental_size, plan_rebuild,
                      rebuild_set)
from .registry import NotFoundError, RegistryRecord, RegistryStore
from .schedule import BuildEvent, UpstreamEvent, next_build, simulate
from .snapshot import SnapshotResolution, SnapshotResolver, base_os, repo_url, snapshot_date
from .tags import (MalformedTagError, ResolvedTag, UnresolvableTagError, alias_set, parse_tag,
                   resolve_tag)

__version__ = "0.1.0"

__all__ = [
    "BuildArgs",
    "BuildEvent",
    "BuildPlan",
    "BuildPolicy",
    "CURRENT_DATE",
    "Channel",
    "CycleError",
    "DEVEL",
    "DanglingParentError",
    "Diagnostic",
    "DuplicateImageError",
    "GenerationError",
    "ImageSpec",
    "LATEST",
    "LabelSet",
    "MalformedTagError",
    "ManifestError",
    "ManifestSyntaxError",
    "NotFoundError",
    "PlanStep",
    "RegistryRecord",
    "RegistryStore",
    "RenderedImage",
    "ResolvedTag",
    "SnapshotCalendar",
    "SnapshotResolution",
    "SnapshotResolver",
    "StackError",
    "StackManifest",
    "TESTING",
    "Tag",
    "TagKind",
    "UnresolvableTagError",
    "UpstreamEvent",
    "Version",
    "alias_set",
    "base_os",
    "build_order",
    "fixture_path",
    "generate_apt_pin",
    "generate_dockerfile",
    "incremental_size",
    "load_calendar",
    "load_manifest",
    "next_build",
    "parse_manifest",
    "parse_tag",
    "plan_rebuild",
    "rebuild_set",
    "render_image",
    "render_launch_command",
    "render_manifest",
    "render_stack",
    "repo_url",
    "resolve_tag",
    "simulate",
    "snapshot_date",
    "validate_manifest",
    "write_tree",
]
