"""Artifact persistence: project files, the prompt hub, engine management
and standalone code export.

Everything is plain files under one root: ``projects/`` (one JSON document
per project), ``hub/prompts.json`` (the prompt hub) and
``engines/engines.json`` (the engine registry).  Hub artifacts imported into
a project become independent copies; later edits never propagate in either
direction.
"""

from __future__ import annotations

import copy
import json
import threading
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from importlib import resources
from pathlib import Path
from typing import Any
from urllib.parse import quote, unquote

from .engines import EngineConfig, EngineRegistry, UnknownEngineError, engines_from_list, engines_to_list
from .ir import ChainProgram, ValidationReport, program_from_dict, program_to_dict, validate
from .prompts import PromptTemplate, prompts_from_list, prompts_to_list

SCHEMA_VERSION = 1

#: Document keys owned by the store (everything else belongs to the program).
_RESERVED_DOC_KEYS = {"version", "prompts", "engines", "created", "modified"}


class StoreError(Exception):
    """Base for persistence failures."""


class ProjectFormatError(StoreError):
    """Project bytes are not a well-formed document; message carries the location."""


class UnsupportedVersionError(StoreError):
    """Project document declares a schema version this build cannot read."""


class UnknownNameError(StoreError, KeyError):
    """No stored artifact under the requested name."""


class NameCollisionError(StoreError):
    """Import or save would overwrite an existing name without permission."""


@dataclass
class ProjectRecord:
    """A project: the chain plus project-local prompt and engine copies."""

    program: ChainProgram
    prompts: list[PromptTemplate] = field(default_factory=list)
    engines: list[EngineConfig] = field(default_factory=list)
    created: str | None = None
    modified: str | None = None

    @property
    def name(self) -> str:
        return self.program.name

    def prompt_names(self) -> set[str]:
        return {t.name for t in self.prompts}

    def engine_names(self) -> set[str]:
        return {e.name for e in self.engines}

    def validate_record(self) -> ValidationReport:
        return validate(self.program, self.prompt_names(), self.engine_names())

    def copy(self) -> "ProjectRecord":
        return ProjectRecord(
            program=copy.deepcopy(self.program),
            prompts=[_copy_template(t) for t in self.prompts],
            engines=[e.copy() for e in self.engines],
            created=self.created,
            modified=self.modified,
        )


def _copy_template(template: PromptTemplate) -> PromptTemplate:
    return replace(template, extra=dict(template.extra))


def save_project(record: ProjectRecord) -> bytes:
    """Serialize a project to its versioned document. Pure and byte-stable."""
    prog = program_to_dict(record.program)
    doc: dict[str, Any] = {
        "version": SCHEMA_VERSION,
        "name": prog.pop("name"),
        "variables": prog.pop("variables"),
        "prompts": prompts_to_list(record.prompts),
        "engines": engines_to_list(record.engines),
        "chain": prog.pop("chain"),
    }
    if record.created is not None:
        doc["created"] = record.created
    if record.modified is not None:
        doc["modified"] = record.modified
    doc.update(prog)  # unknown top-level fields, preserved from load
    return (json.dumps(doc, indent=2, ensure_ascii=False) + "\n").encode("utf-8")


def load_project(raw: bytes | str) -> ProjectRecord:
    """Parse project bytes; unknown fields are preserved for the next save."""
    if isinstance(raw, bytes):
        raw = raw.decode("utf-8")
    try:
        doc = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise ProjectFormatError(
            f"malformed project JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}"
        ) from exc
    if not isinstance(doc, dict):
        raise ProjectFormatError("project document must be a JSON object")
    version = doc.get("version")
    if version != SCHEMA_VERSION:
        raise UnsupportedVersionError(f"unsupported project schema version {version!r}")
    program = program_from_dict(doc, reserved=_RESERVED_DOC_KEYS)
    return ProjectRecord(
        program=program,
        prompts=prompts_from_list(doc.get("prompts", [])),
        engines=engines_from_list(doc.get("engines", [])),
        created=doc.get("created"),
        modified=doc.get("modified"),
    )


def export_code(record: ProjectRecord) -> str:
    """Emit a self-contained script that runs this project standalone.

    The script embeds the project document plus a minimal bundled runtime;
    with the same mock script and inputs its stdout reproduces the
    interpreter's Output-window transcript byte for byte.  Engines with
    unresolved credentials still export; credentials are a run-time concern.
    """
    runtime = (
        resources.files("aichain").joinpath("assets/export").joinpath("runtime.py").read_text(
            encoding="utf-8"
        )
    )
    payload = save_project(record).decode("utf-8")
    return runtime.replace('"__EMBED_PROJECT_JSON__"', repr(payload))


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


class ArtifactStore:
    """File-backed stores for projects, hub prompts and engines.

    Writes are serialized per store; reads are concurrent.  Hub and project
    stores are disjoint: only explicit import/export moves data between them.
    """

    def __init__(self, root: str | Path):
        self.root = Path(root)
        (self.root / "projects").mkdir(parents=True, exist_ok=True)
        (self.root / "hub").mkdir(exist_ok=True)
        (self.root / "engines").mkdir(exist_ok=True)
        self._lock = threading.Lock()
        self.engine_registry = EngineRegistry(self.root / "engines" / "engines.json")

    # -- projects -------------------------------------------------------------

    def _project_path(self, name: str) -> Path:
        return self.root / "projects" / (quote(name, safe="") + ".json")

    def put_project(self, record: ProjectRecord, *, touch: bool = True) -> ProjectRecord:
        with self._lock:
            if touch:
                stamp = _now()
                record.created = record.created or stamp
                record.modified = stamp
            self._project_path(record.name).write_bytes(save_project(record))
        return record

    def get_project(self, name: str) -> ProjectRecord:
        path = self._project_path(name)
        if not path.is_file():
            raise UnknownNameError(f"unknown project {name!r}")
        return load_project(path.read_bytes())

    def delete_project(self, name: str) -> None:
        path = self._project_path(name)
        if not path.is_file():
            raise UnknownNameError(f"unknown project {name!r}")
        path.unlink()

    def list_projects(self) -> list[str]:
        return sorted(
            unquote(p.name[: -len(".json")]) for p in (self.root / "projects").glob("*.json")
        )

    # -- prompt hub -------------------------------------------------------------

    @property
    def _hub_path(self) -> Path:
        return self.root / "hub" / "prompts.json"

    def list_hub_prompts(self) -> list[PromptTemplate]:
        if not self._hub_path.is_file():
            return []
        return prompts_from_list(json.loads(self._hub_path.read_text(encoding="utf-8")))

    def get_hub_prompt(self, name: str) -> PromptTemplate:
        for template in self.list_hub_prompts():
            if template.name == name:
                return _copy_template(template)
        raise UnknownNameError(f"unknown hub prompt {name!r}")

    def add_hub_prompt(self, template: PromptTemplate, *, overwrite: bool = False) -> None:
        template.check()
        with self._lock:
            entries = self.list_hub_prompts()
            existing = [t for t in entries if t.name == template.name]
            if existing and not overwrite:
                raise NameCollisionError(f"hub prompt {template.name!r} already exists")
            entries = [t for t in entries if t.name != template.name]
            entries.append(_copy_template(template))
            self._write_hub(entries)

    def replace_hub_prompts(self, templates: list[PromptTemplate]) -> None:
        names = [t.name for t in templates]
        if len(names) != len(set(names)):
            raise NameCollisionError("hub prompt names must be unique")
        with self._lock:
            self._write_hub([_copy_template(t) for t in templates])

    def _write_hub(self, templates: list[PromptTemplate]) -> None:
        self._hub_path.write_text(
            json.dumps(prompts_to_list(templates), indent=2, ensure_ascii=False) + "\n",
            encoding="utf-8",
        )

    # -- copy-on-import ----------------------------------------------------------

    def import_prompt(
        self, name: str, record: ProjectRecord, *, overwrite: bool = False
    ) -> ProjectRecord:
        """Copy hub prompt `name` into the project; the copy is independent."""
        template = self.get_hub_prompt(name)
        if name in record.prompt_names():
            if not overwrite:
                raise NameCollisionError(f"project already has a prompt named {name!r}")
            record.prompts = [t for t in record.prompts if t.name != name]
        record.prompts.append(template)
        return record

    def import_engine(
        self, name: str, record: ProjectRecord, *, overwrite: bool = False
    ) -> ProjectRecord:
        """Copy registry engine `name` into the project; the copy is independent."""
        try:
            config = self.engine_registry.load(name)
        except UnknownEngineError as exc:
            raise UnknownNameError(f"unknown engine {name!r}") from exc
        if name in record.engine_names():
            if not overwrite:
                raise NameCollisionError(f"project already has an engine named {name!r}")
            record.engines = [e for e in record.engines if e.name != name]
        record.engines.append(config)
        return record
