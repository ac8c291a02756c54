"""Headless command line: validate, run, debug, export and serve AI chains.

Human-format runs split the two IDE panes across streams: Output-window
events go to stdout, Block-Console events to stderr, so pipelines see only
what end users would.  ``--json`` emits the raw transcript as JSON lines.

Exit codes: 0 success, 1 validation failure, 2 runtime failure, 3 I/O or
file-format failure.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from . import interpreter
from .engines import EngineGateway, EngineKind, MockScript, engines_from_list, engines_to_list
from .interpreter import (
    Abort,
    Continue,
    EditPrompt,
    EventKind,
    ExecutionSession,
    InvalidProgramError,
    RerunCurrent,
    SessionStatus,
    Step,
    TranscriptEvent,
)
from .prompts import prompts_from_list, prompts_to_list
from .store import (
    ArtifactStore,
    ProjectRecord,
    StoreError,
    export_code,
    load_project,
)

EXIT_VALIDATION = 1
EXIT_RUNTIME = 2
EXIT_IO = 3


def _load_record(path: str) -> ProjectRecord:
    try:
        return load_project(Path(path).read_bytes())
    except OSError as exc:
        raise SystemExit(_fail(f"cannot read {path}: {exc}", EXIT_IO))
    except StoreError as exc:
        raise SystemExit(_fail(str(exc), EXIT_IO))
    except Exception as exc:
        raise SystemExit(_fail(f"bad project document: {exc}", EXIT_IO))


def _fail(message: str, code: int) -> int:
    click.echo(f"error: {message}", err=True)
    return code


def _gateway_for(record: ProjectRecord, mock_path: str | None) -> EngineGateway:
    gateway = EngineGateway(script_root=Path.cwd())
    if mock_path:
        try:
            script = MockScript.load_file(mock_path)
        except (OSError, ValueError) as exc:
            raise SystemExit(_fail(f"cannot load mock fixture {mock_path}: {exc}", EXIT_IO))
        gateway.set_default_mock_script(script)
        for engine in record.engines:
            if engine.kind is EngineKind.MOCK and engine.mock_script_ref:
                gateway.register_mock_script(engine.mock_script_ref, script)
    return gateway


_CONSOLE_KINDS = {
    EventKind.WORKER_STARTED: lambda e: f"── worker {e.payload}",
    EventKind.PROMPT_RENDERED: lambda e: f"prompt (attempt {e.attempt}):\n{e.payload}",
    EventKind.ENGINE_OUTPUT: lambda e: f"output (attempt {e.attempt}): {e.payload}",
    EventKind.CONSOLE_OUTPUT: lambda e: f"console: {e.payload}",
    EventKind.NEEDS_INPUT: lambda e: f"input needed: {e.payload}",
    EventKind.INPUT_RECEIVED: lambda e: f"input: {e.payload}",
    EventKind.SUSPENDED: lambda e: f"[suspended] after {e.payload}",
    EventKind.RERUN_MARKER: lambda e: f"[rerun] attempt {e.attempt}",
    EventKind.ERROR: lambda e: f"[error] {e.payload}",
    EventKind.FINISHED: lambda e: "finished",
}


def _print_events(events: list[TranscriptEvent], *, as_json: bool) -> None:
    for event in events:
        if as_json:
            click.echo(json.dumps(event.to_dict(), ensure_ascii=False))
        elif event.kind is EventKind.OUTPUT_WINDOW:
            click.echo(event.payload)
        else:
            click.echo(_CONSOLE_KINDS[event.kind](event), err=True)


def _drain(session: ExecutionSession, seen: int, *, as_json: bool) -> int:
    _print_events(session.transcript[seen:], as_json=as_json)
    return len(session.transcript)


@click.group()
def main() -> None:
    """Build, run, debug and manage AI chains."""


@main.command()
@click.argument("project", type=click.Path(exists=False))
def validate(project: str) -> None:
    """Check PROJECT against every IR invariant and print the report."""
    record = _load_record(project)
    report = record.validate_record()
    for diag in report.diagnostics:
        click.echo(f"{diag.severity}: {diag.message} (unit {diag.unit_id or '-'})")
    if not report.ok:
        sys.exit(EXIT_VALIDATION)
    click.echo("ok: 0 errors")


@main.command()
@click.argument("project", type=click.Path(exists=False))
@click.option("--input", "inputs", multiple=True, help="Scripted console input (repeatable).")
@click.option("--mock", "mock_path", type=click.Path(exists=False), help="Mock engine fixture JSON.")
@click.option("--json", "as_json", is_flag=True, help="Emit the raw transcript as JSON lines.")
def run(project: str, inputs: tuple[str, ...], mock_path: str | None, as_json: bool) -> None:
    """Run PROJECT to completion, streaming the transcript."""
    record = _load_record(project)
    gateway = _gateway_for(record, mock_path)
    queue = list(inputs)
    try:
        session = interpreter.start(
            record.program,
            "run",
            prompts={t.name: t for t in record.prompts},
            engines={e.name: e for e in record.engines},
            gateway=gateway,
        )
    except InvalidProgramError as exc:
        for diag in exc.report.errors():
            click.echo(f"error: {diag.message} (unit {diag.unit_id or '-'})", err=True)
        sys.exit(EXIT_VALIDATION)
    seen = _drain(session, 0, as_json=as_json)
    while session.status is SessionStatus.AWAITING_INPUT:
        if queue:
            value = queue.pop(0)
        else:
            try:
                value = input()
            except EOFError:
                sys.exit(_fail("chain is awaiting input but none is available", EXIT_RUNTIME))
        interpreter.feed_input(session, value)
        seen = _drain(session, seen, as_json=as_json)
    if session.status is SessionStatus.FAILED:
        sys.exit(EXIT_RUNTIME)


@main.command()
@click.argument("project", type=click.Path(exists=False))
@click.option("--mock", "mock_path", type=click.Path(exists=False), help="Mock engine fixture JSON.")
def debug(project: str, mock_path: str | None) -> None:
    """Step through PROJECT one worker at a time (step / continue / edit / rerun / abort)."""
    record = _load_record(project)
    gateway = _gateway_for(record, mock_path)
    try:
        session = interpreter.start(
            record.program,
            "debug",
            prompts={t.name: t for t in record.prompts},
            engines={e.name: e for e in record.engines},
            gateway=gateway,
        )
    except InvalidProgramError as exc:
        for diag in exc.report.errors():
            click.echo(f"error: {diag.message} (unit {diag.unit_id or '-'})", err=True)
        sys.exit(EXIT_VALIDATION)
    seen = _drain(session, 0, as_json=False)
    while session.status not in (SessionStatus.FINISHED, SessionStatus.FAILED):
        if session.status is SessionStatus.AWAITING_INPUT:
            try:
                value = input()
            except EOFError:
                sys.exit(_fail("chain is awaiting input but none is available", EXIT_RUNTIME))
            interpreter.feed_input(session, value)
            seen = _drain(session, seen, as_json=False)
            continue
        click.echo("(debug) ", err=True, nl=False)
        try:
            line = input()
        except EOFError:
            interpreter.debug_step(session, Abort())
            seen = _drain(session, seen, as_json=False)
            break
        words = line.strip().split(maxsplit=2)
        if not words:
            continue
        command, rest = words[0], words[1:]
        try:
            if command == "step":
                interpreter.debug_step(session, Step())
            elif command == "continue":
                interpreter.debug_step(session, Continue())
            elif command == "edit" and len(rest) == 2:
                interpreter.debug_step(session, EditPrompt(worker_id=rest[0], new_text=rest[1]))
            elif command == "rerun":
                interpreter.debug_step(session, RerunCurrent())
            elif command == "abort":
                interpreter.debug_step(session, Abort())
            else:
                click.echo("commands: step | continue | edit <worker_id> <text> | rerun | abort", err=True)
                continue
        except interpreter.ProtocolError as exc:
            click.echo(f"error: {exc}", err=True)
            continue
        seen = _drain(session, seen, as_json=False)
    if session.status is SessionStatus.FAILED:
        sys.exit(EXIT_RUNTIME)


@main.command("export-code")
@click.argument("project", type=click.Path(exists=False))
@click.option("-o", "--output", required=True, type=click.Path(), help="Output script path.")
def export_code_cmd(project: str, output: str) -> None:
    """Export PROJECT as a standalone script with a bundled runtime."""
    record = _load_record(project)
    try:
        Path(output).write_text(export_code(record), encoding="utf-8")
    except OSError as exc:
        sys.exit(_fail(f"cannot write {output}: {exc}", EXIT_IO))
    click.echo(f"wrote {output}")


def _store(root: str | None) -> ArtifactStore:
    return ArtifactStore(root or "aichain_store")


@main.group()
def hub() -> None:
    """Prompt Hub management."""


@hub.group("prompts")
def hub_prompts() -> None:
    """Manage hub prompts."""


@hub_prompts.command("list")
@click.option("--store-root", envvar="AICHAIN_STORE_ROOT", default=None)
def hub_prompts_list(store_root: str | None) -> None:
    for template in _store(store_root).list_hub_prompts():
        click.echo(f"{template.name}: {template.instruction[:60]}")


@hub_prompts.command("add")
@click.argument("file", type=click.Path(exists=False))
@click.option("--store-root", envvar="AICHAIN_STORE_ROOT", default=None)
@click.option("--overwrite", is_flag=True)
def hub_prompts_add(file: str, store_root: str | None, overwrite: bool) -> None:
    try:
        data = json.loads(Path(file).read_text(encoding="utf-8"))
    except (OSError, ValueError) as exc:
        sys.exit(_fail(f"cannot read {file}: {exc}", EXIT_IO))
    store = _store(store_root)
    entries = data if isinstance(data, list) else [data]
    try:
        for template in prompts_from_list(entries):
            store.add_hub_prompt(template, overwrite=overwrite)
    except StoreError as exc:
        sys.exit(_fail(str(exc), EXIT_IO))
    click.echo(f"added {len(entries)} prompt(s)")


@hub_prompts.command("export")
@click.argument("out", type=click.Path())
@click.option("--store-root", envvar="AICHAIN_STORE_ROOT", default=None)
def hub_prompts_export(out: str, store_root: str | None) -> None:
    templates = _store(store_root).list_hub_prompts()
    Path(out).write_text(
        json.dumps(prompts_to_list(templates), indent=2, ensure_ascii=False) + "\n",
        encoding="utf-8",
    )
    click.echo(f"wrote {out}")


@main.group()
def engines() -> None:
    """Engine registry management."""


@engines.command("list")
@click.option("--store-root", envvar="AICHAIN_STORE_ROOT", default=None)
def engines_list(store_root: str | None) -> None:
    for config in _store(store_root).engine_registry.list():
        click.echo(f"{config.name}: {config.kind.value} {config.model_id}".rstrip())


@engines.command("add")
@click.argument("file", type=click.Path(exists=False))
@click.option("--store-root", envvar="AICHAIN_STORE_ROOT", default=None)
def engines_add(file: str, store_root: str | None) -> None:
    try:
        data = json.loads(Path(file).read_text(encoding="utf-8"))
    except (OSError, ValueError) as exc:
        sys.exit(_fail(f"cannot read {file}: {exc}", EXIT_IO))
    store = _store(store_root)
    entries = data if isinstance(data, list) else [data]
    try:
        for config in engines_from_list(entries):
            store.engine_registry.save(config)
    except ValueError as exc:
        sys.exit(_fail(str(exc), EXIT_IO))
    click.echo(f"added {len(entries)} engine(s)")


@main.command()
@click.option("--port", default=8000, type=int)
@click.option("--host", default="127.0.0.1")
@click.option("--store-root", envvar="AICHAIN_STORE_ROOT", default="aichain_store")
def serve(port: int, host: str, store_root: str) -> None:
    """Launch the HTTP service and event-stream API."""
    import uvicorn

    from .service import create_app

    uvicorn.run(create_app(store_root), host=host, port=port)


if __name__ == "__main__":
    main()
