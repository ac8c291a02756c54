"""Tree-walking interpreter for AI chains.

A session executes one unit at a time: preworkers and preunits run, in
listed order, immediately before their owner; disabled blocks are skipped
whole.  Run mode streams to completion, pausing only for console input.
Debug mode suspends after every worker so the prompt can be inspected,
edited and re-run before stepping on.

Sessions communicate through an explicit hand-off: when input is needed the
status becomes ``awaiting_input`` and the caller resumes with
:func:`feed_input`; the interpreter never polls.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Callable, Iterator, Union

from .engines import EngineConfig, EngineError, EngineGateway
from .ir import (
    Assign,
    ChainProgram,
    ConsoleInput,
    ConsoleOutput,
    ContainerSpec,
    EvalError,
    For,
    If,
    OutputWrapper,
    Unit,
    Value,
    ValidationReport,
    VariableRef,
    While,
    WorkerSpec,
    eval_expr,
    validate,
)
from .prompts import PromptTemplate, TemplateError, extract_placeholders, render

DEFAULT_WHILE_CAP = 10_000

# eval_expr is re-exported: it is part of this module's execution contract.
__all__ = [
    "DebugCommand",
    "EventKind",
    "ExecutionSession",
    "InputsExhausted",
    "InvalidProgramError",
    "ProtocolError",
    "SessionMode",
    "SessionStatus",
    "TranscriptEvent",
    "eval_expr",
    "feed_input",
    "debug_step",
    "run_to_completion",
    "start",
    "transcript_to_jsonl",
]


class SessionMode(str, Enum):
    RUN = "run"
    DEBUG = "debug"


class SessionStatus(str, Enum):
    RUNNING = "running"
    SUSPENDED = "suspended"
    AWAITING_INPUT = "awaiting_input"
    FINISHED = "finished"
    FAILED = "failed"


class EventKind(str, Enum):
    WORKER_STARTED = "worker_started"
    PROMPT_RENDERED = "prompt_rendered"
    ENGINE_OUTPUT = "engine_output"
    CONSOLE_OUTPUT = "console_output"
    OUTPUT_WINDOW = "output_window"
    NEEDS_INPUT = "needs_input"
    INPUT_RECEIVED = "input_received"
    SUSPENDED = "suspended"
    RERUN_MARKER = "rerun_marker"
    ERROR = "error"
    FINISHED = "finished"


@dataclass(frozen=True)
class TranscriptEvent:
    kind: EventKind
    unit_id: str | None
    payload: str
    attempt: int
    seq: int

    def to_dict(self) -> dict[str, Any]:
        return {
            "kind": self.kind.value,
            "unit_id": self.unit_id,
            "payload": self.payload,
            "attempt": self.attempt,
            "seq": self.seq,
        }


def transcript_to_jsonl(events: list[TranscriptEvent]) -> str:
    """Transcript export: one event per line, stable field names."""
    return "".join(json.dumps(e.to_dict(), ensure_ascii=False) + "\n" for e in events)


@dataclass(frozen=True)
class Step:
    pass


@dataclass(frozen=True)
class Continue:
    pass


@dataclass(frozen=True)
class EditPrompt:
    worker_id: str
    new_text: str


@dataclass(frozen=True)
class RerunCurrent:
    pass


@dataclass(frozen=True)
class Abort:
    pass


DebugCommand = Union[Step, Continue, EditPrompt, RerunCurrent, Abort]


class ProtocolError(Exception):
    """Command or input delivered in a status that does not accept it."""


class InvalidProgramError(Exception):
    """Program failed validation; carries the report."""

    def __init__(self, report: ValidationReport):
        super().__init__("program failed validation: " + "; ".join(d.message for d in report.errors()))
        self.report = report


class InputsExhausted(Exception):
    """Scripted inputs ran out while the session was awaiting input."""


class _SessionFailure(Exception):
    """Internal: aborts the walk after an error event has been recorded."""


@dataclass
class _WorkerRun:
    """Everything needed to re-render and re-invoke the current worker."""

    worker: WorkerSpec
    inputs: list[tuple[str, Value]]
    in_output: bool


ConsoleProvider = Callable[[str], "str | None"]


class ExecutionSession:
    """Live run or debug state for one program.

    Not constructed directly; use :func:`start`.  One session executes one
    unit at a time; it may be suspended on one thread and resumed on
    another, but calls on a single session must not overlap.
    """

    def __init__(
        self,
        program: ChainProgram,
        mode: SessionMode,
        prompts: dict[str, PromptTemplate],
        engines: dict[str, EngineConfig],
        gateway: EngineGateway,
        console: ConsoleProvider | None = None,
        while_cap: int = DEFAULT_WHILE_CAP,
    ):
        self.program = program
        self.mode = mode
        self.env: dict[str, Value] = {name: value for name, value in program.variables}
        self.transcript: list[TranscriptEvent] = []
        self.status = SessionStatus.RUNNING
        self.cursor: list[str] = []
        self.pending_prompt_edit: dict[str, str] = {}
        self._prompts = prompts
        self._engines = engines
        self._gateway = gateway
        self._console = console
        self._while_cap = while_cap
        self._run_through = mode is SessionMode.RUN
        self._current: _WorkerRun | None = None
        self._attempts: dict[str, int] = {}
        self._pending_input: tuple[WorkerSpec, ConsoleInput] | None = None
        self._walk: Iterator[tuple[str, Any]] | None = None

    # -- events --------------------------------------------------------------

    def _emit(self, kind: EventKind, unit_id: str | None, payload: str, attempt: int = 1) -> TranscriptEvent:
        event = TranscriptEvent(kind, unit_id, payload, attempt, seq=len(self.transcript))
        self.transcript.append(event)
        return event

    # -- driving the walk ------------------------------------------------------

    def _begin(self) -> None:
        self._walk = self._exec_units(self.program.top_level)
        self._advance(None)

    def _advance(self, send_value: str | None) -> None:
        assert self._walk is not None
        self.status = SessionStatus.RUNNING
        while True:
            try:
                request, payload = self._walk.send(send_value)
            except StopIteration:
                self._emit(EventKind.FINISHED, None, "")
                self.status = SessionStatus.FINISHED
                return
            except _SessionFailure:
                self.status = SessionStatus.FAILED
                return
            if request == "input":
                worker, source = payload
                if self._console is not None:
                    provided = self._console(source.prompt_text)
                    if provided is not None:
                        self._emit(EventKind.INPUT_RECEIVED, worker.id, provided)
                        send_value = provided
                        continue
                self._pending_input = (worker, source)
                self.status = SessionStatus.AWAITING_INPUT
                return
            # request == "suspend"
            self.status = SessionStatus.SUSPENDED
            return

    # -- tree walk -------------------------------------------------------------

    def _exec_units(self, units: list[Unit]):
        for unit in units:
            yield from self._exec_unit(unit)

    def _exec_unit(self, unit: Unit):
        if not unit.meta.enabled:
            return
        self.cursor.append(unit.id)
        try:
            if isinstance(unit, WorkerSpec):
                yield from self._exec_worker(unit, in_output=False)
            elif isinstance(unit, ContainerSpec):
                yield from self._exec_units(unit.preunits)
                yield from self._exec_units(unit.units)
            elif isinstance(unit, ConsoleOutput):
                value = self._eval(unit)
                self._emit(EventKind.CONSOLE_OUTPUT, unit.id, value.as_text())
            elif isinstance(unit, Assign):
                self.env[unit.var] = self._eval(unit)
            elif isinstance(unit, If):
                branch = unit.then if self._eval(unit, unit.cond).as_bool() else unit.orelse
                yield from self._exec_units(branch)
            elif isinstance(unit, While):
                iterations = 0
                while self._eval(unit, unit.cond).as_bool():
                    iterations += 1
                    if iterations > self._while_cap:
                        self._fail(unit.id, f"while loop exceeded {self._while_cap} iterations")
                    yield from self._exec_units(unit.body)
            elif isinstance(unit, For):
                yield from self._exec_for(unit)
            elif isinstance(unit, OutputWrapper):
                if unit.worker.meta.enabled:
                    yield from self._exec_worker(unit.worker, in_output=True)
            else:
                self._fail(unit.id, f"unknown unit type {type(unit).__name__}")
        finally:
            self.cursor.pop()

    def _exec_for(self, unit: For):
        lo = self._eval(unit, unit.start).as_number()
        hi = self._eval(unit, unit.stop).as_number()
        if lo is None or hi is None or not float(lo).is_integer() or not float(hi).is_integer():
            self._fail(unit.id, "for-loop bounds must be integers")
        for index in range(int(lo), int(hi) + 1):
            self.env[unit.var] = Value.number(index)
            yield from self._exec_units(unit.body)

    def _eval(self, unit: Unit, expr=None) -> Value:
        try:
            return eval_expr(self.env, expr if expr is not None else unit.expr)
        except EvalError as exc:
            self._fail(unit.id, str(exc))

    def _fail(self, unit_id: str | None, message: str) -> None:
        self._emit(EventKind.ERROR, unit_id, message)
        raise _SessionFailure(message)

    # -- workers ---------------------------------------------------------------

    def _exec_worker(self, worker: WorkerSpec, in_output: bool):
        inputs: list[tuple[str, Value]] = []
        for pre in worker.preworkers:
            if isinstance(pre, WorkerSpec):
                if not pre.meta.enabled:
                    continue
                yield from self._exec_worker(pre, in_output=False)
                if pre.name in self.env:
                    inputs.append((pre.name, self.env[pre.name]))
            elif isinstance(pre, ConsoleInput):
                self._emit(EventKind.NEEDS_INPUT, worker.id, pre.prompt_text)
                text = yield ("input", (worker, pre))
                inputs.append((pre.prompt_text, Value.text(text)))
            elif isinstance(pre, VariableRef):
                if pre.name not in self.env:
                    self._fail(worker.id, f"unbound variable {pre.name!r} used as worker input")
                inputs.append((pre.name, self.env[pre.name]))
            else:
                self._fail(worker.id, f"unknown input source {pre!r}")

        self._emit(EventKind.WORKER_STARTED, worker.id, worker.name)
        run = _WorkerRun(worker=worker, inputs=inputs, in_output=in_output)
        self._current = run
        self._attempts[worker.id] = 1
        try:
            self._run_attempt(run, attempt=1)
        except (EngineError, TemplateError) as exc:
            self._emit(EventKind.ERROR, worker.id, str(exc))
            if self._run_through:
                raise _SessionFailure(str(exc)) from exc
        if not self._run_through:
            self._emit(EventKind.SUSPENDED, worker.id, worker.name)
            yield ("suspend", run)

    def _run_attempt(self, run: _WorkerRun, attempt: int, edited_text: str | None = None) -> None:
        """Render the prompt, invoke the engine and bind the step output.

        Raises EngineError/TemplateError on failure; the caller decides
        whether that fails the session or suspends for editing.
        """
        worker = run.worker
        if edited_text is not None:
            template = PromptTemplate(name=worker.prompt_ref, instruction=edited_text)
        else:
            template = self._prompts[worker.prompt_ref]
        placeholders = extract_placeholders(template)
        bindings = dict(self.env)
        bindings.update({name: value for name, value in run.inputs})
        rendered = render(template, bindings)
        # Inputs without a matching placeholder are appended as trailing
        # lines so bare chaining works without template edits.
        unmatched = [(n, v) for n, v in run.inputs if n not in placeholders]
        if unmatched:
            rendered += "\n" + "\n".join(f"{name}: {value.as_text()}" for name, value in unmatched)
        self._emit(EventKind.PROMPT_RENDERED, worker.id, rendered, attempt)
        response = self._gateway.invoke(self._engines[worker.engine_ref], rendered)
        self._emit(EventKind.ENGINE_OUTPUT, worker.id, response.value.as_text(), attempt)
        self.env[worker.name] = response.value
        if run.in_output:
            self._emit(EventKind.OUTPUT_WINDOW, worker.id, response.value.as_text(), attempt)


# ---------------------------------------------------------------------------
# Session operations
# ---------------------------------------------------------------------------


def start(
    program: ChainProgram,
    mode: SessionMode | str,
    *,
    prompts: dict[str, PromptTemplate],
    engines: dict[str, EngineConfig],
    gateway: EngineGateway,
    console: ConsoleProvider | None = None,
    while_cap: int = DEFAULT_WHILE_CAP,
) -> ExecutionSession:
    """Validate `program` and begin executing it.

    Run mode proceeds until input is needed or the chain ends; debug mode
    suspends after the first worker completes.  `console`, when given, is
    asked for input before the session falls back to ``awaiting_input``.
    """
    report = validate(program, set(prompts), set(engines))
    if not report.ok:
        raise InvalidProgramError(report)
    session = ExecutionSession(
        program,
        SessionMode(mode),
        prompts=prompts,
        engines=engines,
        gateway=gateway,
        console=console,
        while_cap=while_cap,
    )
    session._begin()
    return session


def feed_input(session: ExecutionSession, value: str) -> ExecutionSession:
    """Deliver one console input line and resume execution per mode."""
    if session.status is not SessionStatus.AWAITING_INPUT or session._pending_input is None:
        raise ProtocolError(f"session is {session.status.value}, not awaiting input")
    worker, _ = session._pending_input
    session._pending_input = None
    session._emit(EventKind.INPUT_RECEIVED, worker.id, value)
    session._advance(value)
    return session


def debug_step(session: ExecutionSession, cmd: DebugCommand) -> ExecutionSession:
    """Apply one debug command; see :class:`DebugCommand` variants."""
    if isinstance(cmd, Abort):
        if session.status in (SessionStatus.FINISHED, SessionStatus.FAILED):
            return session
        session._emit(EventKind.ERROR, None, "aborted by user")
        session.status = SessionStatus.FAILED
        if session._walk is not None:
            session._walk.close()
        return session

    if session.status is not SessionStatus.SUSPENDED:
        raise ProtocolError(f"session is {session.status.value}, not suspended")

    if isinstance(cmd, Step):
        session._advance(None)
        return session
    if isinstance(cmd, Continue):
        session._run_through = True
        session._advance(None)
        return session
    if isinstance(cmd, EditPrompt):
        current = session._current
        if current is None or current.worker.id != cmd.worker_id:
            raise ProtocolError(f"worker {cmd.worker_id!r} is not the current worker")
        session.pending_prompt_edit[cmd.worker_id] = cmd.new_text
        return session
    if isinstance(cmd, RerunCurrent):
        current = session._current
        if current is None:
            raise ProtocolError("no worker to re-run")
        worker = current.worker
        attempt = session._attempts.get(worker.id, 1) + 1
        session._attempts[worker.id] = attempt
        session._emit(EventKind.RERUN_MARKER, worker.id, "", attempt)
        try:
            session._run_attempt(current, attempt, edited_text=session.pending_prompt_edit.get(worker.id))
        except (EngineError, TemplateError) as exc:
            session._emit(EventKind.ERROR, worker.id, str(exc), attempt)
        return session
    raise ProtocolError(f"unknown debug command {cmd!r}")


def run_to_completion(
    program: ChainProgram,
    scripted_inputs: list[str],
    *,
    prompts: dict[str, PromptTemplate],
    engines: dict[str, EngineConfig],
    gateway: EngineGateway,
    while_cap: int = DEFAULT_WHILE_CAP,
) -> list[TranscriptEvent]:
    """Headless run: feed `scripted_inputs` in order and return the transcript.

    Raises :class:`InputsExhausted` if the chain asks for more input than was
    scripted.
    """
    session = start(
        program,
        SessionMode.RUN,
        prompts=prompts,
        engines=engines,
        gateway=gateway,
        while_cap=while_cap,
    )
    queue = list(scripted_inputs)
    while session.status is SessionStatus.AWAITING_INPUT:
        if not queue:
            raise InputsExhausted("chain is awaiting input but scripted inputs ran out")
        feed_input(session, queue.pop(0))
    return session.transcript
