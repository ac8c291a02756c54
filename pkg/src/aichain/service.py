"""HTTP facade over the interpreter, co-pilots and artifact store.

A pure adapter: every route delegates to the underlying operation, so
observable behavior over HTTP matches direct calls.  Transcripts stream as
server-sent events (``event: transcript`` frames) with gapless per-session
sequence numbers; commands arrive as plain POSTs.
"""

from __future__ import annotations

import json
import threading
import time
import uuid
from dataclasses import dataclass, field
from typing import Any, Iterator

from fastapi import Body, FastAPI, HTTPException, Request
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import StreamingResponse

from . import copilots, interpreter
from .engines import EngineConfig, EngineGateway, UnknownEngineError, engines_from_list, engines_to_list
from .interpreter import (
    Abort,
    Continue,
    DebugCommand,
    EditPrompt,
    ExecutionSession,
    InvalidProgramError,
    ProtocolError,
    RerunCurrent,
    SessionStatus,
    Step,
)
from .prompts import prompts_from_list, prompts_to_list
from .store import (
    ArtifactStore,
    NameCollisionError,
    ProjectRecord,
    StoreError,
    UnknownNameError,
    load_project,
    save_project,
)

DEFAULT_SESSION_TTL = 30 * 60.0

_TERMINAL = (SessionStatus.FINISHED, SessionStatus.FAILED)


@dataclass
class SessionHandle:
    """One live execution session plus its transport state."""

    session_id: str
    project_name: str
    mode: str
    session: ExecutionSession
    lock: threading.Lock = field(default_factory=threading.Lock)
    cond: threading.Condition = field(default_factory=threading.Condition)
    last_touch: float = field(default_factory=time.monotonic)

    def info(self) -> dict[str, Any]:
        return {
            "session_id": self.session_id,
            "project": self.project_name,
            "mode": self.mode,
            "status": self.session.status.value,
            "events": len(self.session.transcript),
        }


def create_app(
    store_root: str,
    *,
    gateway: EngineGateway | None = None,
    cors_origins: list[str] | None = None,
    session_ttl: float = DEFAULT_SESSION_TTL,
) -> FastAPI:
    """Build the service over an artifact store rooted at `store_root`."""
    app = FastAPI(title="aichain service")
    app.add_middleware(
        CORSMiddleware,
        allow_origins=cors_origins or ["*"],
        allow_methods=["*"],
        allow_headers=["*"],
    )
    store = ArtifactStore(store_root)
    gw = gateway or EngineGateway(script_root=store.root)
    handles: dict[str, SessionHandle] = {}
    handles_lock = threading.Lock()

    # -- helpers ---------------------------------------------------------------

    def get_handle(session_id: str) -> SessionHandle:
        with handles_lock:
            now = time.monotonic()
            for key in [k for k, h in handles.items() if now - h.last_touch > session_ttl]:
                del handles[key]
            handle = handles.get(session_id)
            if handle is None:
                raise HTTPException(404, f"unknown session {session_id!r}")
            handle.last_touch = now
            return handle

    def resolve_engine(spec: Any) -> EngineConfig:
        if isinstance(spec, str):
            try:
                return store.engine_registry.load(spec)
            except UnknownEngineError:
                raise HTTPException(404, f"unknown engine {spec!r}") from None
        if isinstance(spec, dict):
            try:
                return EngineConfig.from_dict(spec)
            except ValueError as exc:
                raise HTTPException(422, str(exc)) from exc
        raise HTTPException(422, "engine must be a registry name or a config object")

    def load_body_project(body: dict[str, Any]) -> ProjectRecord:
        try:
            return load_project(json.dumps(body))
        except StoreError as exc:
            raise HTTPException(422, str(exc)) from exc
        except Exception as exc:  # bad unit/expr shapes surface as IRError etc.
            raise HTTPException(422, f"bad project document: {exc}") from exc

    # -- projects ----------------------------------------------------------------

    @app.get("/projects")
    def list_projects() -> dict[str, Any]:
        return {"projects": store.list_projects()}

    @app.post("/projects", status_code=201)
    def create_project(body: dict[str, Any] = Body(...)) -> dict[str, Any]:
        record = load_body_project(body)
        if record.name in store.list_projects():
            raise HTTPException(409, f"project {record.name!r} already exists")
        store.put_project(record)
        return {"name": record.name}

    @app.get("/projects/{name}")
    def get_project(name: str) -> dict[str, Any]:
        try:
            record = store.get_project(name)
        except UnknownNameError as exc:
            raise HTTPException(404, str(exc)) from exc
        return json.loads(save_project(record))

    @app.put("/projects/{name}")
    def put_project(name: str, body: dict[str, Any] = Body(...)) -> dict[str, Any]:
        record = load_body_project(body)
        if record.name != name:
            raise HTTPException(422, "document name does not match the URL")
        store.put_project(record)
        return {"name": record.name}

    @app.delete("/projects/{name}", status_code=204)
    def delete_project(name: str) -> None:
        try:
            store.delete_project(name)
        except UnknownNameError as exc:
            raise HTTPException(404, str(exc)) from exc

    # -- co-pilots ------------------------------------------------------------------

    @app.post("/copilot/clarify")
    def copilot_clarify(body: dict[str, Any] = Body(...)) -> dict[str, Any]:
        engine = resolve_engine(body.get("engine"))
        conversation = copilots.Conversation.from_list(body.get("conversation", []))
        try:
            question = copilots.clarify(body.get("task_description", ""), conversation, engine, gw)
        except copilots.CopilotError as exc:
            raise HTTPException(422, str(exc)) from exc
        return {"question": question}

    @app.post("/copilot/incorporate")
    def copilot_incorporate(body: dict[str, Any] = Body(...)) -> dict[str, Any]:
        engine = resolve_engine(body.get("engine"))
        try:
            updated = copilots.incorporate(
                body.get("task_description", ""),
                body.get("question", ""),
                body.get("answer", ""),
                engine,
                gw,
            )
        except copilots.CopilotError as exc:
            raise HTTPException(422, str(exc)) from exc
        return {"task_description": updated}

    @app.post("/copilot/skeleton")
    def copilot_skeleton(body: dict[str, Any] = Body(...)) -> dict[str, Any]:
        engine = resolve_engine(body.get("engine"))
        try:
            skeleton = copilots.generate_skeleton(body.get("task_description", ""), engine, gw)
        except copilots.SkeletonParseError as exc:
            raise HTTPException(422, f"{exc}; raw reply: {exc.raw[:500]}") from exc
        except copilots.CopilotError as exc:
            raise HTTPException(422, str(exc)) from exc
        return skeleton.to_dict()

    @app.post("/copilot/assemble")
    def copilot_assemble(body: dict[str, Any] = Body(...)) -> dict[str, Any]:
        skeleton = copilots.Skeleton.from_dict(body.get("skeleton", {}))
        default_engine = body.get("default_engine", "")
        try:
            program = copilots.skeleton_to_program(skeleton, default_engine=default_engine)
        except copilots.CopilotError as exc:
            raise HTTPException(422, str(exc)) from exc
        templates = copilots.skeleton_prompts(skeleton)
        engine_names = {s.engine_ref or default_engine for s in skeleton.steps if s.engine_ref or default_engine}
        engines = []
        for engine_name in sorted(engine_names):
            try:
                engines.append(store.engine_registry.load(engine_name))
            except UnknownEngineError:
                pass  # the editor can import or define it later
        record = ProjectRecord(program=program, prompts=templates, engines=engines)
        return json.loads(save_project(record))

    # -- sessions ---------------------------------------------------------------------

    @app.post("/projects/{name}/sessions", status_code=201)
    def open_session(name: str, body: dict[str, Any] = Body(default={})) -> dict[str, Any]:
        mode = body.get("mode", "run")
        if mode not in ("run", "debug"):
            raise HTTPException(422, f"mode must be 'run' or 'debug', got {mode!r}")
        try:
            record = store.get_project(name)
        except UnknownNameError as exc:
            raise HTTPException(404, str(exc)) from exc
        try:
            session = interpreter.start(
                record.program,
                mode,
                prompts={t.name: t for t in record.prompts},
                engines={e.name: e for e in record.engines},
                gateway=gw,
            )
        except InvalidProgramError as exc:
            raise HTTPException(422, detail=exc.report.to_dict()) from exc
        handle = SessionHandle(
            session_id=uuid.uuid4().hex,
            project_name=name,
            mode=mode,
            session=session,
        )
        with handles_lock:
            handles[handle.session_id] = handle
        return {"session_id": handle.session_id, "status": session.status.value}

    @app.get("/sessions/{session_id}")
    def session_info(session_id: str) -> dict[str, Any]:
        return get_handle(session_id).info()

    @app.get("/sessions/{session_id}/transcript")
    def session_transcript(session_id: str, after: int = -1) -> dict[str, Any]:
        handle = get_handle(session_id)
        events = [e.to_dict() for e in handle.session.transcript if e.seq > after]
        return {"status": handle.session.status.value, "events": events}

    @app.get("/sessions/{session_id}/events")
    def session_events(session_id: str, request: Request, after: int = -1) -> StreamingResponse:
        handle = get_handle(session_id)
        last_id = request.headers.get("Last-Event-ID")
        if last_id is not None:
            try:
                after = int(last_id)
            except ValueError:
                pass
        return StreamingResponse(
            _event_frames(handle, after),
            media_type="text/event-stream",
            headers={"Cache-Control": "no-cache", "X-Accel-Buffering": "no"},
        )

    @app.post("/sessions/{session_id}/input")
    def session_input(session_id: str, body: dict[str, Any] = Body(...)) -> dict[str, Any]:
        handle = get_handle(session_id)
        value = body.get("value")
        if not isinstance(value, str):
            raise HTTPException(422, "body must carry a string 'value'")
        with handle.lock:
            try:
                interpreter.feed_input(handle.session, value)
            except ProtocolError as exc:
                raise HTTPException(409, str(exc)) from exc
        _notify(handle)
        return {"status": handle.session.status.value}

    @app.post("/sessions/{session_id}/debug")
    def session_debug(session_id: str, body: dict[str, Any] = Body(...)) -> dict[str, Any]:
        handle = get_handle(session_id)
        command = _parse_command(body)
        with handle.lock:
            try:
                interpreter.debug_step(handle.session, command)
            except ProtocolError as exc:
                raise HTTPException(409, str(exc)) from exc
        _notify(handle)
        return {"status": handle.session.status.value}

    @app.delete("/sessions/{session_id}", status_code=204)
    def close_session(session_id: str) -> None:
        handle = get_handle(session_id)
        with handle.lock:
            interpreter.debug_step(handle.session, Abort())
        _notify(handle)

    # -- hub ----------------------------------------------------------------------------

    @app.get("/hub/prompts")
    def hub_prompts() -> list[dict[str, Any]]:
        return prompts_to_list(store.list_hub_prompts())

    @app.put("/hub/prompts")
    def put_hub_prompts(body: list[dict[str, Any]] = Body(...)) -> dict[str, Any]:
        try:
            store.replace_hub_prompts(prompts_from_list(body))
        except NameCollisionError as exc:
            raise HTTPException(409, str(exc)) from exc
        except (KeyError, TypeError) as exc:
            raise HTTPException(422, f"bad prompt list: {exc}") from exc
        return {"count": len(body)}

    @app.get("/hub/engines")
    def hub_engines() -> list[dict[str, Any]]:
        return engines_to_list(store.engine_registry.list())

    @app.put("/hub/engines")
    def put_hub_engines(body: list[dict[str, Any]] = Body(...)) -> dict[str, Any]:
        try:
            store.engine_registry.replace_all(engines_from_list(body))
        except ValueError as exc:
            raise HTTPException(422, str(exc)) from exc
        return {"count": len(body)}

    @app.post("/projects/{name}/import")
    def import_artifact(name: str, body: dict[str, Any] = Body(...)) -> dict[str, Any]:
        kind = body.get("kind")
        artifact = body.get("name", "")
        overwrite = bool(body.get("overwrite", False))
        try:
            record = store.get_project(name)
            if kind == "prompt":
                store.import_prompt(artifact, record, overwrite=overwrite)
            elif kind == "engine":
                store.import_engine(artifact, record, overwrite=overwrite)
            else:
                raise HTTPException(422, "kind must be 'prompt' or 'engine'")
            store.put_project(record)
        except UnknownNameError as exc:
            raise HTTPException(404, str(exc)) from exc
        except NameCollisionError as exc:
            raise HTTPException(409, str(exc)) from exc
        return json.loads(save_project(record))

    app.state.store = store
    app.state.gateway = gw
    app.state.handles = handles
    return app


def _notify(handle: SessionHandle) -> None:
    with handle.cond:
        handle.cond.notify_all()


def _parse_command(body: dict[str, Any]) -> DebugCommand:
    name = body.get("command")
    if name == "step":
        return Step()
    if name == "continue":
        return Continue()
    if name == "edit_prompt":
        return EditPrompt(worker_id=body.get("worker_id", ""), new_text=body.get("text", ""))
    if name == "rerun":
        return RerunCurrent()
    if name == "abort":
        return Abort()
    raise HTTPException(422, f"unknown debug command {name!r}")


def _event_frames(handle: SessionHandle, after: int) -> Iterator[str]:
    """Yield SSE frames for every event past `after`, exactly once, in order."""
    session = handle.session
    next_seq = after + 1
    while True:
        with handle.cond:
            while len(session.transcript) <= next_seq and session.status not in _TERMINAL:
                handle.cond.wait(timeout=0.5)
            batch = list(session.transcript[next_seq:])
            status = session.status
        for event in batch:
            payload = json.dumps(event.to_dict(), ensure_ascii=False)
            yield f"event: transcript\nid: {event.seq}\ndata: {payload}\n\n"
            next_seq = event.seq + 1
        if status in _TERMINAL and len(session.transcript) <= next_seq:
            yield f"event: end\ndata: {status.value}\n\n"
            return
