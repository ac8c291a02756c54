"""HTTP adapter fidelity: CRUD, co-pilot routes, session streaming and hub."""

import json
import threading
import time

import pytest
from fastapi.testclient import TestClient

import genutil
from aichain.engines import EngineGateway, MockScript
from aichain.interpreter import run_to_completion
from aichain.service import create_app
from aichain.store import load_project, save_project


@pytest.fixture
def client(tmp_path):
    gateway = EngineGateway(script_root=genutil.DATA)
    app = create_app(str(tmp_path), gateway=gateway)
    with TestClient(app) as test_client:
        test_client.app_gateway = gateway
        yield test_client
    gateway.close()


def quiz_doc():
    return json.loads((genutil.DATA / "mathquiz.json").read_text())


def parse_sse(text):
    """Return a list of (event, id, data) triples from an SSE body."""
    frames = []
    for block in text.split("\n\n"):
        if not block.strip():
            continue
        event = None
        event_id = None
        data_lines = []
        for line in block.splitlines():
            if line.startswith("event: "):
                event = line[len("event: "):]
            elif line.startswith("id: "):
                event_id = line[len("id: "):]
            elif line.startswith("data: "):
                data_lines.append(line[len("data: "):])
        frames.append((event, event_id, "\n".join(data_lines)))
    return frames


def transcript_frames(text):
    return [json.loads(data) for event, _, data in parse_sse(text) if event == "transcript"]


# -- project CRUD -------------------------------------------------------------------


def test_project_crud_round_trip(client):
    doc = quiz_doc()
    response = client.post("/projects", json=doc)
    assert response.status_code == 201
    assert client.post("/projects", json=doc).status_code == 409

    fetched = client.get("/projects/math_quiz")
    assert fetched.status_code == 200
    body = fetched.json()
    assert body["name"] == "math_quiz" and len(body["chain"]) == 3

    body["chain"][0]["meta"] = {"comment": "edited"}
    assert client.put("/projects/math_quiz", json=body).status_code == 200
    assert client.get("/projects/math_quiz").json()["chain"][0]["meta"]["comment"] == "edited"

    assert client.delete("/projects/math_quiz").status_code == 204
    assert client.get("/projects/math_quiz").status_code == 404
    assert client.delete("/projects/math_quiz").status_code == 404


def test_put_rejects_name_mismatch(client):
    doc = quiz_doc()
    assert client.put("/projects/other_name", json=doc).status_code == 422


def test_malformed_document_rejected(client):
    assert client.post("/projects", json={"version": 999, "name": "x"}).status_code == 422


# -- sessions over HTTP ---------------------------------------------------------------


def open_quiz_session(client, mode="run"):
    client.post("/projects", json=quiz_doc())
    response = client.post("/projects/math_quiz/sessions", json={"mode": mode})
    assert response.status_code == 201, response.text
    return response.json()


def test_http_run_equals_headless_transcript(client):
    record = load_project(json.dumps(quiz_doc()))
    gateway = genutil.fixture_gateway()
    expected = run_to_completion(
        record.program,
        ["beginner"],
        prompts={t.name: t for t in record.prompts},
        engines={e.name: e for e in record.engines},
        gateway=gateway,
    )

    opened = open_quiz_session(client)
    assert opened["status"] == "awaiting_input"
    session_id = opened["session_id"]
    posted = client.post(f"/sessions/{session_id}/input", json={"value": "beginner"})
    assert posted.status_code == 200 and posted.json()["status"] == "finished"

    with client.stream("GET", f"/sessions/{session_id}/events") as stream:
        body = "".join(stream.iter_text())
    events = transcript_frames(body)
    assert events == [e.to_dict() for e in expected]
    assert [e["seq"] for e in events] == list(range(len(events)))


def test_input_to_finished_session_is_409(client):
    opened = open_quiz_session(client)
    session_id = opened["session_id"]
    client.post(f"/sessions/{session_id}/input", json={"value": "beginner"})
    response = client.post(f"/sessions/{session_id}/input", json={"value": "again"})
    assert response.status_code == 409


def test_unknown_session_and_project_are_404(client):
    assert client.post("/projects/ghost/sessions", json={"mode": "run"}).status_code == 404
    assert client.get("/sessions/nope/events").status_code == 404
    assert client.post("/sessions/nope/input", json={"value": "x"}).status_code == 404


def test_invalid_program_is_422_with_report(client):
    doc = quiz_doc()
    doc["name"] = "broken"
    doc["chain"][0]["engine"] = "ghost"
    client.post("/projects", json=doc)
    response = client.post("/projects/broken/sessions", json={"mode": "run"})
    assert response.status_code == 422
    detail = response.json()["detail"]
    assert detail["valid"] is False
    assert any("unresolved engine reference" in d["message"] for d in detail["diagnostics"])


def test_debug_commands_over_http(client):
    opened = open_quiz_session(client, mode="debug")
    session_id = opened["session_id"]
    client.post(f"/sessions/{session_id}/input", json={"value": "beginner"})
    assert client.get(f"/sessions/{session_id}").json()["status"] == "suspended"

    for expected_status in ("suspended", "suspended", "finished"):
        response = client.post(f"/sessions/{session_id}/debug", json={"command": "step"})
        assert response.status_code == 200
        assert response.json()["status"] == expected_status

    response = client.post(f"/sessions/{session_id}/debug", json={"command": "step"})
    assert response.status_code == 409


def test_edit_and_rerun_over_http(client):
    opened = open_quiz_session(client, mode="debug")
    session_id = opened["session_id"]
    client.post(f"/sessions/{session_id}/input", json={"value": "beginner"})
    response = client.post(
        f"/sessions/{session_id}/debug",
        json={"command": "edit_prompt", "worker_id": "w_Math_Questions", "text": "edited prompt"},
    )
    assert response.status_code == 200
    assert client.post(f"/sessions/{session_id}/debug", json={"command": "rerun"}).status_code == 200
    # the session is still suspended, so poll the transcript instead of streaming
    body = client.get(f"/sessions/{session_id}/transcript").json()
    assert body["status"] == "suspended"
    assert any(e["kind"] == "rerun_marker" and e["attempt"] == 2 for e in body["events"])
    client.delete(f"/sessions/{session_id}")


def test_delete_aborts_session(client):
    opened = open_quiz_session(client, mode="debug")
    session_id = opened["session_id"]
    assert client.delete(f"/sessions/{session_id}").status_code == 204
    assert client.get(f"/sessions/{session_id}").json()["status"] == "failed"


def test_sse_resume_with_after(client):
    opened = open_quiz_session(client)
    session_id = opened["session_id"]
    client.post(f"/sessions/{session_id}/input", json={"value": "beginner"})
    with client.stream("GET", f"/sessions/{session_id}/events", params={"after": 5}) as stream:
        body = "".join(stream.iter_text())
    events = transcript_frames(body)
    assert events and events[0]["seq"] == 6


def test_two_concurrent_sessions_are_independent(client):
    doc_a = quiz_doc()
    doc_b = quiz_doc()
    doc_b["name"] = "math_quiz_b"
    client.post("/projects", json=doc_a)
    client.post("/projects", json=doc_b)
    id_a = client.post("/projects/math_quiz/sessions", json={"mode": "run"}).json()["session_id"]
    id_b = client.post("/projects/math_quiz_b/sessions", json={"mode": "run"}).json()["session_id"]
    client.post(f"/sessions/{id_b}/input", json={"value": "beginner"})
    client.post(f"/sessions/{id_a}/input", json={"value": "beginner"})
    for session_id in (id_a, id_b):
        with client.stream("GET", f"/sessions/{session_id}/events") as stream:
            events = transcript_frames("".join(stream.iter_text()))
        assert [e["seq"] for e in events] == list(range(len(events)))
        assert events[-1]["kind"] == "finished"


def test_live_stream_receives_events_as_they_happen(client):
    opened = open_quiz_session(client)
    session_id = opened["session_id"]
    collected: list[dict] = []
    done = threading.Event()

    def consume():
        with client.stream("GET", f"/sessions/{session_id}/events") as stream:
            buffer = ""
            for chunk in stream.iter_text():
                buffer += chunk
            collected.extend(transcript_frames(buffer))
        done.set()

    thread = threading.Thread(target=consume)
    thread.start()
    client.post(f"/sessions/{session_id}/input", json={"value": "beginner"})
    assert done.wait(timeout=10), "stream did not close after the session finished"
    thread.join(timeout=5)
    assert collected[-1]["kind"] == "finished"
    assert [e["seq"] for e in collected] == list(range(len(collected)))


# -- co-pilot routes ---------------------------------------------------------------------


def copilot_engine(client, script: MockScript):
    client.app_gateway.register_mock_script("copilot", script)
    return {
        "name": "copilot",
        "kind": "mock",
        "model_id": "",
        "endpoint": None,
        "params": {},
        "mock_script_ref": "copilot",
        "api_key_env": None,
    }


def test_copilot_clarify_route(client):
    engine = copilot_engine(
        client, MockScript(rules=[("Automatically generate", "What type of questions?")], default="?")
    )
    response = client.post(
        "/copilot/clarify",
        json={"task_description": "Automatically generate questions", "conversation": [], "engine": engine},
    )
    assert response.status_code == 200
    assert response.json() == {"question": "What type of questions?"}


def test_copilot_incorporate_route(client):
    engine = copilot_engine(client, MockScript(rules=[("answer text", "updated description")], default="?"))
    response = client.post(
        "/copilot/incorporate",
        json={
            "task_description": "desc",
            "question": "q?",
            "answer": "answer text",
            "engine": engine,
        },
    )
    assert response.json() == {"task_description": "updated description"}


def test_copilot_skeleton_and_assemble_routes(client):
    steps = {
        "steps": [
            {
                "name": "Only_Step",
                "description": "does the thing",
                "prompts": ["do it", "alt", "alt2"],
                "inputs": ["User_Request"],
                "engine": "mock1",
            }
        ]
    }
    engine = copilot_engine(client, MockScript(default=json.dumps(steps)))
    skeleton = client.post(
        "/copilot/skeleton", json={"task_description": "a task", "engine": engine}
    )
    assert skeleton.status_code == 200
    assert [s["name"] for s in skeleton.json()["steps"]] == ["Only_Step"]

    assembled = client.post("/copilot/assemble", json={"skeleton": skeleton.json()})
    assert assembled.status_code == 200
    doc = assembled.json()
    assert doc["chain"][0]["kind"] == "output"
    assert doc["prompts"][0]["name"] == "Only_Step_prompt"


def test_copilot_engine_by_registry_name(client):
    client.put(
        "/hub/engines",
        json=[{
            "name": "copilot_engine",
            "kind": "mock",
            "model_id": "",
            "params": {},
            "mock_script_ref": "copilot",
        }],
    )
    client.app_gateway.register_mock_script("copilot", MockScript(default="the question"))
    response = client.post(
        "/copilot/clarify",
        json={"task_description": "something", "conversation": [], "engine": "copilot_engine"},
    )
    assert response.json() == {"question": "the question"}
    missing = client.post(
        "/copilot/clarify",
        json={"task_description": "something", "conversation": [], "engine": "ghost"},
    )
    assert missing.status_code == 404


# -- hub routes -------------------------------------------------------------------------------


def test_hub_prompt_routes_and_import(client):
    client.post("/projects", json=quiz_doc())
    put = client.put(
        "/hub/prompts",
        json=[{"name": "quizgen", "instruction": "make a quiz", "context": None,
               "examples": None, "output_formatter": None}],
    )
    assert put.status_code == 200
    assert [t["name"] for t in client.get("/hub/prompts").json()] == ["quizgen"]

    imported = client.post(
        "/projects/math_quiz/import", json={"kind": "prompt", "name": "quizgen"}
    )
    assert imported.status_code == 200
    assert "quizgen" in [p["name"] for p in imported.json()["prompts"]]

    again = client.post("/projects/math_quiz/import", json={"kind": "prompt", "name": "quizgen"})
    assert again.status_code == 409
    missing = client.post("/projects/math_quiz/import", json={"kind": "prompt", "name": "ghost"})
    assert missing.status_code == 404


def test_idle_sessions_expire(tmp_path):
    gateway = EngineGateway(script_root=genutil.DATA)
    app = create_app(str(tmp_path), gateway=gateway, session_ttl=0.05)
    with TestClient(app) as client:
        client.post("/projects", json=quiz_doc())
        session_id = client.post(
            "/projects/math_quiz/sessions", json={"mode": "run"}
        ).json()["session_id"]
        assert client.get(f"/sessions/{session_id}").status_code == 200
        time.sleep(0.2)
        assert client.get(f"/sessions/{session_id}").status_code == 404
    gateway.close()


def test_cors_origin_is_configurable(tmp_path):
    app = create_app(str(tmp_path), cors_origins=["http://studio.example"])
    with TestClient(app) as client:
        response = client.options(
            "/projects",
            headers={
                "Origin": "http://studio.example",
                "Access-Control-Request-Method": "GET",
            },
        )
        assert response.headers["access-control-allow-origin"] == "http://studio.example"
        denied = client.options(
            "/projects",
            headers={"Origin": "http://evil.example", "Access-Control-Request-Method": "GET"},
        )
        assert "access-control-allow-origin" not in denied.headers


def test_hub_engine_routes(client):
    put = client.put(
        "/hub/engines",
        json=[{"name": "fm1", "kind": "chat", "model_id": "gpt-3.5-turbo", "params": {"temperature": 0.5}}],
    )
    assert put.status_code == 200
    engines = client.get("/hub/engines").json()
    assert engines[0]["name"] == "fm1" and engines[0]["params"]["temperature"] == 0.5
    bad = client.put("/hub/engines", json=[{"name": "x", "kind": "chat", "model_id": ""}])
    assert bad.status_code == 422
