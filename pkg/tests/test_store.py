"""Persistence round-trips, hub isolation and standalone code export."""

import json
import random
import subprocess
import sys
from dataclasses import replace

import pytest

import genutil
from aichain.engines import EngineConfig, EngineKind
from aichain.interpreter import EventKind, run_to_completion
from aichain.ir import ChainProgram, structural_equal
from aichain.prompts import PromptTemplate
from aichain.store import (
    ArtifactStore,
    NameCollisionError,
    ProjectFormatError,
    ProjectRecord,
    UnknownNameError,
    UnsupportedVersionError,
    export_code,
    load_project,
    save_project,
)


# -- save / load -----------------------------------------------------------------


def test_mathquiz_round_trip(quiz_record):
    loaded = load_project(save_project(quiz_record))
    assert structural_equal(loaded.program, quiz_record.program)
    assert loaded.prompts == quiz_record.prompts
    assert loaded.engines == quiz_record.engines


def test_empty_project_round_trip():
    record = ProjectRecord(program=ChainProgram(name="empty"))
    loaded = load_project(save_project(record))
    assert structural_equal(loaded.program, record.program)
    assert loaded.prompts == [] and loaded.engines == []


def test_unsupported_version():
    with pytest.raises(UnsupportedVersionError):
        load_project(json.dumps({"version": 999, "name": "x", "chain": []}))


def test_malformed_json_reports_location():
    with pytest.raises(ProjectFormatError) as exc:
        load_project(b'{"version": 1,\n  "name": oops}')
    assert "line 2" in str(exc.value)


def test_save_is_byte_stable(quiz_record):
    first = save_project(quiz_record)
    assert save_project(quiz_record) == first
    assert save_project(load_project(first)) == first


def test_unknown_fields_survive_round_trip(quiz_record):
    doc = json.loads(save_project(quiz_record))
    doc["x_workspace"] = {"zoom": 1.5}
    doc["chain"][0]["x_position"] = [10, 20]
    raw = json.dumps(doc)
    loaded = load_project(raw)
    out = json.loads(save_project(loaded))
    assert out["x_workspace"] == {"zoom": 1.5}
    assert out["chain"][0]["x_position"] == [10, 20]


def test_random_projects_round_trip_and_stabilize():
    rng = random.Random(4242)
    for _ in range(25):
        record = genutil.random_project(rng)
        blob = save_project(record)
        loaded = load_project(blob)
        assert structural_equal(loaded.program, record.program)
        assert save_project(loaded) == blob


def test_timestamps_round_trip_but_do_not_affect_structure(quiz_record):
    stamped = ProjectRecord(
        program=quiz_record.program,
        prompts=quiz_record.prompts,
        engines=quiz_record.engines,
        created="2024-01-01T00:00:00+00:00",
        modified="2024-02-02T00:00:00+00:00",
    )
    loaded = load_project(save_project(stamped))
    assert loaded.created == stamped.created and loaded.modified == stamped.modified
    assert structural_equal(loaded.program, quiz_record.program)


# -- store CRUD ---------------------------------------------------------------------


def test_project_store_crud(tmp_path, quiz_record):
    store = ArtifactStore(tmp_path)
    store.put_project(quiz_record)
    assert store.list_projects() == ["math_quiz"]
    loaded = store.get_project("math_quiz")
    assert structural_equal(loaded.program, quiz_record.program)
    assert loaded.created and loaded.modified
    store.delete_project("math_quiz")
    assert store.list_projects() == []
    with pytest.raises(UnknownNameError):
        store.get_project("math_quiz")
    with pytest.raises(UnknownNameError):
        store.delete_project("math_quiz")


def test_project_names_with_awkward_characters(tmp_path, quiz_record):
    store = ArtifactStore(tmp_path)
    quiz_record.program.name = "math quiz / v2"
    store.put_project(quiz_record)
    assert store.list_projects() == ["math quiz / v2"]
    assert store.get_project("math quiz / v2").name == "math quiz / v2"


# -- hub and copy-on-import ------------------------------------------------------------


def _template(name="quizgen", instruction="make a quiz about {{Topic}}"):
    return PromptTemplate(name=name, instruction=instruction)


def test_hub_prompt_add_get_collision(tmp_path):
    store = ArtifactStore(tmp_path)
    store.add_hub_prompt(_template())
    assert [t.name for t in store.list_hub_prompts()] == ["quizgen"]
    with pytest.raises(NameCollisionError):
        store.add_hub_prompt(_template())
    store.add_hub_prompt(_template(instruction="updated"), overwrite=True)
    assert store.get_hub_prompt("quizgen").instruction == "updated"
    with pytest.raises(UnknownNameError):
        store.get_hub_prompt("missing")


def test_import_prompt_copies_and_isolates(tmp_path, quiz_record):
    store = ArtifactStore(tmp_path)
    store.add_hub_prompt(_template())
    record = quiz_record
    store.import_prompt("quizgen", record)
    assert "quizgen" in record.prompt_names()
    hub_before = store._hub_path.read_bytes()

    # editing the project copy leaves the hub byte-identical
    for index, template in enumerate(record.prompts):
        if template.name == "quizgen":
            record.prompts[index] = replace(template, instruction="project-local edit")
    store.put_project(record)
    assert store._hub_path.read_bytes() == hub_before
    assert store.get_hub_prompt("quizgen").instruction == "make a quiz about {{Topic}}"

    # and editing the hub leaves the project copy alone
    store.add_hub_prompt(_template(instruction="hub-side edit"), overwrite=True)
    stored = store.get_project("math_quiz")
    assert [t.instruction for t in stored.prompts if t.name == "quizgen"] == ["project-local edit"]


def test_import_prompt_collision_requires_overwrite(tmp_path, quiz_record):
    store = ArtifactStore(tmp_path)
    store.add_hub_prompt(_template())
    store.import_prompt("quizgen", quiz_record)
    with pytest.raises(NameCollisionError):
        store.import_prompt("quizgen", quiz_record)
    store.import_prompt("quizgen", quiz_record, overwrite=True)


def test_import_engine_copies(tmp_path, quiz_record):
    store = ArtifactStore(tmp_path)
    store.engine_registry.save(
        EngineConfig(name="fm1", kind=EngineKind.CHAT, model_id="gpt-3.5-turbo")
    )
    store.import_engine("fm1", quiz_record)
    assert "fm1" in quiz_record.engine_names()
    with pytest.raises(UnknownNameError):
        store.import_engine("ghost", quiz_record)
    project_copy = next(e for e in quiz_record.engines if e.name == "fm1")
    project_copy.model_id = "edited"
    assert store.engine_registry.load("fm1").model_id == "gpt-3.5-turbo"


def test_randomized_edit_sequences_never_cross_contaminate(tmp_path):
    rng = random.Random(808)
    store = ArtifactStore(tmp_path)
    store.add_hub_prompt(_template("alpha", "alpha v0"))
    store.add_hub_prompt(_template("beta", "beta v0"))
    record = genutil.load_fixture_record("mathquiz.json")
    store.import_prompt("alpha", record)
    store.import_prompt("beta", record)
    store.put_project(record)

    for step in range(100):
        name = rng.choice(["alpha", "beta"])
        if rng.random() < 0.5:
            store.add_hub_prompt(_template(name, f"hub edit {step}"), overwrite=True)
            stored = store.get_project("math_quiz")
            assert all(f"hub edit {step}" != t.instruction for t in stored.prompts)
        else:
            stored = store.get_project("math_quiz")
            stored.prompts = [
                replace(t, instruction=f"project edit {step}") if t.name == name else t
                for t in stored.prompts
            ]
            store.put_project(stored)
            assert store.get_hub_prompt(name).instruction.startswith(("alpha", "beta", "hub edit"))


# -- code export -----------------------------------------------------------------------


def output_window_text(transcript):
    return "".join(e.payload + "\n" for e in transcript if e.kind is EventKind.OUTPUT_WINDOW)


def run_exported(script_text, tmp_path, mock_name, inputs):
    path = tmp_path / "exported.py"
    path.write_text(script_text, encoding="utf-8")
    argv = [sys.executable, str(path), "--mock", str(genutil.DATA / mock_name)]
    for value in inputs:
        argv += ["--input", value]
    return subprocess.run(argv, capture_output=True, text=True, timeout=30)


def test_export_mathquiz_matches_interpreter(tmp_path, quiz_record, fixture_gateway):
    transcript = run_to_completion(
        quiz_record.program,
        ["beginner"],
        prompts={t.name: t for t in quiz_record.prompts},
        engines={e.name: e for e in quiz_record.engines},
        gateway=fixture_gateway,
    )
    result = run_exported(export_code(quiz_record), tmp_path, "quiz_mock.json", ["beginner"])
    assert result.returncode == 0, result.stderr
    assert result.stdout == output_window_text(transcript)


def test_export_while_loop_matches_interpreter(tmp_path, loop_record, fixture_gateway):
    transcript = run_to_completion(
        loop_record.program,
        [],
        prompts={t.name: t for t in loop_record.prompts},
        engines={e.name: e for e in loop_record.engines},
        gateway=fixture_gateway,
    )
    result = run_exported(export_code(loop_record), tmp_path, "loop_mock.json", [])
    assert result.returncode == 0, result.stderr
    assert result.stdout == output_window_text(transcript)


def test_export_empty_project(tmp_path):
    record = ProjectRecord(program=ChainProgram(name="empty"))
    path = tmp_path / "empty.py"
    path.write_text(export_code(record), encoding="utf-8")
    result = subprocess.run([sys.executable, str(path)], capture_output=True, text=True, timeout=30)
    assert result.returncode == 0
    assert result.stdout == ""


def test_export_with_unresolved_credentials_still_exports(quiz_record):
    quiz_record.engines.append(
        EngineConfig(name="fm", kind=EngineKind.CHAT, model_id="gpt-4", api_key_env="NOT_SET_ANYWHERE")
    )
    assert "NOT_SET_ANYWHERE" in export_code(quiz_record)
