"""IR construction, validation, structural equality and the expression language."""

import copy
import random

import pytest
from hypothesis import given, strategies as st

import genutil
from aichain import ir
from aichain.ir import (
    Assign,
    Binary,
    ChainProgram,
    ConsoleOutput,
    ContainerSpec,
    EvalError,
    ExprSyntaxError,
    IRError,
    Literal,
    Not,
    OutputWrapper,
    Value,
    Var,
    VariableRef,
    WorkerSpec,
    eval_expr,
    parse_expr,
    structural_equal,
    validate,
)


# -- values -------------------------------------------------------------------


def test_number_payload_must_be_finite():
    with pytest.raises(IRError):
        Value.number(float("inf"))
    with pytest.raises(IRError):
        Value.number(float("nan"))
    Value.number(0)
    Value.number(-3.5)


def test_image_ref_must_be_non_empty():
    with pytest.raises(IRError):
        Value.image_ref("")
    assert Value.image_ref("img://1").payload == "img://1"


def test_text_forms():
    assert Value.number(3.0).as_text() == "3"
    assert Value.number(3).as_text() == "3"
    assert Value.number(2.5).as_text() == "2.5"
    assert Value.boolean(True).as_text() == "true"
    assert Value.boolean(False).as_text() == "false"
    assert Value.image_ref("img://x").as_text() == "img://x"


def test_numeric_coercion():
    assert Value.text("3").as_number() == 3.0
    assert Value.text(" 4.5 ").as_number() == 4.5
    assert Value.text("nope").as_number() is None
    assert Value.text("inf").as_number() is None
    assert Value.boolean(True).as_number() is None


# -- validation ----------------------------------------------------------------


def _quiz_names(record):
    return record.prompt_names(), record.engine_names()


def test_mathquiz_fixture_is_valid(quiz_record):
    report = validate(quiz_record.program, *_quiz_names(quiz_record))
    assert report.ok
    assert report.diagnostics == []


def test_duplicate_step_name_is_an_error():
    program = ChainProgram(
        name="p",
        top_level=[
            WorkerSpec(name="Step1", prompt_ref="p1", engine_ref="e1", id="u1"),
            WorkerSpec(name="Step1", prompt_ref="p1", engine_ref="e1", id="u2"),
        ],
    )
    report = validate(program, {"p1"}, {"e1"})
    errors = report.errors()
    assert any("duplicate step name" in d.message for d in errors)
    assert any(d.unit_id == "u2" for d in errors)


def test_unresolved_engine_reference():
    program = ChainProgram(
        name="p",
        top_level=[WorkerSpec(name="W", prompt_ref="p1", engine_ref="ghost", id="u1")],
    )
    report = validate(program, {"p1"}, {"real"})
    assert any("unresolved engine reference" in d.message and d.unit_id == "u1" for d in report.errors())


def test_assign_target_must_be_declared():
    program = ChainProgram(
        name="p",
        top_level=[Assign(var="nope", expr=Literal(Value.number(1)), id="a1")],
    )
    report = validate(program, set(), set())
    assert any("not a declared variable" in d.message for d in report.errors())


def test_variable_ref_may_point_at_step_name():
    program = ChainProgram(
        name="p",
        top_level=[
            WorkerSpec(name="A", prompt_ref="p1", engine_ref="e1"),
            WorkerSpec(
                name="B",
                prompt_ref="p1",
                engine_ref="e1",
                preworkers=[VariableRef(name="A")],
            ),
        ],
    )
    assert validate(program, {"p1"}, {"e1"}).ok


def test_empty_container_is_an_error():
    program = ChainProgram(name="p", top_level=[ContainerSpec(name="C", id="c1")])
    report = validate(program, set(), set())
    assert any("empty units slot" in d.message and d.unit_id == "c1" for d in report.errors())


def test_shared_subtree_is_an_error():
    worker = WorkerSpec(name="W", prompt_ref="p1", engine_ref="e1")
    program = ChainProgram(
        name="p",
        top_level=[ContainerSpec(name="C", units=[worker, worker])],
    )
    report = validate(program, {"p1"}, {"e1"})
    assert any("more than one place" in d.message for d in report.errors())


def test_validation_is_idempotent(quiz_record):
    first = validate(quiz_record.program, *_quiz_names(quiz_record))
    second = validate(quiz_record.program, *_quiz_names(quiz_record))
    assert first.diagnostics == second.diagnostics


def test_random_programs_validate_clean_and_seeded_violations_fail():
    rng = random.Random(1234)
    for _ in range(50):
        program = genutil.ProgramBuilder(rng, control_flow=True).build()
        assert validate(program, {"task_prompt"}, {"m"}).ok
        workers = [u for u in ir.iter_units(program.top_level) if isinstance(u, WorkerSpec)]
        if not workers:
            continue
        broken = copy.deepcopy(program)
        victims = [u for u in ir.iter_units(broken.top_level) if isinstance(u, WorkerSpec)]
        victim = rng.choice(victims)
        if rng.random() < 0.5:
            victim.engine_ref = "ghost"
        else:
            victim.name = victims[0].name if victim is not victims[0] else victims[-1].name
            if len(victims) == 1:
                victim.engine_ref = "ghost"
        report = validate(broken, {"task_prompt"}, {"m"})
        assert not report.ok
        assert any(d.unit_id for d in report.errors())


# -- structural equality ----------------------------------------------------------


def test_structural_equal_reflexive(quiz_record):
    assert structural_equal(quiz_record.program, quiz_record.program)


def test_structural_equal_respects_enabled(quiz_record):
    other = copy.deepcopy(quiz_record.program)
    other.top_level[0].meta.enabled = False
    assert not structural_equal(quiz_record.program, other)


def test_structural_equal_ignores_collapsed_and_ids(quiz_record):
    other = copy.deepcopy(quiz_record.program)
    other.top_level[0].meta.collapsed = True
    other.top_level[0].id = "something_else"
    assert structural_equal(quiz_record.program, other)


def test_structural_equal_is_an_equivalence_relation():
    rng = random.Random(77)
    programs = [genutil.ProgramBuilder(rng).build() for _ in range(10)]
    for program in programs:
        assert structural_equal(program, program)
        clone = copy.deepcopy(program)
        assert structural_equal(program, clone) and structural_equal(clone, program)
    for a, b in zip(programs, programs[1:]):
        # distinct random programs have distinct worker names
        assert not structural_equal(a, b)


# -- expression evaluation ----------------------------------------------------------


def test_eq_coerces_numeric_text():
    result = eval_expr({"x": Value.number(3)}, Binary("==", Var("x"), Literal(Value.text("3"))))
    assert result == Value.boolean(True)


def test_contains_substring():
    env = {"s": Value.text("yes, correct")}
    assert eval_expr(env, Binary("contains", Var("s"), Literal(Value.text("yes")))).payload is True


def test_ordering_requires_numbers():
    with pytest.raises(EvalError):
        eval_expr({}, Binary("<", Literal(Value.text("abc")), Literal(Value.number(1))))


def test_plus_is_addition_or_concatenation():
    assert eval_expr({}, Binary("+", Literal(Value.number(2)), Literal(Value.text("3")))).payload == 5.0
    assert eval_expr({}, Binary("+", Literal(Value.text("a")), Literal(Value.number(2)))).payload == "a2"


def test_plus_overflow_is_an_eval_error():
    huge = Literal(Value.number(1.5e308))
    with pytest.raises(EvalError):
        eval_expr({}, Binary("+", huge, huge))


def test_unbound_variable_raises():
    with pytest.raises(EvalError):
        eval_expr({}, Var("missing"))


def test_eval_matches_independent_oracle_sample():
    rng = random.Random(99)
    for _ in range(100):
        env = genutil.random_env(rng)
        expr = genutil.random_expr(rng, list(env), depth=4)
        oracle_env = {k: (v.tag.value, v.payload) for k, v in env.items()}
        try:
            expected = genutil.oracle_eval(oracle_env, expr)
        except genutil.OracleEvalError:
            with pytest.raises(EvalError):
                eval_expr(env, expr)
            continue
        actual = eval_expr(env, expr)
        assert (actual.tag.value, actual.payload) == expected


_values = st.one_of(
    st.integers(-50, 50).map(Value.number),
    st.floats(-50, 50, allow_nan=False).map(Value.number),
    st.text(max_size=8).map(Value.text),
    st.booleans().map(Value.boolean),
)
_exprs = st.recursive(
    st.one_of(_values.map(Literal), st.sampled_from(["a", "b"]).map(Var)),
    lambda children: st.one_of(
        st.builds(Binary, st.sampled_from(ir.BINARY_OPS), children, children),
        children.map(Not),
    ),
    max_leaves=12,
)


@given(expr=_exprs, env_values=st.tuples(_values, _values))
def test_eval_always_agrees_with_oracle(expr, env_values):
    env = {"a": env_values[0], "b": env_values[1]}
    oracle_env = {k: (v.tag.value, v.payload) for k, v in env.items()}
    try:
        expected = genutil.oracle_eval(oracle_env, expr)
    except genutil.OracleEvalError:
        with pytest.raises(EvalError):
            eval_expr(env, expr)
        return
    actual = eval_expr(env, expr)
    assert (actual.tag.value, actual.payload) == expected


# -- expression parsing ----------------------------------------------------------


def test_parse_simple_addition():
    assert parse_expr("2 + 3") == Binary("+", Literal(Value.number(2)), Literal(Value.number(3)))


def test_parse_precedence():
    expr = parse_expr("1 + 2 == 3 and not done")
    assert expr == Binary(
        "and",
        Binary("==", Binary("+", Literal(Value.number(1)), Literal(Value.number(2))), Literal(Value.number(3))),
        Not(Var("done")),
    )


def test_parse_strings_and_booleans():
    assert parse_expr("'hi' contains \"h\"") == Binary(
        "contains", Literal(Value.text("hi")), Literal(Value.text("h"))
    )
    assert parse_expr("true or false") == Binary(
        "or", Literal(Value.boolean(True)), Literal(Value.boolean(False))
    )


def test_parse_parentheses():
    assert parse_expr("(1 + 2) + 3") == Binary(
        "+",
        Binary("+", Literal(Value.number(1)), Literal(Value.number(2))),
        Literal(Value.number(3)),
    )


@pytest.mark.parametrize("bad", ["", "1 +", "(1", "1 ;", "not", "1 2"])
def test_parse_errors(bad):
    with pytest.raises(ExprSyntaxError):
        parse_expr(bad)


# -- serialization ----------------------------------------------------------------


def test_unit_round_trip_preserves_unknown_fields():
    data = {
        "kind": "worker",
        "id": "u1",
        "name": "W",
        "preworkers": [],
        "prompt": "p",
        "engine": "e",
        "meta": {"comment": "hi", "x_flag": 1},
        "x_custom": {"a": [1, 2]},
    }
    unit = ir.unit_from_dict(data)
    assert unit.extra == {"x_custom": {"a": [1, 2]}}
    assert unit.meta.comment == "hi"
    assert unit.meta.extra == {"x_flag": 1}
    out = ir.unit_to_dict(unit)
    assert out["x_custom"] == {"a": [1, 2]}
    assert out["meta"]["x_flag"] == 1


def test_unit_from_dict_generates_missing_ids():
    unit = ir.unit_from_dict({"kind": "worker", "name": "W", "preworkers": [], "prompt": "p", "engine": "e"})
    assert unit.id


def test_unknown_unit_kind_raises():
    with pytest.raises(IRError):
        ir.unit_from_dict({"kind": "mystery"})
