#!/usr/bin/env python3
"""
Tests for document evaluation, report rendering and the command line.
"""

import json
import random

import hypothesis
import hypothesis.strategies as strat
import pytest

import main
from dsl import parse
from errors import EvaluationError, NonConstantWeightError
from evaluator import EvalSettings, diagram_failure, evaluate, limit_failure, lift_failure
from geom import MorphismModel, VarietyModel
from prosys import ProductTower, ProFunction, StepsTower, procharacteristic
from random_models import random_function, random_model, random_table
from rings import AtomTable
from verdicts import CheckStatus

seeds = strat.integers(0, 2 ** 32 - 1)

DOCUMENT = """\
atom E euler 0
variety X { stratum a class 1; stratum b class L }
variety Pt { stratum pt class 1 }
morphism c : X -> Pt { map a -> pt fiber 1; map b -> pt fiber L } strict
fn g on X { a: 2, b: 1 }
tower T = product(X)
profn F on T level 2 { a.b: 1, b.b: -2 }
tower J = arcs(X, dim=1)
query chi X
query gamma X
query chi g
query push c g
query chif c
query chipro one(T)
query chipro F
query gammapro one(T)
query levelsets F
query eval F at (a, a.b)
query integrate chi g f={1: 1/2, 2: 3}
query limit {3: 5} by (1, 2, 3, 4)
query limit {1: 1, 2: 1} by 2
query measure cyl(J, 0, all)
query measure cyl(J, 0, {a}) w=1
check diagrams depth 3 seed 7
check limits
check welldefined
"""

EXPECTED = {
    "chi X": "2",
    "gamma X": "L + 1",
    "chi g": "3",
    "push c g": "{pt: 3}",
    "chif c": "2",
    "chipro one(T)": "2/1",
    "chipro F": "-1/2",
    "gammapro one(T)": "(L + 1)/(1)",
    "levelsets F": "{-2: {b.b}, 1: {a.b}}",
    "eval F at (a, a.b)": "1",
    "integrate chi g f={1: 1/2, 2: 3}": "7/2",
    "limit {3: 5} by (1, 2, 3, 4)": "5/2",
    "limit {1: 1, 2: 1} by (2) periodic": "3/2",
    "measure cyl(J, 0, all)": "(L + 1)/(1)",
    "measure cyl(J, 0, {a}) w=1": "(1)/(L)",
}

TWO_POINT = """\
variety X1 { stratum a class 1; stratum b class 1 }
variety X2 { stratum a class 1 }
morphism M : X2 -> X1 { map a -> a fiber 1 } strict
tower S = steps(M)
profn P on S level 1 { b: 1 }
profn Z on S level 1 { }
query equal P Z
query equal P P
"""

BROKEN_SYSTEM = """\
variety X { stratum a class 1; stratum b class L }
tower T = product(X)
system W on T = weights {a: 2} override 1 {a.a: 3}
check system W depth 2
"""


def settings(**kw):
    return EvalSettings(trials=5, **kw)


# Queries


def test_query_values():
    report = evaluate(parse(DOCUMENT), settings=settings())
    assert {q.name: q.value for q in report.queries} == EXPECTED
    assert [q.name for q in report.queries] == list(EXPECTED)


def test_checks_pass():
    report = evaluate(parse(DOCUMENT), settings=settings())
    assert [c.name for c in report.checks] == ["diagrams depth 3 seed 7", "limits", "welldefined"]
    assert all(c.status == CheckStatus.PASS for c in report.checks)
    assert report.passed


def test_named_projection_formula_check():
    doc = parse(DOCUMENT + "check projection_formula depth 4 seed 7\ncheck projection_formula c along c\n")
    report = evaluate(doc, settings=settings(), queries=False)
    assert [c.status for c in report.checks[-2:]] == [CheckStatus.PASS, CheckStatus.PASS]


def test_pullback_promorphism_over_a_declared_variety():
    doc = parse(
        "variety X { stratum a class 1; stratum b class L }\n"
        "variety Y { stratum a class 1 }\n"
        "morphism M : Y -> X { map a -> a fiber 1 } strict\n"
        "tower T = product(X)\n"
        "promorphism Phi : R -> T = pullback(M)\n"
        "query chipro one(R)\n"
        "check naturality Phi depth 2\n"
    )
    report = evaluate(doc, settings=settings())
    assert report.queries[0].value == "1/1"
    assert report.checks[0].status == CheckStatus.PASS


def test_equality_decisions():
    report = evaluate(parse(TWO_POINT), settings=settings())
    assert [q.value for q in report.queries] == ["yes (level 2)", "yes (level 1)"]


def test_failed_check_has_a_witness():
    report = evaluate(parse(BROKEN_SYSTEM), settings=settings())
    (check,) = report.checks
    assert check.status == CheckStatus.FAIL
    assert check.witness.startswith("(1,2,3)")
    assert not report.passed


def test_engine_errors_name_the_statement():
    doc = parse(
        "variety X { stratum a class 1; stratum b class 1 }\n"
        "morphism d : X -> X { map a -> a fiber 1; map b -> a fiber 1 }\n"
        "query chif d\n"
    )
    with pytest.raises(EvaluationError) as info:
        evaluate(doc, settings=settings())
    assert info.value.name == "chif d"
    assert isinstance(info.value.cause, NonConstantWeightError)


def test_queries_or_checks_only():
    doc = parse(DOCUMENT)
    assert evaluate(doc, settings=settings(), queries=False).queries == []
    assert evaluate(doc, settings=settings(), checks=False).checks == []


# Reports


def test_text_report():
    text = evaluate(parse(DOCUMENT), seed=3, settings=settings()).render_text()
    lines = text.splitlines()
    assert lines[0] == "prochern report (seed 3)"
    assert "  chipro one(T) = 2/1" in lines
    assert "  [pass] limits" in lines


def test_json_report_schema():
    report = evaluate(parse(BROKEN_SYSTEM), settings=settings())
    data = json.loads(report.render("json"))
    assert set(data) == {"queries", "checks", "seed", "versions"}
    assert data["checks"][0]["status"] == "fail"
    assert data["checks"][0]["witness"].startswith("(1,2,3)")
    assert set(data["versions"]) == {"prochern", "sympy", "python"}


def test_timing_is_optional():
    report = evaluate(parse(DOCUMENT), settings=settings(report_timing=True))
    assert set(report.timing) == set(EXPECTED) | {"diagrams depth 3 seed 7", "limits", "welldefined"}
    assert "timing" in report.to_dict()


def test_reports_depend_only_on_the_document_and_seed():
    doc = parse(DOCUMENT + "check projection_formula depth 3\ncheck naturality depth 2\n")
    first = evaluate(doc, seed=11, settings=settings())
    second = evaluate(doc, seed=11, settings=settings(workers=3))
    assert first.to_dict() == second.to_dict()


def test_settings_from_environment(monkeypatch):
    monkeypatch.setenv("PROCHERN_SEED", "9")
    monkeypatch.setenv("PROCHERN_HORIZON", "5")
    monkeypatch.setenv("PROCHERN_FORMAT", "json")
    monkeypatch.delenv("PROCHERN_LOG_DIR", raising=False)
    s = EvalSettings.from_env()
    assert (s.seed, s.horizon, s.format, s.log_dir) == (9, 5, "json", None)


# Property suites


@hypothesis.given(seeds)
@hypothesis.settings(max_examples=30)
def test_random_diagrams_hold(seed):
    assert diagram_failure(random.Random(seed), 3) is None


@hypothesis.given(seeds)
@hypothesis.settings(max_examples=20)
def test_limit_maps_are_compatible(seed):
    assert limit_failure(random.Random(seed), 10, 3) is None


# two lifts per example, 1000 (function, level) pairs in all
@hypothesis.given(seeds)
@hypothesis.settings(max_examples=500)
def test_lifting_preserves_pro_characteristics(seed):
    rng = random.Random(seed)
    T = ProductTower("T", random_model(rng, random_table(rng), max_strata=3))
    level = rng.randint(1, 2)
    assert lift_failure(ProFunction(T, level, random_function(rng, T.level(level))), 2) is None


def test_a_value_lost_under_lifting_is_a_failure():
    table = AtomTable([])
    L = table.tate()
    X1 = VarietyModel("X1", [("a", table.one())], table)
    X2 = VarietyModel("X2", [("a", L)], table)
    S = StepsTower("S", [MorphismModel("M", X2, X1, {"a": "a"}, {"a": table.one()})])
    pf = ProFunction.sparse(S, 1, {"a": 1})
    assert lift_failure(pf, 2).startswith("level 2: gamma_pro is defined on one side only")
    assert lift_failure(procharacteristic(ProductTower("T", X1)), 2) is None


# Command line


def write(tmp_path, text, name="doc.pc"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


@pytest.fixture
def env(monkeypatch, tmp_path):
    for key in ("PROCHERN_SEED", "PROCHERN_DEPTH", "PROCHERN_HORIZON", "PROCHERN_FORMAT",
                "PROCHERN_WORKERS", "PROCHERN_CONSOLE_LOG", "PROCHERN_REPORT_TIMING"):
        monkeypatch.delenv(key, raising=False)
    monkeypatch.setenv("PROCHERN_TRIALS", "5")
    monkeypatch.setenv("PROCHERN_LOG_DIR", str(tmp_path / "logs"))
    return tmp_path


def test_cli_eval_succeeds(env, capsys):
    assert main.run(["eval", write(env, DOCUMENT)]) == main.EXIT_OK
    out = capsys.readouterr().out
    assert out.startswith("prochern report (seed 0)")
    assert "  chi X = 2" in out
    logs = list((env / "logs").glob("session_*.jsonl"))
    assert len(logs) == 1
    records = [json.loads(line) for line in logs[0].read_text().splitlines()]
    events = [r["event_type"] for r in records]
    assert events[0] == "session_start" and events[-1] == "session_end"
    assert events.count("query") == len(EXPECTED)
    assert records[-1]["data"]["event_counts"]["query"] == len(EXPECTED)


def test_cli_json_and_seed_flags(env, capsys):
    assert main.run(["eval", write(env, DOCUMENT), "--format", "json", "--seed", "4"]) == main.EXIT_OK
    data = json.loads(capsys.readouterr().out)
    assert data["seed"] == 4
    assert data["queries"][0] == {"name": "chi X", "value": "2"}


def test_cli_check_runs_checks_only(env, capsys):
    assert main.run(["check", write(env, DOCUMENT), "--format", "json"]) == main.EXIT_OK
    data = json.loads(capsys.readouterr().out)
    assert data["queries"] == []
    assert len(data["checks"]) == 3


def test_cli_check_failure(env, capsys):
    assert main.run(["check", write(env, BROKEN_SYSTEM)]) == main.EXIT_CHECK_FAILED
    assert "[fail] system W depth 2: (1,2,3)" in capsys.readouterr().out


def test_cli_input_errors(env, capsys):
    assert main.run(["eval", write(env, "query chi F\n")]) == main.EXIT_INPUT_ERROR
    assert "resolution error at 1:11" in capsys.readouterr().err
    assert main.run(["eval", str(env / "missing.pc")]) == main.EXIT_INPUT_ERROR
    (env / "bad.pc").write_bytes(b"atom E euler 0\n\xff\n")
    assert main.run(["eval", str(env / "bad.pc")]) == main.EXIT_INPUT_ERROR
    broken = "variety X { stratum a class 1; stratum b class 1 }\n" \
             "morphism d : X -> X { map a -> a fiber 1; map b -> a fiber 1 }\nquery chif d\n"
    assert main.run(["eval", write(env, broken)]) == main.EXIT_INPUT_ERROR
    assert "chif d" in capsys.readouterr().err


def test_cli_fmt(env, capsys):
    path = write(env, "atom E euler 0   # atoms\nvariety X{stratum a class 1;}\nquery chi X")
    assert main.run(["fmt", path]) == main.EXIT_OK
    assert capsys.readouterr().out == "atom E euler 0\nvariety X { stratum a class 1 }\nquery chi X\n"


def main_runner():
    """Run the tests that need no fixtures."""
    print("\n" + "=" * 80)
    print("EVALUATOR TEST SUITE")
    print("=" * 80)
    tests = [v for k, v in sorted(globals().items())
             if k.startswith("test_") and callable(v) and v.__code__.co_argcount == 0]
    for test in tests:
        test()
        print(f"✓ {test.__name__}")


if __name__ == "__main__":
    main_runner()
