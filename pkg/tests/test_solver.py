from __future__ import annotations

import json
import stat
import sys

import pytest

from conftest import load, needs_solver, weak_rules
from kelps_forge.asp import parse_program
from kelps_forge.core import to_n_distant
from kelps_forge.emit import EmitOptions, parse_action_decl, translate
from kelps_forge.errors import MalformedAtom, SolverError, SolverNotFound, SolverParseError, SolverTimeout
from kelps_forge.oracle import enumerate_reactive_models, is_reactive_model
from kelps_forge.solver import (
    AnswerSet,
    SolverConfig,
    cost_of,
    extract_model,
    optimal_sets,
    resolve_solver,
    solve,
)


def fake_solver(tmp_path, stdout: str = "", stderr: str = "", code: int = 10, sleep: float = 0):
    """An executable that ignores its input and replays canned output."""
    script = tmp_path / "fake_solver"
    script.write_text(
        f"#!{sys.executable}\n"
        "import sys, time\n"
        "sys.stdin.read()\n"
        f"time.sleep({sleep})\n"
        f"sys.stdout.write({stdout!r})\n"
        f"sys.stderr.write({stderr!r})\n"
        f"sys.exit({code})\n"
    )
    script.chmod(script.stat().st_mode | stat.S_IEXEC)
    return str(script)


def json_output(result, witnesses, optimal=None):
    data = {"Result": result, "Call": [{"Witnesses": witnesses}], "Models": {}}
    if optimal is not None:
        data["Models"]["Optimal"] = optimal
    return json.dumps(data)


# ---------------------------------------------------------------- canned output


def test_json_answer_sets_are_parsed(tmp_path):
    out = json_output("SATISFIABLE", [{"Value": ["happens(a1,1)", "holds(p,0)", "cons(1,(1),1,3)"]}])
    (a,) = solve("a.", SolverConfig(executable=fake_solver(tmp_path, out)))
    assert a.happens() == [(1, "a1")]
    assert a.holds(0) == {"p"}
    assert ("cons", 1, 1, 1, 3) in a.atoms
    assert a.cost is None and not a.optimal


def test_json_unsatisfiable_is_empty(tmp_path):
    assert solve("a.", SolverConfig(executable=fake_solver(tmp_path, json_output("UNSATISFIABLE", []), code=20))) == []


def test_optimal_count_marks_the_last_witnesses(tmp_path):
    out = json_output(
        "OPTIMUM FOUND",
        [{"Value": ["x"], "Costs": [3]}, {"Value": ["y"], "Costs": [1]}, {"Value": ["z"], "Costs": [1]}],
        optimal=2,
    )
    sets = solve(":~ x. [1@1]", SolverConfig(executable=fake_solver(tmp_path, out, code=30)))
    assert [(s.atoms, s.optimal) for s in sets] == [({"x"}, False), ({"y"}, True), ({"z"}, True)]
    assert [s.atoms for s in optimal_sets(sets)] == [{"y"}, {"z"}]


def test_text_output_is_parsed(tmp_path):
    out = "Answer: 1\nhappens(drink(water),2) holds(\"a b\",1)\nOptimization: 1 -5\nOPTIMUM FOUND\n"
    (a,) = solve(":~ p. [1@1]", SolverConfig(executable=fake_solver(tmp_path, out, code=30), output="text"))
    assert a.happens() == [(2, ("drink", "water"))]
    assert a.cost == (1, -5) and a.optimal


def test_text_unsatisfiable(tmp_path):
    cfg = SolverConfig(executable=fake_solver(tmp_path, "UNSATISFIABLE\n", code=20), output="text")
    assert solve("a.", cfg) == []


@pytest.mark.parametrize(
    "stdout, output",
    [("not json", "json"), (json.dumps({"Call": []}), "json"), ("garbage\n", "text"), ("Answer: 1\np(\n", "text")],
)
def test_unreadable_output_is_an_error(tmp_path, stdout, output):
    with pytest.raises(SolverParseError):
        solve("a.", SolverConfig(executable=fake_solver(tmp_path, stdout), output=output))


def test_unknown_result_is_an_error(tmp_path):
    with pytest.raises(SolverError):
        solve("a.", SolverConfig(executable=fake_solver(tmp_path, json_output("UNKNOWN", []))))


def test_failing_exit_status_carries_the_message(tmp_path):
    exe = fake_solver(tmp_path, "", "<stdin>:1:3-4: error: syntax error\n", code=65)
    with pytest.raises(SolverError) as info:
        solve("a", SolverConfig(executable=exe))
    assert "syntax error" in str(info.value) and "65" in str(info.value)


def test_timeout(tmp_path):
    with pytest.raises(SolverTimeout):
        solve("a.", SolverConfig(executable=fake_solver(tmp_path, sleep=5), time_limit=0.3))


def test_missing_executable(tmp_path):
    with pytest.raises(SolverNotFound):
        resolve_solver(str(tmp_path / "nowhere"))


def test_environment_variable_selects_the_solver(tmp_path, monkeypatch):
    exe = fake_solver(tmp_path)
    monkeypatch.setenv("KELPS_FORGE_SOLVER", exe)
    assert resolve_solver() == [exe]


@pytest.mark.parametrize("kwargs", [{"time_limit": 0}, {"models": -1}, {"output": "xml"}])
def test_config_is_validated(kwargs):
    with pytest.raises(ValueError):
        SolverConfig(**kwargs)


# ---------------------------------------------------------------- lifting and costs


def test_extract_model_separates_actions_from_observations():
    f = load("evacuation")
    atoms = {("happens", "alarm", 2), ("happens", "unlock", 4), ("happens", "evacuate", 5)}
    atoms |= {("holds", "door_locked", t) for t in range(4)}
    m = extract_model(AnswerSet(frozenset(atoms)), f)
    assert m.action_list() == [(5, "evacuate")]
    assert is_reactive_model(f, m)


@pytest.mark.parametrize("atom", [("happens", "a", 9), ("holds", "p", "x"), ("holds", "p", 1, 2)])
def test_malformed_atoms_are_rejected(atom):
    with pytest.raises(MalformedAtom):
        extract_model(AnswerSet(frozenset({atom})), load("evacuation"))


def test_cost_is_computed_per_level():
    prefs = weak_rules("drinking_prefs.lp")
    atoms = {("time", t) for t in range(6)} | {("isDrink", "water"), ("isDrink", "wine")}
    atoms |= {("happens", ("drink", "water"), 2), ("happens", ("drink", "wine"), 3), ("happens", "gotoBed", 5)}
    assert cost_of(atoms, prefs) == (-5, 2)
    assert cost_of({("time", 0)}, prefs) == (0, 0)


def test_duplicate_weak_tuples_count_once():
    weak = parse_program(":~ p(X). [1@1]").rules
    assert cost_of({("p", 1), ("p", 2)}, weak) == (1,)
    weak = parse_program(":~ p(X). [1@1, X]").rules
    assert cost_of({("p", 1), ("p", 2)}, weak) == (2,)


def test_variable_levels_can_be_declared():
    weak = parse_program(":~ cons(L,X). [1@L, X]").rules
    assert cost_of({("cons", 2, "a")}, weak) == (1,)
    assert cost_of({("cons", 2, "a")}, weak, levels=(1, 2)) == (1, 0)


# ---------------------------------------------------------------- real solver


def solver_models(f, opts=None):
    return {extract_model(a, f) for a in solve(translate(f, opts))}


@needs_solver
@pytest.mark.solver
@pytest.mark.parametrize("name", ["evacuation", "toy2", "guard", "drinking", "bus", "empty"])
def test_solver_agrees_with_oracle(name):
    f = load(name)
    assert solver_models(f) == enumerate_reactive_models(f)


@needs_solver
@pytest.mark.solver
@pytest.mark.slow
@pytest.mark.parametrize("name", ["bookstore_small", "retry"])
def test_solver_agrees_with_oracle_on_larger_fixtures(name):
    f = load(name)
    assert solver_models(f) == enumerate_reactive_models(f)


@needs_solver
@pytest.mark.solver
def test_preferences_select_the_cheapest_models():
    prefs = weak_rules("drinking_prefs.lp")
    f = load("drinking")
    sets = solve(translate(f, EmitOptions(weak=prefs)))
    best = optimal_sets(sets)
    assert {a.cost for a in best} == {(-5, 1)}
    assert all(cost_of(a, prefs) == a.cost for a in sets)
    for a in best:
        acts = dict((e, t) for t, e in extract_model(a, f).action_list())
        assert acts["gotoBed"] == 5 and ("drink", "water") in acts


@needs_solver
@pytest.mark.solver
def test_proactive_guard_adds_models():
    f = load("guard")
    opts = EmitOptions(proactive=[parse_action_decl("send_guard")])
    plain = solver_models(f)
    more = solver_models(f, opts)
    assert plain < more
    assert any(m.action_list() == [(1, "send_guard")] for m in more)


@needs_solver
@pytest.mark.solver
def test_bounded_applicant_has_a_model():
    f = to_n_distant(load("applicant"), 8)
    (first,) = solve(translate(f), SolverConfig(models=1))
    assert first.happens() == []


@needs_solver
@pytest.mark.solver
def test_real_solver_reports_syntax_errors():
    with pytest.raises(SolverError):
        solve("p(X :- q.")
