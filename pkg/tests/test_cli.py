from __future__ import annotations

import subprocess
import sys

import pytest

from conftest import FIXTURES, GOLDEN, needs_solver
from kelps_forge.asp import parse_program, programs_equivalent
from kelps_forge.cli import EXIT_BUDGET, EXIT_INPUT, EXIT_MISMATCH, EXIT_OK, EXIT_SOLVER, EXIT_USAGE, main


def fx(name):
    return str(FIXTURES / name)


def test_check_reports_counts(capsys):
    assert main(["check", fx("evacuation.kelps")]) == EXIT_OK
    out = capsys.readouterr().out
    assert "1 rules, 1 postconditions, 1 preconditions, 2 observations, horizon 7" in out


def test_check_warns_about_unbounded_fluents(tmp_path, capsys):
    src = tmp_path / "late.kelps"
    src.write_text("#fluent p/0.\na@T1, p@T, T = T1+1 -> a1@T2, T2 = T+1.\n")
    assert main(["check", str(src)]) == EXIT_OK
    assert "rule 1" in capsys.readouterr().err


def test_translate_writes_the_golden_program(tmp_path):
    out = tmp_path / "evac.lp"
    assert main(["translate", fx("evacuation.kelps"), "-o", str(out), "--comments"]) == EXIT_OK
    text = out.read_text()
    assert "% generic" in text
    assert programs_equivalent(parse_program(text).rules, parse_program((GOLDEN / "evacuation.lp").read_text()).rules)


def test_translate_with_options(capsys):
    args = ["translate", fx("guard.kelps"), "--proactive", "send_guard", "--proactive", "evacuate"]
    assert main(args) == EXIT_OK
    got = parse_program(capsys.readouterr().out).rules
    assert programs_equivalent(got, parse_program((GOLDEN / "guard_proactive.lp").read_text()).rules)


def test_translate_needs_a_horizon(capsys):
    assert main(["translate", fx("applicant.kelps")]) == EXIT_INPUT
    assert "--n" in capsys.readouterr().err
    assert main(["translate", fx("applicant.kelps"), "--n", "40"]) == EXIT_OK


@pytest.mark.parametrize(
    "argv",
    [[], ["bogus"], ["check"], ["solve", "x.kelps", "--models", "-1"], ["bench", "--mode", "frame", "--indices", "a"]],
)
def test_usage_errors(argv, capsys):
    assert main(argv) == EXIT_USAGE


def test_missing_file_is_a_usage_error(capsys):
    assert main(["check", "/nonexistent.kelps"]) == EXIT_USAGE
    assert "cannot read" in capsys.readouterr().err


def test_invalid_input_reports_its_position(capsys):
    assert main(["check", fx("badpre.kelps")]) == EXIT_INPUT
    err = capsys.readouterr().err
    assert "badpre.kelps:3:1: C_pre fluent timestamp must precede event timestamp" in err


def test_syntax_error(tmp_path, capsys):
    src = tmp_path / "bad.kelps"
    src.write_text("alarm@T -> .\n")
    assert main(["check", str(src)]) == EXIT_INPUT
    assert "bad.kelps:1:" in capsys.readouterr().err


def test_enumerate_and_budget(capsys):
    assert main(["enumerate", fx("evacuation.kelps")]) == EXIT_OK
    assert capsys.readouterr().out.strip().endswith("7 models")
    assert main(["enumerate", fx("drinking.kelps"), "--max-candidates", "10"]) == EXIT_BUDGET


def test_unknown_solver(capsys):
    assert main(["solve", fx("evacuation.kelps"), "--solver", "/no/such/solver"]) == EXIT_SOLVER
    assert "not found" in capsys.readouterr().err


@needs_solver
@pytest.mark.solver
def test_solve_prints_models(capsys):
    assert main(["solve", fx("drinking.kelps"), "--prefs", fx("drinking_prefs.lp")]) == EXIT_OK
    out = capsys.readouterr().out
    assert "cost [-5, 1] optimal" in out
    assert "drink(water)@2 gotoBed@5" in out
    assert out.strip().endswith("2 models")


@needs_solver
@pytest.mark.solver
def test_unsatisfiable_solve(capsys):
    assert main(["solve", fx("bus.kelps")]) == EXIT_OK
    assert capsys.readouterr().out.strip() == "UNSATISFIABLE"


@needs_solver
@pytest.mark.solver
@pytest.mark.parametrize("name, count", [("evacuation", 7), ("guard", 3), ("toy2", 1)])
def test_verify(name, count, capsys):
    assert main(["verify", fx(f"{name}.kelps")]) == EXIT_OK
    assert capsys.readouterr().out.strip() == f"{count} models, solver = oracle"


@needs_solver
@pytest.mark.solver
def test_verify_reports_a_mismatch(capsys):
    # a proactive action is outside the oracle's semantics, so the two sides must differ
    assert main(["verify", fx("guard.kelps"), "--proactive", "send_guard"]) == EXIT_MISMATCH
    assert "solver only:" in capsys.readouterr().out


@needs_solver
@pytest.mark.solver
def test_hybrid_command(capsys):
    args = ["hybrid", fx("retry.kelps"), "--script", fx("retry.script"), "--k", "3", "--cycles", "5", "--check-commutation"]
    assert main(args) == EXIT_OK
    lines = capsys.readouterr().out.splitlines()
    assert [ln.split(" | ")[5] for ln in lines[:5]] == ["actions@1 {}", "actions@2 {a1}", "actions@3 {a1}", "actions@4 {a2}", "actions@5 {}"]
    assert all(ln.endswith("commutes") for ln in lines[1:5])


@needs_solver
@pytest.mark.solver
def test_hybrid_until(capsys):
    args = ["hybrid", fx("drinking.kelps"), "--until", "5", "--prefs", fx("drinking_prefs.lp")]
    assert main(args) == EXIT_OK
    assert capsys.readouterr().out.splitlines()[-1] == "final time 5 | state {asleep}"


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "kelps_forge", "check", fx("toy2.kelps")], capture_output=True, text=True)
    assert proc.returncode == 0 and proc.stdout.startswith("ok: 1 rules")
