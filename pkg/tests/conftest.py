from __future__ import annotations

from functools import lru_cache
from pathlib import Path

import pytest

from kelps_forge.asp import parse_program
from kelps_forge.parser import parse
from kelps_forge.solver import solver_available

ROOT = Path(__file__).resolve().parent.parent
FIXTURES = ROOT / "fixtures"
GOLDEN = Path(__file__).resolve().parent / "golden"

HAVE_SOLVER = solver_available()
needs_solver = pytest.mark.skipif(not HAVE_SOLVER, reason="no ASP solver configured")


@lru_cache(maxsize=None)
def fixture_text(name: str) -> str:
    return (FIXTURES / name).read_text()


def load(name: str):
    return parse(fixture_text(f"{name}.kelps"))


def weak_rules(name: str):
    return tuple(parse_program(fixture_text(name)).rules)


def golden(name: str):
    return parse_program((GOLDEN / name).read_text()).rules


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
