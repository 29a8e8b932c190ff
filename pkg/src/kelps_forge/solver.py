"""Run an external ASP solver and lift its answer sets back to KELPS models."""

from __future__ import annotations

import json
import os
import re
import shlex
import shutil
import subprocess
import sys
from dataclasses import dataclass
from typing import Iterable, Sequence

from .asp import AspProgram, AspRule, atom_index, check_weak, iter_body_matches, parse_atom_value, serialize
from .core import Framework, ModelStructure
from .errors import MalformedAtom, ParseError, SolverError, SolverNotFound, SolverParseError, SolverTimeout
from .terms import Num, Value, format_value, ground_value, value_key

__all__ = [
    "SolverConfig",
    "AnswerSet",
    "solve",
    "solver_available",
    "resolve_solver",
    "extract_model",
    "cost_of",
    "optimal_sets",
]

ENV_VAR = "KELPS_FORGE_SOLVER"
# clingo conventions: 10 satisfiable, 20 unsatisfiable, 30 optimum/exhausted; 0 from the Python entry point
OK_CODES = frozenset({0, 10, 20, 30})


@dataclass
class SolverConfig:
    executable: str | Sequence[str] | None = None
    args: tuple[str, ...] = ()
    models: int = 0
    time_limit: float = 120.0
    optimize: bool | None = None  # None: switch on when the program has weak constraints
    output: str = "json"  # json | text
    ok_codes: frozenset[int] = OK_CODES

    def __post_init__(self):
        if self.time_limit <= 0:
            raise ValueError("time limit must be positive")
        if self.models < 0:
            raise ValueError("model count must be >= 0")
        if self.output not in ("json", "text"):
            raise ValueError("output must be 'json' or 'text'")
        self.args = tuple(self.args)


@dataclass(frozen=True)
class AnswerSet:
    atoms: frozenset[Value]
    cost: tuple[int, ...] | None = None
    optimal: bool = False

    def happens(self) -> list[tuple[int, Value]]:
        return sorted(
            ((a[2], a[1]) for a in self.atoms if _is(a, "happens", 2)),
            key=lambda p: (p[0], value_key(p[1])),
        )

    def holds(self, t: int) -> frozenset[Value]:
        return frozenset(a[1] for a in self.atoms if _is(a, "holds", 2) and a[2] == t)

    def with_name(self, name: str) -> list[Value]:
        return sorted((a for a in self.atoms if _is(a, name) or a == name), key=value_key)

    def __str__(self) -> str:
        return " ".join(format_value(a) for a in sorted(self.atoms, key=value_key))


def _is(a: Value, name: str, arity: int | None = None) -> bool:
    return isinstance(a, tuple) and a[0] == name and (arity is None or len(a) == arity + 1)


# ---------------------------------------------------------------- locating the solver


def resolve_solver(executable: str | Sequence[str] | None = None) -> list[str]:
    """Command prefix for the solver: explicit, environment, PATH, then the Python module."""
    if executable:
        cmd = shlex.split(executable) if isinstance(executable, str) else list(executable)
        if shutil.which(cmd[0]) is None and not os.path.exists(cmd[0]):
            raise SolverNotFound(f"solver executable {cmd[0]!r} not found")
        return cmd
    env = os.environ.get(ENV_VAR)
    if env:
        return resolve_solver(env)
    found = shutil.which("clingo")
    if found:
        return [found]
    try:
        import clingo  # noqa: F401
    except ImportError:
        raise SolverNotFound(f"no ASP solver found; install clingo or set {ENV_VAR}") from None
    return [sys.executable, "-m", "clingo"]


def solver_available(cfg: SolverConfig | None = None) -> bool:
    try:
        resolve_solver((cfg or SolverConfig()).executable)
    except SolverNotFound:
        return False
    return True


# ---------------------------------------------------------------- running


def _has_weak(text: str) -> bool:
    return ":~" in text


def solve(program: str | AspProgram | Iterable[AspRule], cfg: SolverConfig | None = None) -> list[AnswerSet]:
    """Answer sets reported by the solver; an empty list means unsatisfiable."""
    cfg = cfg or SolverConfig()
    text = program if isinstance(program, str) else serialize(program)
    optimize = _has_weak(text) if cfg.optimize is None else cfg.optimize
    cmd = resolve_solver(cfg.executable) + [str(cfg.models)]
    if optimize:
        cmd.append("--opt-mode=optN")
    if cfg.output == "json":
        cmd.append("--outf=2")
    cmd += list(cfg.args)
    try:
        proc = subprocess.run(cmd, input=text, capture_output=True, text=True, timeout=cfg.time_limit)
    except subprocess.TimeoutExpired as exc:
        raise SolverTimeout(f"solver exceeded {cfg.time_limit}s") from exc
    except FileNotFoundError as exc:
        raise SolverNotFound(str(exc)) from exc
    raw = proc.stdout + proc.stderr
    if proc.returncode not in cfg.ok_codes or "*** ERROR" in proc.stderr or re.search(r": error:", proc.stderr):
        raise SolverError(f"solver failed with exit status {proc.returncode}: {_first_error(proc.stderr)}", raw)
    if cfg.output == "json":
        return _parse_json(proc.stdout, optimize, raw)
    return _parse_text(proc.stdout, optimize, raw)


def _first_error(stderr: str) -> str:
    for line in stderr.splitlines():
        if "error" in line.lower():
            return line.strip()
    return stderr.strip()[:200]


def _atoms(values: Iterable[str], raw: str) -> frozenset[Value]:
    out = set()
    for v in values:
        try:
            out.add(parse_atom_value(v))
        except (ParseError, ValueError) as exc:
            raise SolverParseError(f"cannot parse atom {v!r}: {exc}", raw) from exc
    return frozenset(out)


def _finish(witnesses: list[tuple[frozenset, tuple | None]], optimize: bool, n_optimal: int | None) -> list[AnswerSet]:
    if not optimize:
        return _unique([AnswerSet(a, c, False) for a, c in witnesses])
    if n_optimal is None:
        # without an explicit count, the optimal sets are those sharing the best cost
        costs = [c for _, c in witnesses if c is not None]
        best = min(costs) if costs else None
        flags = [c == best for _, c in witnesses]
    else:
        flags = [i >= len(witnesses) - n_optimal for i in range(len(witnesses))]
    sets = [AnswerSet(a, c, flag) for (a, c), flag in zip(witnesses, flags)]
    optimal = {s.atoms for s in sets if s.optimal}
    sets = [s if s.optimal or s.atoms not in optimal else AnswerSet(s.atoms, s.cost, True) for s in sets]
    return _unique(sets)


def _unique(sets: list[AnswerSet]) -> list[AnswerSet]:
    seen: dict[frozenset, AnswerSet] = {}
    for s in sets:
        prev = seen.get(s.atoms)
        if prev is None or (s.optimal and not prev.optimal):
            seen[s.atoms] = s
    return list(seen.values())


def _parse_json(stdout: str, optimize: bool, raw: str) -> list[AnswerSet]:
    try:
        data = json.loads(stdout)
        result = data["Result"]
        calls = data.get("Call", [])
        witnesses = [w for call in calls for w in call.get("Witnesses", [])]
    except (json.JSONDecodeError, KeyError, TypeError) as exc:
        raise SolverParseError(f"unreadable solver output: {exc}", raw) from exc
    if result == "UNKNOWN":
        raise SolverError("solver returned UNKNOWN", raw)
    if result == "UNSATISFIABLE":
        return []
    items = []
    for w in witnesses:
        cost = tuple(int(c) for c in w["Costs"]) if "Costs" in w else None
        items.append((_atoms(w.get("Value", []), raw), cost))
    n_opt = data.get("Models", {}).get("Optimal")
    return _finish(items, optimize, n_opt)


_ANSWER = re.compile(r"^Answer: \d+")


def _parse_text(stdout: str, optimize: bool, raw: str) -> list[AnswerSet]:
    lines = stdout.splitlines()
    if any(line.strip() == "UNSATISFIABLE" for line in lines):
        return []
    items: list[tuple[frozenset, tuple | None]] = []
    i = 0
    while i < len(lines):
        if _ANSWER.match(lines[i]):
            body = lines[i + 1] if i + 1 < len(lines) else ""
            atoms = _atoms(_split_atoms(body), raw)
            cost = None
            if i + 2 < len(lines) and lines[i + 2].startswith("Optimization:"):
                try:
                    cost = tuple(int(x) for x in lines[i + 2].split(":", 1)[1].split())
                except ValueError as exc:
                    raise SolverParseError(f"bad optimization line {lines[i + 2]!r}", raw) from exc
            items.append((atoms, cost))
            i += 2
        else:
            i += 1
    if not items and not any(line.startswith(("SATISFIABLE", "OPTIMUM FOUND")) for line in lines):
        raise SolverParseError("no answer sets or status found in solver output", raw)
    return _finish(items, optimize, None)


def _split_atoms(line: str) -> list[str]:
    """Split a space separated atom line, respecting parentheses and quotes."""
    out, depth, cur, quoted = [], 0, [], False
    for ch in line.strip():
        if ch == '"':
            quoted = not quoted
        if not quoted:
            if ch in "(":
                depth += 1
            elif ch == ")":
                depth -= 1
            elif ch == " " and depth == 0:
                if cur:
                    out.append("".join(cur))
                cur = []
                continue
        cur.append(ch)
    if cur:
        out.append("".join(cur))
    return out


def optimal_sets(sets: Sequence[AnswerSet]) -> list[AnswerSet]:
    flagged = [s for s in sets if s.optimal]
    return flagged if flagged else list(sets)


# ---------------------------------------------------------------- lifting to KELPS


def _stamp(atom: Value, n: int) -> int:
    t = atom[-1]
    if not isinstance(t, int) or isinstance(t, bool) or not 0 <= t <= n:
        raise MalformedAtom(f"{format_value(atom)} lacks an integer timestamp in [0, {n}]")
    return t


def extract_model(a: AnswerSet, f: Framework, n: int | None = None) -> ModelStructure:
    n = f.horizon if n is None else n
    if n is None:
        raise MalformedAtom("framework has no horizon")
    states: list[set] = [set() for _ in range(n + 1)]
    acts: dict[int, set] = {}
    ext = f.ext
    for atom in a.atoms:
        if isinstance(atom, tuple) and atom[0] in ("holds", "happens"):
            if len(atom) != 3:
                raise MalformedAtom(f"{format_value(atom)} must have two arguments")
            t = _stamp(atom, n)
            if atom[0] == "holds":
                states[t].add(atom[1])
            elif atom[1] not in ext.get(t, ()):
                acts.setdefault(t, set()).add(atom[1])
    return ModelStructure(n, tuple(frozenset(s) for s in states), acts, ext, f.aux_values)


# ---------------------------------------------------------------- costs


def cost_of(a: AnswerSet | Iterable[Value], weak: Sequence[AspRule], levels: Iterable[int] = ()) -> tuple[int, ...]:
    """Penalty totals per level, highest level first, by grounding against ``a``.

    Levels written as constants are always reported; a level given by a
    variable only shows up once some instance matches, so callers that know
    the possible values pass them in ``levels``.
    """
    atoms = set(a.atoms if isinstance(a, AnswerSet) else a)
    index = atom_index(atoms)
    per_level: dict[int, set] = {lvl: set() for lvl in levels}
    for rule in weak:
        check_weak(rule)
        if isinstance(rule.level, Num):
            per_level.setdefault(rule.level.value, set())
        for binding in iter_body_matches(rule.body, atoms, index):
            weight = ground_value(rule.weight, binding)
            level = ground_value(rule.level, binding)
            terms = tuple(ground_value(t, binding) for t in rule.terms)
            if not isinstance(weight, int) or not isinstance(level, int):
                raise SolverParseError(f"non-integer weight or level in {rule}")
            # identical (weight, terms) tuples count once per level, as in the solver
            per_level.setdefault(level, set()).add((weight, terms))
    return tuple(sum(w for w, _ in per_level[lvl]) for lvl in sorted(per_level, reverse=True))
