"""Synthetic frameworks for timing the translation with a real solver.

``frame_family`` has no reactive rules at all: only external events that
initiate and terminate indexed fluents, so the solver's work is dominated by
the frame axiom.  ``chain_family`` is a small reactive scenario that is
solved once for every horizon ``1..m``.
"""

from __future__ import annotations

import random
import statistics
import time
from dataclasses import dataclass, replace

from .asp import parse_program
from .core import Framework, to_n_distant
from .emit import EmitOptions, translate
from .parser import parse
from .solver import SolverConfig, solve

__all__ = [
    "FRAME_EVENTS",
    "frame_family",
    "chain_family",
    "chain_constraints",
    "BenchPoint",
    "time_solve",
    "frame_benchmark",
    "compare_benchmark",
    "is_monotone",
]

# event -> (fluent it initiates, fluent it terminates)
FRAME_EVENTS = {
    "c": ("p", "q"),
    "d": ("q", "r"),
    "e": ("r", "p"),
    "f": ("s", "j"),
    "g": ("t", "s"),
    "h": ("j", "t"),
}


def frame_family(indices: int, n: int, occurrences: int = 9, last: int = 100, seed: int = 0) -> Framework:
    """Six fluent families over ``indices`` indices and six external events.

    Each event occurs ``occurrences`` times at distinct times in
    ``1..min(last, n)``, drawn from a seeded generator.
    """
    if indices < 1 or n < 1:
        raise ValueError("need at least one index and a positive horizon")
    span = min(last, n)
    if occurrences > span:
        raise ValueError(f"cannot place {occurrences} occurrences in 1..{span}")
    rng = random.Random(seed)
    lines = [f"#horizon {n}."]
    lines += [f"aux index({i})." for i in range(1, indices + 1)]
    for ev, (up, down) in FRAME_EVENTS.items():
        lines.append(f"initiates({ev}, {up}(X)) if index(X).")
        lines.append(f"terminates({ev}, {down}(X)) if index(X).")
    for ev in FRAME_EVENTS:
        for t in sorted(rng.sample(range(1, span + 1), occurrences)):
            lines.append(f"observe {ev} at {t}.")
    return parse("\n".join(lines) + "\n")


CHAIN_EVENTS = (("a", 1, 1), ("b", 1, 5), ("a", 2, 11), ("b", 2, 15), ("a", 3, 32), ("b", 3, 35))
CHAIN_RESETS = (9, 19, 29, 39, 49)


def chain_family(m: int) -> Framework:
    """Indexed triggers ``a(I)``/``b(I)`` with reactions, observed up to time ``m``."""
    if m < 1:
        raise ValueError("horizon must be positive")
    lines = [
        "aux index(1).",
        "aux index(2).",
        "aux index(3).",
        "a(I)@T -> a1(I)@T1, T < T1, T1 <= T+10, a2(I)@T2, T1 < T2, T2 <= T1+5.",
        "b(I)@T -> b1(I)@T1, T < T1.",
        "terminates(a1(I), p) if index(I).",
        "initiates(c, p).",
        "false <- b1(I)@T+1, not p@T.",
        "initially p.",
    ]
    lines += [f"observe {ev}({i}) at {t}." for ev, i, t in CHAIN_EVENTS if t <= m]
    lines += [f"observe c at {t}." for t in CHAIN_RESETS if t <= m]
    return to_n_distant(parse("\n".join(lines) + "\n"), m)


def chain_constraints():
    """At most one occurrence of each reaction, and ``b1(I)`` not after ``a2(I)``."""
    return parse_program(
        """
        :- happens(a1(X),T), happens(a1(X),T2), T<T2, index(X).
        :- happens(a2(X),T), happens(a2(X),T2), T<T2, index(X).
        :- happens(b1(X),T), happens(b1(X),T2), T<T2, index(X).
        :- happens(b1(X),T2), happens(a2(X),T1), T2>T1, index(X).
        """
    ).rules


@dataclass(frozen=True)
class BenchPoint:
    label: str
    fluents: int
    n: int
    seconds: float
    models: int

    def line(self) -> str:
        return f"{self.label:<8} fluents={self.fluents:<6} n={self.n:<6} time={self.seconds:.3f}s models={self.models}"


def time_solve(program, cfg: SolverConfig, repeats: int = 1) -> tuple[float, int]:
    """Median wall time of ``repeats`` solver runs, and the model count of the last one."""
    if repeats < 1:
        raise ValueError("repeats must be >= 1")
    times = []
    count = 0
    for _ in range(repeats):
        start = time.perf_counter()
        count = len(solve(program, cfg))
        times.append(time.perf_counter() - start)
    return statistics.median(times), count


def frame_benchmark(
    index_counts=(20, 40), horizons=(100, 200), cfg: SolverConfig | None = None, repeats: int = 3, seed: int = 0
) -> list[BenchPoint]:
    """Solver time for every combination of index count and horizon."""
    cfg = cfg or SolverConfig(models=1)
    out = []
    for indices in index_counts:
        for n in horizons:
            prog = translate(frame_family(indices, n, seed=seed))
            secs, models = time_solve(prog, cfg, repeats)
            out.append(BenchPoint("frame", 6 * indices, n, secs, models))
    return out


def compare_benchmark(m: int = 20, cfg: SolverConfig | None = None) -> list[BenchPoint]:
    """One standard translation and solve per horizon ``1..m``; the last point is the total."""
    cfg = cfg or SolverConfig(models=1)
    extra = chain_constraints()
    out = []
    total = 0.0
    for t in range(1, m + 1):
        prog = translate(chain_family(t), EmitOptions())
        prog.extend(replace(r, tag="pre") for r in extra)
        secs, models = time_solve(prog, cfg)
        total += secs
        out.append(BenchPoint("single", 1, t, secs, models))
    out.append(BenchPoint("total", 1, m, total, sum(p.models for p in out)))
    return out


def is_monotone(values, slack: float = 0.0) -> bool:
    """Non-decreasing up to a relative ``slack`` for timing noise."""
    values = list(values)
    return all(b >= a * (1 - slack) for a, b in zip(values, values[1:]))
