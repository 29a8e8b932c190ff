"""``kelps-forge`` command line."""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

from .asp import parse_program
from .core import Framework, check_fluent_event_restriction, to_n_distant, validate_framework
from .emit import EmitOptions, parse_action_decl, translate
from .errors import (
    BudgetExceeded,
    HorizonViolation,
    KelpsError,
    NoModel,
    NotNDistant,
    ParseError,
    PreconditionViolation,
    RewriteUnsupported,
    SolverError,
    SolverNotFound,
    SolverParseError,
    SolverTimeout,
    UnsafeRule,
    ValidationError,
)
from .hybrid import parse_script, run
from .oracle import SearchBudget, enumerate_reactive_models
from .parser import parse
from .solver import SolverConfig, extract_model, optimal_sets, solve
from .terms import format_value

EXIT_OK, EXIT_USAGE, EXIT_INPUT, EXIT_SOLVER, EXIT_MISMATCH, EXIT_BUDGET = 0, 1, 2, 3, 4, 5


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _read(path: str) -> str:
    try:
        return Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc.strerror}") from None


def _load(args) -> Framework:
    f = parse(_read(args.file))
    n = getattr(args, "n", None)
    if n is not None:
        f = to_n_distant(f, n)
    return f


def _need_horizon(f: Framework) -> Framework:
    if f.horizon is None:
        raise NotNDistant("no horizon: pass --n N or declare #horizon in the file")
    return f


def _options(args, f: Framework) -> EmitOptions:
    weak = []
    for path in args.prefs or ():
        weak.extend(parse_program(_read(path)).rules)
    return EmitOptions(
        horizon=f.horizon,
        prefer_disjuncts=args.prefer_disjuncts,
        weak=tuple(weak),
        proactive=tuple(parse_action_decl(a) for a in args.proactive or ()),
        badrule=args.badrule,
    )


def _solver(args, **extra) -> SolverConfig:
    return SolverConfig(
        executable=args.solver,
        args=tuple(args.solver_arg or ()),
        time_limit=args.time_limit,
        **extra,
    )


def _budget(args) -> SearchBudget:
    return SearchBudget(args.max_actions, args.max_candidates, args.budget_time)


def _show_model(m) -> list[str]:
    acts = [f"{format_value(e)}@{t}" for t, e in m.action_list()]
    return ["  actions: " + (" ".join(acts) if acts else "(none)")]


# ---------------------------------------------------------------- commands


def cmd_check(args) -> int:
    f = _load(args)
    report = validate_framework(f)
    for issue in report.warnings:
        print(f"warning: {issue}", file=sys.stderr)
    lint = [r.id for r in f.rules if not check_fluent_event_restriction(r)]
    for rid in lint:
        print(f"warning: rule {rid}: an antecedent fluent is not bounded by an antecedent event", file=sys.stderr)
    horizon = "none" if f.horizon is None else str(f.horizon)
    print(
        f"ok: {len(f.rules)} rules, {len(f.causal.post)} postconditions, {len(f.causal.pre)} preconditions,"
        f" {len(f.observations)} observations, horizon {horizon}"
    )
    if not lint and f.rules:
        print("all rules keep fluents before events: bounded models extend")
    return EXIT_OK


def cmd_translate(args) -> int:
    f = _need_horizon(_load(args))
    text = translate(f, _options(args, f)).text(comments=args.comments)
    if args.output:
        Path(args.output).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_solve(args) -> int:
    f = _need_horizon(_load(args))
    opts = _options(args, f)
    sets = solve(translate(f, opts), _solver(args, models=args.models))
    if not sets:
        print("UNSATISFIABLE")
        return EXIT_OK
    shown = sets if args.all else optimal_sets(sets)
    for i, a in enumerate(shown, 1):
        head = f"Model {i}"
        if a.cost is not None:
            head += f" cost {list(a.cost)}" + (" optimal" if a.optimal else "")
        print(head)
        print("\n".join(_show_model(extract_model(a, f))))
    print(f"{len(shown)} models")
    return EXIT_OK


def cmd_enumerate(args) -> int:
    f = _need_horizon(_load(args))
    try:
        models = enumerate_reactive_models(f, _budget(args))
    except BudgetExceeded as exc:
        print(f"budget exceeded after {len(exc.partial or ())} models: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    for i, m in enumerate(sorted(models, key=lambda m: str(m.action_list())), 1):
        print(f"Model {i}")
        print("\n".join(_show_model(m)))
    print(f"{len(models)} models")
    return EXIT_OK


def cmd_verify(args) -> int:
    f = _need_horizon(_load(args))
    opts = replace(_options(args, f), weak=())
    sets = solve(translate(f, opts), _solver(args, optimize=False))
    from_solver = {extract_model(a, f) for a in sets}
    try:
        from_oracle = enumerate_reactive_models(f, _budget(args))
    except BudgetExceeded as exc:
        print(f"oracle budget exceeded: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    if from_solver == from_oracle:
        print(f"{len(from_oracle)} models, solver = oracle")
        return EXIT_OK
    print(f"mismatch: solver {len(from_solver)} models, oracle {len(from_oracle)} models")
    for label, extra in (("solver only", from_solver - from_oracle), ("oracle only", from_oracle - from_solver)):
        for m in sorted(extra, key=lambda m: str(m.action_list()))[: args.show]:
            print(f"{label}:")
            print("\n".join(_show_model(m)))
    return EXIT_MISMATCH


def cmd_hybrid(args) -> int:
    f = parse(_read(args.file))
    script = parse_script(_read(args.script)) if args.script else None
    if args.until is not None:
        until = args.until
        k = lambda t: max(until - t, 0)  # noqa: E731
    else:
        k = args.k
    opts = _options(args, replace(f, horizon=None))
    trace = run(
        f,
        script,
        k=k,
        cycles=args.cycles,
        policy=args.policy,
        solver=_solver(args),
        options=opts,
        on_no_model="halt" if args.halt else "idle",
        check_commutation=args.check_commutation,
    )
    print("\n".join(trace.lines()))
    if args.check_commutation and any(c.commutes is False for c in trace.cycles):
        return EXIT_MISMATCH
    return EXIT_OK


def cmd_bench(args) -> int:
    from .synthetic import compare_benchmark, frame_benchmark

    cfg = _solver(args, models=1)
    if args.mode == "frame":
        points = frame_benchmark(args.indices, args.horizons, cfg, args.repeats)
    else:
        points = compare_benchmark(args.m, cfg)
    for p in points:
        print(p.line())
    return EXIT_OK


# ---------------------------------------------------------------- argument parsing


def _ints(text: str) -> list[int]:
    try:
        values = [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma separated integers, got {text!r}") from None
    if not values or any(v <= 0 for v in values):
        raise argparse.ArgumentTypeError("values must be positive")
    return values


def _nonneg(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if v < 0:
        raise argparse.ArgumentTypeError("must be >= 0")
    return v


def _positive_float(text: str) -> float:
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if v <= 0:
        raise argparse.ArgumentTypeError("must be > 0")
    return v


def _add_emit(p: argparse.ArgumentParser) -> None:
    p.add_argument("--prefer-disjuncts", action="store_true", help="rank disjuncts by position")
    p.add_argument("--proactive", action="append", metavar="ACT", help="action allowed without support (repeatable)")
    p.add_argument("--badrule", action="store_true", help="report unsatisfied rules instead of rejecting models")
    p.add_argument("--prefs", action="append", metavar="FILE.lp", help="weak constraints to add (repeatable)")


def _add_solver(p: argparse.ArgumentParser) -> None:
    p.add_argument("--solver", metavar="EXE", help="solver command (default: $KELPS_FORGE_SOLVER, clingo)")
    p.add_argument("--solver-arg", action="append", metavar="ARG", help="extra solver argument (repeatable)")
    p.add_argument("--time-limit", type=_positive_float, default=120.0, metavar="SECONDS")


def _add_budget(p: argparse.ArgumentParser) -> None:
    p.add_argument("--max-actions", type=int, default=14, help="most candidate actions per time point")
    p.add_argument("--max-candidates", type=int, default=2_000_000, help="most partial models explored")
    p.add_argument("--budget-time", type=_positive_float, default=None, metavar="SECONDS")


def build_parser() -> argparse.ArgumentParser:
    top = _Parser(prog="kelps-forge", description="Translate and run KELPS reactive frameworks.")
    sub = top.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("check", help="parse, validate and lint a framework")
    p.add_argument("file")
    p.add_argument("--n", type=_nonneg)
    p.set_defaults(run=cmd_check)

    p = sub.add_parser("translate", help="write the ASP program")
    p.add_argument("file")
    p.add_argument("--n", type=_nonneg)
    p.add_argument("-o", "--output")
    p.add_argument("--comments", action="store_true", help="annotate rules with their origin")
    _add_emit(p)
    p.set_defaults(run=cmd_translate)

    p = sub.add_parser("solve", help="translate, solve and print the extracted models")
    p.add_argument("file")
    p.add_argument("--n", type=_nonneg)
    p.add_argument("--models", type=_nonneg, default=0, help="stop after this many models (0: all)")
    p.add_argument("--all", action="store_true", help="also print non-optimal models")
    _add_emit(p)
    _add_solver(p)
    p.set_defaults(run=cmd_solve)

    p = sub.add_parser("enumerate", help="list every reactive model by brute force")
    p.add_argument("file")
    p.add_argument("--n", type=_nonneg)
    _add_budget(p)
    p.set_defaults(run=cmd_enumerate)

    p = sub.add_parser("verify", help="compare solver models with the brute-force enumeration")
    p.add_argument("file")
    p.add_argument("--n", type=_nonneg)
    p.add_argument("--show", type=_nonneg, default=3, help="differing models to print per side")
    _add_emit(p)
    _add_solver(p)
    _add_budget(p)
    p.set_defaults(run=cmd_verify)

    p = sub.add_parser("hybrid", help="run the KELPS/ASP control loop")
    p.add_argument("file")
    p.add_argument("--k", type=_nonneg, default=3, help="window size")
    p.add_argument("--until", type=_nonneg, help="end every window at this time instead of T+k")
    p.add_argument("--cycles", type=_nonneg)
    p.add_argument("--script", metavar="EVENTS", help="event script ('at T: e' and 'expect at T [from C]: e' lines)")
    p.add_argument("--policy", choices=("shortlex", "lex", "fewest"), default="shortlex")
    p.add_argument("--halt", action="store_true", help="stop at the first window without a model")
    p.add_argument("--check-commutation", action="store_true", help="also rewrite the previous program and compare")
    _add_emit(p)
    _add_solver(p)
    p.set_defaults(run=cmd_hybrid)

    p = sub.add_parser("bench", help="timing runs on synthetic frameworks")
    p.add_argument("--mode", choices=("frame", "compare"), required=True)
    p.add_argument("--indices", type=_ints, default=[20, 40, 80], help="index counts (six fluents per index)")
    p.add_argument("--horizons", type=_ints, default=[50, 100, 200])
    p.add_argument("--repeats", type=int, default=3)
    p.add_argument("--m", type=int, default=20, help="largest horizon in compare mode")
    _add_solver(p)
    p.set_defaults(run=cmd_bench)
    return top


def main(argv: list[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return args.run(args)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except (ParseError, ValidationError, HorizonViolation, NotNDistant, UnsafeRule) as exc:
        where = getattr(args, "file", "") if "args" in locals() else ""
        print(f"{where}:{exc}" if where else str(exc), file=sys.stderr)
        return EXIT_INPUT
    except (PreconditionViolation, RewriteUnsupported, NoModel) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (SolverError, SolverNotFound, SolverParseError, SolverTimeout) as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except BudgetExceeded as exc:
        print(f"budget exceeded: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    except (KelpsError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
