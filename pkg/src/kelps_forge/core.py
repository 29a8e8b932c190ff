"""KELPS domain model, validation, n-distant conversion and temporal reasoning."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Iterable, Iterator, Mapping, Sequence

from .errors import BudgetExceeded, HorizonViolation
from .terms import (
    Arith,
    Fn,
    Num,
    Sym,
    Term,
    Value,
    Var,
    bind_terms,
    evaluate,
    format_value,
    is_ground,
    render_term,
    substitute,
    term_vars,
)

COMPARISONS = ("<", "<=", "=", "!=")
TEMPORAL_KINDS = {"lt": 2, "le": 2, "eq": 2, "max3": 3}
KIND_OPS = {"lt": "<", "le": "<=", "eq": "="}


def unique(items: Iterable[str]) -> tuple[str, ...]:
    return tuple(dict.fromkeys(items))


# ---------------------------------------------------------------- time terms


@dataclass(frozen=True)
class TimeExpr:
    """``var + offset``, or the constant ``offset`` when ``var`` is None."""

    var: str | None = None
    offset: int = 0

    @staticmethod
    def const(c: int) -> TimeExpr:
        return TimeExpr(None, c)

    @property
    def is_const(self) -> bool:
        return self.var is None

    def shifted(self, delta: int) -> TimeExpr:
        return TimeExpr(self.var, self.offset + delta)

    def vars(self) -> tuple[str, ...]:
        return () if self.var is None else (self.var,)

    def bind(self, binding: Mapping[str, object]) -> TimeExpr:
        """Substitute ints (ground times) or TimeExprs for the variable."""
        if self.var is None or self.var not in binding:
            return self
        target = binding[self.var]
        if isinstance(target, TimeExpr):
            return target.shifted(self.offset)
        return TimeExpr.const(int(target) + self.offset)

    def value(self, binding: Mapping[str, object]) -> int:
        if self.var is None:
            return self.offset
        return int(binding[self.var]) + self.offset

    def to_term(self) -> Term:
        if self.var is None:
            return Num(self.offset)
        if self.offset == 0:
            return Var(self.var)
        if self.offset > 0:
            return Arith("+", Var(self.var), Num(self.offset))
        return Arith("-", Var(self.var), Num(-self.offset))

    def __str__(self) -> str:
        return render_term(self.to_term())


@dataclass(frozen=True)
class TemporalConstraint:
    kind: str  # lt | le | eq | max3
    args: tuple[TimeExpr, ...]

    def vars(self) -> tuple[str, ...]:
        return unique(v for a in self.args for v in a.vars())

    def bind(self, binding: Mapping[str, object]) -> TemporalConstraint:
        return TemporalConstraint(self.kind, tuple(a.bind(binding) for a in self.args))

    def holds(self, binding: Mapping[str, object]) -> bool:
        vals = [a.value(binding) for a in self.args]
        if self.kind == "lt":
            return vals[0] < vals[1]
        if self.kind == "le":
            return vals[0] <= vals[1]
        if self.kind == "eq":
            return vals[0] == vals[1]
        return vals[2] == max(vals[0], vals[1])

    def __str__(self) -> str:
        if self.kind == "max3":
            return "max(" + ", ".join(str(a) for a in self.args) + ")"
        return f"{self.args[0]} {KIND_OPS[self.kind]} {self.args[1]}"


# ---------------------------------------------------------------- conditions


@dataclass(frozen=True)
class Condition:
    """A fluent literal, event atom, aux literal or temporal constraint.

    Data comparisons such as ``N1 < 2`` are aux literals whose name is the
    operator (one of ``COMPARISONS``) with two argument terms.
    """

    kind: str  # fluent | event | aux | temporal
    name: str = ""
    args: tuple[Term, ...] = ()
    negated: bool = False
    time: TimeExpr | None = None
    constraint: TemporalConstraint | None = None

    @staticmethod
    def fluent(name: str, args: Sequence[Term], time: TimeExpr, negated: bool = False) -> Condition:
        return Condition("fluent", name, tuple(args), negated, time)

    @staticmethod
    def event(name: str, args: Sequence[Term], time: TimeExpr) -> Condition:
        return Condition("event", name, tuple(args), False, time)

    @staticmethod
    def aux(name: str, args: Sequence[Term] = (), negated: bool = False) -> Condition:
        return Condition("aux", name, tuple(args), negated)

    @staticmethod
    def compare(op: str, left: Term, right: Term) -> Condition:
        return Condition("aux", op, (left, right))

    @staticmethod
    def temporal(kind: str, *args: TimeExpr) -> Condition:
        return Condition("temporal", constraint=TemporalConstraint(kind, tuple(args)))

    @property
    def is_builtin(self) -> bool:
        return self.kind == "aux" and self.name in COMPARISONS

    @property
    def is_timed(self) -> bool:
        return self.kind in ("fluent", "event")

    def atom_term(self) -> Term:
        """The unstamped atom as a term, e.g. ``avail(I,N)``."""
        return Fn(self.name, self.args) if self.args else Sym(self.name)

    def data_vars(self) -> tuple[str, ...]:
        return unique(v for a in self.args for v in term_vars(a))

    def time_vars(self) -> tuple[str, ...]:
        if self.kind == "temporal":
            return self.constraint.vars()
        return self.time.vars() if self.time is not None else ()

    def vars(self) -> tuple[str, ...]:
        return unique(self.data_vars() + self.time_vars())

    def bind(self, binding: Mapping[str, object]) -> Condition:
        """Apply a substitution mapping names to ground values or TimeExprs."""
        if self.kind == "temporal":
            return replace(self, constraint=self.constraint.bind(binding))
        data = {k: v for k, v in binding.items() if not isinstance(v, TimeExpr)}
        args = tuple(substitute(a, bind_terms(data)) for a in self.args) if data else self.args
        time = self.time.bind(binding) if self.time is not None else None
        return replace(self, args=args, time=time)

    def __str__(self) -> str:
        if self.kind == "temporal":
            return str(self.constraint)
        if self.is_builtin:
            return f"{render_term(self.args[0])} {self.name} {render_term(self.args[1])}"
        text = render_term(self.atom_term())
        if self.time is not None:
            text += f"@{self.time}"
        return ("not " if self.negated else "") + text


def conditions_text(conds: Sequence[Condition]) -> str:
    return ", ".join(str(c) for c in conds) if conds else "true"


# ---------------------------------------------------------------- rules


@dataclass(frozen=True)
class ReactiveRule:
    id: int
    antecedent: tuple[Condition, ...]
    disjuncts: tuple[tuple[Condition, ...], ...]

    @cached_property
    def all_conditions(self) -> tuple[Condition, ...]:
        return self.antecedent + tuple(c for d in self.disjuncts for c in d)

    @cached_property
    def time_var_set(self) -> frozenset[str]:
        return frozenset(v for c in self.all_conditions for v in c.time_vars())

    def _split(self, conds: Iterable[Condition]) -> tuple[tuple[str, ...], tuple[str, ...]]:
        names = unique(v for c in conds for v in c.vars())
        return (
            tuple(v for v in names if v not in self.time_var_set),
            tuple(v for v in names if v in self.time_var_set),
        )

    @cached_property
    def x_vars(self) -> tuple[str, ...]:
        """Antecedent non-time variables."""
        return self._split(self.antecedent)[0]

    @cached_property
    def t_vars(self) -> tuple[str, ...]:
        """Antecedent time variables."""
        return self._split(self.antecedent)[1]

    @cached_property
    def consequent_vars(self) -> tuple[str, ...]:
        return unique(v for d in self.disjuncts for c in d for v in c.vars())

    @cached_property
    def y_vars(self) -> tuple[str, ...]:
        """Consequent-only non-time variables."""
        ante = set(self.x_vars)
        return tuple(v for v in self.consequent_vars if v not in ante and v not in self.time_var_set)

    @cached_property
    def t1_vars(self) -> tuple[str, ...]:
        """Consequent-only time variables."""
        ante = set(self.t_vars)
        return tuple(v for v in self.consequent_vars if v not in ante and v in self.time_var_set)

    @cached_property
    def shared_x(self) -> tuple[str, ...]:
        cons = set(self.consequent_vars)
        return tuple(v for v in self.x_vars if v in cons)

    @cached_property
    def shared_t(self) -> tuple[str, ...]:
        cons = set(self.consequent_vars)
        return tuple(v for v in self.t_vars if v in cons)

    def disjunct_only_time_vars(self, i: int) -> tuple[str, ...]:
        ante = set(self.t_vars)
        names = unique(v for c in self.disjuncts[i] for v in c.time_vars())
        return tuple(v for v in names if v not in ante)

    def __str__(self) -> str:
        cons = " | ".join(conditions_text(d) for d in self.disjuncts)
        return f"{conditions_text(self.antecedent)} -> {cons}"


@dataclass(frozen=True)
class PostEntry:
    kind: str  # initiates | terminates
    event: Term
    fluent: Term
    guard: tuple[Condition, ...] = ()


@dataclass(frozen=True)
class CausalTheory:
    post: tuple[PostEntry, ...] = ()
    pre: tuple[tuple[Condition, ...], ...] = ()


@dataclass(frozen=True)
class Framework:
    rules: tuple[ReactiveRule, ...] = ()
    causal: CausalTheory = field(default_factory=CausalTheory)
    aux: tuple[Term, ...] = ()
    initial_state: tuple[Term, ...] = ()
    observations: tuple[tuple[Term, int], ...] = ()
    horizon: int | None = None
    fluent_decls: tuple[tuple[str, int], ...] = ()

    @cached_property
    def ext(self) -> dict[int, frozenset[Value]]:
        out: dict[int, set] = {}
        for ev, t in self.observations:
            out.setdefault(t, set()).add(evaluate(ev))
        return {t: frozenset(s) for t, s in sorted(out.items())}

    @cached_property
    def aux_values(self) -> frozenset[Value]:
        return frozenset(evaluate(a) for a in self.aux)

    @cached_property
    def initial_values(self) -> frozenset[Value]:
        return frozenset(evaluate(p) for p in self.initial_state)


# ---------------------------------------------------------------- models


def _norm_events(m: Mapping[int, Iterable[Value]]) -> dict[int, frozenset]:
    return {t: frozenset(es) for t, es in sorted(m.items()) if es}


@dataclass(frozen=True, eq=False)
class ModelStructure:
    """States S_0..S_n with actions and external events per timestamp.

    Equality compares the horizon, states and actions; ext and aux are shared
    by every model of a framework and do not take part.
    """

    n: int
    states: tuple[frozenset, ...]
    acts: dict = field(default_factory=dict)
    ext: dict = field(default_factory=dict)
    aux: frozenset = frozenset()

    def __post_init__(self):
        object.__setattr__(self, "states", tuple(frozenset(s) for s in self.states))
        object.__setattr__(self, "acts", _norm_events(self.acts))
        object.__setattr__(self, "ext", _norm_events(self.ext))
        if len(self.states) != self.n + 1:
            raise ValueError("states list must have length n+1")

    def _key(self):
        return (self.n, self.states, tuple(sorted(self.acts.items(), key=lambda kv: kv[0])))

    def __eq__(self, other) -> bool:
        if not isinstance(other, ModelStructure):
            return NotImplemented
        return self._key() == other._key()

    def __hash__(self) -> int:
        return hash(self._key())

    def events(self, t: int) -> frozenset:
        return self.acts.get(t, frozenset()) | self.ext.get(t, frozenset())

    def action_list(self) -> list[tuple[int, Value]]:
        from .terms import value_key

        return [(t, e) for t in sorted(self.acts) for e in sorted(self.acts[t], key=value_key)]

    def dump(self) -> str:
        from .terms import value_key

        lines = []
        for i, s in enumerate(self.states):
            lines.append(f"STATE {i}: " + " ".join(format_value(p) for p in sorted(s, key=value_key)))
            if i >= 1:
                acts = sorted(self.acts.get(i, ()), key=value_key)
                lines.append(f"ACTS {i}: " + " ".join(format_value(e) for e in acts))
        return "\n".join(line.rstrip() for line in lines)

    def __repr__(self) -> str:
        acts = {t: sorted(format_value(e) for e in es) for t, es in self.acts.items()}
        return f"ModelStructure(n={self.n}, acts={acts})"


# ---------------------------------------------------------------- difference constraints

ZERO = ""


class DiffClosure:
    """All-pairs closure of difference constraints ``x_a - x_b <= w``.

    ``max3`` constraints contribute only their convex part (the maximum is at
    least each argument), so entailment is sound and possibly incomplete.
    """

    def __init__(self, constraints: Iterable[TemporalConstraint] = (), bounds: Iterable = ()):
        self.dist: dict[str, dict[str, int]] = {ZERO: {ZERO: 0}}
        for c in constraints:
            self.add(c)
        for a, b, strict in bounds:
            self._le(a, b, 1 if strict else 0)
        self._close()

    def _node(self, v: str) -> None:
        if v not in self.dist:
            self.dist[v] = {v: 0}

    def _le(self, a: TimeExpr, b: TimeExpr, gap: int) -> None:
        # a + gap <= b  <=>  x_a - x_b <= b.off - a.off - gap
        na, nb = a.var or ZERO, b.var or ZERO
        self._node(na)
        self._node(nb)
        w = b.offset - a.offset - gap
        row = self.dist[nb]
        if w < row.get(na, w + 1):
            row[na] = w

    def add(self, c: TemporalConstraint) -> None:
        a = c.args
        if c.kind == "lt":
            self._le(a[0], a[1], 1)
        elif c.kind == "le":
            self._le(a[0], a[1], 0)
        elif c.kind == "eq":
            self._le(a[0], a[1], 0)
            self._le(a[1], a[0], 0)
        elif c.kind == "max3":
            self._le(a[0], a[2], 0)
            self._le(a[1], a[2], 0)
        else:
            raise ValueError(f"unknown temporal constraint {c.kind!r}")

    def _close(self) -> None:
        nodes = list(self.dist)
        d = self.dist
        for k in nodes:
            dk = d[k]
            for i in nodes:
                dik = d[i].get(k)
                if dik is None:
                    continue
                di = d[i]
                for j, dkj in dk.items():
                    cand = dik + dkj
                    if cand < di.get(j, cand + 1):
                        di[j] = cand
        self.consistent = all(d[v].get(v, 0) >= 0 for v in nodes)

    def bound(self, b: str, a: str) -> int | None:
        """Least known w with ``x_a - x_b <= w`` (None when unconstrained)."""
        if a == b:
            return 0
        row = self.dist.get(b)
        return None if row is None else row.get(a)

    def entails_le(self, a: TimeExpr, b: TimeExpr, strict: bool = False) -> bool:
        if not self.consistent:
            return True
        need = b.offset - a.offset - (1 if strict else 0)
        w = self.bound(b.var or ZERO, a.var or ZERO)
        return w is not None and w <= need


def _max3_branches(c: TemporalConstraint) -> list[list[TemporalConstraint]]:
    a, b, m = c.args
    return [
        [TemporalConstraint("eq", (m, a)), TemporalConstraint("le", (b, a))],
        [TemporalConstraint("eq", (m, b)), TemporalConstraint("le", (a, b))],
    ]


def constraints_satisfiable(constraints: Sequence[TemporalConstraint], bounds: Iterable = ()) -> bool:
    """Exact integer satisfiability, branching on each max3 constraint."""
    bounds = list(bounds)
    plain = [c for c in constraints if c.kind != "max3"]
    maxes = [c for c in constraints if c.kind == "max3"]
    for choice in itertools.product(*(_max3_branches(c) for c in maxes)):
        extra = [x for branch in choice for x in branch]
        if DiffClosure(plain + extra, bounds).consistent:
            return True
    return False


def totally_ordered_max(names: Sequence[str], closure: DiffClosure) -> str | None:
    """A variable entailed to be >= all others in ``names``, if any."""
    for m in names:
        if all(closure.entails_le(TimeExpr(v), TimeExpr(m)) for v in names):
            return m
    return None


# ---------------------------------------------------------------- sequencing


@dataclass(frozen=True)
class Sequencing:
    ok: bool
    witness: dict | None = None

    def __bool__(self) -> bool:
        return self.ok


def respects_sequencing(
    earlier: Sequence[Condition],
    later: Sequence[Condition],
    aux: Iterable[Value] = (),
    n: int = 0,
    max_grid: int = 1_000_000,
) -> Sequencing:
    """Search the time grid [0, n] for a witness of ``earlier < later``."""
    conds = list(earlier) + list(later)
    for c in conds:
        if c.kind != "temporal" and c.data_vars():
            raise ValueError(f"non-time variables must be ground: {c}")
    names = unique(v for c in conds for v in c.time_vars())
    if (n + 1) ** len(names) > max_grid:
        raise BudgetExceeded(f"sequencing grid {(n + 1)}^{len(names)} exceeds {max_grid}")
    constraints = [c.constraint for c in conds if c.kind == "temporal"]
    early = [c.time for c in earlier if c.time is not None]
    late = [c.time for c in later if c.time is not None]
    for combo in itertools.product(range(n + 1), repeat=len(names)):
        theta = dict(zip(names, combo))
        if not all(c.holds(theta) for c in constraints):
            continue
        stamps_ok = all(
            0 <= e.value(theta) <= n for e in early + late
        )
        if not stamps_ok:
            continue
        if early and late and max(e.value(theta) for e in early) >= min(l.value(theta) for l in late):
            continue
        return Sequencing(True, theta)
    return Sequencing(False, None)


# ---------------------------------------------------------------- validation


@dataclass(frozen=True)
class Issue:
    message: str
    where: tuple = ()

    def __str__(self) -> str:
        loc = " ".join(str(w) for w in self.where)
        return f"{loc}: {self.message}" if loc else self.message


@dataclass
class ValidationReport:
    errors: list[Issue] = field(default_factory=list)
    warnings: list[Issue] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.errors

    def error(self, message: str, *where) -> None:
        self.errors.append(Issue(message, tuple(where)))

    def warn(self, message: str, *where) -> None:
        self.warnings.append(Issue(message, tuple(where)))


def _check_condition(c: Condition, report: ValidationReport, where: tuple) -> None:
    if c.kind == "temporal":
        tc = c.constraint
        if tc is None or tc.kind not in TEMPORAL_KINDS:
            report.error("unknown temporal constraint", *where)
            return
        if len(tc.args) != TEMPORAL_KINDS[tc.kind]:
            report.error(f"{tc.kind} needs {TEMPORAL_KINDS[tc.kind]} operands", *where)
        for a in tc.args:
            if a.is_const and a.offset < 0:
                report.error("time constants must be non-negative", *where)
        return
    if c.kind not in ("fluent", "event", "aux"):
        report.error(f"unknown condition kind {c.kind!r}", *where)
        return
    if not c.name:
        report.error("predicate name must be non-empty", *where)
    if c.is_builtin:
        if len(c.args) != 2 or c.negated:
            report.error(f"comparison {c.name} needs two operands", *where)
        return
    if c.kind == "aux":
        if c.time is not None:
            report.error(f"aux literal {c.name} cannot carry a timestamp", *where)
        return
    if c.time is None:
        report.error(f"{c.kind} {c.name} needs a timestamp", *where)
    elif c.time.is_const and c.time.offset < 0:
        report.error("time constants must be non-negative", *where)
    if c.kind == "event" and c.negated:
        report.error(f"event atom {c.name} cannot be negated", *where)


def _sort_conflicts(conds: Sequence[Condition]) -> list[str]:
    data = {v for c in conds for v in c.data_vars()}
    time = {v for c in conds for v in c.time_vars()}
    return sorted(data & time)


def _n_distant_issues(r: ReactiveRule, n: int) -> list[str]:
    out = []

    def bounded(conds, var):
        return any(
            c.kind == "temporal"
            and c.constraint.kind == "le"
            and c.constraint.args[0] == TimeExpr(var)
            and c.constraint.args[1].is_const
            and c.constraint.args[1].offset <= n
            for c in conds
        )

    for v in r.t_vars:
        if not bounded(r.antecedent, v):
            out.append(f"antecedent time variable {v} lacks a <= {n} constraint")
    for i, d in enumerate(r.disjuncts):
        for v in r.disjunct_only_time_vars(i):
            if not bounded(d, v):
                out.append(f"consequent time variable {v} lacks a <= {n} constraint")
    for c in r.all_conditions:
        stamps = [c.time] if c.time is not None else list(c.constraint.args) if c.kind == "temporal" else []
        for s in stamps:
            if s.is_const and s.offset > n:
                out.append(f"time constant {s.offset} exceeds horizon {n}")
    return out


def validate_pre(body: Sequence[Condition], report: ValidationReport, where: tuple) -> None:
    for c in body:
        _check_condition(c, report, where)
    events = [c for c in body if c.kind == "event"]
    fluents = [c for c in body if c.kind == "fluent"]
    if not events:
        report.error("C_pre body must contain an event atom", *where)
        return
    stamps = {c.time for c in events}
    if len(stamps) > 1:
        report.error("C_pre events must share one timestamp", *where)
        return
    (ets,) = stamps
    fstamps = {c.time for c in fluents}
    if len(fstamps) > 1:
        report.error("C_pre fluents must share one timestamp", *where)
    elif fstamps and fstamps != {ets.shifted(-1)}:
        report.error("C_pre fluent timestamp must precede event timestamp", *where)
    for v in _sort_conflicts(body):
        report.error(f"variable {v} used both as time and data", *where)


def validate_framework(f: Framework) -> ValidationReport:
    report = ValidationReport()
    for pos, r in enumerate(f.rules):
        where = ("rule", pos + 1)
        if r.id != pos + 1:
            report.error(f"rule ids must be 1-based in order (found {r.id})", *where)
        if not r.disjuncts:
            report.error("rule needs at least one disjunct", *where)
        for c in r.all_conditions:
            _check_condition(c, report, where)
        for v in _sort_conflicts(r.all_conditions):
            report.error(f"variable {v} used both as time and data", *where)
        if f.horizon is not None and report.ok:
            for msg in _n_distant_issues(r, f.horizon):
                report.error(msg, *where)
        if report.ok and not check_fluent_event_restriction(r):
            report.warn(
                "antecedent fluent not bounded by an antecedent event; models may not extend beyond the horizon",
                *where,
            )
    for i, body in enumerate(f.causal.pre):
        validate_pre(body, report, ("pre", i + 1))
    for i, entry in enumerate(f.causal.post):
        where = ("post", i + 1)
        if entry.kind not in ("initiates", "terminates"):
            report.error(f"unknown post entry {entry.kind!r}", *where)
        for t in (entry.event, entry.fluent):
            if not isinstance(t, (Sym, Fn)) or (isinstance(t, Fn) and not t.name):
                report.error("post templates must be atoms", *where)
        for c in entry.guard:
            if c.kind != "aux":
                report.error("post guards may only contain aux literals", *where)
    for i, a in enumerate(f.aux):
        if not is_ground(a):
            report.error("aux facts must be ground", "aux", i + 1)
    for i, p in enumerate(f.initial_state):
        if not is_ground(p):
            report.error("initial fluents must be ground", "initial", i + 1)
    for i, (e, t) in enumerate(f.observations):
        if not is_ground(e):
            report.error("observed events must be ground", "observe", i + 1)
        if t < 1:
            report.error("observation timestamps must be >= 1", "observe", i + 1)
        if f.horizon is not None and t > f.horizon:
            report.error(f"observation at {t} beyond horizon {f.horizon}", "observe", i + 1)
    if f.horizon is not None and f.horizon < 0:
        report.error("horizon must be non-negative", "horizon")
    return report


# ---------------------------------------------------------------- rule analysis


def check_fluent_event_restriction(r: ReactiveRule) -> bool:
    constraints = [c.constraint for c in r.antecedent if c.kind == "temporal"]
    closure = DiffClosure(constraints)
    events = [c.time for c in r.antecedent if c.kind == "event"]
    for c in r.antecedent:
        if c.kind != "fluent":
            continue
        if not any(closure.entails_le(c.time, e) for e in events):
            return False
    return True


def _le_n(var: str, n: int) -> Condition:
    return Condition.temporal("le", TimeExpr(var), TimeExpr.const(n))


def _with_bounds(conds: tuple[Condition, ...], names: Iterable[str], n: int) -> tuple[Condition, ...]:
    out = list(conds)
    for v in names:
        c = _le_n(v, n)
        if c not in out:
            out.append(c)
    return tuple(out)


def to_n_distant(f: Framework, n: int) -> Framework:
    if n < 0:
        raise HorizonViolation("horizon must be non-negative")
    for e, t in f.observations:
        if t > n:
            raise HorizonViolation(f"external event {render_term(e)} at {t} exceeds horizon {n}")
    rules = []
    for r in f.rules:
        for c in r.all_conditions:
            stamps = [c.time] if c.time is not None else list(c.constraint.args) if c.kind == "temporal" else []
            for s in stamps:
                if s.is_const and s.offset > n:
                    raise HorizonViolation(f"time constant {s.offset} in rule {r.id} exceeds horizon {n}")
        ante = _with_bounds(r.antecedent, r.t_vars, n)
        disjuncts = tuple(_with_bounds(d, r.disjunct_only_time_vars(i), n) for i, d in enumerate(r.disjuncts))
        rules.append(ReactiveRule(r.id, ante, disjuncts))
    return replace(f, rules=tuple(rules), horizon=n)


def is_horizon_bound(c: Condition, n: int | None) -> bool:
    """True for the ``V <= c`` constraints that encode n-distance."""
    if n is None or c.kind != "temporal" or c.constraint.kind != "le":
        return False
    a, b = c.constraint.args
    return a.var is not None and a.offset == 0 and b.is_const and b.offset >= n


def framework_constants(f: Framework) -> frozenset[Value]:
    """Constant symbols and integers of the framework (the Herbrand base)."""
    out: set = set()

    def walk(t: Term) -> None:
        if isinstance(t, Sym):
            out.add(t.name)
        elif isinstance(t, Num):
            out.add(t.value)
        elif isinstance(t, Fn):
            for a in t.args:
                walk(a)
        elif isinstance(t, Arith):
            walk(t.left)
            walk(t.right)

    def walk_conds(conds):
        for c in conds:
            for a in c.args:
                if not c.is_builtin:
                    walk(a)

    for t in f.aux + f.initial_state:
        walk(t)
    for e, _ in f.observations:
        walk(e)
    for r in f.rules:
        walk_conds(r.all_conditions)
    for p in f.causal.post:
        walk(p.event)
        walk(p.fluent)
    for body in f.causal.pre:
        walk_conds(body)
    return frozenset(out)


def iter_conditions(f: Framework) -> Iterator[tuple[tuple, Condition]]:
    for r in f.rules:
        for c in r.all_conditions:
            yield ("rule", r.id), c
    for i, body in enumerate(f.causal.pre):
        for c in body:
            yield ("pre", i + 1), c
