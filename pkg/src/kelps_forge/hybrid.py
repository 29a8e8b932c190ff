"""Hybrid control loop: KELPS keeps state and residues, ASP plans over a window.

Two routes lead from the program of cycle ``T`` to the program of cycle
``T+1``.  ``step`` followed by ``window_translate`` processes residues on the
KELPS side and maps them afresh; ``rewrite_asp`` resolves the previous ASP
program directly with the new facts.  Both routes share the literal
evaluation in ``Frame`` and the rule cleanup in ``cleanup_rule``, so their
outputs can be compared rule by rule.
"""

from __future__ import annotations

import itertools
import re
from dataclasses import dataclass, field, replace
from typing import Callable, Iterable, Iterator, Mapping, Sequence

from .asp import (
    AspProgram,
    AspRule,
    Atom,
    BodyItem,
    Comparison,
    Literal,
    canonical_rule,
    compare_values,
    programs_equivalent,
    serialize_rule,
)
from .core import (
    Condition,
    DiffClosure,
    Framework,
    ReactiveRule,
    TemporalConstraint,
    TimeExpr,
    is_horizon_bound,
)
from .emit import (
    EmitOptions,
    badrule_weak,
    choice_rule,
    condition_items,
    emit_preferences,
    emit_rule_mapping,
    event_theory,
    generic_constraint,
    max_definition,
    post_rule,
    pre_rule,
)
from .errors import NoModel, ParseError, PreconditionViolation, RewriteUnsupported
from .oracle import World, solve_conjunction, successor_state
from .parser import parse_event_list
from .solver import AnswerSet, SolverConfig, optimal_sets, solve
from .terms import (
    Arith,
    Fn,
    Interval,
    Num,
    Sym,
    Term,
    Value,
    Var,
    bind_terms,
    evaluate,
    format_value,
    from_value,
    is_ground,
    match,
    tup,
    value_key,
)

__all__ = [
    "Frame",
    "View",
    "GoalKey",
    "Residue",
    "HybridState",
    "EventScript",
    "CycleRecord",
    "Trace",
    "initial_state",
    "step",
    "window_translate",
    "rewrite_asp",
    "select_actions",
    "run",
    "parse_script",
    "cleanup_rule",
]

# rules the rewriting resolves against new facts
RESOLVABLE_TAGS = frozenset({"ant", "cons", "supported"})
KNOWN_TAGS = RESOLVABLE_TAGS | {
    "time",
    "aux",
    "initial",
    "anticipated",
    "post",
    "generic",
    "goal",
    "choice",
    "action",
    "pre",
    "event-theory",
    "max",
    "preference",
    "analysis",
}


# ---------------------------------------------------------------- shared evaluation


@dataclass(frozen=True)
class Frame:
    """What is known at the first time point ``now`` of a window ending at ``end``."""

    now: int
    end: int
    events: frozenset = frozenset()  # events that happened at ``now``
    state: frozenset = frozenset()  # fluents holding at ``now``
    aux: frozenset = frozenset()

    @property
    def aux_names(self) -> frozenset[str]:
        return frozenset(a[0] if isinstance(a, tuple) else a for a in self.aux)

    def fact_truth(self, kind: str, negated: bool, value: Value | None, t: int) -> bool | None:
        """Truth of a stamped literal from the window's point of view; None if still open.

        Events at or before ``now`` cannot be derived inside the window, fluents
        before ``now`` neither; fluents at ``now`` are read off the state.
        """
        now = self.now
        if kind == "happens":
            if not negated:
                return False if t <= now else None
            if t < now:
                return True
            if t == now:
                return None if value is None else value not in self.events
            return None
        if t < now:
            return negated
        if t == now:
            if value is None:
                return None
            return (value in self.state) != negated
        return None


def _lin(t: Term) -> TimeExpr | None:
    """``V``, ``V+c``, ``V-c`` or an integer, as a TimeExpr."""
    if isinstance(t, Num):
        return TimeExpr.const(t.value)
    if isinstance(t, Var):
        return TimeExpr(t.name)
    if isinstance(t, Arith) and t.op in "+-" and isinstance(t.left, Var) and isinstance(t.right, Num):
        return TimeExpr(t.left.name, t.right.value if t.op == "+" else -t.right.value)
    return None


_FLIP = {"<": ">", "<=": ">=", ">": "<", ">=": "<=", "=": "=", "!=": "!="}
_TIME_ARG = {"happens": 1, "holds": 1, "time": 0, "ant": 2}


def _feasible(rule: AspRule, fr: Frame) -> bool:
    """Difference-constraint check with window lower bounds and no upper bound."""
    constraints: list[TemporalConstraint] = []
    bounds = []
    origin = TimeExpr.const(fr.now)
    for item in rule.body:
        if isinstance(item, Literal):
            pos = _TIME_ARG.get(item.atom.name)
            if item.negated or pos is None or len(item.atom.args) <= pos:
                continue
            te = _lin(item.atom.args[pos])
            if te is not None and te.var is not None:
                bounds.append((origin, te, item.atom.name == "happens"))
        elif isinstance(item, Comparison) and item.op != "!=":
            a, b = _lin(item.left), _lin(item.right)
            if a is None or b is None or (a.var is None and b.var is None):
                continue
            op = item.op
            if op in (">", ">="):
                a, b, op = b, a, _FLIP[op]
            kind = {"<": "lt", "<=": "le", "=": "eq"}[op]
            constraints.append(TemporalConstraint(kind, (a, b)))
    for h in rule.head:
        if h.name == "supported" and len(h.args) == 2:
            te = _lin(h.args[1])
            if te is not None and te.var is not None:
                bounds.append((origin, te, True))
    if not constraints and not bounds:
        return True
    return DiffClosure(constraints, bounds).consistent


def _item_status(item: BodyItem, fr: Frame, evaluate_facts: bool, past_time_dead: bool) -> bool | None:
    if isinstance(item, Comparison):
        if is_ground(item.left) and is_ground(item.right):
            return item.holds()
        return None
    atom = item.atom
    name = atom.name
    truth: bool | None = None
    if name == "time" and len(atom.args) == 1 and is_ground(atom.args[0]):
        t = evaluate(atom.args[0])
        if t < fr.now:
            truth = False if past_time_dead else True
        elif t <= fr.end:
            truth = True
    elif name == "max" and len(atom.args) == 3 and all(is_ground(a) for a in atom.args):
        a, b, c = (evaluate(x) for x in atom.args)
        truth = c == max(a, b)
    elif name in ("happens", "holds") and len(atom.args) == 2 and evaluate_facts:
        if is_ground(atom.args[1]):
            value = evaluate(atom.args[0]) if is_ground(atom.args[0]) else None
            got = fr.fact_truth(name, item.negated, value, evaluate(atom.args[1]))
            return got
        return None
    elif name in fr.aux_names and is_ground(atom.as_term()):
        truth = evaluate(atom.as_term()) in fr.aux
    if truth is None:
        return None
    return truth != item.negated


def _binding_item(item: BodyItem) -> dict[str, Term] | None:
    """A substitution forced by ``V = ground`` or ``max(a,b,V)`` with ground a, b."""
    if isinstance(item, Comparison) and item.op == "=":
        for p, q in ((item.left, item.right), (item.right, item.left)):
            if is_ground(q) and not is_ground(p):
                got = match(p, evaluate(q), {})
                if got:
                    return bind_terms(got)
    if isinstance(item, Literal) and not item.negated and item.atom.name == "max" and len(item.atom.args) == 3:
        a, b, c = item.atom.args
        if is_ground(a) and is_ground(b) and isinstance(c, Var):
            return {c.name: from_value(max(evaluate(a), evaluate(b)))}
    return None


def cleanup_rule(
    rule: AspRule, fr: Frame, evaluate_facts: bool = True, past_time_dead: bool = True
) -> AspRule | None:
    """Simplify ``rule`` for the window of ``fr``; None when its body can no longer hold.

    Ground equalities are substituted, ground comparisons, ``max`` and aux
    atoms evaluated, ground ``time`` atoms inside the window dropped and,
    with ``evaluate_facts``, stamped literals judged by ``Frame.fact_truth``.
    """
    changed = True
    while changed:
        changed = False
        for item in rule.body:
            b = _binding_item(item)
            if b:
                rule = rule.subst(b)
                changed = True
                break
    body = []
    for item in rule.body:
        status = _item_status(item, fr, evaluate_facts, past_time_dead)
        if status is False:
            return None
        if status is None:
            body.append(item)
    rule = rule.with_body(list(dict.fromkeys(body)))
    for h in rule.head:
        if h.name == "supported" and len(h.args) == 2 and is_ground(h.args[1]) and evaluate(h.args[1]) <= fr.now:
            return None
    if not _feasible(rule, fr):
        return None
    return rule


def _rule_key(rule: AspRule) -> str:
    return serialize_rule(canonical_rule(rule))


def _dedupe_rules(rules: Iterable[AspRule]) -> list[AspRule]:
    seen: dict[str, AspRule] = {}
    for r in rules:
        seen.setdefault(_rule_key(r), r)
    return list(seen.values())


def _positive(item: BodyItem, name: str) -> bool:
    return isinstance(item, Literal) and not item.negated and item.atom.name == name


def _resolve_literal(rule: AspRule, name: str, value: Value) -> Iterator[AspRule]:
    """Instances of ``rule`` with one positive ``name`` literal unified with ``value``."""
    for i, item in enumerate(rule.body):
        if not _positive(item, name):
            continue
        b = match(item.atom.as_term(), value, {})
        if b is None:
            continue
        body = rule.body[:i] + rule.body[i + 1 :]
        yield rule.with_body(body).subst(bind_terms(b))


# ---------------------------------------------------------------- KELPS side


@dataclass(frozen=True)
class View:
    """Which mapping rule of a reactive rule a residue refines."""

    rule_id: int
    kind: str  # ant | cons | supported
    disjunct: int = 0
    act: int = -1


@dataclass(frozen=True)
class GoalKey:
    """A triggered rule instance: rule id, ground shared arguments, trigger time."""

    rule_id: int
    args: Value
    time: int

    def ant_value(self) -> Value:
        return ("ant", self.rule_id, self.args, self.time)

    def __str__(self) -> str:
        return f"{self.rule_id}:{format_value(self.args)}@{self.time}"


@dataclass(frozen=True)
class _ViewSpec:
    view: View
    rule: ReactiveRule
    conds: tuple[Condition, ...]
    evaluable: tuple[int, ...]
    resolvable: tuple[int, ...]
    base: AspRule


@dataclass(frozen=True)
class Residue:
    """A partially processed mapping rule.

    ``binding`` records the values fixed so far, ``consumed`` the positions of
    conditions already resolved or found true, and ``key`` the triggered
    instance once the antecedent has held (None before that).
    """

    view: View
    key: GoalKey | None
    binding: tuple[tuple[str, Value], ...] = ()
    consumed: frozenset[int] = frozenset()

    @property
    def theta(self) -> dict[str, Value]:
        return dict(self.binding)

    def sort_key(self):
        return (
            self.view.rule_id,
            self.view.kind,
            self.view.disjunct,
            self.view.act,
            str(self.key),
            tuple((k, value_key(v)) for k, v in self.binding),
            tuple(sorted(self.consumed)),
        )


def _residue(view: View, key: GoalKey | None, theta: Mapping[str, Value], consumed: Iterable[int]) -> Residue:
    return Residue(view, key, tuple(sorted(theta.items())), frozenset(consumed))


def _strip_bounds(r: ReactiveRule, n: int | None) -> ReactiveRule:
    if n is None:
        return r
    ante = tuple(c for c in r.antecedent if not is_horizon_bound(c, n))
    disj = tuple(tuple(c for c in d if not is_horizon_bound(c, n)) for d in r.disjuncts)
    return ReactiveRule(r.id, ante, disj)


def _is_literal(c: Condition) -> bool:
    return c.kind in ("event", "fluent") and not c.negated


def _view_specs(r: ReactiveRule, opts: EmitOptions) -> list[_ViewSpec]:
    mapping = emit_rule_mapping(r, opts, n=None, rename=False)
    ant_rule, cons_rules, sup_rules = mapping[0], mapping[1 : 1 + len(r.disjuncts)], mapping[1 + len(r.disjuncts) :]
    specs = []
    every = tuple(range(len(r.antecedent)))
    specs.append(
        _ViewSpec(
            View(r.id, "ant"),
            r,
            r.antecedent,
            every,
            tuple(i for i in every if _is_literal(r.antecedent[i])),
            ant_rule,
        )
    )
    for i, d in enumerate(r.disjuncts):
        idx = tuple(range(len(d)))
        specs.append(
            _ViewSpec(View(r.id, "cons", i), r, d, idx, tuple(j for j in idx if _is_literal(d[j])), cons_rules[i])
        )
    sup_iter = iter(sup_rules)
    for i, d in enumerate(r.disjuncts):
        for k, act in enumerate(d):
            if act.kind != "event" or opts.is_proactive(act.atom_term()):
                continue
            evaluable = tuple(
                j
                for j, c in enumerate(d)
                if (j < k and c.kind != "temporal") or c.kind == "temporal" or (j > k and c.kind == "aux")
            )
            resolvable = tuple(j for j in range(k) if _is_literal(d[j]))
            specs.append(_ViewSpec(View(r.id, "supported", i, k), r, d, evaluable, resolvable, next(sup_iter)))
    return specs


def _judge(c: Condition, fr: Frame) -> tuple[bool | None, dict[str, Value]]:
    """Evaluate a condition with the bindings applied; may fix new values."""
    if c.kind == "temporal":
        tc = c.constraint
        a = tc.args
        if tc.kind == "eq":
            x, y = a
            if x.is_const and y.is_const:
                return x.offset == y.offset, {}
            for p, q in ((x, y), (y, x)):
                if q.is_const and not p.is_const:
                    return True, {p.var: q.offset - p.offset}
            return None, {}
        if tc.kind == "max3":
            x, y, m = a
            if x.is_const and y.is_const:
                top = max(x.offset, y.offset)
                if m.is_const:
                    return m.offset == top, {}
                return True, {m.var: top - m.offset}
            return None, {}
        if all(e.is_const for e in a):
            return tc.holds({}), {}
        return None, {}
    if c.kind == "aux":
        if c.is_builtin:
            left, right = c.args
            if is_ground(left) and is_ground(right):
                return compare_values(c.name, evaluate(left), evaluate(right)), {}
            if c.name == "=":
                for p, q in ((left, right), (right, left)):
                    if is_ground(q):
                        got = match(p, evaluate(q), {})
                        return (False, {}) if got is None else (True, got)
            return None, {}
        term = c.atom_term()
        if is_ground(term):
            return (evaluate(term) in fr.aux) != c.negated, {}
        return None, {}
    if not c.time.is_const:
        return None, {}
    term = c.atom_term()
    value = evaluate(term) if is_ground(term) else None
    kind = "happens" if c.kind == "event" else "holds"
    return fr.fact_truth(kind, c.negated, value, c.time.offset), {}


def _settle(spec: _ViewSpec, theta: dict, consumed: set, fr: Frame) -> tuple[dict, set] | None:
    progress = True
    while progress:
        progress = False
        for j in spec.evaluable:
            if j in consumed:
                continue
            verdict, extra = _judge(spec.conds[j].bind(theta), fr)
            if verdict is False:
                return None
            if extra:
                for k, v in extra.items():
                    if k in theta and theta[k] != v:
                        return None
                theta = {**theta, **extra}
            if verdict is True:
                consumed = consumed | {j}
                progress = True
            elif extra:
                progress = True
    return theta, consumed


def _match_now(conds: Sequence[Condition], theta: dict, fr: Frame) -> Iterator[dict]:
    if not conds:
        yield theta
        return
    c = conds[0].bind(theta)
    tb = theta
    if c.time.is_const:
        if c.time.offset != fr.now:
            return
    else:
        tb = {**theta, c.time.var: fr.now - c.time.offset}
    pool = fr.events if c.kind == "event" else fr.state
    pattern = c.atom_term()
    for fact in sorted(pool, key=value_key):
        got = match(pattern, fact, tb)
        if got is not None:
            yield from _match_now(conds[1:], got, fr)


def _forks(res: Residue, spec: _ViewSpec, fr: Frame) -> Iterator[Residue]:
    open_ = [j for j in spec.resolvable if j not in res.consumed]
    theta = res.theta
    for size in range(1, len(open_) + 1):
        for combo in itertools.combinations(open_, size):
            for got in _match_now([spec.conds[j] for j in combo], theta, fr):
                yield _residue(res.view, res.key, got, res.consumed | set(combo))


def _complete(res: Residue, spec: _ViewSpec) -> bool:
    return set(spec.evaluable) <= res.consumed


def _goal_key(res: Residue, spec: _ViewSpec) -> GoalKey:
    r = spec.rule
    theta = res.theta
    args = evaluate(tup(*(from_value(theta[v]) for v in r.shared_x + r.shared_t)))
    t0 = max((theta[v] for v in r.t_vars), default=0)
    return GoalKey(r.id, args, t0)


def _key_binding(spec: _ViewSpec, key: GoalKey) -> dict | None:
    r = spec.rule
    return match(tup(*(Var(v) for v in r.shared_x + r.shared_t)), key.args, {})


def _emit_residue(res: Residue, spec: _ViewSpec, fr: Frame) -> AspRule | None:
    rule = spec.base
    mapping: dict[str, Term] = {}
    if res.key is not None:
        for i, item in enumerate(rule.body):
            if _positive(item, "ant"):
                got = match(item.atom.as_term(), res.key.ant_value(), {})
                if got is None:
                    return None
                mapping.update(bind_terms(got))
                rule = rule.with_body(rule.body[:i] + rule.body[i + 1 :])
                break
    theta = res.theta
    mapping.update(bind_terms(theta))
    rule = rule.subst(mapping)
    spent = set()
    for j in res.consumed:
        c = spec.conds[j]
        if c.kind in ("event", "fluent", "aux"):
            spent.update(x.subst(mapping) for x in condition_items(c.bind(theta)))
    rule = rule.with_body([x for x in rule.body if x not in spent])
    return cleanup_rule(rule, fr, evaluate_facts=False, past_time_dead=False)


@dataclass(frozen=True)
class HybridState:
    """Carrier of the loop: time, current state, residues, goals and window size."""

    framework: Framework
    time: int
    state: frozenset
    k: int
    residues: tuple[Residue, ...]
    goals: tuple[GoalKey, ...] = ()
    satisfied: frozenset[GoalKey] = frozenset()
    anticipated: tuple[tuple[int, Value], ...] = ()
    options: EmitOptions = field(default_factory=EmitOptions)
    views: Mapping[View, _ViewSpec] = field(default_factory=dict, compare=False, repr=False)

    @property
    def pending(self) -> tuple[GoalKey, ...]:
        return tuple(g for g in self.goals if g not in self.satisfied)

    def anticipate(self, events: Iterable[tuple[int, Value]]) -> HybridState:
        extra = {(t, e) for t, e in events if t > self.time}
        merged = sorted(set(self.anticipated) | extra, key=lambda p: (p[0], value_key(p[1])))
        return replace(self, anticipated=tuple(merged))

    def anticipated_at(self, t: int) -> frozenset:
        return frozenset(e for s, e in self.anticipated if s == t)

    def with_k(self, k: int) -> HybridState:
        if k < 0:
            raise ValueError("window size must be non-negative")
        return replace(self, k=k)

    def remaining(self, res: Residue) -> list[Condition]:
        """Conditions of a residue still to be met, bindings applied."""
        spec = _specs(self)[res.view]
        theta = res.theta
        return [spec.conds[j].bind(theta) for j in range(len(spec.conds)) if j not in res.consumed]


def _specs(h: HybridState) -> dict[View, _ViewSpec]:
    return h.views


def _unbounded(f: Framework) -> Framework:
    return replace(f, rules=tuple(_strip_bounds(r, f.horizon) for r in f.rules), horizon=None)


def initial_state(f: Framework, k: int, options: EmitOptions | None = None) -> HybridState:
    """Cycle 0: the initial state and one root residue per mapping rule."""
    if k < 0:
        raise ValueError("window size must be non-negative")
    options = options or EmitOptions()
    options = replace(options, horizon=None)
    g = _unbounded(f)
    views = {s.view: s for r in g.rules for s in _view_specs(r, options)}
    h = HybridState(g, 0, g.initial_values, k, (), options=options, views=views)
    roots = [_residue(v, None, {}, ()) for v in views]
    goals = []
    kept = []
    for res in roots:
        spec = _specs(h)[res.view]
        if res.view.kind == "ant" and not spec.evaluable:
            goals.append(_goal_key(res, spec))
        else:
            kept.append(res)
    h = replace(h, residues=tuple(kept))
    if goals:
        fr = Frame(0, k, frozenset(), h.state, g.aux_values)
        h = _spawn_goals(h, goals, list(kept), fr)
    return h


def _check_pre(h: HybridState, events: frozenset) -> None:
    f = h.framework
    t = h.time + 1
    states = [frozenset()] * h.time + [h.state]
    w = World(t, states, {t: events}, f.aux_values)
    for body in f.causal.pre:
        stamp = next(c.time for c in body if c.kind == "event")
        start = {} if stamp.var is None else {stamp.var: t - stamp.offset}
        if stamp.var is None and stamp.offset != t:
            continue
        for theta in solve_conjunction(body, start, w):
            shown = ", ".join(f"{k}={format_value(v)}" for k, v in sorted(theta.items()))
            raise PreconditionViolation(f"events at {t} violate a precondition constraint ({shown})")


def _spawn_goals(h: HybridState, keys: Iterable[GoalKey], pool: list[Residue], fr: Frame) -> HybridState:
    """Register new triggered instances and instantiate the consequent residues for them."""
    specs = _specs(h)
    goals = list(h.goals)
    satisfied = set(h.satisfied)
    residues = list(h.residues)
    for key in keys:
        if key in goals:
            continue
        goals.append(key)
        for res in pool:
            if res.key is not None or res.view.rule_id != key.rule_id or res.view.kind == "ant":
                continue
            spec = specs[res.view]
            kb = _key_binding(spec, key)
            if kb is None:
                continue
            theta = res.theta
            if any(k in theta and theta[k] != v for k, v in kb.items()):
                continue
            settled = _settle(spec, {**theta, **kb}, set(res.consumed), fr)
            if settled is None:
                continue
            new = _residue(res.view, key, *settled)
            if _complete(new, spec) and new.view.kind == "cons":
                satisfied.add(key)
                continue
            if _emit_residue(new, spec, fr) is not None:
                residues.append(new)
    residues = sorted(set(residues), key=Residue.sort_key)
    return replace(h, goals=tuple(goals), satisfied=frozenset(satisfied), residues=tuple(residues))


def step(h: HybridState, events: Iterable[Value]) -> HybridState:
    """Advance one cycle with the events of ``[T, T+1)``."""
    ev = frozenset(events)
    for e in ev:
        if not isinstance(e, (str, tuple)):
            raise PreconditionViolation(f"event {e!r} is not a ground atom")
    _check_pre(h, ev)
    f = h.framework
    now = h.time + 1
    new_state = successor_state(h.state, ev, f.causal.post, f.aux_values)
    fr = Frame(now, now + h.k, ev, new_state, f.aux_values)
    specs = _specs(h)
    survivors: set[Residue] = set()
    new_goals: list[GoalKey] = []
    satisfied = set(h.satisfied)
    for res in h.residues:
        spec = specs[res.view]
        for cand in [res, *_forks(res, spec, fr)]:
            settled = _settle(spec, cand.theta, set(cand.consumed), fr)
            if settled is None:
                continue
            done = _residue(cand.view, cand.key, *settled)
            if _complete(done, spec):
                if done.view.kind == "ant":
                    new_goals.append(_goal_key(done, spec))
                    continue
                if done.view.kind == "cons" and done.key is not None:
                    satisfied.add(done.key)
                    continue
            if _emit_residue(done, spec, fr) is not None:
                survivors.add(done)
    out = replace(
        h,
        time=now,
        state=new_state,
        residues=tuple(sorted(survivors, key=Residue.sort_key)),
        satisfied=frozenset(satisfied),
        anticipated=tuple(p for p in h.anticipated if p[0] > now),
    )
    fresh = [g for g in dict.fromkeys(new_goals) if g not in out.goals]
    if fresh:
        out = _spawn_goals(out, fresh, list(out.residues), fr)
    return out


# ---------------------------------------------------------------- window programs


def _as_atom(t: Term) -> Atom:
    if isinstance(t, Fn):
        return Atom(t.name, t.args)
    if isinstance(t, Sym):
        return Atom(t.name)
    raise RewriteUnsupported(f"{t} is not an atom")


def _time_fact(start: int, end: int) -> AspRule:
    return AspRule.fact(Atom("time", (Interval(Num(start), Num(end)),)), tag="time")


def _initial_facts(state: Iterable[Value], t: int) -> list[AspRule]:
    return [
        AspRule.fact(Atom("holds", (from_value(p), Num(t))), tag="initial") for p in sorted(state, key=value_key)
    ]


def _anticipated_rule(e: Value, t: int) -> AspRule:
    return AspRule.normal(
        Atom("happens", (from_value(e), Num(t))), (Literal(Atom("time", (Num(t),))),), tag="anticipated"
    )


def _goal_rules(key: GoalKey, opts: EmitOptions, fr: Frame) -> list[AspRule]:
    out = []
    for rule in generic_constraint(opts.prefer_disjuncts, opts.badrule):
        for inst in _resolve_literal(rule, "ant", key.ant_value()):
            # the trigger time is never after now, so its time guard is simply dropped
            cleaned = cleanup_rule(inst, fr, past_time_dead=False)
            if cleaned is not None:
                out.append(replace(cleaned, tag="goal"))
    return out


def _cons_true_fact(key: GoalKey) -> AspRule:
    return AspRule.fact(Atom("consTrue", (Num(key.rule_id), from_value(key.args), Num(key.time))), tag="goal")


def _fixed_rules(f: Framework, opts: EmitOptions, start: int) -> tuple[list[AspRule], list[AspRule]]:
    """Rules that only depend on the window start: before and after the reactive part."""
    head = [AspRule.fact(_as_atom(a), tag="aux") for a in f.aux]
    head += [post_rule(p) for p in f.causal.post]
    tail = list(generic_constraint(opts.prefer_disjuncts, opts.badrule))
    base = [rule for r in f.rules for rule in emit_rule_mapping(r, opts, n=None)]
    if any(rule.tag == "supported" for rule in base):
        tail.append(choice_rule("supported", start))
    if opts.proactive:
        tail += [d.rule() for d in opts.proactive]
        tail.append(choice_rule("action", start))
    tail += [pre_rule(body) for body in f.causal.pre]
    tail += event_theory()
    if any(isinstance(b, Literal) and b.atom.name == "max" for rule in base for b in rule.body):
        tail += max_definition()
    prefs = emit_preferences(opts)
    tail += prefs
    if opts.badrule:
        tail.append(badrule_weak(prefs))
    return head, tail


def window_translate(h: HybridState) -> AspProgram:
    """ASP program for the window ``T..T+k`` of a hybrid state."""
    f = h.framework
    T, end = h.time, h.time + h.k
    fr = Frame(T, end, frozenset(), h.state, f.aux_values)
    specs = _specs(h)
    head, tail = _fixed_rules(f, h.options, T)
    prog = AspProgram()
    prog.add(_time_fact(T, end))
    prog.extend(head)
    prog.extend(_initial_facts(h.state, T))
    prog.extend(_anticipated_rule(e, t) for t, e in h.anticipated if t > T)
    reactive = []
    for res in h.residues:
        rule = _emit_residue(res, specs[res.view], fr)
        if rule is not None:
            reactive.append(rule)
    prog.extend(_dedupe_rules(reactive))
    for key in h.goals:
        if key in h.satisfied:
            prog.add(_cons_true_fact(key))
        else:
            prog.extend(_goal_rules(key, h.options, fr))
    prog.extend(tail)
    return prog


# ---------------------------------------------------------------- ASP side


def _check_rewritable(p: AspProgram) -> None:
    for rule in p:
        if rule.tag not in KNOWN_TAGS:
            raise RewriteUnsupported(f"rule outside the translated fragment: {serialize_rule(rule)}")
        if rule.kind == "choice" and rule.tag != "choice":
            raise RewriteUnsupported(f"unexpected choice rule: {serialize_rule(rule)}")


def _window_of(p: AspProgram) -> tuple[int, int]:
    times = p.tagged("time")
    if len(times) != 1:
        raise RewriteUnsupported("program needs exactly one time(T..T+k) fact")
    arg = times[0].head[0].args[0]
    if not isinstance(arg, Interval) or not isinstance(arg.low, Num) or not isinstance(arg.high, Num):
        raise RewriteUnsupported("time fact must be a numeric interval")
    return arg.low.value, arg.high.value


def _aux_from(p: AspProgram) -> frozenset:
    return frozenset(evaluate(r.head[0].as_term()) for r in p.tagged("aux"))


def _shift_choice(rule: AspRule, start: int) -> AspRule:
    guard = "supported" if any(_positive(b, "supported") for b in rule.body) else "action"
    return choice_rule(guard, start)


def rewrite_asp(
    p: AspProgram,
    events: Iterable[Value],
    state: Iterable[Value],
    anticipated: Iterable[tuple[int, Value]] = (),
    k: int | None = None,
) -> AspProgram:
    """Turn the program of window ``T`` into the program of window ``T+1`` by resolution.

    ``events`` happened at ``T+1`` and ``state`` holds there; ``anticipated``
    lists newly foreseen ``(time, event)`` pairs.  ``k`` changes the window size.
    """
    _check_rewritable(p)
    start, end = _window_of(p)
    now = start + 1
    k = end - start if k is None else k
    fr = Frame(now, now + k, frozenset(events), frozenset(state), _aux_from(p))

    # step 1: window, choice bound, state facts and foreseen events move forward
    fixed, resolvable, other = [], [], []
    known_anticipated = set()
    for rule in p:
        if rule.tag in ("time", "initial"):
            continue
        if rule.tag == "anticipated":
            t = evaluate(rule.head[0].args[1])
            if t > now:
                fixed.append(rule)
                known_anticipated.add((t, evaluate(rule.head[0].args[0])))
            continue
        if rule.tag == "choice":
            fixed.append(_shift_choice(rule, now))
        elif rule.tag in RESOLVABLE_TAGS:
            resolvable.append(rule)
        else:
            other.append(rule)
    fresh_anticipated = sorted(
        {(t, e) for t, e in anticipated if t > now} - known_anticipated, key=lambda q: (q[0], value_key(q[1]))
    )

    # steps 2 and 3: resolve with the facts at now, then simplify everything
    instances: list[AspRule] = []
    for rule in resolvable:
        instances.append(rule)
        instances.extend(_resolve_with_facts(rule, fr))
    settled = [c for c in (cleanup_rule(r, fr) for r in instances) if c is not None]

    # step 4: propagate the new ant and cons facts
    ant_facts = [r for r in settled if r.kind == "fact" and r.head[0].name == "ant"]
    kept = [r for r in settled if not (r.kind == "fact" and r.head[0].name == "ant")]
    consumers = kept + [r for r in other if r.tag in ("generic", "analysis")]
    derived: list[AspRule] = []
    for fact in ant_facts:
        value = evaluate(fact.head[0].as_term())
        for rule in consumers:
            for inst in _resolve_literal(rule, "ant", value):
                cleaned = cleanup_rule(inst, fr, past_time_dead=False)
                if cleaned is not None:
                    tag = "goal" if rule.tag in ("generic", "analysis") else rule.tag
                    derived.append(replace(cleaned, tag=tag))
    kept += derived
    cons_facts = [r for r in kept if r.kind == "fact" and r.head[0].name == "cons"]
    kept = [r for r in kept if not (r.kind == "fact" and r.head[0].name == "cons")]
    cons_true_rules = [r for r in other if r.tag == "generic" and r.head and r.head[0].name == "consTrue"]
    for fact in cons_facts:
        value = evaluate(fact.head[0].as_term())
        for rule in cons_true_rules:
            for inst in _resolve_literal(rule, "cons", value):
                cleaned = cleanup_rule(inst, fr)
                if cleaned is not None:
                    kept.append(replace(cleaned, tag="goal"))

    # step 5: drop constraints whose negated consTrue atom is now a fact
    true_facts = {evaluate(r.head[0].as_term()) for r in kept + other if r.kind == "fact" and r.head and r.head[0].name == "consTrue"}
    result = []
    for rule in kept + other:
        if any(
            isinstance(b, Literal) and b.negated and b.atom.name == "consTrue" and is_ground(b.atom.as_term())
            and evaluate(b.atom.as_term()) in true_facts
            for b in rule.body
        ):
            continue
        result.append(rule)

    out = AspProgram()
    out.add(_time_fact(now, now + k))
    out.extend(_initial_facts(fr.state, now))
    out.extend(fixed)
    out.extend(_anticipated_rule(e, t) for t, e in fresh_anticipated)
    out.extend(_dedupe_rules(result))
    return out


def _resolve_with_facts(rule: AspRule, fr: Frame) -> Iterator[AspRule]:
    """Instances resolving every non-empty subset of stamped literals with facts at ``now``."""
    positions = [
        i
        for i, b in enumerate(rule.body)
        if isinstance(b, Literal) and not b.negated and b.atom.name in ("happens", "holds") and len(b.atom.args) == 2
    ]
    facts = {
        "happens": [("happens", e, fr.now) for e in sorted(fr.events, key=value_key)],
        "holds": [("holds", s, fr.now) for s in sorted(fr.state, key=value_key)],
    }
    for size in range(1, len(positions) + 1):
        for combo in itertools.combinations(positions, size):
            for binding in _unify_all([rule.body[i] for i in combo], facts, {}):
                body = [b for i, b in enumerate(rule.body) if i not in combo]
                yield rule.with_body(body).subst(bind_terms(binding))


def _unify_all(lits: Sequence[Literal], facts: Mapping[str, list], binding: dict) -> Iterator[dict]:
    if not lits:
        yield binding
        return
    lit = lits[0]
    for fact in facts[lit.atom.name]:
        got = match(lit.atom.as_term(), fact, binding)
        if got is not None:
            yield from _unify_all(lits[1:], facts, got)


# ---------------------------------------------------------------- choosing actions


def _plan(a: AnswerSet, h: HybridState) -> list[tuple[int, str]]:
    out = []
    for t, e in a.happens():
        if t <= h.time or e in h.anticipated_at(t):
            continue
        out.append((t, format_value(e)))
    return sorted(out)


def _shortlex(a: AnswerSet, h: HybridState):
    plan = _plan(a, h)
    return (len(plan), plan)


POLICIES: dict[str, Callable[[AnswerSet, HybridState], object]] = {
    "shortlex": _shortlex,
    "lex": lambda a, h: _plan(a, h),
    "fewest": lambda a, h: (len(_plan(a, h)), str(sorted(_plan(a, h)))),
}


def select_actions(
    answer_sets: Sequence[AnswerSet],
    h: HybridState,
    policy: str | Callable[[Sequence[AnswerSet], HybridState], AnswerSet] = "shortlex",
    external: Iterable[Value] = (),
) -> frozenset:
    """Actions at ``T+1`` from the optimal answer set picked by ``policy``."""
    best = optimal_sets(answer_sets)
    if not best:
        raise NoModel(f"no answer set for the window starting at {h.time}")
    if callable(policy):
        chosen = policy(best, h)
    else:
        try:
            key = POLICIES[policy]
        except KeyError:
            raise ValueError(f"unknown policy {policy!r}; choose from {', '.join(POLICIES)}") from None
        chosen = min(best, key=lambda a: key(a, h))
    t = h.time + 1
    skip = set(external) | h.anticipated_at(t)
    return frozenset(e for s, e in chosen.happens() if s == t and e not in skip)


# ---------------------------------------------------------------- scripts and the loop


@dataclass(frozen=True)
class EventScript:
    """Events that occur (``at``) and events foreseen ahead of time (``expect``)."""

    events: Mapping[int, frozenset] = field(default_factory=dict)
    expected: tuple[tuple[int, Value, int], ...] = ()  # (time, event, revealed at cycle)

    def occurring(self, t: int) -> frozenset:
        seen = set(self.events.get(t, frozenset()))
        seen |= {e for s, e, _ in self.expected if s == t}
        return frozenset(seen)

    def revealed(self, cycle: int) -> list[tuple[int, Value]]:
        return [(t, e) for t, e, r in self.expected if r <= cycle and t > cycle]

    @property
    def last_time(self) -> int:
        times = list(self.events) + [t for t, _, _ in self.expected]
        return max(times, default=0)


_AT = re.compile(r"^at\s+(\d+)\s*:(.*)$")
_EXPECT = re.compile(r"^expect\s+at\s+(\d+)(?:\s+from\s+(\d+))?\s*:(.*)$")


def parse_script(text: str) -> EventScript:
    """Lines ``at T: e1, e2`` and ``expect at T [from C]: e``; ``%`` starts a comment."""
    events: dict[int, set] = {}
    expected = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("%", 1)[0].strip()
        if not line:
            continue
        m = _AT.match(line)
        try:
            if m:
                t = int(m.group(1))
                events.setdefault(t, set()).update(evaluate(e) for e in parse_event_list(m.group(2).strip()))
                continue
            m = _EXPECT.match(line)
            if m:
                t, reveal = int(m.group(1)), int(m.group(2) or 0)
                if reveal >= t:
                    raise ParseError(f"event at {t} must be revealed before it happens", lineno, 1)
                for e in parse_event_list(m.group(3).strip()):
                    expected.append((t, evaluate(e), reveal))
                continue
        except ParseError as exc:
            raise ParseError(f"line {lineno}: {exc.message}", lineno, exc.column) from exc
        raise ParseError(f"line {lineno}: expected 'at T: ...' or 'expect at T: ...'", lineno, 1)
    return EventScript({t: frozenset(v) for t, v in events.items()}, tuple(expected))


@dataclass
class CycleRecord:
    time: int
    state: frozenset
    window: tuple[int, int]
    models: int
    cost: tuple[int, ...] | None
    actions: frozenset
    external: frozenset
    idle: bool = False
    commutes: bool | None = None

    def line(self) -> str:
        def show(xs):
            return "{" + ", ".join(format_value(x) for x in sorted(xs, key=value_key)) + "}"

        parts = [
            f"cycle {self.time}",
            f"window {self.window[0]}..{self.window[1]}",
            f"state {show(self.state)}",
            f"models {self.models}",
            f"cost {list(self.cost) if self.cost else []}",
            f"actions@{self.time + 1} {show(self.actions)}",
            f"external@{self.time + 1} {show(self.external)}",
        ]
        if self.idle:
            parts.append("no model, idle")
        if self.commutes is not None:
            parts.append("commutes" if self.commutes else "DOES NOT COMMUTE")
        return " | ".join(parts)


@dataclass
class Trace:
    cycles: list[CycleRecord] = field(default_factory=list)
    final: HybridState | None = None

    def executed(self) -> list[tuple[int, Value]]:
        """Chosen actions with their times."""
        return [(c.time + 1, e) for c in self.cycles for e in sorted(c.actions, key=value_key)]

    def events(self) -> list[tuple[int, Value]]:
        return [(c.time + 1, e) for c in self.cycles for e in sorted(c.actions | c.external, key=value_key)]

    def lines(self) -> list[str]:
        out = [c.line() for c in self.cycles]
        if self.final is not None:
            state = ", ".join(format_value(x) for x in sorted(self.final.state, key=value_key))
            out.append(f"final time {self.final.time} | state {{{state}}}")
        return out


def run(
    f: Framework,
    script: EventScript | None = None,
    k: int | Callable[[int], int] = 3,
    cycles: int | None = None,
    policy: str | Callable = "shortlex",
    solver: SolverConfig | None = None,
    options: EmitOptions | None = None,
    on_no_model: str = "idle",
    check_commutation: bool = False,
) -> Trace:
    """Run the loop for ``cycles`` cycles.

    Without a script the framework's observations are treated as foreseen
    from the start; with one, they simply occur at their times.
    """
    if on_no_model not in ("idle", "halt"):
        raise ValueError("on_no_model must be 'idle' or 'halt'")
    if script is None:
        script = EventScript({}, tuple((t, evaluate(e), 0) for e, t in f.observations if t > 0))
    else:
        extra: dict[int, set] = {t: set(v) for t, v in script.events.items()}
        for e, t in f.observations:
            extra.setdefault(t, set()).add(evaluate(e))
        script = EventScript({t: frozenset(v) for t, v in extra.items()}, script.expected)
    if cycles is None:
        cycles = f.horizon if f.horizon is not None else script.last_time + 1
    if script.last_time > cycles:
        raise ValueError(f"script has events after the last cycle {cycles}")
    size = k if callable(k) else (lambda _t, _k=k: _k)
    h = initial_state(f, size(0), options)
    trace = Trace()
    previous: tuple[AspProgram, frozenset, HybridState] | None = None
    cfg = solver or SolverConfig()
    for T in range(cycles):
        h = h.with_k(size(T)).anticipate(script.revealed(T))
        prog = window_translate(h)
        commutes = None
        if check_commutation and previous is not None:
            old_prog, old_events, _ = previous
            rewritten = rewrite_asp(old_prog, old_events, h.state, h.anticipated, h.k)
            commutes = bool(programs_equivalent(rewritten.rules, prog.rules, ignore_redundant_time=True))
        sets = solve(prog, cfg)
        best = optimal_sets(sets)
        external = script.occurring(T + 1)
        idle = False
        try:
            actions = select_actions(sets, h, policy, external)
        except NoModel:
            if on_no_model == "halt":
                trace.cycles.append(CycleRecord(T, h.state, (T, T + h.k), 0, None, frozenset(), external, True, commutes))
                trace.final = h
                return trace
            actions, idle = frozenset(), True
        cost = best[0].cost if best else None
        trace.cycles.append(
            CycleRecord(T, h.state, (T, T + h.k), len(best), cost, actions, external, idle, commutes)
        )
        events = actions | external
        previous = (prog, events, h)
        h = step(h, events)
    trace.final = h
    return trace

