"""Brute-force KELPS model theory: checking and enumerating reactive models.

Nothing here touches the ASP translation; the search works directly on
frameworks and model structures so it can serve as ground truth.
"""

from __future__ import annotations

import itertools
import operator
import time
from dataclasses import dataclass, field, replace
from typing import Iterable, Iterator, Mapping, Sequence

from .core import (
    Condition,
    Framework,
    ModelStructure,
    PostEntry,
    ReactiveRule,
    TimeExpr,
    framework_constants,
    is_horizon_bound,
    respects_sequencing,
    to_n_distant,
    unique,
)
from .errors import BudgetExceeded
from .terms import Value, bind_terms, evaluate, format_value, is_ground, match, substitute, term_vars, value_key

__all__ = [
    "World",
    "SearchBudget",
    "Verdict",
    "successor_state",
    "solve_conjunction",
    "evaluate_rule",
    "is_supported",
    "is_reactive_model",
    "enumerate_reactive_models",
    "run_states",
    "survives_padding",
]


# ---------------------------------------------------------------- world view


@dataclass
class World:
    """What conditions are evaluated against.

    ``states[t]`` and ``events[t]`` are known for ``t <= known``; with
    ``optimistic`` set, any timed literal after ``known`` counts as
    satisfiable, which turns the matcher into an over-approximation.
    """

    n: int
    states: Sequence[frozenset] = ()
    events: Mapping[int, frozenset] = field(default_factory=dict)
    aux: frozenset = frozenset()
    constants: Sequence[Value] = ()
    known: int | None = None
    optimistic: bool = False

    def __post_init__(self):
        if self.known is None:
            self.known = self.n

    @staticmethod
    def of_model(m: ModelStructure, constants: Iterable[Value] = ()) -> World:
        events = {t: m.events(t) for t in range(m.n + 1)}
        consts = set(constants) | _model_constants(m)
        return World(m.n, m.states, events, m.aux, sorted(consts, key=value_key))

    def state(self, t: int) -> frozenset:
        return self.states[t] if 0 <= t < len(self.states) else frozenset()

    def events_at(self, t: int) -> frozenset:
        return self.events.get(t, frozenset())

    def open(self, t: int) -> bool:
        """True when time ``t`` lies in the unknown future of an optimistic world."""
        return self.optimistic and t > self.known


def _model_constants(m: ModelStructure) -> set:
    out: set = set()

    def walk(v):
        if isinstance(v, tuple):
            for a in v[1:]:
                if not isinstance(a, tuple):
                    out.add(a)
                walk(a)

    for s in m.states:
        for p in s:
            walk(p)
    for t in range(m.n + 1):
        for e in m.events(t):
            walk(e)
    for a in m.aux:
        walk(a)
    return out


# ---------------------------------------------------------------- matching

_ORDER = {"<": operator.lt, "<=": operator.le}


def _compare(op: str, a: Value, b: Value) -> bool:
    if op == "=":
        return a == b
    if op == "!=":
        return a != b
    return _ORDER[op](value_key(a), value_key(b))


def _time_value(te: TimeExpr, b: Mapping[str, Value]) -> int | None:
    if te.var is None:
        return te.offset
    v = b.get(te.var)
    return None if v is None else v + te.offset


def _bound(c: Condition, b: Mapping[str, Value]) -> bool:
    return all(v in b for v in c.vars())


def _ground_atom(c: Condition, b: Mapping[str, Value]) -> Value:
    return evaluate(substitute(c.atom_term(), bind_terms(b)))


def _check(c: Condition, b: Mapping[str, Value], w: World) -> bool:
    """Truth of a fully bound condition."""
    if c.kind == "temporal":
        return c.constraint.holds(b)
    if c.kind == "aux":
        if c.is_builtin:
            left = evaluate(substitute(c.args[0], bind_terms(b)))
            right = evaluate(substitute(c.args[1], bind_terms(b)))
            return _compare(c.name, left, right)
        present = _ground_atom(c, b) in w.aux
        return present != c.negated
    t = _time_value(c.time, b)
    if t < 0 or t > w.n:
        return False
    if w.open(t):
        return True
    atom = _ground_atom(c, b)
    if c.kind == "event":
        return atom in w.events_at(t)
    return (atom in w.state(t)) != c.negated


def _in_range(name: str, value: int, w: World, time_vars: set[str]) -> bool:
    return name not in time_vars or 0 <= value <= w.n


def _eq_bind(c: Condition, b: dict, time_vars: set[str], w: World):
    """Bind one side of an equality when the other side is known."""
    if c.kind == "temporal" and c.constraint.kind == "eq":
        x, y = c.constraint.args
        for p, q in ((x, y), (y, x)):
            if p.var is not None and p.var not in b:
                qv = _time_value(q, b)
                if qv is None:
                    continue
                val = qv - p.offset
                if not 0 <= val <= w.n:
                    return False
                out = dict(b)
                out[p.var] = val
                return out
        return None
    if c.kind == "aux" and c.is_builtin and c.name == "=":
        left, right = c.args
        for p, q in ((left, right), (right, left)):
            qs = substitute(q, bind_terms(b))
            if not is_ground(qs):
                continue
            ps = substitute(p, bind_terms(b))
            if is_ground(ps):
                continue
            res = match(ps, evaluate(qs), b)
            return False if res is None else res
    return None


def _generate(c: Condition, b: dict, w: World, time_vars: set[str]) -> list[dict]:
    """Bindings extending ``b`` that make a positive literal true."""
    out = []
    if c.kind == "aux":
        pattern = c.atom_term()
        for fact in w.aux:
            nb = match(pattern, fact, b)
            if nb is not None:
                out.append(nb)
        return out
    te = c.time
    known_t = _time_value(te, b)
    times = [known_t] if known_t is not None else range(0, w.n + 1)
    pattern = c.atom_term()
    for t in times:
        if t < 0 or t > w.n:
            continue
        tb = b
        if known_t is None:
            val = t - te.offset
            if not 0 <= val <= w.n:
                continue
            tb = dict(b)
            tb[te.var] = val
        if w.open(t):
            out.append(tb)
            continue
        pool = w.events_at(t) if c.kind == "event" else w.state(t)
        for atom in pool:
            nb = match(pattern, atom, tb)
            if nb is not None:
                out.append(nb)
    return out


def solve_conjunction(conds: Sequence[Condition], binding: Mapping[str, Value], w: World) -> Iterator[dict]:
    """All extensions of ``binding`` satisfying every condition in ``w``."""
    time_vars = {v for c in conds for v in c.time_vars()}
    yield from _solve(list(conds), dict(binding), w, time_vars)


def _solve(pending: list[Condition], b: dict, w: World, time_vars: set[str]) -> Iterator[dict]:
    if not pending:
        yield b
        return
    for i, c in enumerate(pending):
        if _bound(c, b):
            if _check(c, b, w):
                yield from _solve(pending[:i] + pending[i + 1 :], b, w, time_vars)
            return
    for i, c in enumerate(pending):
        nb = _eq_bind(c, b, time_vars, w)
        if nb is False:
            return
        if nb is not None:
            yield from _solve(pending[:i] + pending[i + 1 :], nb, w, time_vars)
            return
    best: tuple[int, list[dict]] | None = None
    for i, c in enumerate(pending):
        if c.kind in ("event", "fluent", "aux") and not c.negated and not c.is_builtin:
            opts = _generate(c, b, w, time_vars)
            if best is None or len(opts) < len(best[1]):
                best = (i, opts)
            if not opts:
                break
    if best is not None:
        i, opts = best
        rest = pending[:i] + pending[i + 1 :]
        for nb in opts:
            yield from _solve(rest, nb, w, time_vars)
        return
    unbound = [v for c in pending for v in c.vars() if v not in b]
    tv = [v for v in unbound if v in time_vars]
    if tv:
        var, domain = tv[0], range(0, w.n + 1)
    elif w.optimistic:
        # data variables of future or negated literals: assume some value works
        yield b
        return
    else:
        var, domain = unbound[0], w.constants
    for val in domain:
        nb = dict(b)
        nb[var] = val
        yield from _solve(pending, nb, w, time_vars)


def satisfiable(conds: Sequence[Condition], binding: Mapping[str, Value], w: World) -> bool:
    return next(solve_conjunction(conds, binding, w), None) is not None


# ---------------------------------------------------------------- state transition


def successor_state(
    s: Iterable[Value], ev: Iterable[Value], post: Sequence[PostEntry], aux: Iterable[Value] = ()
) -> frozenset:
    """Remove terminated fluents, then add initiated ones."""
    guard_world = World(0, aux=frozenset(aux))
    initiated, terminated = set(), set()
    for e in ev:
        for entry in post:
            b = match(entry.event, e, {})
            if b is None:
                continue
            for full in solve_conjunction(entry.guard, b, guard_world):
                fluent = substitute(entry.fluent, bind_terms(full))
                if not is_ground(fluent):
                    continue
                (initiated if entry.kind == "initiates" else terminated).add(evaluate(fluent))
    return frozenset((set(s) - terminated) | initiated)


def run_states(f: Framework, events: Mapping[int, Iterable[Value]], n: int) -> tuple[frozenset, ...]:
    states = [f.initial_values]
    for t in range(1, n + 1):
        states.append(successor_state(states[-1], events.get(t, ()), f.causal.post, f.aux_values))
    return tuple(states)


# ---------------------------------------------------------------- checks


def evaluate_rule(r: ReactiveRule, m: ModelStructure, w: World | None = None) -> bool:
    return _rule_failure(r, w or World.of_model(m)) is None


def _rule_failure(r: ReactiveRule, w: World) -> dict | None:
    for theta in solve_conjunction(r.antecedent, {}, w):
        if not any(satisfiable(d, theta, w) for d in r.disjuncts):
            return theta
    return None


def _pre_violation(body: Sequence[Condition], t: int, w: World) -> dict | None:
    events = [c for c in body if c.kind == "event"]
    stamp = events[0].time
    if stamp.var is None:
        if stamp.offset != t:
            return None
        start = {}
    else:
        start = {stamp.var: t - stamp.offset}
    return next(solve_conjunction(body, start, w), None)


def _stamp_skeleton(conds: Iterable[Condition]) -> list[Condition]:
    """Conditions reduced to what sequencing looks at: stamps and temporal constraints."""
    out = []
    for c in conds:
        if c.kind == "temporal":
            out.append(c)
        elif c.time is not None:
            out.append(Condition.event("_", (), c.time))
    return out


def _support_witnesses(r: ReactiveRule, w: World, t: int) -> Iterator[tuple[Value, dict]]:
    """Ground actions at ``t`` supported by ``r``, judged on the world before ``t``."""
    for d in r.disjuncts:
        for k, act in enumerate(d):
            if act.kind != "event":
                continue
            earlier = [c for c in d[:k] if c.kind != "temporal"]
            rest = [c for c in d[k + 1 :] if c.kind != "temporal"]
            temporal = [c for c in d if c.kind == "temporal"]
            start: dict = {}
            if act.time.var is not None:
                val = t - act.time.offset
                if not 0 <= val <= w.n:
                    continue
                start[act.time.var] = val
            elif act.time.offset != t:
                continue
            # antecedent and earlier parts must already be true, strictly before t
            known = [c for c in r.antecedent + tuple(earlier)]
            for theta in solve_conjunction(known, start, w):
                if any(_time_value(c.time, theta) >= t for c in known if c.time is not None):
                    continue
                yield from _complete_support(r, act, earlier, rest, temporal, theta, w)


def _complete_support(r, act, earlier, rest, temporal, theta, w):
    rest_aux = [c for c in rest if c.kind == "aux"]
    positive = [c for c in rest_aux if not c.negated and not c.is_builtin]
    aux_world = World(w.n, aux=w.aux, constants=w.constants)
    for full in solve_conjunction(positive, theta, aux_world):
        checks = [c for c in rest_aux if (c.negated or c.is_builtin) and _bound(c, full)]
        if not all(_check(c, full, aux_world) for c in checks):
            continue
        act_term = substitute(act.atom_term(), bind_terms(full))
        if not is_ground(act_term):
            for extra in _ground_free(act_term, w.constants):
                yield from _sequenced(r, act, earlier, rest, temporal, {**full, **extra}, w)
            continue
        yield from _sequenced(r, act, earlier, rest, temporal, full, w)


def _ground_free(term, constants):
    names = unique(term_vars(term))
    for combo in itertools.product(constants, repeat=len(names)):
        yield dict(zip(names, combo))


def _sequenced(r, act, earlier, rest, temporal, theta, w):
    tb = {k: v for k, v in theta.items() if k in r.time_var_set}
    early = [c.bind(tb) for c in _stamp_skeleton(r.antecedent + tuple(earlier))]
    later = [c.bind(tb) for c in _stamp_skeleton([act, *rest, *temporal])]
    # antecedent temporal constraints are already satisfied by theta
    if respects_sequencing(early, later, n=w.n):
        yield evaluate(substitute(act.atom_term(), bind_terms(theta))), theta


def is_supported(action: Value, t: int, m: ModelStructure, f: Framework, w: World | None = None) -> bool:
    w = w or World.of_model(m, framework_constants(f))
    for r in f.rules:
        for act, _ in _support_witnesses(r, w, t):
            if act == action:
                return True
    return False


@dataclass(frozen=True)
class Verdict:
    ok: bool
    reason: str = ""

    def __bool__(self) -> bool:
        return self.ok


def is_reactive_model(f: Framework, m: ModelStructure) -> Verdict:
    n = f.horizon
    if n is None or m.n != n:
        return Verdict(False, f"model horizon {m.n} differs from framework horizon {n}")
    if _nonempty(m.ext) != _nonempty(f.ext):
        return Verdict(False, "external events differ from the framework's")
    for t, acts in m.acts.items():
        if not 1 <= t <= n:
            return Verdict(False, f"action at time {t} outside 1..{n}")
        if acts & m.ext.get(t, frozenset()):
            return Verdict(False, f"actions and external events overlap at {t}")
    expected = run_states(f, {t: m.events(t) for t in range(n + 1)}, n)
    for t, (got, want) in enumerate(zip(m.states, expected)):
        if got != want:
            return Verdict(False, f"state {t} does not follow from the causal theory")
    w = World.of_model(m, framework_constants(f))
    for i, body in enumerate(f.causal.pre):
        for t in range(1, n + 1):
            if _pre_violation(body, t, w) is not None:
                return Verdict(False, f"C_pre constraint {i + 1} violated at time {t}")
    for r in f.rules:
        theta = _rule_failure(r, w)
        if theta is not None:
            return Verdict(False, f"rule {r.id} unsatisfied for {_show(theta)}")
    for t, e in m.action_list():
        if not is_supported(e, t, m, f, w):
            return Verdict(False, f"action {format_value(e)} at {t} is not supported")
    return Verdict(True)


def _nonempty(events: Mapping[int, frozenset]) -> dict:
    return {t: frozenset(e) for t, e in events.items() if e}


def _show(theta: Mapping[str, Value]) -> str:
    return "{" + ", ".join(f"{k}={format_value(v)}" for k, v in sorted(theta.items())) + "}"


# ---------------------------------------------------------------- enumeration


@dataclass(frozen=True)
class SearchBudget:
    max_actions_per_step: int = 14
    max_candidates: int = 2_000_000
    time_limit: float | None = None

    def __post_init__(self):
        if self.max_actions_per_step <= 0 or self.max_candidates <= 0:
            raise ValueError("budget limits must be positive")
        if self.time_limit is not None and self.time_limit <= 0:
            raise ValueError("time limit must be positive")


def enumerate_reactive_models(
    f: Framework, budget: SearchBudget | None = None, prune: bool = True
) -> set[ModelStructure]:
    """Every reactive model of the n-distant framework ``f``.

    States are built forward; each step chooses a subset of the actions
    supported by the prefix, rejects C_pre violations and, with ``prune``,
    prefixes that already leave some triggered rule unsatisfiable.
    """
    budget = budget or SearchBudget()
    n = f.horizon
    if n is None:
        raise BudgetExceeded("framework needs a horizon", partial=set())
    constants = sorted(framework_constants(f), key=value_key)
    ext = f.ext
    found: set[ModelStructure] = set()
    counter = [0]
    deadline = None if budget.time_limit is None else time.monotonic() + budget.time_limit

    def tick():
        counter[0] += 1
        if counter[0] > budget.max_candidates:
            raise BudgetExceeded(f"more than {budget.max_candidates} candidates", partial=set(found))
        if deadline is not None and time.monotonic() > deadline:
            raise BudgetExceeded("time limit reached", partial=set(found))

    def world(states, events, known, optimistic=False):
        return World(n, states, events, f.aux_values, constants, known, optimistic)

    def step(t: int, states: list, events: dict, acts: dict):
        if t > n:
            w = world(states, events, n)
            if all(_rule_failure(r, w) is None for r in f.rules):
                found.add(ModelStructure(n, tuple(states), acts, ext, f.aux_values))
            return
        prefix = world(states, events, t - 1)
        cands = set()
        for r in f.rules:
            for act, _ in _support_witnesses(r, prefix, t):
                if act not in ext.get(t, ()):
                    cands.add(act)
        cands = sorted(cands, key=value_key)
        if len(cands) > budget.max_actions_per_step:
            raise BudgetExceeded(f"{len(cands)} candidate actions at time {t}", partial=set(found))
        for size in range(len(cands) + 1):
            for chosen in itertools.combinations(cands, size):
                tick()
                evs = dict(events)
                now = frozenset(chosen) | ext.get(t, frozenset())
                if now:
                    evs[t] = now
                w = world(states, evs, t)
                if any(_pre_violation(body, t, w) is not None for body in f.causal.pre):
                    continue
                nxt = successor_state(states[-1], now, f.causal.post, f.aux_values)
                new_states = states + [nxt]
                if prune and t < n:
                    ow = world(new_states, evs, t, optimistic=True)
                    if any(_doomed(r, ow, t) for r in f.rules):
                        continue
                new_acts = dict(acts)
                if chosen:
                    new_acts[t] = frozenset(chosen)
                step(t + 1, new_states, evs, new_acts)

    initial_events = {t: e for t, e in ext.items() if t == 0}
    step(1, [f.initial_values], initial_events, {})
    return found


def _doomed(r: ReactiveRule, w: World, t: int) -> bool:
    """An instance triggered by time ``t`` with no disjunct left that could still hold."""
    names = set(r.x_vars) | set(r.t_vars)
    for theta in solve_conjunction(r.antecedent, {}, w):
        if not names <= theta.keys():
            continue
        if any(_time_value(c.time, theta) > t for c in r.antecedent if c.time is not None):
            continue
        if not any(satisfiable(d, theta, w) for d in r.disjuncts):
            return True
    return False


def survives_padding(f: Framework, m: ModelStructure, factor: int = 2) -> bool:
    """Whether ``m``, padded with frozen states to a longer horizon, still satisfies the rules."""
    n = m.n
    longer = factor * n
    states = tuple(m.states) + (m.states[-1],) * (longer - n)
    padded = ModelStructure(longer, states, m.acts, m.ext, m.aux)
    unbounded = replace(f, horizon=None, rules=tuple(_strip_bounds(r, n) for r in f.rules))
    g = to_n_distant(unbounded, longer)
    w = World.of_model(padded, framework_constants(f))
    return all(_rule_failure(r, w) is None for r in g.rules)


def _strip_bounds(r: ReactiveRule, n: int) -> ReactiveRule:
    ante = tuple(c for c in r.antecedent if not is_horizon_bound(c, n))
    disj = tuple(tuple(c for c in d if not is_horizon_bound(c, n)) for d in r.disjuncts)
    return ReactiveRule(r.id, ante, disj)
