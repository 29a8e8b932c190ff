"""Translation of n-distant KELPS frameworks into ASP programs."""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Iterable, Sequence

from .asp import AspProgram, AspRule, Atom, BodyItem, Comparison, Literal, check_weak, parse_program, unsafe_variables
from .core import (
    KIND_OPS,
    Condition,
    DiffClosure,
    Framework,
    PostEntry,
    ReactiveRule,
    TemporalConstraint,
    TimeExpr,
    is_horizon_bound,
    totally_ordered_max,
    unique,
)
from .errors import NotNDistant, UnsafeRule, UnsupportedConstraint
from .terms import Fn, Interval, Num, Sym, Term, Var, make_arith, tup

__all__ = [
    "ActionDecl",
    "EmitOptions",
    "translate",
    "emit_rule_mapping",
    "emit_preferences",
    "event_theory",
    "generic_constraint",
    "choice_rule",
    "badrule_weak",
    "max_definition",
    "post_rule",
    "pre_rule",
    "parse_action_decl",
]


@dataclass(frozen=True)
class ActionDecl:
    """An action allowed to happen without support (proactive/preemptive)."""

    template: Term
    guard: tuple[BodyItem, ...] = ()

    def matches(self, act: Term) -> bool:
        name, arity = _functor(self.template)
        return _functor(act) == (name, arity)

    def rule(self) -> AspRule:
        return AspRule.normal(Atom("action", (self.template,)), self.guard, tag="action")


def _functor(t: Term) -> tuple[str, int]:
    if isinstance(t, Fn):
        return t.name, len(t.args)
    if isinstance(t, Sym):
        return t.name, 0
    return "", -1


def parse_action_decl(text: str) -> ActionDecl:
    """``"send_guard"`` or ``"order(I,M) :- item(I), amount(M)"``."""
    text = text.strip().rstrip(".")
    rule = parse_program(f"action({text.split(':-')[0].strip()})" + (f" :- {text.split(':-', 1)[1]}" if ":-" in text else "") + ".").rules[0]
    decl = ActionDecl(rule.head[0].args[0], rule.body)
    loose = unsafe_variables(decl.rule())
    if loose:
        raise UnsafeRule(f"action declaration {text!r} leaves {', '.join(loose)} unguarded")
    return decl


@dataclass
class EmitOptions:
    horizon: int | None = None
    prefer_disjuncts: bool = False
    weak: tuple[AspRule, ...] = ()
    proactive: tuple[ActionDecl, ...] = ()
    badrule: bool = False

    def __post_init__(self):
        if self.horizon is not None and self.horizon < 0:
            raise ValueError("horizon must be non-negative")
        self.weak = tuple(self.weak)
        self.proactive = tuple(self.proactive)

    def is_proactive(self, act: Term) -> bool:
        return any(d.matches(act) for d in self.proactive)


# ---------------------------------------------------------------- literal mapping


def _time_term(t: TimeExpr) -> Term:
    return t.to_term()


def condition_items(c: Condition) -> list[BodyItem]:
    if c.kind == "event":
        return [Literal(Atom("happens", (c.atom_term(), _time_term(c.time))))]
    if c.kind == "fluent":
        return [Literal(Atom("holds", (c.atom_term(), _time_term(c.time))), c.negated)]
    if c.kind == "aux":
        if c.is_builtin:
            return [Comparison(c.name, c.args[0], c.args[1])]
        return [Literal(Atom(c.name, c.args), c.negated)]
    tc = c.constraint
    if tc.kind in KIND_OPS:
        return [Comparison(KIND_OPS[tc.kind], _time_term(tc.args[0]), _time_term(tc.args[1]))]
    if tc.kind == "max3":
        return [Literal(Atom("max", tuple(_time_term(a) for a in tc.args)))]
    raise UnsupportedConstraint(f"temporal constraint {tc.kind!r} is outside the supported language")


def _time_lit(t: Term) -> Literal:
    return Literal(Atom("time", (t,)))


def _fresh(base: str, used: set[str]) -> str:
    if base not in used:
        used.add(base)
        return base
    i = 1
    while f"{base}{i}" in used:
        i += 1
    used.add(f"{base}{i}")
    return f"{base}{i}"


def _rename(rule: AspRule, old: str, new: str) -> AspRule:
    """Rename variable ``old`` to ``new``, moving any existing ``new`` aside."""
    if old == new:
        return rule
    names = set(rule.vars())
    mapping: dict[str, Term] = {}
    if new in names:
        mapping[new] = Var(_fresh(new, names | {new}))
    mapping[old] = Var(new)
    return rule.subst(mapping)


def _dedupe(items: Iterable[BodyItem]) -> list[BodyItem]:
    return list(dict.fromkeys(items))


def _constraints(conds: Iterable[Condition]) -> list[TemporalConstraint]:
    return [c.constraint for c in conds if c.kind == "temporal"]


def _max_chain(names: Sequence[str], used: set[str]) -> tuple[list[BodyItem], Term]:
    """``max/3`` atoms computing the maximum of ``names``; returns items and result var."""
    items: list[BodyItem] = []
    acc: Term = Var(names[0])
    for v in names[1:]:
        out = Var(_fresh("M", used))
        items.append(Literal(Atom("max", (acc, Var(v), out))))
        acc = out
    return items, acc


def _max_of(names: Sequence[str], closure: DiffClosure, used: set[str]) -> tuple[list[BodyItem], Term, bool]:
    if not names:
        return [], Num(0), False
    top = totally_ordered_max(names, closure)
    if top is not None:
        return [], Var(top), False
    items, acc = _max_chain(names, used)
    return items, acc, True


def _domain_guard(var: str, pool: Sequence[Condition]) -> BodyItem | None:
    for c in pool:
        if c.kind == "aux" and not c.is_builtin and not c.negated and len(c.args) == 1 and c.args[0] == Var(var):
            return Literal(Atom(c.name, c.args))
    return None


def _make_safe(rule: AspRule, time_vars: set[str], pool: Sequence[Condition]) -> AspRule:
    extra: list[BodyItem] = []
    for v in unsafe_variables(rule):
        if v in time_vars:
            extra.append(_time_lit(Var(v)))
            continue
        guard = _domain_guard(v, pool)
        if guard is None:
            raise UnsafeRule(f"variable {v} in {rule} has no positive occurrence and no unary domain guard")
        extra.append(guard)
    return rule.with_body(_dedupe(rule.body + tuple(extra))) if extra else rule


# ---------------------------------------------------------------- per-rule mapping


@dataclass
class _RuleContext:
    rule: ReactiveRule
    n: int | None
    args: Fn
    ant_time: Term  # head time of the ant rule, in the rule's own variables
    uses_max: bool = False
    rename: bool = True  # False keeps the KELPS variable names (used by the hybrid loop)

    def keep(self, c: Condition) -> bool:
        return not is_horizon_bound(c, self.n)


def _ant_rule(r: ReactiveRule, n: int | None, rename: bool = True) -> tuple[AspRule, _RuleContext]:
    used = set(v for c in r.all_conditions for v in c.vars())
    ante = [c for c in r.antecedent if not is_horizon_bound(c, n)]
    closure = DiffClosure(_constraints(r.antecedent))
    max_items, head_time, chained = _max_of(r.t_vars, closure, used)
    args = tup(*(Var(v) for v in r.shared_x + r.shared_t))
    ctx = _RuleContext(r, n, args, head_time, chained, rename)
    body: list[BodyItem] = []
    for c in ante:
        body += condition_items(c)
    body += max_items
    body += [_time_lit(Var(v)) for v in r.t_vars]
    if chained:
        body.append(_time_lit(head_time))
    rule = AspRule.normal(Atom("ant", (Num(r.id), args, head_time)), _dedupe(body), tag="ant", source=r.id)
    if isinstance(head_time, Var) and rename:
        rule = _rename(rule, head_time.name, "Ts")
    return _make_safe(rule, set(r.t_vars), r.antecedent), ctx


def _ant_literal(ctx: _RuleContext, used: set[str]) -> tuple[Literal, Term]:
    """The ant atom for cons/supported bodies and the term naming its time."""
    t = ctx.ant_time
    if isinstance(t, Var) and t.name not in ctx.rule.shared_t:
        t = Var(_fresh("Time", used))
    return Literal(Atom("ant", (Num(ctx.rule.id), ctx.args, t))), t


def _cons_rules(ctx: _RuleContext, prefer: bool) -> list[AspRule]:
    r = ctx.rule
    out = []
    for i, disjunct in enumerate(r.disjuncts):
        used = set(v for c in r.all_conditions for v in c.vars())
        ant_lit, time = _ant_literal(ctx, used)
        conds = [c for c in disjunct if ctx.keep(c)]
        names = unique(v for c in disjunct for v in c.time_vars())
        closure = DiffClosure(_constraints(r.antecedent) + _constraints(disjunct))
        max_items, ts, chained = _max_of(names, closure, used)
        ctx.uses_max |= chained
        body: list[BodyItem] = [ant_lit]
        for c in conds:
            body += condition_items(c)
        body += max_items
        body += [_time_lit(Var(v)) for v in r.disjunct_only_time_vars(i)]
        if chained or not isinstance(ts, Var) or ts.name in r.t_vars:
            body.append(_time_lit(ts))
        head_args = (Num(r.id),) + ((Num(i + 1),) if prefer else ()) + (ctx.args, time, ts)
        rule = AspRule.normal(Atom("cons", head_args), _dedupe(body), tag="cons", source=r.id)
        if isinstance(ts, Var) and ts.name not in r.t_vars and ctx.rename:
            rule = _rename(rule, ts.name, "Ts")
        out.append(_make_safe(rule, set(r.time_var_set), r.all_conditions))
    return out


def _substitute_conditions(conds: list[Condition], var: str, target: TimeExpr) -> list[Condition]:
    return [c.bind({var: target}) for c in conds]


def _eliminate(
    conds: list[Condition], eliminable: set[str]
) -> tuple[list[Condition], dict[str, TimeExpr]]:
    """Substitute away eliminable variables fixed by an equality."""
    solved: dict[str, TimeExpr] = {}
    changed = True
    while changed:
        changed = False
        for idx, c in enumerate(conds):
            if c.kind != "temporal" or c.constraint.kind != "eq":
                continue
            a, b = c.constraint.args
            for x, y in ((a, b), (b, a)):
                if x.var in eliminable and x.var != y.var:
                    target = TimeExpr(y.var, y.offset - x.offset)
                    rest = conds[:idx] + conds[idx + 1 :]
                    conds = _substitute_conditions(rest, x.var, target)
                    solved = {k: v.bind({x.var: target}) for k, v in solved.items()}
                    solved[x.var] = target
                    eliminable.discard(x.var)
                    changed = True
                    break
            if changed:
                break
    return conds, solved


def _supported_rules(ctx: _RuleContext, opts: EmitOptions) -> list[AspRule]:
    r = ctx.rule
    out = []
    for disjunct in r.disjuncts:
        conds = [c for c in disjunct if ctx.keep(c)]
        for k, act in enumerate(conds):
            if act.kind != "event":
                continue
            if opts.is_proactive(act.atom_term()):
                continue
            out.append(_supported_rule(ctx, conds, k))
    return out


def _supported_rule(ctx: _RuleContext, conds: list[Condition], k: int) -> AspRule:
    r = ctx.rule
    act = conds[k]
    act_var = act.time.var
    earlier_atoms = [c for c in conds[:k] if c.kind in ("fluent", "event", "aux")]
    rest_atoms = [c for c in conds[k + 1 :] if c.kind in ("fluent", "event", "aux")]
    temporal = [c for c in conds if c.kind == "temporal"]

    ante_t = set(r.shared_t)
    earlier_vars = {v for c in earlier_atoms for v in c.time_vars()}
    act_vars = set(act.time_vars())
    bound_t = ante_t | earlier_vars | act_vars
    earlier_fluent_only = {
        v
        for v in earlier_vars
        if all(c.kind == "fluent" for c in earlier_atoms if v in c.time_vars())
        and v not in ante_t
        and v not in act_vars
    }
    all_t = {v for c in conds for v in c.time_vars()}
    rest_only = all_t - bound_t
    eliminable = (earlier_fluent_only | rest_only) - {act_var}

    pieces = earlier_atoms + [act] + rest_atoms + temporal
    pieces, solved = _eliminate(pieces, set(eliminable))
    n_e = len(earlier_atoms)
    earlier_atoms = pieces[:n_e]
    act = pieces[n_e]
    rest_atoms = pieces[n_e + 1 : n_e + 1 + len(rest_atoms)]
    temporal = pieces[n_e + 1 + len(rest_atoms) :]

    used = set(v for c in r.all_conditions for v in c.vars())
    ant_lit, ant_time = _ant_literal(ctx, used)
    body: list[BodyItem] = [ant_lit]
    for c in earlier_atoms:
        body += condition_items(c)

    # rest: positive aux literals always, other aux only once their variables are bound
    bound_data = set(r.shared_x) | {v for c in earlier_atoms + [act] for v in c.data_vars() if c.kind != "aux" or not c.negated}
    rest_aux = [c for c in rest_atoms if c.kind == "aux"]
    for c in rest_aux:
        if not c.is_builtin and not c.negated:
            body += condition_items(c)
            bound_data |= set(c.data_vars())
    for c in rest_aux:
        if (c.is_builtin or c.negated) and set(c.data_vars()) <= bound_data:
            body += condition_items(c)

    for c in temporal:
        body += condition_items(c)

    # sequencing: antecedent and earlier stamps strictly before act and rest stamps
    closure = DiffClosure([c.constraint for c in temporal])
    early: list[TimeExpr] = []
    if r.t_vars:
        early.append(_as_time_expr(ant_time))
    early += [c.time for c in earlier_atoms if c.time is not None]
    late = [act.time] + [c.time for c in rest_atoms if c.time is not None]
    for e in unique(early):
        for l in unique(late):
            if e is None or l is None:
                continue
            if not closure.entails_le(e, l, strict=True):
                body.append(Comparison("<", e.to_term(), l.to_term()))
                closure = DiffClosure([c.constraint for c in temporal] + [TemporalConstraint("lt", (e, l))])

    # guards: earlier variables still present, the act time, rest-only variables or their images
    guards: list[Term] = []
    for v in unique(x for c in earlier_atoms for x in c.time_vars()):
        if v not in ante_t:
            guards.append(Var(v))
    guards.append(act.time.to_term())
    for v in sorted(rest_only, key=_order_key(conds)):
        guards.append(solved[v].to_term() if v in solved else Var(v))
    body += [_time_lit(g) for g in unique(guards) if not isinstance(g, Num)]

    rule = AspRule.normal(Atom("supported", (act.atom_term(), act.time.to_term())), _dedupe(body), tag="supported", source=r.id)
    if ctx.rename:
        rule = _rename(rule, act_var, "Ts")
    return _make_safe(rule, set(r.time_var_set), r.all_conditions)


def _as_time_expr(t: Term) -> TimeExpr:
    if isinstance(t, Var):
        return TimeExpr(t.name)
    if isinstance(t, Num):
        return TimeExpr.const(t.value)
    raise UnsupportedConstraint(f"cannot use {t} as a time")


def _order_key(conds: Sequence[Condition]):
    order = {v: i for i, v in enumerate(unique(v for c in conds for v in c.time_vars()))}
    return lambda v: order.get(v, len(order))


def emit_rule_mapping(
    r: ReactiveRule, opts: EmitOptions | None = None, n: int | None = None, rename: bool = True
) -> list[AspRule]:
    """The ant rule, one cons rule per disjunct and the supported rules of ``r``.

    With ``rename=False`` the rules keep the variable names of ``r`` instead of
    the conventional ``Ts`` for head times.
    """
    opts = opts or EmitOptions()
    n = opts.horizon if n is None else n
    ant, ctx = _ant_rule(r, n, rename)
    cons = _cons_rules(ctx, opts.prefer_disjuncts)
    supported = _supported_rules(ctx, opts)
    return [ant, *cons, *supported]


# ---------------------------------------------------------------- fixed parts


def generic_constraint(prefer: bool = False, badrule: bool = False) -> list[AspRule]:
    x, ts, ts1, i = Var("X"), Var("Ts"), Var("Ts1"), Var("I")
    ident = Var("ID")
    body = (Literal(Atom("ant", (ident, x, ts))), Literal(Atom("consTrue", (ident, x, ts)), True), _time_lit(ts))
    if badrule:
        first = AspRule.normal(Atom("badRule", (ident, x, ts)), body, tag="analysis")
    else:
        first = AspRule.constraint(body, tag="generic")
    cons_args = (ident, i, x, ts, ts1) if prefer else (ident, x, ts, ts1)
    cons_true = AspRule.normal(
        Atom("consTrue", (ident, x, ts)),
        (Literal(Atom("cons", cons_args)), _time_lit(ts1)),
        tag="generic",
    )
    return [first, cons_true]


def choice_rule(guard: str = "supported", start: int = 0) -> AspRule:
    """Choice over supported (or declared) actions strictly after ``start``."""
    act, ts = Var("Act"), Var("Ts")
    if guard == "supported":
        body = (Literal(Atom("supported", (act, ts))), _time_lit(ts), Comparison(">", ts, Num(start)))
    else:
        body = (Literal(Atom("action", (act,))), Comparison(">", ts, Num(start)), _time_lit(ts))
    return AspRule("choice", (Atom("happens", (act, ts)),), body, 0, 1, tag="choice")


def event_theory() -> list[AspRule]:
    p, e, ts = Var("P"), Var("E"), Var("Ts")
    ts_1 = _minus_one(ts)
    return [
        AspRule.normal(
            Atom("holds", (p, ts)),
            (Literal(Atom("initiates", (e, p))), Literal(Atom("happens", (e, ts))), _time_lit(ts)),
            tag="event-theory",
        ),
        AspRule.normal(
            Atom("holds", (p, ts)),
            (
                Literal(Atom("holds", (p, ts_1))),
                Literal(Atom("broken", (p, ts)), True),
                _time_lit(ts_1),
                _time_lit(ts),
            ),
            tag="event-theory",
        ),
        AspRule.normal(
            Atom("broken", (p, ts)),
            (Literal(Atom("terminates", (e, p))), Literal(Atom("happens", (e, ts))), _time_lit(ts)),
            tag="event-theory",
        ),
    ]


def _minus_one(t: Term) -> Term:
    return make_arith("-", t, Num(1))


def max_definition() -> list[AspRule]:
    x, y = Var("X"), Var("Y")
    guards = (_time_lit(x), _time_lit(y))
    return [
        AspRule.normal(Atom("max", (x, y, x)), guards + (Comparison(">=", x, y),), tag="max"),
        AspRule.normal(Atom("max", (x, y, y)), guards + (Comparison("<", x, y),), tag="max"),
    ]


def post_rule(entry: PostEntry) -> AspRule:
    head = Atom(entry.kind, (entry.event, entry.fluent))
    body: list[BodyItem] = []
    for c in entry.guard:
        body += condition_items(c)
    rule = AspRule.normal(head, body, tag="post")
    loose = unsafe_variables(rule)
    if loose:
        raise UnsafeRule(f"{entry.kind} entry {rule} needs guards for {', '.join(loose)}")
    return rule


def pre_rule(body_conds: Sequence[Condition]) -> AspRule:
    events = [c for c in body_conds if c.kind == "event"]
    has_fluent = any(c.kind == "fluent" for c in body_conds)
    stamp = events[0].time if events else None
    conds = list(body_conds)
    ts: Term | None = None
    if stamp is not None and stamp.var is not None:
        names = {v for c in conds for v in c.vars()}
        target = "Ts" if "Ts" not in names or stamp == TimeExpr("Ts") else _fresh("Ts", set(names))
        conds = [c.bind({stamp.var: TimeExpr(target, -stamp.offset)}) for c in conds]
        ts = Var(target)
    body: list[BodyItem] = []
    for c in conds:
        body += condition_items(c)
    if ts is not None:
        if has_fluent:
            body.append(_time_lit(_minus_one(ts)))
        body.append(_time_lit(ts))
    return AspRule.constraint(_dedupe(body), tag="pre")


def emit_preferences(opts: EmitOptions) -> list[AspRule]:
    out = []
    if opts.prefer_disjuncts:
        ident, i, args, t, ts = (Var(v) for v in ("ID", "I", "Args", "T", "Ts"))
        out.append(
            AspRule(
                "weak",
                (),
                (Literal(Atom("cons", (ident, i, args, t, ts))),),
                weight=Num(1),
                level=i,
                terms=(ident, i, args, t, ts),
                tag="preference",
            )
        )
    for w in opts.weak:
        if w.kind != "weak":
            raise UnsafeRule(f"preference entries must be weak constraints: {w}")
        out.append(_tagged(check_weak(w), "preference"))
    return out


def _tagged(r: AspRule, tag: str) -> AspRule:
    return replace(r, tag=tag)


def badrule_weak(prefs: Sequence[AspRule]) -> AspRule:
    levels = [p.level.value for p in prefs if isinstance(p.level, Num)]
    top = max(levels, default=0) + 1
    ident, x, ts = Var("ID"), Var("X"), Var("Ts")
    return AspRule(
        "weak",
        (),
        (Literal(Atom("badRule", (ident, x, ts))),),
        weight=Num(1),
        level=Num(top),
        terms=(ident, x, ts),
        tag="analysis",
    )


# ---------------------------------------------------------------- whole program


def translate(f: Framework, opts: EmitOptions | None = None) -> AspProgram:
    opts = opts or EmitOptions()
    n = opts.horizon if opts.horizon is not None else f.horizon
    if n is None:
        raise NotNDistant("framework has no horizon; convert it with to_n_distant first")
    prog = AspProgram()
    prog.add(AspRule.fact(Atom("time", (Interval(Num(0), Num(n)),)), tag="time"))
    prog.extend(AspRule.fact(_as_atom(a), tag="aux") for a in f.aux)
    prog.extend(AspRule.fact(Atom("holds", (p, Num(0))), tag="initial") for p in f.initial_state)
    prog.extend(AspRule.fact(Atom("happens", (e, Num(t))), tag="external") for e, t in f.observations)
    prog.extend(post_rule(p) for p in f.causal.post)

    mappings = []
    uses_max = False
    for r in f.rules:
        ant, ctx = _ant_rule(r, n)
        cons = _cons_rules(ctx, opts.prefer_disjuncts)
        supported = _supported_rules(ctx, opts)
        uses_max |= ctx.uses_max or any(
            isinstance(b, Literal) and b.atom.name == "max" for rule in (ant, *cons, *supported) for b in rule.body
        )
        mappings.append((ant, cons, supported))
    for ant, cons, _ in mappings:
        prog.add(ant)
        prog.extend(cons)
    prog.extend(generic_constraint(opts.prefer_disjuncts, opts.badrule))
    supported_all = [s for _, _, sup in mappings for s in sup]
    prog.extend(supported_all)
    if supported_all:
        prog.add(choice_rule("supported"))
    if opts.proactive:
        prog.extend(d.rule() for d in opts.proactive)
        prog.add(choice_rule("action"))
    prog.extend(pre_rule(body) for body in f.causal.pre)
    prog.extend(event_theory())
    if uses_max:
        prog.extend(max_definition())
    prefs = emit_preferences(opts)
    prog.extend(prefs)
    if opts.badrule:
        prog.add(badrule_weak(prefs))
    return prog


def _as_atom(t: Term) -> Atom:
    if isinstance(t, Fn):
        return Atom(t.name, t.args)
    if isinstance(t, Sym):
        return Atom(t.name)
    raise UnsafeRule(f"aux entry {t} is not an atom")

