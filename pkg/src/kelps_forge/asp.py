"""ASP intermediate representation, text form and structural comparison."""

from __future__ import annotations

import re
from dataclasses import dataclass, field, replace
from typing import Iterable, Iterator, Mapping, Sequence

from .errors import ParseError, UnsafeWeakConstraint
from .terms import (
    Arith,
    Fn,
    Interval,
    Neg,
    Num,
    Sym,
    Term,
    Value,
    Var,
    bind_terms,
    evaluate,
    from_value,
    is_ground,
    make_arith,
    match,
    render_term,
    substitute,
    term_vars,
    tup,
    value_key,
)

__all__ = [
    "Atom",
    "Literal",
    "Comparison",
    "AspRule",
    "AspProgram",
    "serialize",
    "parse_program",
    "parse_rule",
    "parse_atom_value",
    "rules_equivalent",
    "programs_equivalent",
    "unsafe_variables",
    "tup",
]


@dataclass(frozen=True)
class Atom:
    name: str
    args: tuple[Term, ...] = ()

    def as_term(self) -> Term:
        return Fn(self.name, self.args) if self.args else Sym(self.name)

    def vars(self) -> Iterator[str]:
        for a in self.args:
            yield from term_vars(a)

    def subst(self, mapping: Mapping[str, Term]) -> Atom:
        return Atom(self.name, tuple(substitute(a, mapping) for a in self.args))

    def __str__(self) -> str:
        return render_term(self.as_term())


@dataclass(frozen=True)
class Literal:
    atom: Atom
    negated: bool = False

    def vars(self) -> Iterator[str]:
        return self.atom.vars()

    def subst(self, mapping: Mapping[str, Term]) -> Literal:
        return Literal(self.atom.subst(mapping), self.negated)

    def __str__(self) -> str:
        return ("not " if self.negated else "") + str(self.atom)


@dataclass(frozen=True)
class Comparison:
    op: str  # < <= = != > >=
    left: Term
    right: Term

    def vars(self) -> Iterator[str]:
        yield from term_vars(self.left)
        yield from term_vars(self.right)

    def subst(self, mapping: Mapping[str, Term]) -> Comparison:
        return Comparison(self.op, substitute(self.left, mapping), substitute(self.right, mapping))

    def holds(self) -> bool:
        a, b = evaluate(self.left), evaluate(self.right)
        return compare_values(self.op, a, b)

    def __str__(self) -> str:
        return f"{render_term(self.left)}{self.op}{render_term(self.right)}"


def compare_values(op: str, a: Value, b: Value) -> bool:
    if op == "=":
        return a == b
    if op == "!=":
        return a != b
    ka, kb = value_key(a), value_key(b)
    return {"<": ka < kb, "<=": ka <= kb, ">": ka > kb, ">=": ka >= kb}[op]


BodyItem = Literal | Comparison


@dataclass(frozen=True)
class AspRule:
    """One ASP statement.

    ``tag`` records which mapping item produced the rule and ``source`` the
    reactive rule id; neither takes part in equality.
    """

    kind: str  # fact | normal | choice | constraint | weak
    head: tuple[Atom, ...] = ()
    body: tuple[BodyItem, ...] = ()
    lower: int | None = None
    upper: int | None = None
    weight: Term | None = None
    level: Term | None = None
    terms: tuple[Term, ...] = ()
    tag: str = field(default="", compare=False)
    source: int | None = field(default=None, compare=False)

    @staticmethod
    def fact(atom: Atom, tag: str = "", source: int | None = None) -> AspRule:
        return AspRule("fact", (atom,), tag=tag, source=source)

    @staticmethod
    def normal(head: Atom, body: Sequence[BodyItem], tag: str = "", source: int | None = None) -> AspRule:
        if not body:
            return AspRule.fact(head, tag, source)
        return AspRule("normal", (head,), tuple(body), tag=tag, source=source)

    @staticmethod
    def constraint(body: Sequence[BodyItem], tag: str = "", source: int | None = None) -> AspRule:
        return AspRule("constraint", (), tuple(body), tag=tag, source=source)

    def vars(self) -> list[str]:
        names = []
        for h in self.head:
            names += list(h.vars())
        for b in self.body:
            names += list(b.vars())
        for t in (self.weight, self.level, *self.terms):
            if t is not None:
                names += list(term_vars(t))
        return list(dict.fromkeys(names))

    def subst(self, mapping: Mapping[str, Term]) -> AspRule:
        def s(t):
            return None if t is None else substitute(t, mapping)

        return replace(
            self,
            head=tuple(h.subst(mapping) for h in self.head),
            body=tuple(b.subst(mapping) for b in self.body),
            weight=s(self.weight),
            level=s(self.level),
            terms=tuple(substitute(t, mapping) for t in self.terms),
        )

    def with_body(self, body: Sequence[BodyItem]) -> AspRule:
        body = tuple(body)
        kind = self.kind
        if kind == "fact" and body:
            kind = "normal"
        elif kind == "normal" and not body:
            kind = "fact"
        return replace(self, kind=kind, body=body)

    def __str__(self) -> str:
        return serialize_rule(self)


@dataclass
class AspProgram:
    rules: list[AspRule] = field(default_factory=list)

    def add(self, rule: AspRule) -> None:
        self.rules.append(rule)

    def extend(self, rules: Iterable[AspRule]) -> None:
        self.rules.extend(rules)

    def __iter__(self):
        return iter(self.rules)

    def __len__(self) -> int:
        return len(self.rules)

    def tagged(self, tag: str) -> list[AspRule]:
        return [r for r in self.rules if r.tag == tag]

    def text(self, comments: bool = False) -> str:
        return serialize(self, comments)


# ---------------------------------------------------------------- serialization


def _body_text(body: Sequence[BodyItem]) -> str:
    return ", ".join(str(b) for b in body)


def serialize_rule(r: AspRule) -> str:
    if r.kind == "fact" or (r.kind == "normal" and not r.body):
        return f"{r.head[0]}."
    if r.kind == "normal":
        return f"{r.head[0]} :- {_body_text(r.body)}."
    if r.kind == "constraint":
        return f":- {_body_text(r.body)}." if r.body else ":- ."
    if r.kind == "choice":
        lo = "" if r.lower is None else str(r.lower)
        hi = "" if r.upper is None else str(r.upper)
        head = f"{lo}{{{'; '.join(str(h) for h in r.head)}}}{hi}"
        return f"{head} :- {_body_text(r.body)}." if r.body else f"{head}."
    if r.kind == "weak":
        extra = ",".join(render_term(t) for t in r.terms)
        spec = f"{render_term(r.weight)}@{render_term(r.level)}"
        return f":~ {_body_text(r.body)}. [{spec}{', ' + extra if extra else ''}]"
    raise ValueError(f"unknown rule kind {r.kind!r}")


def serialize(p: AspProgram | Iterable[AspRule], comments: bool = False) -> str:
    lines = []
    last_tag = None
    for r in p:
        if comments and r.tag and r.tag != last_tag:
            src = f" (rule {r.source})" if r.source is not None else ""
            lines.append(f"% {r.tag}{src}")
            last_tag = r.tag
        lines.append(serialize_rule(r))
    return "\n".join(lines) + ("\n" if lines else "")


# ---------------------------------------------------------------- text parser

_ASP_TOKEN = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<comment>%[^\n]*)
  | (?P<int>\d+)
  | (?P<name>[a-z_][A-Za-z0-9_']*)
  | (?P<var>[A-Z][A-Za-z0-9_']*)
  | (?P<string>"(?:[^"\\]|\\.)*")
  | (?P<op>:-|:~|\.\.|<=|>=|!=|==|<|>|=|\+|-|\*|\(|\)|\{|\}|\[|\]|,|;|\.|@)
    """,
    re.VERBOSE,
)


class _AspParser:
    def __init__(self, text: str):
        self.toks: list[tuple[str, str, int]] = []
        pos = 0
        while pos < len(text):
            m = _ASP_TOKEN.match(text, pos)
            if m is None:
                line = text.count("\n", 0, pos) + 1
                raise ParseError(f"unexpected character {text[pos]!r} in ASP text", line, 1)
            if m.lastgroup not in ("ws", "comment"):
                self.toks.append((m.lastgroup, m.group(), text.count("\n", 0, pos) + 1))
            pos = m.end()
        self.toks.append(("eof", "", text.count("\n") + 1))
        self.i = 0

    def tok(self):
        return self.toks[self.i]

    def at(self, text: str) -> bool:
        k, t, _ = self.toks[self.i]
        return k == "op" and t == text

    def advance(self):
        t = self.toks[self.i]
        self.i += 1
        return t

    def expect(self, text: str):
        if not self.at(text):
            k, t, line = self.tok()
            raise ParseError(f"expected {text!r}, found {t or 'end of input'!r}", line, 1)
        return self.advance()

    def error(self, msg: str) -> ParseError:
        return ParseError(msg, self.tok()[2], 1)

    def term(self) -> Term:
        left = self.additive()
        if self.at(".."):
            self.advance()
            return Interval(left, self.additive())
        return left

    def additive(self) -> Term:
        left = self.multiplicative()
        while self.at("+") or self.at("-"):
            op = self.advance()[1]
            left = Arith(op, left, self.multiplicative())
        return left

    def multiplicative(self) -> Term:
        left = self.unary()
        while self.at("*"):
            self.advance()
            left = Arith("*", left, self.unary())
        return left

    def unary(self) -> Term:
        if self.at("-"):
            self.advance()
            inner = self.unary()
            return Num(-inner.value) if isinstance(inner, Num) else Neg(inner)
        return self.primary()

    def primary(self) -> Term:
        k, t, _ = self.tok()
        if k == "int":
            self.advance()
            return Num(int(t))
        if k == "var":
            self.advance()
            return Var(t)
        if k == "string":
            self.advance()
            return Sym(t)
        if k == "name":
            self.advance()
            if self.at("("):
                return Fn(t, self.term_tuple())
            return Sym(t)
        if self.at("("):
            return tup(*self.term_tuple())
        raise self.error(f"expected a term, found {t or 'end of input'!r}")

    def term_tuple(self) -> tuple[Term, ...]:
        self.expect("(")
        items = []
        if not self.at(")"):
            items.append(self.term())
            while self.at(","):
                self.advance()
                items.append(self.term())
        self.expect(")")
        return tuple(items)

    def atom(self) -> Atom:
        k, t, _ = self.tok()
        if k != "name":
            raise self.error(f"expected an atom, found {t!r}")
        self.advance()
        args = self.term_tuple() if self.at("(") else ()
        return Atom(t, args)

    def body_item(self) -> BodyItem:
        k, t, _ = self.tok()
        if k == "name" and t == "not":
            self.advance()
            return Literal(self.atom(), True)
        start = self.i
        if k == "name":
            a = self.atom()
            if not self._at_cmp():
                return Literal(a)
            self.i = start
        left = self.term()
        if not self._at_cmp():
            raise self.error("expected a comparison operator")
        op = self.advance()[1]
        op = "=" if op == "==" else op
        return Comparison(op, left, self.term())

    def _at_cmp(self) -> bool:
        k, t, _ = self.tok()
        return k == "op" and t in ("<", "<=", "=", "==", "!=", ">", ">=")

    def body(self, stop: str = ".") -> tuple[BodyItem, ...]:
        items = []
        if self.at(stop):
            return ()
        items.append(self.body_item())
        while self.at(","):
            self.advance()
            items.append(self.body_item())
        return tuple(items)

    def statement(self) -> AspRule:
        if self.at(":-"):
            self.advance()
            body = self.body()
            self.expect(".")
            return AspRule.constraint(body)
        if self.at(":~"):
            self.advance()
            body = self.body()
            self.expect(".")
            self.expect("[")
            weight = self.term()
            level: Term = Num(0)
            if self.at("@"):
                self.advance()
                level = self.term()
            terms = []
            while self.at(","):
                self.advance()
                terms.append(self.term())
            self.expect("]")
            return AspRule("weak", (), body, weight=weight, level=level, terms=tuple(terms))
        lower = upper = None
        k, t, _ = self.tok()
        if k == "int" or self.at("{"):
            if k == "int":
                lower = int(self.advance()[1])
            self.expect("{")
            heads = [self.atom()]
            while self.at(";") or self.at(","):
                self.advance()
                heads.append(self.atom())
            self.expect("}")
            if self.tok()[0] == "int":
                upper = int(self.advance()[1])
            body = ()
            if self.at(":-"):
                self.advance()
                body = self.body()
            self.expect(".")
            return AspRule("choice", tuple(heads), body, lower, upper)
        head = self.atom()
        if self.at(":-"):
            self.advance()
            body = self.body()
            self.expect(".")
            return AspRule.normal(head, body)
        self.expect(".")
        return AspRule.fact(head)


def parse_program(text: str) -> AspProgram:
    p = _AspParser(text)
    rules = []
    while p.tok()[0] != "eof":
        rules.append(p.statement())
    return AspProgram(rules)


def parse_rule(text: str) -> AspRule:
    prog = parse_program(text)
    if len(prog) != 1:
        raise ParseError(f"expected one rule, found {len(prog)}")
    return prog.rules[0]


def parse_atom_value(text: str) -> Value:
    """Parse a ground atom as printed by a solver into a Python value."""
    p = _AspParser(text)
    t = p.term()
    if p.tok()[0] != "eof":
        raise p.error(f"trailing input in atom {text!r}")
    return evaluate(t)


# ---------------------------------------------------------------- safety


def positive_vars(body: Sequence[BodyItem]) -> set[str]:
    out: set[str] = set()
    for b in body:
        if isinstance(b, Literal) and not b.negated:
            out.update(b.vars())
    return out


def unsafe_variables(r: AspRule) -> list[str]:
    """Variables not occurring in a positive, non-builtin body literal."""
    bound = positive_vars(r.body)
    return [v for v in r.vars() if v not in bound]


def check_weak(r: AspRule) -> AspRule:
    bound = positive_vars(r.body)
    loose = []
    for t in (r.weight, r.level, *r.terms):
        if t is not None:
            loose += [v for v in term_vars(t) if v not in bound]
    if loose:
        raise UnsafeWeakConstraint(f"weak constraint {r} uses unbound variable(s) {', '.join(sorted(set(loose)))}")
    return r


# ---------------------------------------------------------------- grounding against a set of atoms


def atom_index(atoms: Iterable[Value]) -> dict[tuple[str, int], list[Value]]:
    idx: dict[tuple[str, int], list[Value]] = {}
    for a in atoms:
        if isinstance(a, tuple):
            idx.setdefault((a[0], len(a) - 1), []).append(a)
        else:
            idx.setdefault((a, 0), []).append(a)
    return idx


def _atom_value(a: Atom, binding: Mapping[str, Value]) -> Value | None:
    t = substitute(a.as_term(), bind_terms(binding))
    if not is_ground(t):
        return None
    return evaluate(t)


def iter_body_matches(body: Sequence[BodyItem], atoms: set, index: dict, binding: dict | None = None) -> Iterator[dict]:
    """Enumerate bindings that make ``body`` true in the atom set."""
    binding = dict(binding or {})
    positives = [b for b in body if isinstance(b, Literal) and not b.negated]
    rest = [b for b in body if not (isinstance(b, Literal) and not b.negated)]

    def checks(bnd: dict) -> Iterator[dict]:
        pending = list(rest)
        progress = True
        while pending and progress:
            progress = False
            for b in list(pending):
                names = set(b.vars())
                if names <= set(bnd):
                    ok = _holds(b, bnd, atoms)
                    if not ok:
                        return
                    pending.remove(b)
                    progress = True
                elif isinstance(b, Comparison) and b.op == "=":
                    solved = _solve_eq(b, bnd)
                    if solved is not None:
                        if solved is False:
                            return
                        bnd = solved
                        pending.remove(b)
                        progress = True
        if pending:
            raise UnsafeWeakConstraint(f"cannot ground {', '.join(str(b) for b in pending)}")
        yield bnd

    def walk(i: int, bnd: dict) -> Iterator[dict]:
        if i == len(positives):
            yield from checks(bnd)
            return
        lit = positives[i]
        key = (lit.atom.name, len(lit.atom.args))
        pattern = lit.atom.as_term()
        for cand in index.get(key, ()):
            nb = match(pattern, cand, bnd)
            if nb is not None:
                yield from walk(i + 1, nb)

    yield from walk(0, binding)


def _holds(b: BodyItem, bnd: Mapping[str, Value], atoms: set) -> bool:
    if isinstance(b, Comparison):
        c = b.subst(bind_terms(bnd))
        return c.holds()
    v = _atom_value(b.atom, bnd)
    present = v in atoms
    return not present if b.negated else present


def _solve_eq(b: Comparison, bnd: dict):
    terms = bind_terms(bnd)
    left, right = substitute(b.left, terms), substitute(b.right, terms)
    for x, y in ((left, right), (right, left)):
        if isinstance(x, Var) and is_ground(y):
            out = dict(bnd)
            out[x.name] = evaluate(y)
            return out
    return None


# ---------------------------------------------------------------- structural equivalence

_FLIP = {">": "<", ">=": "<="}


def _norm_item(b: BodyItem) -> BodyItem:
    if isinstance(b, Comparison) and b.op in _FLIP:
        return Comparison(_FLIP[b.op], b.right, b.left)
    return b


def _bare(t: Term) -> Term:
    # "(x)" is just a parenthesised x for the solver
    while isinstance(t, Fn) and t.name == "" and len(t.args) == 1:
        t = t.args[0]
    return t


def _unify_term(a: Term, b: Term, m: dict, inv: dict) -> tuple[dict, dict] | None:
    a, b = _bare(a), _bare(b)
    if isinstance(a, Var) and isinstance(b, Var):
        x, y = m.get(a.name), inv.get(b.name)
        if x is None and y is None:
            m2, inv2 = dict(m), dict(inv)
            m2[a.name] = b.name
            inv2[b.name] = a.name
            return m2, inv2
        return (m, inv) if x == b.name and y == a.name else None
    if type(a) is not type(b):
        return None
    if isinstance(a, (Sym, Num)):
        return (m, inv) if a == b else None
    if isinstance(a, Fn):
        if a.name != b.name or len(a.args) != len(b.args):
            return None
        return _unify_seq(a.args, b.args, m, inv)
    if isinstance(a, Arith):
        if a.op != b.op:
            return None
        return _unify_seq((a.left, a.right), (b.left, b.right), m, inv)
    if isinstance(a, Neg):
        return _unify_term(a.arg, b.arg, m, inv)
    if isinstance(a, Interval):
        return _unify_seq((a.low, a.high), (b.low, b.high), m, inv)
    return None


def _unify_seq(xs, ys, m, inv):
    if len(xs) != len(ys):
        return None
    for x, y in zip(xs, ys):
        res = _unify_term(x, y, m, inv)
        if res is None:
            return None
        m, inv = res
    return m, inv


def _unify_item(a: BodyItem, b: BodyItem, m, inv) -> list[tuple[dict, dict]]:
    if isinstance(a, Literal) and isinstance(b, Literal):
        if a.negated != b.negated or a.atom.name != b.atom.name:
            return []
        res = _unify_seq(a.atom.args, b.atom.args, m, inv)
        return [res] if res else []
    if isinstance(a, Comparison) and isinstance(b, Comparison):
        if a.op != b.op:
            return []
        out = []
        res = _unify_seq((a.left, a.right), (b.left, b.right), m, inv)
        if res:
            out.append(res)
        if a.op in ("=", "!="):
            res = _unify_seq((a.left, a.right), (b.right, b.left), m, inv)
            if res:
                out.append(res)
        return out
    return []


def _drop_redundant_time(body: Sequence[BodyItem]) -> list[BodyItem]:
    others = set()
    for b in body:
        if isinstance(b, Literal) and not b.negated and b.atom.name != "time":
            others.update(b.vars())
    out = []
    for b in body:
        if (
            isinstance(b, Literal)
            and not b.negated
            and b.atom.name == "time"
            and len(b.atom.args) == 1
            and isinstance(b.atom.args[0], Var)
            and b.atom.args[0].name in others
        ):
            continue
        out.append(b)
    return out


def rules_equivalent(a: AspRule, b: AspRule, ignore_redundant_time: bool = False) -> bool:
    """Equality up to variable renaming, body order and comparison orientation."""
    if a.kind != b.kind and {a.kind, b.kind} != {"fact", "normal"}:
        return False
    if len(a.head) != len(b.head) or (a.lower, a.upper) != (b.lower, b.upper):
        return False
    body_a = [_norm_item(x) for x in a.body]
    body_b = [_norm_item(x) for x in b.body]
    if ignore_redundant_time:
        body_a, body_b = _drop_redundant_time(body_a), _drop_redundant_time(body_b)
    if len(body_a) != len(body_b):
        return False
    start = _unify_seq(
        tuple(h.as_term() for h in a.head) + tuple(x for x in (a.weight, a.level) if x is not None) + a.terms,
        tuple(h.as_term() for h in b.head) + tuple(x for x in (b.weight, b.level) if x is not None) + b.terms,
        {},
        {},
    )
    if start is None:
        return False

    def search(i: int, used: frozenset, m, inv) -> bool:
        if i == len(body_a):
            return True
        for j, item in enumerate(body_b):
            if j in used:
                continue
            for m2, inv2 in _unify_item(body_a[i], item, m, inv):
                if search(i + 1, used | {j}, m2, inv2):
                    return True
        return False

    return search(0, frozenset(), *start)


@dataclass
class ProgramDiff:
    only_left: list[AspRule]
    only_right: list[AspRule]

    def __bool__(self) -> bool:
        return not self.only_left and not self.only_right

    def __str__(self) -> str:
        lines = [f"- {r}" for r in self.only_left] + [f"+ {r}" for r in self.only_right]
        return "\n".join(lines) or "equivalent"


def programs_equivalent(
    left: Iterable[AspRule], right: Iterable[AspRule], ignore_redundant_time: bool = False
) -> ProgramDiff:
    """Multiset comparison of two programs modulo renaming and reordering."""
    rest = list(right)
    only_left = []
    for r in left:
        for j, s in enumerate(rest):
            if rules_equivalent(r, s, ignore_redundant_time):
                del rest[j]
                break
        else:
            only_left.append(r)
    return ProgramDiff(only_left, rest)


def contains_rules(program: Iterable[AspRule], expected: Iterable[AspRule]) -> list[AspRule]:
    """Rules of ``expected`` that have no equivalent in ``program``."""
    rules = list(program)
    return [e for e in expected if not any(rules_equivalent(e, r) for r in rules)]


def canonical_rule(r: AspRule) -> AspRule:
    """Rename variables to V1, V2, ... in order of first appearance."""
    mapping = {v: Var(f"V{i + 1}") for i, v in enumerate(r.vars())}
    return r.subst(mapping)


def value_term(v: Value) -> Term:
    return from_value(v)


def fold(t: Term) -> Term:
    """Constant-fold arithmetic inside a term."""
    if isinstance(t, Arith):
        return make_arith(t.op, fold(t.left), fold(t.right))
    if isinstance(t, Fn):
        return Fn(t.name, tuple(fold(a) for a in t.args))
    if isinstance(t, Neg):
        inner = fold(t.arg)
        return Num(-inner.value) if isinstance(inner, Num) else Neg(inner)
    return t
