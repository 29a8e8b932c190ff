"""Surface syntax for KELPS frameworks (``.kelps`` files).

Example::

    initially door_locked.
    observe alarm at 2.
    terminates(unlock, door_locked).
    false <- evacuate@T+1, door_locked@T.
    alarm@T -> evacuate@T1, T < T1.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field, replace

from .core import (
    CausalTheory,
    Condition,
    Framework,
    PostEntry,
    ReactiveRule,
    TimeExpr,
    conditions_text,
    to_n_distant,
    validate_framework,
)
from .errors import HorizonViolation, ParseError, ValidationError
from .terms import Arith, Fn, Neg, Num, Sym, Term, Var, is_ground, make_arith, render_term, term_vars

KEYWORDS = {"initially", "observe", "aux", "initiates", "terminates", "false", "not", "true", "max", "if", "at"}

_TOKEN = re.compile(
    r"""
    (?P<ws>[ \t\r\f\v]+)
  | (?P<nl>\n)
  | (?P<comment>%[^\n]*)
  | (?P<directive>\#[a-z]+)
  | (?P<int>\d+)
  | (?P<name>[a-z][A-Za-z0-9_]*)
  | (?P<var>[A-Z_][A-Za-z0-9_]*)
  | (?P<op>->|<-|<=|>=|!=|<|>|=|\+|-|\*|\(|\)|,|\.|@|\||/)
    """,
    re.VERBOSE,
)


@dataclass(frozen=True)
class Token:
    kind: str
    text: str
    line: int
    col: int


def tokenize(text: str) -> list[Token]:
    tokens = []
    line, line_start, pos = 1, 0, 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None:
            raise ParseError(f"unexpected character {text[pos]!r}", line, pos - line_start + 1)
        kind = m.lastgroup
        if kind == "nl":
            line += 1
            line_start = m.end()
        elif kind not in ("ws", "comment"):
            tokens.append(Token(kind, m.group(), line, m.start() - line_start + 1))
        pos = m.end()
    tokens.append(Token("eof", "", line, pos - line_start + 1))
    return tokens


@dataclass
class RawCond:
    """A condition before variable sorts are known."""

    kind: str  # atom | cmp | max | true
    tok: Token
    negated: bool = False
    atom: Term | None = None
    stamp: Term | None = None
    op: str = ""
    left: Term | None = None
    right: Term | None = None
    operands: tuple = ()


@dataclass
class _Raw:
    horizon: tuple[int, Token] | None = None
    fluent_decls: list = field(default_factory=list)
    aux: list = field(default_factory=list)
    initial: list = field(default_factory=list)
    observations: list = field(default_factory=list)
    post: list = field(default_factory=list)  # (kind, event, fluent, guard raw conds, tok)
    pre: list = field(default_factory=list)  # (raw conds, tok)
    rules: list = field(default_factory=list)  # (antecedent raw, [disjunct raw], tok)


class _Parser:
    def __init__(self, text: str):
        self.toks = tokenize(text)
        self.i = 0

    @property
    def tok(self) -> Token:
        return self.toks[self.i]

    def peek(self, k: int = 1) -> Token:
        return self.toks[min(self.i + k, len(self.toks) - 1)]

    def error(self, message: str, tok: Token | None = None) -> ParseError:
        tok = tok or self.tok
        return ParseError(message, tok.line, tok.col)

    def advance(self) -> Token:
        t = self.tok
        self.i += 1
        return t

    def expect(self, kind: str, text: str | None = None) -> Token:
        t = self.tok
        if t.kind != kind or (text is not None and t.text != text):
            want = text or kind
            got = t.text or "end of input"
            raise self.error(f"expected {want!r}, found {got!r}")
        return self.advance()

    def at(self, kind: str, text: str | None = None) -> bool:
        t = self.tok
        return t.kind == kind and (text is None or t.text == text)

    # ---- terms
    def expr(self) -> Term:
        left = self.unary()
        while self.at("op", "+") or self.at("op", "-") or self.at("op", "*"):
            op = self.advance().text
            left = make_arith(op, left, self.unary())
        return left

    def unary(self) -> Term:
        if self.at("op", "-"):
            self.advance()
            inner = self.unary()
            return Num(-inner.value) if isinstance(inner, Num) else Neg(inner)
        return self.primary()

    def primary(self) -> Term:
        t = self.tok
        if t.kind == "int":
            self.advance()
            return Num(int(t.text))
        if t.kind == "var":
            self.advance()
            return Var(t.text)
        if t.kind == "name":
            if t.text in ("not", "true"):
                raise self.error(f"unexpected keyword {t.text!r}")
            self.advance()
            if self.at("op", "("):
                self.advance()
                args = [self.expr()]
                while self.at("op", ","):
                    self.advance()
                    args.append(self.expr())
                self.expect("op", ")")
                return Fn(t.text, tuple(args))
            return Sym(t.text)
        if self.at("op", "("):
            self.advance()
            inner = self.expr()
            self.expect("op", ")")
            return inner
        raise self.error(f"expected a term, found {t.text or 'end of input'!r}")

    def atom(self) -> Term:
        tok = self.tok
        t = self.expr()
        if not isinstance(t, (Sym, Fn)) or (isinstance(t, Fn) and not t.name):
            raise self.error("expected an atom", tok)
        return t

    # ---- conditions
    def cond(self) -> RawCond:
        tok = self.tok
        if self.at("name", "not"):
            self.advance()
            atom = self.atom()
            stamp = None
            if self.at("op", "@"):
                self.advance()
                stamp = self.expr()
            return RawCond("atom", tok, negated=True, atom=atom, stamp=stamp)
        if self.at("name", "max") and self.peek().text == "(":
            self.advance()
            self.expect("op", "(")
            ops = [self.expr()]
            while self.at("op", ","):
                self.advance()
                ops.append(self.expr())
            self.expect("op", ")")
            if len(ops) != 3:
                raise self.error("max/3 needs exactly three operands", tok)
            return RawCond("max", tok, operands=tuple(ops))
        left = self.expr()
        if self.at("op", "@"):
            self.advance()
            if not isinstance(left, (Sym, Fn)) or (isinstance(left, Fn) and not left.name):
                raise self.error("only atoms carry timestamps", tok)
            return RawCond("atom", tok, atom=left, stamp=self.expr())
        if self.tok.kind == "op" and self.tok.text in ("<", "<=", "=", "!=", ">", ">="):
            op = self.advance().text
            right = self.expr()
            return RawCond("cmp", tok, op=op, left=left, right=right)
        if not isinstance(left, (Sym, Fn)) or (isinstance(left, Fn) and not left.name):
            raise self.error("expected a condition", tok)
        return RawCond("atom", tok, atom=left)

    def cond_list(self) -> list[RawCond]:
        if self.at("name", "true") and self.peek().text in ("->", ".", "|", ""):
            self.advance()
            return []
        conds = [self.cond()]
        while self.at("op", ","):
            self.advance()
            conds.append(self.cond())
        return conds

    def ground_atom(self) -> Term:
        tok = self.tok
        a = self.atom()
        if not is_ground(a):
            raise self.error("facts must be ground", tok)
        return a

    # ---- statements
    def program(self) -> _Raw:
        raw = _Raw()
        while not self.at("eof"):
            self.statement(raw)
        return raw

    def statement(self, raw: _Raw) -> None:
        t = self.tok
        if t.kind == "directive":
            self.advance()
            if t.text == "#horizon":
                n = int(self.expect("int").text)
                if raw.horizon is not None:
                    raise self.error("duplicate #horizon directive", t)
                raw.horizon = (n, t)
            elif t.text == "#fluent":
                name = self.expect("name").text
                self.expect("op", "/")
                raw.fluent_decls.append((name, int(self.expect("int").text)))
            else:
                raise self.error(f"unknown directive {t.text!r}", t)
            self.expect("op", ".")
            return
        nxt = self.peek()
        if t.kind == "name" and t.text == "initially" and nxt.kind == "name":
            self.advance()
            raw.initial.append(self.ground_atom())
        elif t.kind == "name" and t.text == "aux" and nxt.kind == "name":
            self.advance()
            raw.aux.append(self.ground_atom())
        elif t.kind == "name" and t.text == "observe" and nxt.kind == "name":
            self.advance()
            ev = self.ground_atom()
            self.expect("name", "at")
            raw.observations.append((ev, int(self.expect("int").text), t))
        elif t.kind == "name" and t.text in ("initiates", "terminates") and nxt.text == "(":
            self.advance()
            self.expect("op", "(")
            ev = self.atom()
            self.expect("op", ",")
            fl = self.atom()
            self.expect("op", ")")
            guard = []
            if self.at("name", "if"):
                self.advance()
                guard = self.cond_list()
            raw.post.append((t.text, ev, fl, guard, t))
        elif t.kind == "name" and t.text == "false" and nxt.text == "<-":
            self.advance()
            self.advance()
            raw.pre.append((self.cond_list(), t))
        else:
            ante = self.cond_list()
            self.expect("op", "->")
            disjuncts = [self.cond_list()]
            while self.at("op", "|"):
                self.advance()
                disjuncts.append(self.cond_list())
            raw.rules.append((ante, disjuncts, t))
        self.expect("op", ".")


# ---------------------------------------------------------------- sorting


def _arity(t: Term) -> int:
    return len(t.args) if isinstance(t, Fn) else 0


def _name(t: Term) -> str:
    return t.name


def _to_time(t: Term, tok: Token) -> TimeExpr:
    if isinstance(t, Num):
        if t.value < 0:
            raise ParseError("time constants must be non-negative", tok.line, tok.col)
        return TimeExpr.const(t.value)
    if isinstance(t, Var):
        return TimeExpr(t.name)
    if isinstance(t, Arith) and t.op in "+-" and isinstance(t.left, Var) and isinstance(t.right, Num):
        off = t.right.value if t.op == "+" else -t.right.value
        return TimeExpr(t.left.name, off)
    raise ParseError(f"unsupported time expression {render_term(t)}", tok.line, tok.col)


_FLIP = {">": "<", ">=": "<="}
_KIND = {"<": "lt", "<=": "le", "=": "eq"}


def _classify(conds: list[RawCond]) -> set[str]:
    """Return the set of time-sorted variables of a clause."""
    data = set()
    time = set()
    for c in conds:
        if c.kind == "atom":
            data.update(term_vars(c.atom))
            if c.stamp is not None:
                time.update(term_vars(c.stamp))
        elif c.kind == "max":
            for o in c.operands:
                time.update(term_vars(o))
    cmps = [c for c in conds if c.kind == "cmp"]
    changed = True
    while changed:
        changed = False
        for c in cmps:
            names = set(term_vars(c.left)) | set(term_vars(c.right))
            if names & time or not names & data:
                new = names - time
                if new:
                    time |= new
                    changed = True
    for c in conds:
        names = set(term_vars(c.atom)) if c.kind == "atom" else set()
        if c.kind == "cmp":
            names = set(term_vars(c.left)) | set(term_vars(c.right))
            if names & time and names & data:
                bad = sorted(names & data)[0]
                raise ParseError(f"variable {bad} mixes time and data", c.tok.line, c.tok.col)
        clash = names & time
        if c.kind == "atom" and clash:
            bad = sorted(clash)[0]
            raise ParseError(f"variable {bad} used both as time and data", c.tok.line, c.tok.col)
    return time


def _build(conds: list[RawCond], time_vars: set[str], fluents: set, where: str) -> list[Condition]:
    out = []
    for c in conds:
        if c.kind == "max":
            out.append(Condition.temporal("max3", *(_to_time(o, c.tok) for o in c.operands)))
        elif c.kind == "cmp":
            left, op, right = c.left, c.op, c.right
            if op in _FLIP:
                left, op, right = right, _FLIP[op], left
            names = set(term_vars(left)) | set(term_vars(right))
            temporal = bool(names & time_vars) or not names
            if temporal and names:
                if op == "!=":
                    raise ParseError("'!=' is not supported between time expressions", c.tok.line, c.tok.col)
                out.append(Condition.temporal(_KIND[op], _to_time(left, c.tok), _to_time(right, c.tok)))
            else:
                out.append(Condition.compare(op, left, right))
        else:
            name = _name(c.atom)
            args = c.atom.args if isinstance(c.atom, Fn) else ()
            if c.stamp is None:
                out.append(Condition.aux(name, args, c.negated))
                continue
            stamp = _to_time(c.stamp, c.tok)
            is_fluent = c.negated or (name, len(args)) in fluents
            if is_fluent:
                out.append(Condition.fluent(name, args, stamp, c.negated))
            else:
                out.append(Condition.event(name, args, stamp))
    return out


def _fresh(used: set[str]) -> str:
    i = 1
    while f"T{i}" in used:
        i += 1
    used.add(f"T{i}")
    return f"T{i}"


def _normalize_stamps(conds: list[Condition], used: set[str]) -> tuple[Condition, ...]:
    """Replace constant or offset timestamps by a fresh variable plus an equality."""
    out = []
    for c in conds:
        if c.is_timed and (c.time.is_const or c.time.offset != 0):
            v = _fresh(used)
            out.append(replace(c, time=TimeExpr(v)))
            if c.time.is_const:
                out.append(Condition.temporal("eq", TimeExpr(v), c.time))
            else:
                out.append(Condition.temporal("eq", c.time, TimeExpr(v)))
        else:
            out.append(c)
    return tuple(out)


def parse(text: str | bytes) -> Framework:
    """Parse ``.kelps`` text into a validated Framework."""
    if isinstance(text, (bytes, bytearray)):
        try:
            text = bytes(text).decode("utf-8")
        except UnicodeDecodeError as exc:
            raise ParseError(f"input is not UTF-8: {exc.reason}", 1, exc.start + 1) from None
    try:
        return _parse(text)
    except RecursionError:
        raise ParseError("input nested too deeply", 1, 1) from None


def _parse(text: str) -> Framework:
    p = _Parser(text)
    raw = p.program()
    positions: dict[tuple, tuple[int, int]] = {}

    fluents = set(raw.fluent_decls)
    fluents.update((_name(a), _arity(a)) for a in raw.initial)
    fluents.update((_name(fl), _arity(fl)) for _, _, fl, _, _ in raw.post)
    all_raw = [c for conds, _ in raw.pre for c in conds]
    all_raw += [c for a, ds, _ in raw.rules for c in a + [x for d in ds for x in d]]
    for c in all_raw:
        if c.kind == "atom" and c.negated and c.stamp is not None:
            fluents.add((_name(c.atom), _arity(c.atom)))

    rules = []
    for idx, (ante, disjuncts, tok) in enumerate(raw.rules):
        everything = ante + [c for d in disjuncts for c in d]
        tvars = _classify(everything)
        used = set()
        for c in everything:
            for t in (c.atom, c.stamp, c.left, c.right, *c.operands):
                if t is not None:
                    used.update(term_vars(t))
        a = _normalize_stamps(_build(ante, tvars, fluents, "rule"), used)
        ds = tuple(_normalize_stamps(_build(d, tvars, fluents, "rule"), used) for d in disjuncts)
        rules.append(ReactiveRule(idx + 1, a, ds))
        positions[("rule", idx + 1)] = (tok.line, tok.col)

    pre = []
    for i, (conds, tok) in enumerate(raw.pre):
        pre.append(tuple(_build(conds, _classify(conds), fluents, "pre")))
        positions[("pre", i + 1)] = (tok.line, tok.col)

    post = []
    for i, (kind, ev, fl, guard, tok) in enumerate(raw.post):
        for g in guard:
            if g.kind != "atom" or g.stamp is not None:
                raise ParseError("post guards may only contain aux atoms", g.tok.line, g.tok.col)
        gconds = tuple(Condition.aux(_name(g.atom), g.atom.args if isinstance(g.atom, Fn) else (), g.negated) for g in guard)
        post.append(PostEntry(kind, ev, fl, gconds))
        positions[("post", i + 1)] = (tok.line, tok.col)

    for i, (_, _, tok) in enumerate(raw.observations):
        positions[("observe", i + 1)] = (tok.line, tok.col)

    f = Framework(
        rules=tuple(rules),
        causal=CausalTheory(tuple(post), tuple(pre)),
        aux=tuple(raw.aux),
        initial_state=tuple(raw.initial),
        observations=tuple((e, t) for e, t, _ in raw.observations),
        horizon=None,
        fluent_decls=tuple(unique_pairs(raw.fluent_decls)),
    )
    if raw.horizon is not None:
        n, tok = raw.horizon
        try:
            f = to_n_distant(f, n)
        except HorizonViolation as exc:
            raise ParseError(str(exc), tok.line, tok.col) from None
        positions[("horizon",)] = (tok.line, tok.col)
    report = validate_framework(f)
    if not report.ok:
        raise ValidationError(report, positions)
    return f


def unique_pairs(pairs):
    return list(dict.fromkeys(pairs))


# ---------------------------------------------------------------- rendering


def render(f: Framework) -> str:
    lines = []
    if f.horizon is not None:
        lines.append(f"#horizon {f.horizon}.")
    for name, arity in f.fluent_decls:
        lines.append(f"#fluent {name}/{arity}.")
    lines += [f"aux {render_term(a)}." for a in f.aux]
    lines += [f"initially {render_term(p)}." for p in f.initial_state]
    lines += [f"observe {render_term(e)} at {t}." for e, t in f.observations]
    for entry in f.causal.post:
        text = f"{entry.kind}({render_term(entry.event)}, {render_term(entry.fluent)})"
        if entry.guard:
            text += " if " + conditions_text(entry.guard)
        lines.append(text + ".")
    for body in f.causal.pre:
        lines.append(f"false <- {conditions_text(body)}.")
    for r in f.rules:
        lines.append(f"{r}.")
    return "\n".join(lines) + ("\n" if lines else "")


def parse_conditions(text: str) -> list[RawCond]:
    """Parse a bare condition list (used by the CLI for action guards)."""
    p = _Parser(text)
    conds = p.cond_list()
    p.expect("eof")
    return conds


def parse_term(text: str) -> Term:
    p = _Parser(text)
    t = p.expr()
    p.expect("eof")
    return t


def parse_event_list(text: str) -> list[Term]:
    """Parse ``e1, e2(a), ...`` into ground terms."""
    p = _Parser(text)
    out = []
    if p.at("eof"):
        return out
    out.append(p.ground_atom())
    while p.at("op", ","):
        p.advance()
        out.append(p.ground_atom())
    p.expect("eof")
    return out
