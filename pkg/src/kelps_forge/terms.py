"""First-order terms shared by the KELPS and ASP layers.

Ground values are plain Python data: ``str`` for constants, ``int`` for
numbers and ``tuple`` ``(functor, *args)`` for compounds.  A compound whose
functor is the empty string is a tuple term such as ``(a,b)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, Mapping, Union


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Sym:
    name: str


@dataclass(frozen=True)
class Num:
    value: int


@dataclass(frozen=True)
class Fn:
    """Compound term; ``name == ""`` denotes a tuple."""

    name: str
    args: tuple


@dataclass(frozen=True)
class Arith:
    op: str  # "+", "-" or "*"
    left: "Term"
    right: "Term"


@dataclass(frozen=True)
class Neg:
    arg: "Term"


@dataclass(frozen=True)
class Interval:
    low: "Term"
    high: "Term"


Term = Union[Var, Sym, Num, Fn, Arith, Neg, Interval]
Value = Union[str, int, tuple]


def tup(*items: Term) -> Fn:
    return Fn("", tuple(items))


def term_vars(t: Term) -> Iterator[str]:
    """Yield variable names in left-to-right order (with repeats)."""
    if isinstance(t, Var):
        yield t.name
    elif isinstance(t, Fn):
        for a in t.args:
            yield from term_vars(a)
    elif isinstance(t, (Arith, Interval)):
        yield from term_vars(t.left if isinstance(t, Arith) else t.low)
        yield from term_vars(t.right if isinstance(t, Arith) else t.high)
    elif isinstance(t, Neg):
        yield from term_vars(t.arg)


def is_ground(t: Term) -> bool:
    return next(term_vars(t), None) is None


def _arith(op: str, a: int, b: int) -> int:
    if op == "+":
        return a + b
    if op == "-":
        return a - b
    if op == "*":
        return a * b
    raise ValueError(f"unknown operator {op!r}")


def substitute(t: Term, mapping: Mapping[str, Term]) -> Term:
    """Replace variables and fold arithmetic whose operands became numbers."""
    if isinstance(t, Var):
        return mapping.get(t.name, t)
    if isinstance(t, Fn):
        return Fn(t.name, tuple(substitute(a, mapping) for a in t.args))
    if isinstance(t, Arith):
        return make_arith(t.op, substitute(t.left, mapping), substitute(t.right, mapping))
    if isinstance(t, Neg):
        inner = substitute(t.arg, mapping)
        return Num(-inner.value) if isinstance(inner, Num) else Neg(inner)
    if isinstance(t, Interval):
        return Interval(substitute(t.low, mapping), substitute(t.high, mapping))
    return t


def make_arith(op: str, left: Term, right: Term) -> Term:
    if isinstance(left, Num) and isinstance(right, Num):
        return Num(_arith(op, left.value, right.value))
    # keep var+offset terms canonical: X+0 -> X, X+-2 -> X-2
    if isinstance(right, Num) and op in "+-":
        if right.value == 0:
            return left
        if right.value < 0:
            return Arith("-" if op == "+" else "+", left, Num(-right.value))
        if isinstance(left, Arith) and left.op in "+-" and isinstance(left.right, Num):
            inner = left.right.value if left.op == "+" else -left.right.value
            total = inner + (right.value if op == "+" else -right.value)
            return make_arith("+", left.left, Num(total))
    return Arith(op, left, right)


def evaluate(t: Term) -> Value:
    """Ground term to Python value; raises ValueError when not ground."""
    if isinstance(t, Num):
        return t.value
    if isinstance(t, Sym):
        return t.name
    if isinstance(t, Fn):
        if t.name == "" and len(t.args) == 1:
            return evaluate(t.args[0])
        return (t.name, *(evaluate(a) for a in t.args))
    if isinstance(t, Arith):
        a, b = evaluate(t.left), evaluate(t.right)
        if not isinstance(a, int) or not isinstance(b, int):
            raise ValueError(f"arithmetic on non-integer in {render_term(t)}")
        return _arith(t.op, a, b)
    if isinstance(t, Neg):
        a = evaluate(t.arg)
        if not isinstance(a, int):
            raise ValueError(f"negation of non-integer in {render_term(t)}")
        return -a
    raise ValueError(f"term is not ground: {render_term(t)}")


def from_value(v: Value) -> Term:
    if isinstance(v, bool):
        raise TypeError("booleans are not terms")
    if isinstance(v, int):
        return Num(v)
    if isinstance(v, str):
        return Sym(v)
    return Fn(v[0], tuple(from_value(a) for a in v[1:]))


def match(pattern: Term, value: Value, binding: dict) -> dict | None:
    """Extend ``binding`` so that ``pattern`` denotes ``value``.

    Returns a new dict or None.  Arithmetic patterns are solved when exactly
    one variable is unbound and the pattern is ``X+c`` / ``X-c``.
    """
    if isinstance(pattern, Var):
        if pattern.name in binding:
            return binding if binding[pattern.name] == value else None
        out = dict(binding)
        out[pattern.name] = value
        return out
    if isinstance(pattern, Sym):
        return binding if value == pattern.name else None
    if isinstance(pattern, Num):
        return binding if (isinstance(value, int) and value == pattern.value) else None
    if isinstance(pattern, Fn):
        if pattern.name == "" and len(pattern.args) == 1:
            return match(pattern.args[0], value, binding)
        if not isinstance(value, tuple) or value[0] != pattern.name or len(value) != len(pattern.args) + 1:
            return None
        out = binding
        for p, v in zip(pattern.args, value[1:]):
            out = match(p, v, out)
            if out is None:
                return None
        return out
    if isinstance(pattern, (Arith, Neg)):
        grounded = substitute(pattern, {k: from_value(v) for k, v in binding.items()})
        if is_ground(grounded):
            return binding if evaluate(grounded) == value else None
        if (
            isinstance(grounded, Arith)
            and grounded.op in "+-"
            and isinstance(grounded.left, Var)
            and isinstance(grounded.right, Num)
            and isinstance(value, int)
        ):
            off = grounded.right.value if grounded.op == "+" else -grounded.right.value
            return match(grounded.left, value - off, binding)
        return None
    return None


def bind_terms(binding: Mapping[str, Value]) -> dict[str, Term]:
    return {k: from_value(v) for k, v in binding.items()}


def ground_value(t: Term, binding: Mapping[str, Value]) -> Value:
    return evaluate(substitute(t, bind_terms(binding)))


def value_key(v: Value):
    """Total order on values: numbers, then symbols, then compounds."""
    if isinstance(v, int):
        return (0, v, "", ())
    if isinstance(v, str):
        return (1, 0, v, ())
    return (1, 1, v[0], tuple(value_key(a) for a in v[1:]))


def _needs_parens(t: Term) -> bool:
    return isinstance(t, Arith)


def render_term(t: Term) -> str:
    if isinstance(t, Var):
        return t.name
    if isinstance(t, Sym):
        return t.name
    if isinstance(t, Num):
        return str(t.value)
    if isinstance(t, Fn):
        inner = ",".join(render_term(a) for a in t.args)
        if t.name == "":
            return f"({inner})"
        return f"{t.name}({inner})" if t.args else t.name
    if isinstance(t, Arith):
        left = render_term(t.left)
        right = render_term(t.right)
        if t.op == "*":
            left = f"({left})" if isinstance(t.left, Arith) and t.left.op != "*" else left
        if isinstance(t.right, Arith) or (t.op != "+" and isinstance(t.right, Neg)):
            right = f"({right})"
        return f"{left}{t.op}{right}"
    if isinstance(t, Neg):
        inner = render_term(t.arg)
        return f"-({inner})" if _needs_parens(t.arg) else f"-{inner}"
    if isinstance(t, Interval):
        return f"{render_term(t.low)}..{render_term(t.high)}"
    raise TypeError(f"not a term: {t!r}")


def format_value(v: Value) -> str:
    return render_term(from_value(v))
