from __future__ import annotations

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import GOLDEN
from kelps_forge.asp import (
    atom_index,
    canonical_rule,
    check_weak,
    compare_values,
    contains_rules,
    iter_body_matches,
    parse_atom_value,
    parse_program,
    parse_rule,
    programs_equivalent,
    rules_equivalent,
    serialize,
    unsafe_variables,
)
from kelps_forge.errors import KelpsError

GOLDENS = sorted(p.name for p in GOLDEN.glob("*.lp"))


@pytest.mark.parametrize("name", GOLDENS)
def test_golden_files_round_trip_through_text(name):
    prog = parse_program((GOLDEN / name).read_text())
    again = parse_program(serialize(prog))
    assert again.rules == prog.rules


@pytest.mark.parametrize(
    "text",
    [
        "time(0..7).",
        "ant(1,(Ts),Ts) :- happens(alarm,Ts), time(Ts).",
        "0{happens(Act,Ts)}1 :- supported(Act,Ts), time(Ts), Ts>0.",
        ":- happens(evacuate,Ts), holds(door_locked,Ts-1), time(Ts-1), time(Ts).",
        ":~ happens(gotoBed,T), time(T). [-T@2, T]",
        ":~ happens(drink(L),T), isDrink(L), time(T). [1@1, T,L]",
        "cons(1,(T1,T2),T2,Ts) :- ant(1,(T1,T2),T2), T1!=T2, not holds(p,Ts).",
    ],
)
def test_rule_text_is_stable(text):
    r = parse_rule(text)
    assert parse_rule(str(r)) == r


def test_renaming_and_reordering_are_equivalent():
    a = parse_rule("p(X,T) :- q(X), T<X, time(T).")
    b = parse_rule("p(Y,S) :- time(S), Y>S, q(Y).")
    assert rules_equivalent(a, b)
    assert not rules_equivalent(a, parse_rule("p(Y,S) :- time(S), Y>=S, q(Y)."))


def test_renaming_must_be_injective():
    a = parse_rule("p(X,Y) :- q(X), q(Y).")
    b = parse_rule("p(X,X) :- q(X), q(X).")
    assert not rules_equivalent(a, b)
    assert not rules_equivalent(b, a)


def test_redundant_time_guard_can_be_ignored():
    a = parse_rule("p(T) :- q(T), time(T).")
    b = parse_rule("p(T) :- q(T).")
    assert not rules_equivalent(a, b)
    assert rules_equivalent(a, b, ignore_redundant_time=True)


def test_program_diff_reports_both_sides():
    left = parse_program("a. b :- a.").rules
    right = parse_program("b :- a. c.").rules
    diff = programs_equivalent(left, right)
    assert not diff
    assert [str(r) for r in diff.only_left] == ["a."]
    assert [str(r) for r in diff.only_right] == ["c."]
    assert programs_equivalent(left, list(reversed(left)))
    assert contains_rules(left, parse_program("b :- a.").rules) == []


def test_canonical_names_follow_first_appearance():
    r = canonical_rule(parse_rule("p(B,A) :- q(A,B), r(C), C<A."))
    assert str(r) == "p(V1,V2) :- q(V2,V1), r(V3), V3<V2."


@pytest.mark.parametrize(
    "text, loose",
    [
        ("p(X) :- q(Y).", ["X"]),
        ("p(X) :- not q(X).", ["X"]),
        ("p(X) :- q(X), X<Y.", ["Y"]),
        ("p(X) :- q(X).", []),
        (":- holds(P,Ts-1), time(Ts).", []),
    ],
)
def test_unsafe_variables(text, loose):
    assert unsafe_variables(parse_rule(text)) == loose


def test_weak_constraint_terms_must_be_bound():
    check_weak(parse_rule(":~ happens(gotoBed,T). [-T@2, T]"))
    with pytest.raises(KelpsError):
        check_weak(parse_rule(":~ happens(gotoBed,T). [1@1, U]"))


def test_atom_values_and_ordering():
    assert parse_atom_value("happens(drink(water),2)") == ("happens", ("drink", "water"), 2)
    assert parse_atom_value("cons(1,(1),1,3)") == ("cons", 1, 1, 1, 3)
    assert compare_values("<", 3, "a")
    assert compare_values("!=", ("f", 1), ("f", 2))


def test_body_matching_against_atoms():
    body = parse_rule("x :- happens(E,T), not holds(p,T), T>1.").body
    atoms = {("happens", "a", 1), ("happens", "b", 2), ("happens", "c", 3), ("holds", "p", 3)}
    found = sorted(m["E"] for m in iter_body_matches(body, atoms, atom_index(atoms)))
    assert found == ["b"]


def test_syntax_errors_are_reported():
    with pytest.raises(KelpsError):
        parse_program("p(X :- q.")
    with pytest.raises(KelpsError):
        parse_program("p(X) q(X).")


names = st.sampled_from(["p", "q", "holds", "happens"])
variables = st.sampled_from(["X", "Y", "T", "Ts"])
args = st.lists(variables | st.integers(0, 9).map(str) | st.sampled_from(["a", "b"]), min_size=1, max_size=3)
atoms_text = st.builds(lambda n, a: f"{n}({','.join(a)})", names, args)


@st.composite
def rules_text(draw):
    body = draw(st.lists(st.tuples(st.booleans(), atoms_text), min_size=1, max_size=4))
    items = [("not " if neg else "") + a for neg, a in body]
    if draw(st.booleans()):
        items.append(f"{draw(variables)}{draw(st.sampled_from(['<', '<=', '!=', '=']))}{draw(variables)}+1")
    head = draw(st.none() | atoms_text)
    return f"{head or ''} :- {', '.join(items)}."


@settings(max_examples=150, deadline=None)
@given(rules_text(), st.randoms(use_true_random=False))
def test_rule_equivalent_to_its_shuffled_canonical_form(text, rnd):
    r = parse_rule(text)
    body = list(r.body)
    rnd.shuffle(body)
    shuffled = canonical_rule(r.with_body(body))
    assert rules_equivalent(r, shuffled)
    assert parse_rule(str(shuffled)) == shuffled


def test_parenthesised_term_equals_the_bare_term():
    assert rules_equivalent(parse_rule(":- not consTrue(1,(1),1)."), parse_rule(":- not consTrue(1,1,1)."))
    assert not rules_equivalent(parse_rule("p((1,2))."), parse_rule("p(1,2)."))
