from __future__ import annotations

import pytest
from hypothesis import HealthCheck, assume, given, settings
from hypothesis import strategies as st

from conftest import FIXTURES, fixture_text, load
from kelps_forge.core import Framework, validate_framework
from kelps_forge.errors import KelpsError, ParseError
from kelps_forge.parser import parse, parse_event_list, render
from kelps_forge.terms import evaluate

ALL = sorted(p.stem for p in FIXTURES.glob("*.kelps") if p.stem != "badpre")


def test_evacuation_shape():
    f = load("evacuation")
    assert len(f.rules) == 1
    assert len(f.causal.pre) == 1 and len(f.causal.post) == 1
    assert f.initial_values == {"door_locked"}
    assert f.ext == {2: {"alarm"}, 4: {"unlock"}}
    assert f.horizon == 7


def test_empty_text_gives_empty_framework():
    assert parse("") == Framework()
    assert render(Framework()) == ""


def test_rule_without_constraints_round_trips_verbatim():
    text = "alarm@T -> evacuate@T1.\n"
    f = parse(text)
    assert validate_framework(f).ok
    assert render(f) == text


def test_bookstore_keeps_both_rules_and_all_post_entries():
    f = parse(render(load("bookstore")))
    assert len(f.rules) == 2
    assert [e.kind for e in f.causal.post] == ["initiates", "terminates", "initiates"]
    assert len(f.rules[0].disjuncts) == 2


@pytest.mark.parametrize("name", ALL)
def test_fixture_round_trip(name):
    f = load(name)
    assert parse(render(f)) == f
    assert render(parse(render(f))) == render(f)


def test_bytes_input_and_bad_encoding():
    assert parse(b"alarm@T -> evacuate@T1.") == parse("alarm@T -> evacuate@T1.")
    with pytest.raises(ParseError):
        parse(b"\xff\xfe")


@pytest.mark.parametrize(
    "text, line, column",
    [
        ("foo bar", 1, 5),
        ("a@T -> b@T1, T < T1", 1, 20),
        ("\n\nx@T -> .", 3, 8),
    ],
)
def test_errors_are_positioned(text, line, column):
    with pytest.raises(ParseError) as info:
        parse(text)
    assert (info.value.line, info.value.column) == (line, column)


def test_invalid_pre_is_reported_with_its_position():
    with pytest.raises(KelpsError) as info:
        parse(fixture_text("badpre.kelps"))
    assert "3:1" in str(info.value)
    assert "must precede" in str(info.value)


def test_time_and_data_sorts_may_not_mix():
    with pytest.raises(KelpsError):
        parse("e(T)@T -> f@T1, T < T1.")


def test_event_lists():
    assert [evaluate(t) for t in parse_event_list("a, b(1,c), d")] == ["a", ("b", 1, "c"), "d"]
    assert parse_event_list("") == []


def test_comments_are_ignored():
    assert parse("% nothing here\nalarm@T -> evacuate@T1. % trailing\n") == parse("alarm@T -> evacuate@T1.")


# ---------------------------------------------------------------- generated frameworks

events = st.sampled_from(["a", "b", "c(x)", "d(y,1)"])
fluents = st.sampled_from(["p", "q(x)"])


@st.composite
def frameworks(draw):
    lines = []
    horizon = draw(st.none() | st.integers(4, 9))
    if horizon is not None:
        lines.append(f"#horizon {horizon}.")
    for _ in range(draw(st.integers(0, 2))):
        lines.append(f"initially {draw(fluents)}.")
    for _ in range(draw(st.integers(0, 2))):
        lines.append(f"{draw(st.sampled_from(['initiates', 'terminates']))}({draw(events)}, {draw(fluents)}).")
    for _ in range(draw(st.integers(0, 3))):
        lines.append(f"observe {draw(events)} at {draw(st.integers(1, 4))}.")
    for _ in range(draw(st.integers(0, 2))):
        neg = "not " if draw(st.booleans()) else ""
        lines.append(f"false <- {draw(events)}@T+1, {neg}{draw(fluents)}@T.")
    for _ in range(draw(st.integers(0, 3))):
        ante = [f"{draw(events)}@T"]
        if draw(st.booleans()):
            ante.append(f"{'not ' if draw(st.booleans()) else ''}{draw(fluents)}@T")
        disjuncts = []
        for _ in range(draw(st.integers(1, 2))):
            off = draw(st.integers(1, 3))
            d = [f"{draw(events)}@T1", "T < T1", f"T1 <= T+{off}"]
            if draw(st.booleans()):
                d += [f"{draw(events)}@T2", "T2 = T1+1"]
            disjuncts.append(", ".join(d))
        lines.append(", ".join(ante) + " -> " + " | ".join(disjuncts) + ".")
    return "\n".join(lines) + "\n"


@settings(max_examples=80, deadline=None, suppress_health_check=[HealthCheck.filter_too_much])
@given(frameworks())
def test_generated_frameworks_round_trip(text):
    try:
        f = parse(text)
    except KelpsError:
        assume(False)
    assert validate_framework(f).ok
    assert parse(render(f)) == f


@settings(max_examples=200, deadline=None)
@given(st.text(alphabet="ab@T1()<=-> |.,%\n not false initially observe aux", max_size=60))
def test_parser_is_total_on_noise(text):
    try:
        parse(text)
    except KelpsError:
        pass


@settings(max_examples=100, deadline=None)
@given(st.binary(max_size=40))
def test_parser_is_total_on_bytes(data):
    try:
        parse(data)
    except KelpsError:
        pass
