from __future__ import annotations

import itertools
from dataclasses import replace

import pytest
from hypothesis import HealthCheck, assume, given, settings
from hypothesis import strategies as st

from conftest import load
from kelps_forge.core import ModelStructure, to_n_distant
from kelps_forge.errors import BudgetExceeded, KelpsError
from kelps_forge.oracle import (
    SearchBudget,
    enumerate_reactive_models,
    is_reactive_model,
    is_supported,
    run_states,
    successor_state,
    survives_padding,
)
from kelps_forge.parser import parse

COUNTS = {"evacuation": 7, "toy2": 1, "guard": 3, "drinking": 25, "bus": 0, "empty": 1}


def model_of(f, acts):
    """The model structure induced by ``acts`` (time -> set of actions)."""
    n = f.horizon
    events = {t: set(acts.get(t, ())) | set(f.ext.get(t, ())) for t in range(n + 1)}
    return ModelStructure(n, run_states(f, events, n), acts, f.ext, f.aux_values)


def brute_force(f, vocabulary):
    """Every action assignment over ``vocabulary`` that passes the model check."""
    n = f.horizon
    slots = [(t, a) for t in range(1, n + 1) for a in vocabulary]
    found = set()
    for mask in itertools.product([False, True], repeat=len(slots)):
        acts = {}
        for on, (t, a) in zip(mask, slots):
            if on:
                acts.setdefault(t, set()).add(a)
        m = model_of(f, acts)
        if is_reactive_model(f, m):
            found.add(m)
    return found


@pytest.mark.parametrize("name, count", sorted(COUNTS.items()))
def test_model_counts(name, count):
    assert len(enumerate_reactive_models(load(name))) == count


@pytest.mark.slow
@pytest.mark.parametrize("name, count", [("bookstore_small", 341), ("retry", 6305)])
def test_model_counts_of_larger_fixtures(name, count):
    assert len(enumerate_reactive_models(load(name))) == count


@pytest.mark.parametrize(
    "name, vocabulary",
    [("evacuation", ["evacuate"]), ("toy2", ["a1", "a2"]), ("guard", ["evacuate", "send_guard"]), ("bus", ["buy_ticket"])],
)
def test_search_agrees_with_exhaustive_check(name, vocabulary):
    f = load(name)
    assert enumerate_reactive_models(f) == brute_force(f, vocabulary)


@pytest.mark.parametrize("name", ["evacuation", "guard", "drinking", "toy2"])
def test_pruning_does_not_change_the_result(name):
    f = load(name)
    assert enumerate_reactive_models(f, prune=True) == enumerate_reactive_models(f, prune=False)


@pytest.mark.parametrize("name", ["evacuation", "guard", "drinking"])
def test_every_model_passes_the_check_and_survives_padding(name):
    f = load(name)
    for m in enumerate_reactive_models(f):
        assert is_reactive_model(f, m)
        assert survives_padding(f, m)


def test_evacuation_models_evacuate_after_unlock():
    f = load("evacuation")
    times = sorted(t for m in enumerate_reactive_models(f) for t, _ in m.action_list())
    assert min(times) == 5
    assert {len(m.action_list()) for m in enumerate_reactive_models(f)} == {1, 2, 3}


def test_toy_model_is_a1_then_a2():
    (m,) = enumerate_reactive_models(load("toy2"))
    assert m.action_list() == [(1, "a1"), (2, "a2")]


def test_states_follow_the_event_calculus():
    f = load("evacuation")
    assert successor_state(frozenset({"door_locked"}), frozenset({"unlock"}), f.causal.post, f.aux_values) == frozenset()
    states = run_states(f, {4: {"unlock"}}, 7)
    assert [("door_locked" in s) for s in states] == [True] * 4 + [False] * 4


def test_frame_axiom_keeps_unaffected_fluents():
    f = load("bookstore_small")
    s0 = f.initial_values
    s1 = successor_state(s0, frozenset({("allocate", "john", "hamlet", 1)}), f.causal.post, f.aux_values)
    assert ("avail", "emma", 1) in s1
    assert ("avail", "hamlet", 0) in s1 and ("avail", "hamlet", 1) not in s1


@pytest.mark.parametrize(
    "acts, reason",
    [
        ({}, "rule 1 unsatisfied"),
        ({3: {"evacuate"}}, "C_pre"),
    ],
)
def test_rejections_name_the_problem(acts, reason):
    f = load("evacuation")
    verdict = is_reactive_model(f, model_of(f, acts))
    assert not verdict and reason in verdict.reason


def test_unprompted_action_is_unsupported():
    f = load("guard")
    verdict = is_reactive_model(f, model_of(f, {1: {"send_guard"}}))
    assert not verdict and "send_guard at 1 is not supported" in verdict.reason


def test_tampered_state_is_rejected():
    f = load("evacuation")
    m = model_of(f, {5: {"evacuate"}})
    bad = replace(m, states=m.states[:3] + (frozenset(),) + m.states[4:])
    assert "state 3" in is_reactive_model(f, bad).reason


def test_support_requires_a_triggered_rule():
    f = load("evacuation")
    m = model_of(f, {5: {"evacuate"}})
    assert is_supported("evacuate", 5, m, f)
    assert not is_supported("evacuate", 2, m, f)
    assert not is_supported("unlock", 5, m, f)


def test_budget_is_enforced_with_partial_results():
    with pytest.raises(BudgetExceeded) as info:
        enumerate_reactive_models(load("drinking"), SearchBudget(max_candidates=20))
    assert isinstance(info.value.partial, set)
    with pytest.raises(BudgetExceeded):
        enumerate_reactive_models(load("bookstore"), SearchBudget(max_actions_per_step=2))
    with pytest.raises(ValueError):
        SearchBudget(max_candidates=0)


def test_unbounded_framework_cannot_be_enumerated():
    with pytest.raises(KelpsError):
        enumerate_reactive_models(load("applicant"))


# ---------------------------------------------------------------- generated frameworks

ACTS = ["b", "c"]


@st.composite
def small_frameworks(draw):
    lines = ["#horizon 3.", "#fluent p/0."]
    if draw(st.booleans()):
        lines.append("initially p.")
    lines.append(f"{draw(st.sampled_from(['initiates', 'terminates']))}(b, p).")
    for t in draw(st.sets(st.integers(1, 2), max_size=2)):
        lines.append(f"observe a at {t}.")
    if draw(st.booleans()):
        neg = "not " if draw(st.booleans()) else ""
        lines.append(f"false <- {draw(st.sampled_from(ACTS))}@T+1, {neg}p@T.")
    for _ in range(draw(st.integers(1, 2))):
        ante = "a@T" + (", p@T" if draw(st.booleans()) else "")
        disjuncts = []
        for _ in range(draw(st.integers(1, 2))):
            first = draw(st.sampled_from(ACTS))
            d = f"{first}@T1, T < T1, T1 <= T+{draw(st.integers(1, 2))}"
            if draw(st.booleans()):
                d += f", {draw(st.sampled_from(ACTS))}@T2, T2 = T1+1"
            disjuncts.append(d)
        lines.append(f"{ante} -> {' | '.join(disjuncts)}.")
    return to_n_distant(parse("\n".join(lines) + "\n"), 3)


@settings(max_examples=40, deadline=None, suppress_health_check=[HealthCheck.filter_too_much])
@given(st.data())
def test_search_agrees_with_exhaustive_check_on_generated_frameworks(data):
    try:
        f = data.draw(small_frameworks())
    except KelpsError:
        assume(False)
    assert enumerate_reactive_models(f) == brute_force(f, ACTS)
