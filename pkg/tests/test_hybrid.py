from __future__ import annotations

import pytest
from hypothesis import HealthCheck, assume, given, settings
from hypothesis import strategies as st

from conftest import fixture_text, load, needs_solver, weak_rules
from kelps_forge.asp import contains_rules, parse_program, programs_equivalent
from kelps_forge.emit import EmitOptions, parse_action_decl, translate
from kelps_forge.errors import KelpsError, NoModel, ParseError, PreconditionViolation, RewriteUnsupported
from kelps_forge.hybrid import (
    CycleRecord,
    EventScript,
    initial_state,
    parse_script,
    rewrite_asp,
    run,
    select_actions,
    step,
    window_translate,
)
from kelps_forge.parser import parse
from kelps_forge.solver import AnswerSet

RETRY_EVENTS = {1: {"a"}, 2: {"a1"}, 3: {"a1", "a3"}}


def retry_windows(cycles=4):
    """Windows of the k=3 loop over the a / a1 / a1,a3 history, with a3 foreseen at cycle 2."""
    h = initial_state(load("retry"), 3)
    out = []
    for T in range(cycles):
        if T == 2:
            h = h.anticipate([(3, "a3")])
        out.append((h, window_translate(h)))
        h = step(h, RETRY_EVENTS.get(T + 1, ()))
    return out


def rules(text):
    return parse_program(text).rules


def missing(program, text):
    return [str(r) for r in contains_rules(program.rules, rules(text))]


# ---------------------------------------------------------------- windows


def test_first_window_is_the_plain_translation_over_k_steps():
    _, p = retry_windows(1)[0]
    assert "time(0..3)." in p.text()
    plain = translate(load("retry")).rules
    body = [r for r in p.rules if r.tag not in ("time",)]
    assert programs_equivalent(body, [r for r in plain if r.tag not in ("time", "external")])


def test_triggered_rule_becomes_a_goal():
    h, p = retry_windows(2)[1]
    assert [str(g) for g in h.goals] == ["1:1@1"]
    assert missing(
        p,
        """
        time(1..4).
        cons(1,(1),1,T2) :- happens(a1,T1), 1<T1, happens(a2,T2), T2=T1+1, time(T1), time(T2).
        supported(a1,T1) :- 1<T1, time(T1), time(T1+1).
        supported(a2,T2) :- happens(a1,T1), 1<T1, T2=T1+1, time(T1), time(T2).
        :- not consTrue(1,1,1).
        0{happens(Act,Ts)}1 :- supported(Act,Ts), time(Ts), Ts>1.
        """,
    ) == []


def test_partial_progress_and_anticipated_events():
    _, p = retry_windows(3)[2]
    assert missing(
        p,
        """
        time(2..5).
        happens(a3,3) :- time(3).
        cons(1,(1),1,3) :- happens(a2,3).
        supported(a2,3).
        :- not consTrue(1,1,1).
        """,
    ) == []


def test_unreachable_partial_instance_is_dropped():
    _, p = retry_windows(4)[3]
    assert missing(p, "cons(1,(1),1,4) :- happens(a2,4). supported(a2,4). :- not consTrue(1,1,1).") == []
    assert missing(p, "cons(1,(1),1,3) :- happens(a2,3).")
    assert missing(p, "happens(a3,3) :- time(3).")


@pytest.mark.parametrize("T", [0, 1, 2])
def test_rewriting_a_window_gives_the_next_window(T):
    windows = retry_windows(4)
    _, p = windows[T]
    h_next, q = windows[T + 1]
    rewritten = rewrite_asp(p, RETRY_EVENTS.get(T + 1, ()), h_next.state, h_next.anticipated, h_next.k)
    diff = programs_equivalent(rewritten.rules, q.rules, ignore_redundant_time=True)
    assert diff, str(diff)


def test_rewrite_refuses_foreign_rules():
    with pytest.raises(RewriteUnsupported):
        rewrite_asp(translate(load("evacuation")), [], [])


def test_goal_is_satisfied_once_its_consequent_happens():
    h = initial_state(load("retry"), 3)
    for t in range(1, 5):
        h = step(h, RETRY_EVENTS.get(t, ()) if t < 3 else ({"a2"} if t == 3 else ()))
    assert not h.pending
    assert [str(g) for g in h.satisfied] == ["1:1@1"]


def test_state_and_preconditions_are_tracked():
    h = initial_state(load("evacuation"), 3)
    with pytest.raises(PreconditionViolation):
        step(h, ["evacuate"])
    for events in ([], ["alarm"], [], ["unlock"]):
        h = step(h, events)
    assert h.time == 4 and h.state == frozenset()
    assert step(h, ["evacuate"]).time == 5


def test_applicant_conditions_narrow_as_events_arrive():
    h = initial_state(load("applicant"), 40)
    history = {1: [("apply", "john", "msc")], 3: [("offer", "john", "msc")], 16: [("accept", "john", "msc")]}
    for t in range(1, 17):
        h = step(h, history.get(t, []))
    remaining = {tuple(str(c) for c in h.remaining(r)) for r in h.residues if r.binding}
    assert ("accept(john,msc)@T", "3 < T", "T <= 33") in remaining
    assert ("add_pending(john,msc)@17", "send_invoice(john,msc)@T5", "17 < T5", "T5 <= 46") in remaining
    assert [str(g) for g in h.pending] == ["1:(john,msc,16)@16"]
    p = window_translate(h)
    assert missing(p, ":- not consTrue(1,(john,msc,16),16). supported(add_pending(john,msc),17) :- 17<T5, T5<=46, time(T5).") == []


# ---------------------------------------------------------------- commutation on generated frameworks


@st.composite
def reactive_texts(draw):
    acts = st.sampled_from(["b", "c"])
    lines = ["#horizon 6.", "#fluent p/0.", f"{draw(st.sampled_from(['initiates', 'terminates']))}(b, p)."]
    if draw(st.booleans()):
        lines.append("initially p.")
    if draw(st.booleans()):
        lines.append(f"false <- {draw(acts)}@T+1, {'not ' if draw(st.booleans()) else ''}p@T.")
    for _ in range(draw(st.integers(1, 2))):
        ante = draw(st.sampled_from(["a@T", "a@T, p@T", "a@T, not p@T", "a@T0, b@T, T0 < T, T <= T0+2"]))
        disjuncts = []
        for _ in range(draw(st.integers(1, 2))):
            d = f"{draw(acts)}@T1, T < T1, T1 <= T+{draw(st.integers(1, 3))}"
            if draw(st.booleans()):
                d += f", {draw(acts)}@T2, T2 = T1+1"
            disjuncts.append(d)
        lines.append(f"{ante} -> {' | '.join(disjuncts)}.")
    return "\n".join(lines) + "\n"


@settings(max_examples=60, deadline=None, suppress_health_check=[HealthCheck.filter_too_much, HealthCheck.too_slow])
@given(reactive_texts(), st.integers(2, 4), st.lists(st.sets(st.sampled_from(["a", "b", "c"])), min_size=1, max_size=5))
def test_window_translation_commutes_with_rewriting(text, k, history):
    try:
        h = initial_state(parse(text), k)
    except KelpsError:
        assume(False)
    for events in history:
        p = window_translate(h)
        try:
            nxt = step(h, events)
        except PreconditionViolation:
            return
        rewritten = rewrite_asp(p, events, nxt.state, nxt.anticipated, nxt.k)
        diff = programs_equivalent(rewritten.rules, window_translate(nxt).rules, ignore_redundant_time=True)
        assert diff, str(diff)
        h = nxt


# ---------------------------------------------------------------- action selection


def answer(*happens):
    return AnswerSet(frozenset(("happens", e, t) for e, t in happens))


def test_shortlex_prefers_fewer_then_earlier_actions():
    h = initial_state(load("retry"), 3)
    sets = [answer(("a1", 2), ("a2", 3)), answer(("a1", 1), ("a2", 2)), answer(("a1", 1), ("a2", 2), ("a1", 3))]
    assert select_actions(sets, h) == {"a1"}
    assert select_actions(sets[:1], h) == frozenset()
    assert select_actions(sets, h, "lex") == {"a1"}
    assert select_actions(sets, h, lambda best, _h: best[0]) == frozenset()


def test_external_and_anticipated_events_are_not_actions():
    h = initial_state(load("retry"), 3).anticipate([(1, "a3")])
    assert select_actions([answer(("a", 1), ("a3", 1), ("a1", 1))], h, external={"a"}) == {"a1"}


def test_selection_errors():
    h = initial_state(load("retry"), 3)
    with pytest.raises(NoModel):
        select_actions([], h)
    with pytest.raises(ValueError):
        select_actions([answer()], h, "random")


# ---------------------------------------------------------------- scripts


def test_script_parsing():
    s = parse_script(fixture_text("retry.script"))
    assert s.events == {1: {"a"}}
    assert s.expected == ((3, "a3", 2),)
    assert s.revealed(1) == [] and s.revealed(2) == [(3, "a3")] and s.revealed(3) == []
    assert s.occurring(3) == {"a3"}
    assert s.last_time == 3


def test_script_events_with_arguments():
    s = parse_script("at 2: request(john,emma), sunset\nexpect at 4: thirsty % foreseen from the start\n")
    assert s.events == {2: {("request", "john", "emma"), "sunset"}}
    assert s.revealed(0) == [(4, "thirsty")]


@pytest.mark.parametrize("text, line", [("at x: a", 1), ("\nexpect at 3 from 3: a", 2), ("at 1: a(", 1)])
def test_script_errors(text, line):
    with pytest.raises(ParseError) as info:
        parse_script(text)
    assert info.value.line == line


# ---------------------------------------------------------------- full runs


@needs_solver
@pytest.mark.solver
def test_retry_run():
    trace = run(load("retry"), parse_script(fixture_text("retry.script")), k=3, cycles=5, check_commutation=True)
    assert trace.executed() == [(2, "a1"), (3, "a1"), (4, "a2")]
    assert all(c.commutes for c in trace.cycles[1:])
    assert not trace.final.pending


@needs_solver
@pytest.mark.solver
def test_drinking_run_with_preferences():
    opts = EmitOptions(weak=weak_rules("drinking_prefs.lp"))
    trace = run(load("drinking"), k=lambda T: 5 - T, options=opts, check_commutation=True)
    assert trace.executed() == [(2, ("drink", "water")), (5, "gotoBed")]
    assert trace.final.state == {"asleep"}
    assert all(c.commutes for c in trace.cycles[1:])


@needs_solver
@pytest.mark.solver
def test_guard_runs():
    prefs = weak_rules("guard_prefs.lp")
    plain = run(load("guard"), k=lambda T: 7 - T, options=EmitOptions(weak=prefs))
    assert plain.executed() == [(5, "evacuate")]
    opts = EmitOptions(weak=prefs, proactive=[parse_action_decl("send_guard")])
    proactive = run(load("guard"), k=lambda T: 7 - T, options=opts, check_commutation=True)
    assert proactive.executed() == [(1, "send_guard")]
    assert proactive.final.state == {"present_guard"}


@needs_solver
@pytest.mark.solver
def test_unsatisfiable_windows_idle_or_halt():
    idle = run(load("bus"), k=4)
    assert len(idle.cycles) == 4 and all(c.idle for c in idle.cycles)
    halted = run(load("bus"), k=4, on_no_model="halt")
    assert len(halted.cycles) == 1 and halted.final.time == 0


def test_run_arguments_are_checked():
    with pytest.raises(ValueError):
        run(load("retry"), on_no_model="panic")
    with pytest.raises(ValueError):
        run(load("retry"), EventScript({12: frozenset({"a"})}), cycles=5)


def test_trace_lines_are_readable():
    rec = CycleRecord(1, frozenset({"p"}), (1, 4), 5, None, frozenset({"a1"}), frozenset(), commutes=True)
    assert rec.line() == "cycle 1 | window 1..4 | state {p} | models 5 | cost [] | actions@2 {a1} | external@2 {} | commutes"
