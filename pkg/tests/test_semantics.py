from __future__ import annotations

import dataclasses

import pytest
from hypothesis import assume, given
from hypothesis import strategies as st

from sleec.core import (
    Comparison,
    Constant,
    Defeater,
    Duration,
    MeasureAtom,
    MeasureToken,
    NonIntegralDuration,
    Not,
    Or,
    RequirementKind,
    Response,
    Rule,
    Ruleset,
    TimeUnit,
    Tock,
    Trace,
)
from sleec.parser import parse_ruleset, parse_trace
from sleec.semantics import (
    ActivationKind,
    TimeConfig,
    activate,
    check_trace,
    eval_guard,
    to_tocks,
)

import oracles
from strategies import BOOL_MEASURES, DECLS, NUM_MEASURES, guards, minute_windows, rulesets, rules, traces

HALF = TimeConfig(Duration(30, TimeUnit.SECONDS))

partial_states = st.fixed_dictionaries(
    {},
    optional={**{m: st.booleans() for m in BOOL_MEASURES},
              **{m: st.integers(-60, 130) for m in NUM_MEASURES}},
)


def test_to_tocks_examples():
    assert to_tocks(Duration(4)) == 4
    assert to_tocks(Duration(0)) == 0
    with pytest.raises(NonIntegralDuration):
        to_tocks(Duration(90, TimeUnit.SECONDS))
    assert to_tocks(Duration(2), HALF) == 4


def test_eval_guard_examples():
    assert eval_guard(Not(MeasureAtom("humanAssents")), {"humanAssents": False}) is True
    g = Or((MeasureAtom("userOccupied"), Not(MeasureAtom("userOccupied"))))
    assert eval_guard(g, {}) is None
    assert eval_guard(Comparison("temperature", ">", 35), {"temperature": 40}) is True
    assert eval_guard(None, {}) is True


@given(guards, partial_states)
def test_eval_guard_is_strong_kleene(g, m):
    assert eval_guard(g, m) is oracles.to_py(oracles.kleene(g, m))


def test_activate_r3_unknown_assent_keeps_base_obligation(table1):
    act = activate(table1.rule("R3"), 1, {})
    assert act.kind is ActivationKind.BASE
    req = act.requirement
    assert (req.kind, req.event, req.start, req.end) == (RequirementKind.OBLIGATION, "CallEmergencySupport", 1, 5)
    assert act.unknown == ("humanAssents",)


def test_activate_r3_without_assent_prohibits(table1):
    act = activate(table1.rule("R3"), 0, {"humanAssents": False})
    assert act.kind is ActivationKind.DEFEATER
    req = act.requirement
    assert (req.kind, req.start, req.end) == (RequirementKind.PROHIBITION, 0, 4)


def test_activate_r1_occupied_user_gets_reminder(table1):
    act = activate(table1.rule("R1"), 0, {"userOccupied": True})
    assert act.kind is ActivationKind.DEFEATER
    assert (act.requirement.event, act.requirement.start, act.requirement.end) == ("RemindLater", 0, 0)


def test_trigger_guard_outcomes():
    rs = parse_ruleset("event A\nevent B\nmeasure x: boolean\nR1 when A and x then B\n"
                       "R2 when A then B unless x\n")
    assert activate(rs.rule("R1"), 0, {}).kind is ActivationKind.UNRESOLVED
    assert activate(rs.rule("R1"), 0, {}).unknown == ("x",)
    assert activate(rs.rule("R1"), 0, {"x": False}).kind is ActivationKind.INACTIVE
    assert activate(rs.rule("R2"), 0, {"x": True}).kind is ActivationKind.DEFEATED


def test_stage5_yields_single_r3_expiry(table1, stage5):
    result = check_trace(table1, stage5)
    (v,) = result.violations
    assert v.rule_ids == ("R3",) and v.time == 6
    (req,) = v.requirements
    assert (req.start, req.end, req.kind) == (1, 5, RequirementKind.OBLIGATION)
    assert v.witness == stage5.prefix(12)
    assert result.residual == []


def test_empty_trace(table1):
    result = check_trace(table1, Trace(()))
    assert result.findings == [] and result.residual == []


def test_alarm_answered_within_window(table1):
    result = check_trace(table1, parse_trace("SmokeDetectorAlarm, tock, CallEmergencySupport", table1))
    assert result.violations == []


def test_residual_pending_unless_strict(table1):
    tr = parse_trace("SmokeDetectorAlarm, tock", table1)
    assert check_trace(table1, tr).violations == []
    assert [r.source for r in check_trace(table1, tr).residual] == ["R2"]
    (v,) = check_trace(table1, tr, strict=True).violations
    assert v.rule_ids == ("R2",)


def test_response_before_trigger_in_same_unit_does_not_count(table1):
    tr = parse_trace("CallEmergencySupport, SmokeDetectorAlarm, tock, tock, tock", table1)
    assert [v.rule_ids for v in check_trace(table1, tr).violations] == [("R2",)]


def test_one_occurrence_discharges_every_open_obligation(table1):
    tr = parse_trace("SmokeDetectorAlarm, tock, SmokeDetectorAlarm, CallEmergencySupport, tock, tock, tock, tock",
                     table1)
    assert check_trace(table1, tr).violations == []


def test_prohibition_stays_live_after_violation(table1):
    tr = parse_trace("humanAssents.false, HumanOnFloor, CallEmergencySupport, tock, CallEmergencySupport", table1)
    assert [v.time for v in check_trace(table1, tr).violations] == [0, 1]


def test_unknown_trigger_guard_is_a_warning():
    rs = parse_ruleset("event A\nevent B\nmeasure x: boolean\nR1 when A and x then B\n")
    result = check_trace(rs, parse_trace("A, tock, tock", rs))
    assert [f.kind.value for f in result.findings] == ["warning"]


# properties ---------------------------------------------------------------


@given(rulesets(annotations=False, windows=minute_windows), traces(), st.booleans())
def test_check_trace_matches_reference(rs, tr, strict):
    got = oracles.finding_signature(check_trace(rs, tr, strict=strict).findings)
    assert got == oracles.reference_violations(rs, tr, strict=strict)


def _double_tocks(tr: Trace) -> Trace:
    out = []
    for tok in tr.tokens:
        out.extend([tok, tok] if isinstance(tok, Tock) else [tok])
    return Trace(tuple(out))


@given(rulesets(annotations=False, windows=minute_windows), traces())
def test_halving_quantum_preserves_violations(rs, tr):
    coarse = oracles.finding_signature(check_trace(rs, tr).findings)
    fine = oracles.finding_signature(check_trace(rs, _double_tocks(tr), HALF).findings)
    expect = sorted((rid, how, 2 * t if how == "prohibited" else 2 * t - 1) for rid, how, t in coarse)
    assert fine == expect


@given(rulesets(annotations=False, windows=minute_windows), st.integers(0, 6), partial_states)
def test_halving_quantum_doubles_windows(rs, t, m):
    for rule in rs.rules:
        a, b = activate(rule, t, m), activate(rule, 2 * t, m, HALF)
        assert a.kind is b.kind
        if a.requirement is not None:
            assert b.requirement.end - b.requirement.start == 2 * (a.requirement.end - a.requirement.start)


@given(rulesets(annotations=False, windows=minute_windows), traces(), st.data())
def test_violations_are_prefix_monotone(rs, tr, data):
    n = data.draw(st.integers(0, len(tr)))
    full = check_trace(rs, tr).violations
    part = check_trace(rs, tr.prefix(n)).violations
    assert part == full[: len(part)]


@given(rules("R1", windows=minute_windows, max_defeaters=3), st.lists(guards, min_size=3, max_size=3),
       partial_states, st.integers(0, 5))
def test_outermost_true_defeater_decides(rule, flips, m, t):
    assume(rule.defeaters)
    last = dataclasses.replace(rule.defeaters[-1], guard=Constant(True))
    base = dataclasses.replace(rule, defeaters=rule.defeaters[:-1] + (last,))
    flipped = dataclasses.replace(base, defeaters=tuple(
        Defeater(g, d.response) for g, d in zip(flips, base.defeaters[:-1])) + (last,))
    a, b = activate(base, t, m), activate(flipped, t, m)
    assert (a.kind, a.requirement) == (b.kind, b.requirement)


def test_numeric_measure_tokens_drive_guards():
    rs = Ruleset(DECLS, (Rule("R1", "MealTime", Response("InformUser"), Comparison("temperature", ">", 35)),), ())
    tr = Trace((MeasureToken("temperature", 40), *parse_trace("MealTime, tock", rs).tokens))
    assert [v.rule_ids for v in check_trace(rs, tr).violations] == [("R1",)]
