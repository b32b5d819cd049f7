from __future__ import annotations

import pytest
from hypothesis import given
from hypothesis import strategies as st

from sleec.core import (
    And,
    Annotation,
    CapabilityDecl,
    Comparison,
    Defeater,
    Diagnostic,
    Duration,
    EventToken,
    Finding,
    FindingKind,
    InvariantError,
    MeasureAtom,
    MeasureToken,
    MeasureType,
    Not,
    Or,
    Requirement,
    RequirementKind,
    Response,
    Rule,
    Ruleset,
    Severity,
    SourceSpan,
    TOCK,
    TimeUnit,
    Trace,
    sort_findings,
)
from sleec.parser import parse_ruleset
from sleec.validation import validate_ruleset

from strategies import DECLS, rulesets, traces


def test_event_names_are_capitalised():
    assert CapabilityDecl.event("MealTime").name == "MealTime"
    with pytest.raises(InvariantError) as e:
        CapabilityDecl.event("mealTime")
    assert e.value.invariant == "event-name"


def test_measure_names_are_lowercase():
    with pytest.raises(InvariantError) as e:
        CapabilityDecl.measure("UserOccupied")
    assert e.value.invariant == "measure-name"


def test_duration_seconds_and_text():
    assert Duration(4).seconds == 240
    assert str(Duration(1, TimeUnit.HOURS)) == "1 hour"
    assert str(Duration(10)) == "10 minutes"


def test_spans_are_ignored_by_equality():
    a = MeasureAtom("userOccupied", span=SourceSpan(0, 3, 1, 1, 1, 4))
    assert a == MeasureAtom("userOccupied")


# one mutation per invariant: (name, builder raising it)
_SINGLE_FAULTS = [
    ("event-name", lambda rs: CapabilityDecl.event("lowercase")),
    ("measure-name", lambda rs: CapabilityDecl.measure("Upper")),
    ("measure-type-presence", lambda rs: CapabilityDecl(CapabilityDecl.event("E").kind, "E", MeasureType.BOOLEAN)),
    ("nary-arity", lambda rs: And((MeasureAtom("userOccupied"),))),
    ("nary-arity", lambda rs: Or(())),
    ("relop", lambda rs: Comparison("temperature", "=<", 3)),
    ("duration-non-negative", lambda rs: Duration(-1)),
    ("rule-id", lambda rs: Rule("r1", "MealTime", Response("InformUser"))),
    ("event-name", lambda rs: Response("informUser")),
    ("annotation-id", lambda rs: Annotation.fact("when", MeasureAtom("userOccupied"))),
    ("pattern-shape", lambda rs: Annotation(Annotation.concern("c", "MealTime", Response("InformUser")).kind, "c")),
    ("window-order", lambda rs: Requirement("R1", RequirementKind.OBLIGATION, "InformUser", 3, 2)),
    ("finding-witness", lambda rs: Finding(FindingKind.CONFLICT, ("R1", "R2"))),
    ("finding-horizon", lambda rs: Finding(FindingKind.OVER_RESTRICTIVENESS, ("R1",), "p1")),
    ("unresolved", lambda rs: Ruleset(rs.declarations, rs.rules + (Rule("Zz", "Foo", Response("InformUser")),),
                                      rs.annotations)),
    ("type", lambda rs: Ruleset(rs.declarations, rs.rules + (
        Rule("Zz", "MealTime", Response("InformUser"), Comparison("userOccupied", ">", 1)),), rs.annotations)),
    ("type", lambda rs: Ruleset(rs.declarations, rs.rules + (
        Rule("Zz", "MealTime", Response("InformUser"), MeasureAtom("temperature")),), rs.annotations)),
    ("duplicate", lambda rs: Ruleset(rs.declarations, rs.rules + (
        Rule("Zz", "MealTime", Response("InformUser")), Rule("Zz", "MealTime", Response("InformUser"))),
        rs.annotations)),
    ("duplicate", lambda rs: Ruleset(rs.declarations + (CapabilityDecl.event("MealTime"),), rs.rules,
                                     rs.annotations)),
]


@given(rulesets(), st.sampled_from(_SINGLE_FAULTS))
def test_single_invariant_violation_is_named(rs, fault):
    name, build = fault
    with pytest.raises(InvariantError) as e:
        build(rs)
    assert e.value.invariant == name


@given(rulesets())
def test_generated_rulesets_validate_cleanly(rs):
    assert [d for d in validate_ruleset(rs) if d.severity is Severity.ERROR] == []


@given(traces(), traces())
def test_timestamps_fold_over_concatenation(a, b):
    joined = (a + b).timestamps()
    assert joined[: len(a)] == a.timestamps()
    assert joined[len(a):] == [t + a.tocks for t in b.timestamps()]
    assert (a + b).tocks == a.tocks + b.tocks


def test_timestamps_count_preceding_tocks():
    tr = Trace((EventToken("MealTime"), TOCK, MeasureToken("userOccupied", True), TOCK, EventToken("InformUser")))
    assert tr.timestamps() == [0, 0, 1, 1, 2]


def test_validate_table1_has_no_errors(table1):
    assert [d for d in validate_ruleset(table1) if d.severity is Severity.ERROR] == []


def test_validate_reports_undeclared_event():
    rs = Ruleset.unchecked(DECLS, (Rule("R9", "Foo", Response("InformUser")),))
    diags = validate_ruleset(rs)
    assert [(d.severity, d.code) for d in diags] == [(Severity.ERROR, "unresolved")]
    assert "Foo" in diags[0].message


def test_validate_warns_on_contradictory_guard():
    rs = parse_ruleset(
        "event MealTime\nevent InformUser\nmeasure userOccupied: boolean\n"
        "R1 when MealTime and userOccupied and (not userOccupied) then InformUser\n"
    )
    diags = validate_ruleset(rs)
    assert [(d.severity, d.code) for d in diags] == [(Severity.WARNING, "unsatisfiable-guard")]


def test_validate_warns_when_facts_rule_out_guard():
    rs = parse_ruleset(
        "event MealTime\nevent InformUser\nmeasure userOccupied: boolean\n"
        "R1 when MealTime and userOccupied then InformUser\nfact f not userOccupied\n"
    )
    assert [d.code for d in validate_ruleset(rs)] == ["unsatisfiable-guard"]


def test_validate_returns_negative_duration_as_data():
    bad = Response.__new__(Response)
    object.__setattr__(bad, "event", "InformUser")
    object.__setattr__(bad, "negated", False)
    window = Duration.__new__(Duration)
    object.__setattr__(window, "magnitude", -2)
    object.__setattr__(window, "unit", TimeUnit.MINUTES)
    object.__setattr__(bad, "window", window)
    object.__setattr__(bad, "span", None)
    rs = Ruleset.unchecked(DECLS, (Rule("R1", "MealTime", Response("InformUser"), defeaters=(
        Defeater(Not(MeasureAtom("userOccupied")), bad),)),))
    assert [d.code for d in validate_ruleset(rs)] == ["duration"]


def test_findings_sort_by_kind_then_rules():
    w = Trace((TOCK,))
    fs = [
        Finding(FindingKind.WARNING, message="w"),
        Finding(FindingKind.OVER_RESTRICTIVENESS, ("R3",), "p1", horizon=8),
        Finding(FindingKind.CONFLICT, ("R2", "R3"), witness=w),
        Finding(FindingKind.CONFLICT, ("R1", "R3"), witness=w),
    ]
    kinds = [(f.kind, f.rule_ids) for f in sort_findings(fs)]
    assert kinds == [
        (FindingKind.CONFLICT, ("R1", "R3")),
        (FindingKind.CONFLICT, ("R2", "R3")),
        (FindingKind.OVER_RESTRICTIVENESS, ("R3",)),
        (FindingKind.WARNING, ()),
    ]


def test_diagnostic_render_has_line_and_column():
    d = Diagnostic(Severity.ERROR, "syntax", "expected 'then'", SourceSpan(10, 12, 2, 5, 2, 7))
    assert d.render("a.sleec") == "a.sleec:2:5: error[syntax]: expected 'then'"
    assert d.to_json()["span"]["line"] == 2
