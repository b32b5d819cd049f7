from __future__ import annotations

import pytest
from hypothesis import given
from hypothesis import strategies as st

from sleec.conformance import (
    AgentModel,
    Conformant,
    Counterexample,
    TriggerKind,
    explore,
    load_model,
    parse_model,
)
from sleec.core import DiagnosticError
from sleec.parser import format_trace
from sleec.semantics import check_trace
from sleec.wellformedness import SearchConfig

import oracles

STAGE5 = ("MealTime, userOccupied.false, InformUser, tock, FetchingIngredients, HumanOnFloor, tock, tock, "
          "tock, AbandonFetchingIngredients, tock, tock, humanAssents.true, CallEmergencySupport")

H8 = SearchConfig(horizon=8)


def _model_errors(src, rs):
    with pytest.raises(DiagnosticError) as e:
        parse_model(src, rs)
    return [d.code for d in e.value.diagnostics]


def test_parse_prompt_responder(corpus, table2):
    m = load_model(corpus / "prompt_responder.smodel", table2)
    assert m.name == "PromptResponder" and m.states == ("Idle", "Pending") and m.initial == "Idle"
    (t,) = m.outgoing("Pending", TriggerKind.TOCK)
    assert (t.target, t.emits) == ("Idle", ("CallEmergencySupport",))
    assert m.emitted() == {"InformUser", "CallEmergencySupport"}


def test_parse_tock_transition(table1):
    m = parse_model("model M\nstate A initial\nstate B\ntrans A -> B on tock\n", table1)
    assert m.outgoing("A", TriggerKind.TOCK)[0].target == "B"


def test_parse_guarded_auto_transition(table1):
    m = parse_model("model M\nstate A initial\ntrans A -> A on auto when humanAssents emit CallEmergencySupport\n", table1)
    (t,) = m.outgoing("A", TriggerKind.AUTO)
    assert t.reads() == ("humanAssents",)
    assert t.describe() == "trans A -> A on auto when humanAssents emit CallEmergencySupport"


def test_two_initial_states_rejected(table1):
    assert "initial" in _model_errors("model M\nstate A initial\nstate B initial\n", table1)


def test_missing_initial_state_rejected(table1):
    assert "initial" in _model_errors("model M\nstate A\n", table1)


def test_unknown_state_and_event_rejected(table1):
    codes = _model_errors("model M\nstate A initial\ntrans A -> C on tock\ntrans A -> A on Dance\n", table1)
    assert codes == ["unresolved", "unresolved"]


def test_model_invariants():
    with pytest.raises(ValueError):
        AgentModel("M", ("A",), "B")
    with pytest.raises(ValueError):
        AgentModel("M", ("A", "A"), "A")


# exploration ------------------------------------------------------------------


def test_delayed_fetch_reproduces_stage5(corpus, table1):
    res = explore(load_model(corpus / "delayed_fetch.smodel", table1), table1, H8)
    assert isinstance(res, Counterexample) and not res.conformant
    assert res.violated == ("R3",)
    assert format_trace(res.trace) == STAGE5
    assert "horizon 8" in res.explanation


def test_delayed_fetch_reproduces_stage5_under_table2(corpus, table2):
    res = explore(load_model(corpus / "delayed_fetch.smodel", table2), table2, H8)
    assert res.violated == ("R3'",) and format_trace(res.trace) == STAGE5


def test_prompt_responder_conforms(corpus, table1, table2):
    for rs in (table1, table2):
        res = explore(load_model(corpus / "prompt_responder.smodel", rs), rs, H8)
        assert isinstance(res, Conformant) and res.horizon == 8
        assert any("HorizonTooSmall" in w for w in res.warnings)
        assert res.summary() == "Conformant at horizon 8 (bounded exploration)"


def test_inert_model_misses_alarm(corpus, r2_only):
    res = explore(load_model(corpus / "empty.smodel", r2_only), r2_only, H8)
    assert res.violated == ("R2",)
    assert format_trace(res.trace) == "SmokeDetectorAlarm, tock, tock, tock"


def test_counterexample_is_valid(corpus, table1, table2, r2_only):
    for name, rs in [("delayed_fetch", table1), ("delayed_fetch", table2), ("empty", r2_only)]:
        res = explore(load_model(corpus / f"{name}.smodel", rs), rs, H8)
        assert tuple(sorted(check_trace(rs, res.trace).violated_rules)) == res.violated


def test_exploration_is_deterministic(corpus, table1):
    m = load_model(corpus / "delayed_fetch.smodel", table1)
    assert explore(m, table1, H8) == explore(m, table1, H8)


# random environments against conformant results ---------------------------------


def _alphabet(m, rs):
    from sleec.wellformedness import classify_events
    env, _ = classify_events(rs)
    used = {r.trigger for r in rs.rules} | {t.event for t in m.transitions if t.event}
    return [e for e in env if e in used and e not in m.emitted()]


@st.composite
def environments(draw, alphabet, measures, horizon=8):
    units = horizon + 1
    schedule = []
    for _ in range(units):
        picked = draw(st.lists(st.sampled_from(alphabet), max_size=2, unique=True))
        schedule.append([e for e in alphabet if e in picked])
    values = [{n: draw(st.booleans()) for n in measures} for _ in range(units)]
    return schedule, values


@pytest.mark.parametrize("which", ["almi_v1", "almi_v2"])
def test_conformant_model_survives_random_environments(corpus, which):
    from sleec.parser import load_ruleset
    rs = load_ruleset(corpus / f"{which}.sleec")
    m = load_model(corpus / "prompt_responder.smodel", rs)
    assert explore(m, rs, H8).conformant

    @given(environments(_alphabet(m, rs), sorted(rs.measures)))
    def run(env):
        tr = oracles.simulate(m, rs, *env)
        assert check_trace(rs, tr).violations == [], format_trace(tr)

    run()


def test_simulator_reproduces_stage5(corpus, table1):
    m = load_model(corpus / "delayed_fetch.smodel", table1)
    schedule = [["MealTime"], ["HumanOnFloor"]] + [[] for _ in range(5)]
    values = [{"userOccupied": False, "humanAssents": True, "userResponsive": True} for _ in schedule]
    tr = oracles.simulate(m, table1, schedule, values)
    assert format_trace(tr).startswith(STAGE5)
