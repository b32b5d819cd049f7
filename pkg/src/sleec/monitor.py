"""Online guardrail monitor: consumes trace tokens one at a time."""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from typing import Iterable, Optional

from sleec.core import (
    EventToken,
    Finding,
    FindingKind,
    MeasureToken,
    MeasureType,
    Requirement,
    RequirementKind,
    Ruleset,
    Tock,
    Trace,
    TraceToken,
)
from sleec.parser import format_rule
from sleec.semantics import (
    DEFAULT_TIME,
    Activation,
    ActivationKind,
    TimeConfig,
    activate,
    check_durations,
    expiry_violation,
    prohibition_violation,
    residual_violation,
    unresolved_warning,
)


class UnknownCapability(KeyError):
    pass


class MissingCapability(ValueError):
    pass


class MonitorHalted(RuntimeError):
    pass


@dataclass
class StepReport:
    time: int
    activations: list[tuple[str, Activation]] = field(default_factory=list)
    discharged: list[Requirement] = field(default_factory=list)
    violations: list[Finding] = field(default_factory=list)
    warnings: list[Finding] = field(default_factory=list)
    blocked: list[tuple[str, tuple[str, ...], int]] = field(default_factory=list)
    pending: list[Requirement] = field(default_factory=list)

    def to_json(self) -> dict:
        return {
            "t": self.time,
            "activations": [dict(rule=rid, **act.to_json()) for rid, act in self.activations],
            "violations": [{"rules": list(f.rule_ids), "time": f.time, "message": f.message}
                           for f in self.violations],
            "blocked": [{"event": e, "rules": list(rules), "until": until}
                        for e, rules, until in self.blocked],
            "pending": [r.to_json() for r in self.pending],
            "discharged": [r.to_json() for r in self.discharged],
        }

    def to_line(self) -> str:
        return json.dumps(self.to_json(), ensure_ascii=False)


class QueryStatus(enum.Enum):
    ALLOWED = "allowed"
    BLOCKED = "blocked"
    OBLIGED = "obliged"


@dataclass(frozen=True)
class QueryResult:
    status: QueryStatus
    rules: tuple[str, ...] = ()
    # prohibition ends when blocked, obligation deadlines when obliged
    deadlines: tuple[int, ...] = ()


@dataclass
class ReloadReport:
    kept: list[Requirement]
    dropped: list[Requirement]
    generation: int


class MonitorSession:
    """Mutable monitoring state for one ruleset.

    A session is owned by one thread at a time.  ``step`` follows the
    same state evolution as :func:`sleec.semantics.check_trace`.
    """

    def __init__(self, rs: Ruleset, tc: TimeConfig = DEFAULT_TIME, fail_stop: bool = False):
        check_durations(rs, tc)
        self.ruleset = rs
        self.time_config = tc
        self.fail_stop = fail_stop
        self.time = 0
        self.measures: dict = {}
        self.live: list[Requirement] = []
        self.findings: list[Finding] = []
        self.generation = 0
        self.halted = False
        self._tokens: list[TraceToken] = []
        self._index(rs)

    def _index(self, rs: Ruleset) -> None:
        self._triggered: dict = {}
        for r in rs.rules:
            self._triggered.setdefault(r.trigger, []).append(r)
        self._events = set(rs.events)
        self._measures = rs.measures

    # ------------------------------------------------------------------

    def _check_token(self, tok: TraceToken) -> None:
        if isinstance(tok, EventToken):
            if tok.name not in self._events:
                raise UnknownCapability(tok.name)
        elif isinstance(tok, MeasureToken):
            mt = self._measures.get(tok.name)
            if mt is None:
                raise UnknownCapability(tok.name)
            if (mt is MeasureType.BOOLEAN) != isinstance(tok.value, bool):
                raise TypeError(f"value {tok.value!r} does not fit {mt.value} measure {tok.name}")
        elif not isinstance(tok, Tock):
            raise TypeError(f"not a trace token: {tok!r}")

    def step(self, tok: TraceToken) -> StepReport:
        if self.halted:
            raise MonitorHalted("session stopped after a violation")
        self._check_token(tok)
        self._tokens.append(tok)
        report = StepReport(self.time)
        if isinstance(tok, MeasureToken):
            self.measures[tok.name] = tok.value
        elif isinstance(tok, EventToken):
            self._on_event(tok.name, report)
        else:
            self._on_tock(report)
        report.time = self.time
        self.findings.extend(report.violations)
        self.findings.extend(report.warnings)
        report.blocked = self.blocked_events()
        report.pending = [r for r in self.live if r.kind is RequirementKind.OBLIGATION]
        if self.fail_stop and report.violations:
            self.halted = True
        return report

    def _witness(self) -> Trace:
        return Trace(tuple(self._tokens))

    def _on_event(self, name: str, report: StepReport) -> None:
        t = self.time
        remaining = []
        for req in self.live:
            if req.event == name and req.covers(t):
                if req.kind is RequirementKind.OBLIGATION:
                    report.discharged.append(req)
                    continue
                report.violations.append(prohibition_violation(req, t, self._witness()))
            remaining.append(req)
        self.live = remaining
        for rule in self._triggered.get(name, ()):
            act = activate(rule, t, self.measures, self.time_config)
            report.activations.append((rule.id, act))
            if act.kind is ActivationKind.UNRESOLVED:
                report.warnings.append(unresolved_warning(rule, act, t))
            elif act.requirement is not None:
                self.live.append(act.requirement)

    def _on_tock(self, report: StepReport) -> None:
        self.time += 1
        t = self.time
        remaining = []
        for req in self.live:
            if req.end >= t:
                remaining.append(req)
            elif req.kind is RequirementKind.OBLIGATION:
                report.violations.append(expiry_violation(req, t, self._witness()))
        self.live = remaining

    # ------------------------------------------------------------------

    def blocked_events(self) -> list[tuple[str, tuple[str, ...], int]]:
        out: dict[str, list[Requirement]] = {}
        for req in self.live:
            if req.kind is RequirementKind.PROHIBITION and req.covers(self.time):
                out.setdefault(req.event, []).append(req)
        return [(e, tuple(dict.fromkeys(r.source for r in reqs)), max(r.end for r in reqs))
                for e, reqs in sorted(out.items())]

    def query_blocked(self, event: str) -> QueryResult:
        if event not in self._events:
            raise UnknownCapability(event)
        t = self.time
        pro = [r for r in self.live if r.event == event and r.kind is RequirementKind.PROHIBITION and r.covers(t)]
        if pro:
            return QueryResult(QueryStatus.BLOCKED, tuple(dict.fromkeys(r.source for r in pro)),
                               tuple(r.end for r in pro))
        obl = [r for r in self.live if r.event == event and r.kind is RequirementKind.OBLIGATION]
        if obl:
            return QueryResult(QueryStatus.OBLIGED, tuple(dict.fromkeys(r.source for r in obl)),
                               tuple(r.end for r in obl))
        return QueryResult(QueryStatus.ALLOWED)

    def feed(self, tokens: Iterable[TraceToken]) -> list[StepReport]:
        return [self.step(tok) for tok in tokens]

    def close(self, strict: bool = False) -> list[Finding]:
        """End of input: in strict mode open obligations become violations."""
        residual = [r for r in self.live if r.kind is RequirementKind.OBLIGATION]
        if not strict:
            return []
        out = [residual_violation(r, self.time, self._witness()) for r in residual]
        self.findings.extend(out)
        return out

    def residual(self) -> list[Requirement]:
        return [r for r in self.live if r.kind is RequirementKind.OBLIGATION]

    @property
    def violations(self) -> list[Finding]:
        return [f for f in self.findings if f.kind is FindingKind.VIOLATION]

    def reload_ruleset(self, rs: Ruleset) -> ReloadReport:
        """Swap in ``rs``; requirements of rules whose text changed are dropped."""
        check_durations(rs, self.time_config)
        declared = set(rs.events)
        missing = sorted({r.event for r in self.live if r.event not in declared})
        if missing:
            raise MissingCapability(f"live requirements use undeclared event(s): {', '.join(missing)}")
        old = {r.id: format_rule(r) for r in self.ruleset.rules}
        new = {r.id: format_rule(r) for r in rs.rules}
        kept, dropped = [], []
        for req in self.live:
            (kept if old.get(req.source) is not None and old.get(req.source) == new.get(req.source)
             else dropped).append(req)
        self.live = kept
        self.ruleset = rs
        self._index(rs)
        self.generation += 1
        return ReloadReport(kept, dropped, self.generation)


def open_session(rs: Ruleset, tc: TimeConfig = DEFAULT_TIME, fail_stop: bool = False) -> MonitorSession:
    return MonitorSession(rs, tc, fail_stop)
