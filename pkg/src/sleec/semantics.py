"""Discrete-time meaning of SLEEC rules.

Time advances in tocks; a :class:`TimeConfig` maps wall-clock durations to
tocks.  Guards are evaluated in strong Kleene logic, where ``None`` stands
for Unknown (a measure that has not been read yet).
"""

from __future__ import annotations

import enum
import itertools
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional, Union

from sleec.core import (
    And,
    Comparison,
    Constant,
    Duration,
    EventToken,
    Finding,
    FindingKind,
    Guard,
    Implies,
    MeasureAtom,
    MeasureToken,
    MeasureType,
    NonIntegralDuration,
    Not,
    Or,
    Requirement,
    RequirementKind,
    Rule,
    Ruleset,
    TimeUnit,
    Tock,
    Trace,
)

Value = Union[bool, int, float]
MeasureState = Mapping[str, Value]


@dataclass(frozen=True)
class TimeConfig:
    quantum: Duration = Duration(1, TimeUnit.MINUTES)

    def __post_init__(self) -> None:
        if self.quantum.magnitude <= 0:
            raise NonIntegralDuration(f"time quantum must be positive, got {self.quantum}")

    def halved(self) -> "TimeConfig":
        secs = self.quantum.seconds
        if secs % 2:
            raise NonIntegralDuration(f"cannot halve a quantum of {self.quantum}")
        return TimeConfig(Duration(secs // 2, TimeUnit.SECONDS))


DEFAULT_TIME = TimeConfig()


def to_tocks(d: Optional[Duration], cfg: TimeConfig = DEFAULT_TIME) -> int:
    """Length of ``d`` in tocks; an absent window has length 0."""
    if d is None:
        return 0
    q = cfg.quantum.seconds
    if d.seconds % q:
        raise NonIntegralDuration(f"{d} is not a whole number of {cfg.quantum} tocks")
    return d.seconds // q


def check_durations(rs: Ruleset, cfg: TimeConfig) -> None:
    """Raise :class:`NonIntegralDuration` if any window in ``rs`` does not normalise."""
    for r in rs.rules:
        for resp in r.responses():
            to_tocks(resp.window, cfg)
    for a in rs.annotations:
        if a.response is not None:
            to_tocks(a.response.window, cfg)


# --------------------------------------------------------------------------
# Guards
# --------------------------------------------------------------------------


def eval_guard(g: Optional[Guard], m: MeasureState) -> Optional[bool]:
    if g is None:
        return True
    if isinstance(g, Constant):
        return g.value
    if isinstance(g, MeasureAtom):
        v = m.get(g.name)
        return None if v is None else bool(v)
    if isinstance(g, Comparison):
        v = m.get(g.name)
        return None if v is None else g.holds(v)
    if isinstance(g, Not):
        v = eval_guard(g.child, m)
        return None if v is None else not v
    if isinstance(g, And):
        vals = [eval_guard(c, m) for c in g.operands]
        if False in vals:
            return False
        return None if None in vals else True
    if isinstance(g, Or):
        vals = [eval_guard(c, m) for c in g.operands]
        if True in vals:
            return True
        return None if None in vals else False
    if isinstance(g, Implies):
        lhs, rhs = eval_guard(g.lhs, m), eval_guard(g.rhs, m)
        if lhs is False or rhs is True:
            return True
        if lhs is None or rhs is None:
            return None
        return False
    raise TypeError(f"not a guard: {g!r}")


def unknown_measures(g: Optional[Guard], m: MeasureState) -> tuple[str, ...]:
    if g is None:
        return ()
    return tuple(n for n in g.measures() if m.get(n) is None)


def thresholds(guards: Iterable[Guard]) -> dict[str, list[Value]]:
    out: dict[str, set] = {}
    for g in guards:
        for node in g.walk():
            if isinstance(node, Comparison):
                out.setdefault(node.name, set()).add(node.value)
    return {k: sorted(v) for k, v in out.items()}


def numeric_representatives(cuts: list[Value]) -> list[Value]:
    """One value per region of the line cut at ``cuts``, low to high."""
    if not cuts:
        return [0]
    reps: list[Value] = [cuts[0] - 1]
    for a, b in zip(cuts, cuts[1:]):
        reps.append(a)
        reps.append((a + b) / 2)
    reps.append(cuts[-1])
    reps.append(cuts[-1] + 1)
    return reps


def relevant_measures(guards: Iterable[Optional[Guard]], facts: Iterable[Guard]) -> list[str]:
    """Measures of ``guards`` plus those of facts sharing a measure with them."""
    names: dict[str, None] = {}
    for g in guards:
        if g is not None:
            for n in g.measures():
                names.setdefault(n, None)
    facts = list(facts)
    changed = True
    while changed:
        changed = False
        for f in facts:
            ms = f.measures()
            if any(n in names for n in ms) and not all(n in names for n in ms):
                for n in ms:
                    names.setdefault(n, None)
                changed = True
    return list(names)


def valuations(
    measures: list[str],
    types: Mapping[str, MeasureType],
    guards: Iterable[Guard],
    facts: Iterable[Guard] = (),
) -> list[dict[str, Value]]:
    """Total valuations of ``measures`` that satisfy every applicable fact.

    Boolean measures range over false, true; numeric ones over one
    representative per region cut by the thresholds in ``guards``.  The
    order is canonical: false before true, low before high, first measure
    varying slowest.
    """
    guards = list(guards)
    facts = list(facts)
    cuts = thresholds(guards + facts)
    domains = []
    for n in measures:
        if types[n] is MeasureType.BOOLEAN:
            domains.append([False, True])
        else:
            domains.append(numeric_representatives(cuts.get(n, [])))
    applicable = [f for f in facts if all(x in measures for x in f.measures())]
    out = []
    for combo in itertools.product(*domains):
        v = dict(zip(measures, combo))
        if all(eval_guard(f, v) is not False for f in applicable):
            out.append(v)
    return out


# --------------------------------------------------------------------------
# Activation
# --------------------------------------------------------------------------


class ActivationKind(enum.Enum):
    INACTIVE = "inactive"
    BASE = "base"
    DEFEATER = "defeater"
    DEFEATED = "defeated"
    UNRESOLVED = "unresolved"


@dataclass(frozen=True)
class Activation:
    kind: ActivationKind
    requirement: Optional[Requirement] = None
    defeater: Optional[int] = None
    # measures that were Unknown: the trigger guard's (UNRESOLVED) or
    # those of defeaters skipped on the way
    unknown: tuple[str, ...] = ()

    def to_json(self) -> dict:
        return {
            "kind": self.kind.value,
            "defeater": self.defeater,
            "requirement": None if self.requirement is None else self.requirement.to_json(),
            "unknown": list(self.unknown),
        }


def _requirement(rule: Rule, resp, t: int, cfg: TimeConfig) -> Requirement:
    kind = RequirementKind.PROHIBITION if resp.negated else RequirementKind.OBLIGATION
    return Requirement(rule.id, kind, resp.event, t, t + to_tocks(resp.window, cfg))


def activate(rule: Rule, t: int, m: MeasureState, cfg: TimeConfig = DEFAULT_TIME) -> Activation:
    trig = eval_guard(rule.guard, m)
    if trig is None:
        return Activation(ActivationKind.UNRESOLVED, unknown=unknown_measures(rule.guard, m))
    if trig is False:
        return Activation(ActivationKind.INACTIVE)
    skipped: list[str] = []
    for idx in range(len(rule.defeaters) - 1, -1, -1):
        d = rule.defeaters[idx]
        v = eval_guard(d.guard, m)
        if v is None:
            skipped.extend(x for x in unknown_measures(d.guard, m) if x not in skipped)
            continue
        if v:
            if d.response is None:
                return Activation(ActivationKind.DEFEATED, defeater=idx, unknown=tuple(skipped))
            return Activation(ActivationKind.DEFEATER, _requirement(rule, d.response, t, cfg),
                              defeater=idx, unknown=tuple(skipped))
    return Activation(ActivationKind.BASE, _requirement(rule, rule.response, t, cfg),
                      unknown=tuple(skipped))


# --------------------------------------------------------------------------
# Finding constructors shared by the offline checker and the monitor
# --------------------------------------------------------------------------


def expiry_violation(req: Requirement, t: int, witness: Trace) -> Finding:
    return Finding(
        FindingKind.VIOLATION, (req.source,), witness=witness, requirements=(req,), time=t,
        message=(f"{req.source}: {req.event} required within [{req.start}, {req.end}] "
                 f"did not occur (deadline passed at t={t})"),
    )


def prohibition_violation(req: Requirement, t: int, witness: Trace) -> Finding:
    return Finding(
        FindingKind.VIOLATION, (req.source,), witness=witness, requirements=(req,), time=t,
        message=(f"{req.source}: {req.event} occurred at t={t} while prohibited "
                 f"within [{req.start}, {req.end}]"),
    )


def residual_violation(req: Requirement, t: int, witness: Trace) -> Finding:
    return Finding(
        FindingKind.VIOLATION, (req.source,), witness=witness, requirements=(req,), time=t,
        message=(f"{req.source}: {req.event} required within [{req.start}, {req.end}] "
                 f"still open at end of trace (t={t})"),
    )


def unresolved_warning(rule: Rule, act: Activation, t: int) -> Finding:
    return Finding(
        FindingKind.WARNING, (rule.id,), time=t,
        message=(f"{rule.id}: trigger {rule.trigger} at t={t} ignored, guard depends on "
                 f"unread measure(s) {', '.join(act.unknown)}"),
    )


# --------------------------------------------------------------------------
# Offline trace checking
# --------------------------------------------------------------------------


@dataclass
class TraceCheck:
    findings: list[Finding] = field(default_factory=list)
    residual: list[Requirement] = field(default_factory=list)

    @property
    def violations(self) -> list[Finding]:
        return [f for f in self.findings if f.kind is FindingKind.VIOLATION]

    @property
    def violated_rules(self) -> list[str]:
        seen: dict[str, None] = {}
        for f in self.violations:
            for r in f.rule_ids:
                seen.setdefault(r, None)
        return list(seen)


def check_trace(rs: Ruleset, tr: Trace, cfg: TimeConfig = DEFAULT_TIME, strict: bool = False) -> TraceCheck:
    """Check a complete trace against ``rs``.

    Obligations still open at the end are returned as ``residual``; with
    ``strict`` they become violations instead.
    """
    result = TraceCheck()
    triggered: dict[str, list[Rule]] = {}
    for r in rs.rules:
        triggered.setdefault(r.trigger, []).append(r)
    measures: dict[str, Value] = {}
    live: list[Requirement] = []
    t = 0
    tokens = tr.tokens
    for i, tok in enumerate(tokens):
        if isinstance(tok, MeasureToken):
            measures[tok.name] = tok.value
        elif isinstance(tok, EventToken):
            witness = Trace(tokens[: i + 1])
            keep = []
            for req in live:
                if req.event == tok.name and req.covers(t):
                    if req.kind is RequirementKind.OBLIGATION:
                        continue
                    result.findings.append(prohibition_violation(req, t, witness))
                keep.append(req)
            live = keep
            for rule in triggered.get(tok.name, ()):
                act = activate(rule, t, measures, cfg)
                if act.kind is ActivationKind.UNRESOLVED:
                    result.findings.append(unresolved_warning(rule, act, t))
                elif act.requirement is not None:
                    live.append(act.requirement)
        elif isinstance(tok, Tock):
            t += 1
            witness = Trace(tokens[: i + 1])
            keep = []
            for req in live:
                if req.end < t:
                    if req.kind is RequirementKind.OBLIGATION:
                        result.findings.append(expiry_violation(req, t, witness))
                    continue
                keep.append(req)
            live = keep
        else:
            raise TypeError(f"not a trace token: {tok!r}")
    residual = [r for r in live if r.kind is RequirementKind.OBLIGATION]
    if strict:
        result.findings.extend(residual_violation(r, t, tr) for r in residual)
    else:
        result.residual = residual
    return result
