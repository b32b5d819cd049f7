"""Bounded detection of conflicts, redundancies, insufficiency and
over-restrictiveness.

Every check explores traces of ``horizon + 1`` time units.  Each unit has
a total valuation of the relevant measures (consistent with the facts),
then the environment events of the unit, then the agent's emissions, then
a tock.  Live requirements are tracked relative to the current time
(remaining tocks), which keeps the state space finite, and states already
seen at an earlier unit are not revisited.

Conflicts quantify over agent schedules: the environment scenario is
explored by breadth-first search while the set of still-compliant agent
configurations is carried along; the scenario is a witness once that set
becomes empty.  The other checks are plain reachability questions over
combined environment and agent behaviour.
"""

from __future__ import annotations

import enum
import itertools
from dataclasses import dataclass, field
from typing import Iterable, Optional

from sleec.core import (
    Annotation,
    AnnotationKind,
    EventToken,
    Finding,
    FindingKind,
    MeasureToken,
    Requirement,
    RequirementKind,
    Rule,
    Ruleset,
    TOCK,
    Trace,
    sort_findings,
)
from sleec.semantics import (
    DEFAULT_TIME,
    TimeConfig,
    activate,
    eval_guard,
    relevant_measures,
    to_tocks,
    valuations,
)

OBL = RequirementKind.OBLIGATION
PRO = RequirementKind.PROHIBITION


class CheckKind(enum.Enum):
    CONFLICT = "conflict"
    REDUNDANCY = "redundancy"
    INSUFFICIENCY = "insufficiency"
    OVER_RESTRICTIVENESS = "over-restrictiveness"


ALL_CHECKS = frozenset(CheckKind)


@dataclass(frozen=True)
class SearchConfig:
    horizon: int = 8
    max_env_events_per_unit: int = 2
    checks: frozenset = ALL_CHECKS
    # raise the horizon to longest window + 2 instead of warning
    auto_horizon: bool = True
    whole_set: bool = False
    # conflict scenarios fire each environment event at most once; with
    # repetition a single rule can interfere with its own later activations
    single_shot: bool = True

    def __post_init__(self) -> None:
        if self.horizon < 1:
            raise ValueError("horizon must be at least 1")
        if self.max_env_events_per_unit < 1:
            raise ValueError("max_env_events_per_unit must be at least 1")
        object.__setattr__(self, "checks", frozenset(self.checks))


DEFAULT_SEARCH = SearchConfig()


def classify_events(rs: Ruleset) -> tuple[list[str], list[str]]:
    """Split declared events into (environment, agent), in declaration order.

    Agent events are those appearing as a response of some rule or
    annotation.
    """
    agent = set()
    for r in rs.rules:
        agent.update(resp.event for resp in r.responses())
    for a in rs.annotations:
        if a.response is not None:
            agent.add(a.response.event)
    env = [e for e in rs.events if e not in agent]
    return env, [e for e in rs.events if e in agent]


# --------------------------------------------------------------------------
# Live requirement bookkeeping
# --------------------------------------------------------------------------

# A live requirement is keyed by (rule id, kind, event) and maps to the
# number of tocks left in its window.  Obligations with the same key are
# discharged together, so only the earliest deadline matters; prohibitions
# with the same key cover the union of their windows, so the latest does.


def _merge(live: dict, key, left: int) -> None:
    cur = live.get(key)
    if cur is None:
        live[key] = left
    elif key[1] is OBL:
        live[key] = min(cur, left)
    else:
        live[key] = max(cur, left)


def _emit(live: dict, event: str) -> list[str]:
    """Process an occurrence of ``event``; returns violated rule ids."""
    bad = []
    for key in [k for k in live if k[2] == event]:
        if key[1] is OBL:
            del live[key]
        else:
            bad.append(key[0])
    return bad


def _tock(live: dict) -> tuple[dict, list[str]]:
    out, expired = {}, []
    for key, left in live.items():
        if left == 0:
            if key[1] is OBL:
                expired.append(key[0])
        else:
            out[key] = left - 1
    return out, expired


def _freeze(live: dict) -> tuple:
    return tuple(sorted(live.items(), key=lambda kv: (kv[0][0], kv[0][1].value, kv[0][2], kv[1])))


def _dominates(a: tuple, b: tuple) -> bool:
    """True if config ``a`` is at least as easy to satisfy as ``b``."""
    bd = dict(b)
    for key, left in a:
        other = bd.get(key)
        if other is None:
            return False
        if key[1] is OBL and other > left:
            return False
        if key[1] is PRO and other < left:
            return False
    return True


def _antichain(configs: Iterable[tuple]) -> frozenset:
    items = sorted(set(configs), key=len)
    kept: list[tuple] = []
    for c in items:
        if not any(_dominates(k, c) for k in kept):
            kept = [k for k in kept if not _dominates(c, k)]
            kept.append(c)
    return frozenset(kept)


# --------------------------------------------------------------------------
# Search context shared by all checks
# --------------------------------------------------------------------------


@dataclass
class _Pattern:
    """A concern or purpose, tracked as open instances with time left."""

    annotation: Annotation
    negated: bool
    event: str
    length: int


class _Context:
    def __init__(self, rs: Ruleset, rules: list[Rule], pattern: Optional[Annotation],
                 cfg: SearchConfig, tc: TimeConfig, max_env: int):
        self.rs = rs
        self.rules = rules
        self.tc = tc
        facts = [f.guard for f in rs.facts]
        guards = [g for r in rules for g in r.guards()]
        if pattern is not None and pattern.guard is not None:
            guards.append(pattern.guard)
        self.measures = relevant_measures(guards, facts)
        self.valuations = valuations(self.measures, rs.measures, guards, facts)
        env_all, agent_all = classify_events(rs)
        triggers = {r.trigger for r in rules}
        mentioned = set(triggers)
        for r in rules:
            mentioned.update(resp.event for resp in r.responses())
        self.pattern = None
        if pattern is not None:
            self.pattern = _Pattern(pattern, pattern.response.negated, pattern.response.event,
                                    to_tocks(pattern.response.window, tc))
            mentioned.update((pattern.trigger, pattern.response.event))
            triggers.add(pattern.trigger)
        self.env_events = [e for e in env_all if e in triggers]
        self.agent_events = [e for e in agent_all if e in mentioned]
        self.triggers = triggers
        ordered = any(e in triggers for e in self.agent_events)
        self.env_choices = [
            combo for k in range(0, max_env + 1)
            for combo in itertools.combinations(self.env_events, k)
        ]
        self._ordered_agent = ordered
        self.longest = max([to_tocks(resp.window, tc) for r in rules for resp in r.responses()]
                           + ([self.pattern.length] if self.pattern else []) + [0])
        self.single_shot = cfg.single_shot
        self.horizon = cfg.horizon
        if cfg.auto_horizon:
            self.horizon = max(cfg.horizon, self.longest + 2)
        self._acts: dict = {}
        self._ptrig: dict = {}

    def horizon_warning(self, what: str) -> Optional[Finding]:
        if self.horizon < self.longest + 1:
            return Finding(FindingKind.WARNING, horizon=self.horizon,
                           message=(f"{what}: horizon {self.horizon} is shorter than the longest "
                                    f"window ({self.longest}) + 1; results may be vacuous"))
        return None

    def activations(self, event: str, vi: int) -> list:
        """New (key, tocks left) entries when ``event`` occurs under valuation ``vi``."""
        k = (event, vi)
        hit = self._acts.get(k)
        if hit is None:
            hit = []
            for r in self.rules:
                if r.trigger != event:
                    continue
                req = activate(r, 0, self.valuations[vi], self.tc).requirement
                if req is not None:
                    hit.append(((r.id, req.kind, req.event), req.end - req.start))
            self._acts[k] = hit
        return hit

    def pattern_fires(self, event: str, vi: int) -> bool:
        p = self.pattern
        if p is None or event != p.annotation.trigger:
            return False
        k = vi
        if k not in self._ptrig:
            self._ptrig[k] = eval_guard(p.annotation.guard, self.valuations[vi]) is True
        return self._ptrig[k]

    def agent_choices(self, live: dict, pstate) -> list[tuple]:
        # events that can change nothing are left out
        useful = []
        for e in self.agent_events:
            if e in self.triggers or any(k[2] == e for k in live):
                useful.append(e)
            elif self.pattern is not None and e == self.pattern.event and pstate[0] is not None:
                useful.append(e)
        if self._ordered_agent:
            # an agent event can raise a requirement the same sequence answers
            grown = True
            while grown:
                grown = False
                for e in self.agent_events:
                    if e not in useful and e in self._responses_of(useful):
                        useful.append(e)
                        grown = True
            useful.sort(key=self.agent_events.index)
            return [p for k in range(len(useful) + 1) for p in itertools.permutations(useful, k)]
        return [c for k in range(len(useful) + 1) for c in itertools.combinations(useful, k)]

    def _responses_of(self, events) -> set:
        return {resp.event for r in self.rules if r.trigger in events for resp in r.responses()}

    def render(self, steps: list) -> Trace:
        """Trace of a path of (valuation, env events, agent events, tock?) steps."""
        tokens = []
        last: dict = {}
        for vi, env, agent, tock in steps:
            for name in self.measures:
                v = self.valuations[vi][name]
                if last.get(name, object()) != v or name not in last:
                    tokens.append(MeasureToken(name, v))
                    last[name] = v
            tokens.extend(EventToken(e) for e in env)
            tokens.extend(EventToken(e) for e in agent)
            if tock:
                tokens.append(TOCK)
        return Trace(tuple(tokens))


def _rules_of(rs: Ruleset, ids: Iterable[str]) -> list[Rule]:
    ids = list(dict.fromkeys(ids))
    return [rs.rule(i) for i in ids]


def _slice(rs: Ruleset, rules: list[Rule], pattern: Annotation) -> list[Rule]:
    """Rules connected to the pattern through shared events or fact-linked measures."""
    facts = [f.guard for f in rs.facts]

    def atoms(guards, events):
        ms = relevant_measures(guards, facts)
        return {("e", e) for e in events} | {("m", m) for m in ms}

    reach = atoms([pattern.guard], [pattern.trigger, pattern.response.event])
    pending = list(rules)
    kept: list[Rule] = []
    changed = True
    while changed:
        changed = False
        for r in list(pending):
            mine = atoms(r.guards(), [r.trigger] + [x.event for x in r.responses()])
            if mine & reach:
                reach |= mine
                kept.append(r)
                pending.remove(r)
                changed = True
    return [r for r in rules if r in kept]


# --------------------------------------------------------------------------
# Existential search over traces
# --------------------------------------------------------------------------


def _reach(ctx: _Context, comply: set, target: set, need_target: bool) -> Optional[Trace]:
    """Shortest trace that never violates ``comply`` rules and reaches the goal.

    The goal is: the pattern (if any) has been exhibited, at least one
    ``target`` violation has happened (if ``need_target``), and no
    obligation of a ``comply`` rule is left open.
    """
    p = ctx.pattern

    def goal(live, pstate, hit) -> bool:
        if need_target and not hit:
            return False
        if p is not None and not pstate[1]:
            return False
        return not any(k[1] is OBL and k[0] in comply for k in live)

    start = ((), (None, False), False)
    visited = {start}
    frontier = [(start, ())]

    def steps_of(path):
        out = []
        while path:
            path, step = path
            out.append(step)
        return out[::-1]

    for _unit in range(ctx.horizon + 1):
        nxt = []
        for (frozen, pstate, hit), path in frontier:
            for vi in range(len(ctx.valuations)):
                for env in ctx.env_choices:
                    live = dict(frozen)
                    inst, matched = pstate
                    for e in env:
                        for key, left in ctx.activations(e, vi):
                            _merge(live, key, left)
                        if ctx.pattern_fires(e, vi):
                            inst = p.length if inst is None else (
                                min(inst, p.length) if p.negated else max(inst, p.length))
                    for seq in ctx.agent_choices(live, (inst, matched)):
                        l2 = dict(live)
                        inst2, matched2, hit2 = inst, matched, hit
                        ok = True
                        for e in seq:
                            bad = _emit(l2, e)
                            if any(b in comply for b in bad):
                                ok = False
                                break
                            if any(b in target for b in bad):
                                hit2 = True
                            if p is not None and e == p.event and inst2 is not None:
                                if not p.negated:
                                    matched2 = True
                                inst2 = None
                            for key, left in ctx.activations(e, vi):
                                _merge(l2, key, left)
                            if ctx.pattern_fires(e, vi):
                                inst2 = p.length if inst2 is None else (
                                    min(inst2, p.length) if p.negated else max(inst2, p.length))
                        if not ok:
                            continue
                        if goal(l2, (inst2, matched2), hit2):
                            return ctx.render(steps_of((path, (vi, env, seq, False))))
                        l3, expired = _tock(l2)
                        if any(b in comply for b in expired):
                            continue
                        if any(b in target for b in expired):
                            hit2 = True
                        if inst2 is not None:
                            if inst2 == 0:
                                if p.negated:
                                    matched2 = True
                                inst2 = None
                            else:
                                inst2 -= 1
                        state = (_freeze(l3), (inst2, matched2), hit2)
                        new_path = (path, (vi, env, seq, True))
                        if goal(l3, state[1], hit2):
                            return ctx.render(steps_of(new_path))
                        if state not in visited:
                            visited.add(state)
                            nxt.append((state, new_path))
        frontier = nxt
    return None


def _escalating(rs, rules, pattern, cfg, tc, run):
    """Run ``run(ctx)`` with 1, 2, ... environment events per unit; first hit wins."""
    ctx = None
    for k in range(1, cfg.max_env_events_per_unit + 1):
        ctx = _Context(rs, rules, pattern, cfg, tc, k)
        found = run(ctx)
        if found is not None:
            return ctx, found
    return ctx, None


# --------------------------------------------------------------------------
# Conflicts
# --------------------------------------------------------------------------


def _conflict_search(ctx: _Context) -> Optional[Trace]:
    ids = {r.id for r in ctx.rules}
    start = (frozenset({()}), frozenset())
    visited = {start}
    frontier = [(start, ())]

    def steps_of(path):
        out = []
        while path:
            path, step = path
            out.append(step)
        return out[::-1]

    for _unit in range(ctx.horizon + 1):
        nxt = []
        for (belief, used), path in frontier:
            for vi in range(len(ctx.valuations)):
                for env in ctx.env_choices:
                    if ctx.single_shot and used.intersection(env):
                        continue
                    survivors = []
                    for frozen in belief:
                        live = dict(frozen)
                        for e in env:
                            for key, left in ctx.activations(e, vi):
                                _merge(live, key, left)
                        for seq in ctx.agent_choices(live, (None, False)):
                            l2 = dict(live)
                            ok = True
                            for e in seq:
                                if any(b in ids for b in _emit(l2, e)):
                                    ok = False
                                    break
                                for key, left in ctx.activations(e, vi):
                                    _merge(l2, key, left)
                            if not ok:
                                continue
                            l3, expired = _tock(l2)
                            if expired:
                                continue
                            survivors.append(_freeze(l3))
                    new_path = (path, (vi, env, (), True))
                    if not survivors:
                        return ctx.render(steps_of(new_path))
                    nb = (_antichain(survivors), used.union(env) if ctx.single_shot else used)
                    if nb not in visited:
                        visited.add(nb)
                        nxt.append((nb, new_path))
        frontier = nxt
    return None


def activated_requirements(rs: Ruleset, rules: list[Rule], tr: Trace, tc: TimeConfig) -> list[Requirement]:
    """Requirements the given rules activate along ``tr`` (no agent reaction)."""
    out, measures, t = [], {}, 0
    for tok in tr.tokens:
        if isinstance(tok, MeasureToken):
            measures[tok.name] = tok.value
        elif isinstance(tok, EventToken):
            for r in rules:
                if r.trigger == tok.name:
                    req = activate(r, t, measures, tc).requirement
                    if req is not None:
                        out.append(req)
        else:
            t += 1
    return out


def _blocking_pair(reqs: list[Requirement]) -> tuple[Requirement, ...]:
    for o in reqs:
        if o.kind is not OBL:
            continue
        for p in reqs:
            if p.kind is PRO and p.event == o.event and p.start <= o.start and o.end <= p.end:
                return (o, p)
    return tuple(reqs)


def check_conflict(rs: Ruleset, pair: tuple[str, ...], cfg: SearchConfig = DEFAULT_SEARCH,
                   tc: TimeConfig = DEFAULT_TIME, notes: Optional[list] = None) -> Optional[Finding]:
    """Conflict between the given rules (a pair, or any set in whole-set mode)."""
    rules = _rules_of(rs, pair)
    ctx, witness = _escalating(rs, rules, None, cfg, tc, _conflict_search)
    label = ", ".join(r.id for r in rules)
    if notes is not None and (w := ctx.horizon_warning(f"conflict({label})")):
        notes.append(w)
    if witness is None:
        return None
    reqs = _blocking_pair(activated_requirements(rs, rules, witness, tc))
    detail = ""
    if len(reqs) == 2 and reqs[0].kind is OBL and reqs[1].kind is PRO:
        o, p = reqs
        detail = (f": {p.source} prohibits {p.event} in [{p.start}, {p.end}] while "
                  f"{o.source} requires it in [{o.start}, {o.end}]")
    return Finding(FindingKind.CONFLICT, tuple(r.id for r in rules), witness=witness,
                   requirements=reqs, horizon=ctx.horizon, location=rules[-1].span,
                   message=f"rules {label} cannot both be obeyed{detail}")


# --------------------------------------------------------------------------
# Redundancy
# --------------------------------------------------------------------------


def check_redundancy(rs: Ruleset, pair: tuple[str, str], cfg: SearchConfig = DEFAULT_SEARCH,
                     tc: TimeConfig = DEFAULT_TIME, notes: Optional[list] = None) -> Optional[Finding]:
    """Report ``A`` redundant given ``B`` if no trace obeys B while violating A."""
    a, b = pair
    rules = _rules_of(rs, (a, b))
    ctx = None
    found = None
    for k in range(1, cfg.max_env_events_per_unit + 1):
        ctx = _Context(rs, rules, None, cfg, tc, k)
        if a == b:
            break
        found = _reach(ctx, comply={b}, target={a}, need_target=True)
        if found is not None:
            break
    if notes is not None and (w := ctx.horizon_warning(f"redundancy({a}, {b})")):
        notes.append(w)
    if found is not None:
        return None
    return Finding(FindingKind.REDUNDANCY, (a, b), horizon=ctx.horizon, location=rs.rule(a).span,
                   message=f"rule {a} is redundant given rule {b} (every trace obeying {b} obeys {a})")


# --------------------------------------------------------------------------
# Insufficiency and over-restrictiveness
# --------------------------------------------------------------------------


def _pattern_satisfiable(rs: Ruleset, ann: Annotation) -> bool:
    if ann.guard is None:
        return True
    facts = [f.guard for f in rs.facts]
    ms = relevant_measures([ann.guard], facts)
    return any(eval_guard(ann.guard, v) is True for v in valuations(ms, rs.measures, [ann.guard], facts))


def _achievable(rs: Ruleset, rules: list[Rule], ann: Annotation, cfg, tc):
    sliced = _slice(rs, rules, ann)
    ids = {r.id for r in sliced}
    return _escalating(rs, sliced, ann, cfg, tc,
                       lambda ctx: _reach(ctx, comply=ids, target=set(), need_target=False))


def check_insufficiency(rs: Ruleset, concern_id: str, cfg: SearchConfig = DEFAULT_SEARCH,
                        tc: TimeConfig = DEFAULT_TIME, notes: Optional[list] = None) -> Optional[Finding]:
    ann = rs.annotation(concern_id)
    if ann.kind is not AnnotationKind.CONCERN:
        raise ValueError(f"{concern_id} is not a concern")
    if not _pattern_satisfiable(rs, ann):
        if notes is not None:
            notes.append(Finding(FindingKind.WARNING, annotation_id=concern_id, location=ann.span,
                                 message=f"concern {concern_id} is vacuous: its trigger guard never holds"))
        return None
    ctx, witness = _achievable(rs, list(rs.rules), ann, cfg, tc)
    if notes is not None and (w := ctx.horizon_warning(f"insufficiency({concern_id})")):
        notes.append(w)
    if witness is None:
        return None
    return Finding(FindingKind.INSUFFICIENCY, annotation_id=concern_id, witness=witness,
                   horizon=ctx.horizon, location=ann.span,
                   message=f"the rules allow concern {concern_id}")


def check_overrestrictiveness(rs: Ruleset, purpose_id: str, cfg: SearchConfig = DEFAULT_SEARCH,
                              tc: TimeConfig = DEFAULT_TIME, notes: Optional[list] = None) -> Optional[Finding]:
    ann = rs.annotation(purpose_id)
    if ann.kind is not AnnotationKind.PURPOSE:
        raise ValueError(f"{purpose_id} is not a purpose")
    if not _pattern_satisfiable(rs, ann):
        if notes is not None:
            notes.append(Finding(FindingKind.WARNING, annotation_id=purpose_id, location=ann.span,
                                 message=f"purpose {purpose_id} is vacuous: its trigger guard never holds"))
        return Finding(FindingKind.OVER_RESTRICTIVENESS, annotation_id=purpose_id, horizon=cfg.horizon,
                       location=ann.span,
                       message=f"purpose {purpose_id} is vacuously unachievable")
    rules = list(rs.rules)
    ctx, witness = _achievable(rs, rules, ann, cfg, tc)
    if notes is not None and (w := ctx.horizon_warning(f"over-restrictiveness({purpose_id})")):
        notes.append(w)
    if witness is not None:
        return None
    blocking: tuple[str, ...] = ()
    for k in range(1, len(rules) + 1):
        for drop in itertools.combinations(rules, k):
            rest = [r for r in rules if r not in drop]
            if _achievable(rs, rest, ann, cfg, tc)[1] is not None:
                blocking = tuple(r.id for r in drop)
                break
        if blocking:
            break
    by = f"; blocked by {', '.join(blocking)}" if blocking else ""
    return Finding(FindingKind.OVER_RESTRICTIVENESS, blocking, annotation_id=purpose_id,
                   horizon=ctx.horizon, location=ann.span,
                   message=f"no compliant trace within {ctx.horizon} tocks achieves purpose {purpose_id}{by}")


# --------------------------------------------------------------------------
# Driver
# --------------------------------------------------------------------------


def analyze(rs: Ruleset, cfg: SearchConfig = DEFAULT_SEARCH, tc: TimeConfig = DEFAULT_TIME) -> list[Finding]:
    """Run the selected checks over all rule pairs and annotations."""
    findings: list[Finding] = []
    notes: list[Finding] = []
    ids = [r.id for r in rs.rules]
    if CheckKind.CONFLICT in cfg.checks and ids:
        if cfg.whole_set:
            f = check_conflict(rs, tuple(ids), cfg, tc, notes)
            if f:
                findings.append(f)
        else:
            for a, b in itertools.combinations(ids, 2):
                f = check_conflict(rs, (a, b), cfg, tc, notes)
                if f:
                    findings.append(f)
    if CheckKind.REDUNDANCY in cfg.checks:
        for a, b in itertools.permutations(ids, 2):
            f = check_redundancy(rs, (a, b), cfg, tc, notes)
            if f:
                findings.append(f)
    for ann in rs.annotations:
        if ann.kind is AnnotationKind.CONCERN and CheckKind.INSUFFICIENCY in cfg.checks:
            f = check_insufficiency(rs, ann.id, cfg, tc, notes)
        elif ann.kind is AnnotationKind.PURPOSE and CheckKind.OVER_RESTRICTIVENESS in cfg.checks:
            f = check_overrestrictiveness(rs, ann.id, cfg, tc, notes)
        else:
            continue
        if f:
            findings.append(f)
    unique = list(dict.fromkeys(notes))
    return sort_findings(findings + unique)
