"""Bounded conformance checking of small agent models against a ruleset.

An agent model is a deterministic state machine that reacts to environment
events, to the passage of time and to its own ``auto`` transitions, and
emits agent events.  Measures are environment inputs sampled at the moment
a guarded transition reads them.  :func:`explore` searches every
environment behaviour up to a horizon, breadth first, and returns the first
violating run in canonical order.  The result is a bounded approximation:
``Conformant(h)`` says nothing about behaviour after unit ``h``.
"""

from __future__ import annotations

import enum
import itertools
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Optional, Union

from sleec.core import (
    CapabilityKind,
    Diagnostic,
    DiagnosticError,
    EventToken,
    Guard,
    MeasureToken,
    MeasureType,
    Ruleset,
    Severity,
    SourceSpan,
    TOCK,
    Trace,
)
from sleec.parser import _RulesetParser, _SyntaxError, format_guard
from sleec.semantics import (
    DEFAULT_TIME,
    ActivationKind,
    TimeConfig,
    activate,
    check_durations,
    check_trace,
    eval_guard,
    numeric_representatives,
    thresholds,
)
from sleec.validation import _check_guard
from sleec.wellformedness import (
    DEFAULT_SEARCH,
    SearchConfig,
    _emit,
    _freeze,
    _merge,
    _tock,
    classify_events,
)

STATE_NAME = re.compile(r"[A-Za-z][A-Za-z0-9_]*\Z")


class TriggerKind(enum.Enum):
    EVENT = "event"
    TOCK = "tock"
    AUTO = "auto"


@dataclass(frozen=True)
class Transition:
    source: str
    target: str
    trigger: TriggerKind
    event: Optional[str] = None
    guard: Optional[Guard] = None
    emits: tuple[str, ...] = ()
    span: Optional[SourceSpan] = field(default=None, compare=False)

    def reads(self) -> tuple[str, ...]:
        return () if self.guard is None else tuple(self.guard.measures())

    def describe(self) -> str:
        on = self.event if self.trigger is TriggerKind.EVENT else self.trigger.value
        text = f"trans {self.source} -> {self.target} on {on}"
        if self.guard is not None:
            text += f" when {format_guard(self.guard)}"
        if self.emits:
            text += " emit " + ", ".join(self.emits)
        return text


@dataclass(frozen=True)
class AgentModel:
    name: str
    states: tuple[str, ...]
    initial: str
    transitions: tuple[Transition, ...] = ()

    def __post_init__(self):
        if len(set(self.states)) != len(self.states):
            raise ValueError("state names must be unique")
        if self.initial not in self.states:
            raise ValueError(f"initial state {self.initial!r} is not a state")
        for tr in self.transitions:
            if tr.source not in self.states or tr.target not in self.states:
                raise ValueError(f"transition uses an unknown state: {tr.describe()}")
            if (tr.trigger is TriggerKind.EVENT) != (tr.event is not None):
                raise ValueError("only event-triggered transitions name an event")

    def outgoing(self, state: str, trigger: TriggerKind, event: Optional[str] = None) -> list[Transition]:
        return [t for t in self.transitions
                if t.source == state and t.trigger is trigger and t.event == event]

    def emitted(self) -> set[str]:
        return {e for t in self.transitions for e in t.emits}

    def guards(self) -> list[Guard]:
        return [t.guard for t in self.transitions if t.guard is not None]


@dataclass(frozen=True)
class Conformant:
    horizon: int
    warnings: tuple[str, ...] = ()

    @property
    def conformant(self) -> bool:
        return True

    def summary(self) -> str:
        return f"Conformant at horizon {self.horizon} (bounded exploration)"


@dataclass(frozen=True)
class Counterexample:
    trace: Trace
    violated: tuple[str, ...]
    explanation: str
    horizon: int
    warnings: tuple[str, ...] = ()

    @property
    def conformant(self) -> bool:
        return False

    def summary(self) -> str:
        return f"Counterexample violating {', '.join(self.violated)}"


ConformanceResult = Union[Conformant, Counterexample]


# --------------------------------------------------------------------------
# Model parsing
# --------------------------------------------------------------------------


class _ModelParser(_RulesetParser):
    """Grammar::

        model NAME
        state NAME [initial]
        trans FROM -> TO on (EVENT | tock | auto) [when GUARD] [emit E1, E2 ...]
    """

    _HEADS = ("model", "state", "trans")

    def __init__(self, src: str, rs: Ruleset):
        super().__init__(src)
        self.rs = rs

    def word(self, text: str, k: int = 0) -> bool:
        t = self.peek(k)
        return t.kind == "ident" and t.text == text

    def expect_word(self, text: str) -> None:
        if not self.word(text):
            self.fail([repr(text)])
        self.advance()

    def at_item_start(self) -> bool:
        return any(self.word(h) for h in self._HEADS)

    def error(self, code: str, msg: str, span: Optional[SourceSpan]) -> None:
        self.diags.append(Diagnostic(Severity.ERROR, code, msg, span))

    def name(self, what: str):
        t = self.peek()
        if t.kind != "ident" or not STATE_NAME.match(t.text):
            self.fail([what])
        return self.advance()

    def parse_model(self) -> AgentModel:
        name = None
        states: dict[str, SourceSpan] = {}
        initials: list[tuple[str, SourceSpan]] = []
        raw: list[tuple] = []
        while self.peek().kind != "eof":
            try:
                start = self.peek()
                if self.word("model"):
                    self.advance()
                    tok = self.name("a model name")
                    if name is not None:
                        self.error("duplicate", "model header given twice", self.span_from(start))
                    name = tok.text
                elif self.word("state"):
                    self.advance()
                    tok = self.name("a state name")
                    is_initial = self.word("initial")
                    if is_initial:
                        self.advance()
                    span = self.span_from(start)
                    if tok.text in states:
                        self.error("duplicate", f"state {tok.text!r} declared twice", span)
                    else:
                        states[tok.text] = span
                    if is_initial:
                        initials.append((tok.text, span))
                elif self.word("trans"):
                    raw.append(self.transition())
                else:
                    self.fail(["'model'", "'state'", "'trans'"])
            except _SyntaxError as e:
                self.diags.append(e.diag)
                self.resync()
        if name is None and not self.diags:
            self.error("syntax", "missing 'model NAME' header", self.pos.span(0, 0))
        if not initials:
            self.error("initial", "no initial state", self.pos.span(0, 0))
        for extra, span in initials[1:]:
            self.error("initial", f"second initial state {extra!r}", span)
        transitions = []
        for src, dst, trig, ev, guard, emits, span, ev_span in raw:
            for s in (src, dst):
                if s not in states:
                    self.error("unresolved", f"unknown state {s!r}", span)
            where = f"transition at {span}"
            if ev is not None:
                self._check_event(ev, where, ev_span)
            for e, e_span in emits:
                self._check_event(e, where, e_span)
            if guard is not None:
                _check_guard(guard, self.rs, where, self.diags)
            transitions.append(Transition(src, dst, trig, ev, guard, tuple(e for e, _ in emits), span))
        if any(d.severity is Severity.ERROR for d in self.diags):
            raise DiagnosticError(self.diags)
        return AgentModel(name, tuple(states), initials[0][0], tuple(transitions))

    def _check_event(self, name: str, where: str, span) -> None:
        d = self.rs.decl(name)
        if d is None:
            self.error("unresolved", f"{where}: undeclared event {name!r}", span)
        elif d.kind is not CapabilityKind.EVENT:
            self.error("type", f"{where}: {name!r} is a measure, not an event", span)

    def transition(self) -> tuple:
        start = self.advance()
        src = self.name("a source state").text
        self.expect("->")
        dst = self.name("a target state").text
        self.expect_word("on")
        ev = None
        ev_tok = self.peek()
        if self.at("tock"):
            self.advance()
            trig = TriggerKind.TOCK
        elif self.word("auto"):
            self.advance()
            trig = TriggerKind.AUTO
        elif ev_tok.kind == "ident":
            self.advance()
            trig, ev = TriggerKind.EVENT, ev_tok.text
        else:
            self.fail(["an event name", "'tock'", "'auto'"])
        ev_span = self.pos.span(ev_tok.start, ev_tok.end)
        guard = None
        if self.at("when"):
            self.advance()
            guard = self.guard()
        emits = []
        if self.word("emit"):
            self.advance()
            while True:
                t = self.peek()
                if t.kind != "ident":
                    self.fail(["an event name"])
                self.advance()
                emits.append((t.text, self.pos.span(t.start, t.end)))
                if not self.at(","):
                    break
                self.advance()
        return src, dst, trig, ev, guard, emits, self.span_from(start), ev_span


def parse_model(src: str, rs: Ruleset) -> AgentModel:
    """Parse an agent model whose capabilities come from ``rs``.

    Raises :class:`DiagnosticError` listing every problem found.
    """
    return _ModelParser(src, rs).parse_model()


def load_model(path, rs: Ruleset) -> AgentModel:
    return parse_model(Path(path).read_text(encoding="utf-8"), rs)


# --------------------------------------------------------------------------
# Exploration
# --------------------------------------------------------------------------


@dataclass
class _Run:
    """Mutable state of one run inside a single unit."""

    state: str
    live: dict
    measures: dict
    read: set
    tokens: list
    # (token index, violated rule id)
    bad: list

    def copy(self) -> "_Run":
        return _Run(self.state, dict(self.live), dict(self.measures), set(self.read),
                    list(self.tokens), list(self.bad))

    def key(self) -> tuple:
        return (self.state, _freeze(self.live), tuple(sorted(self.measures.items())),
                frozenset(self.read))


class _Explorer:
    def __init__(self, m: AgentModel, rs: Ruleset, cfg: SearchConfig, tc: TimeConfig):
        self.m, self.rs, self.cfg, self.tc = m, rs, cfg, tc
        self.triggered: dict[str, list] = {}
        for r in rs.rules:
            self.triggered.setdefault(r.trigger, []).append(r)
        self.facts = [f.guard for f in rs.facts]
        guards = [g for r in rs.rules for g in r.guards()] + self.facts + m.guards()
        cuts = thresholds(guards)
        self.domains = {}
        for n, mt in rs.measures.items():
            self.domains[n] = ([False, True] if mt is MeasureType.BOOLEAN
                               else numeric_representatives(cuts.get(n, [])))
        emitted = m.emitted()
        env, _ = classify_events(rs)
        reactive = {t.event for t in m.transitions if t.trigger is TriggerKind.EVENT}
        self.env = [e for e in env if e not in emitted and (e in self.triggered or e in reactive)]
        self.choices = [()]
        for k in range(1, max(cfg.max_env_events_per_unit, 0) + 1):
            self.choices.extend(itertools.combinations(self.env, k))
        self._acts: dict = {}

    # rule bookkeeping ----------------------------------------------------

    def occur(self, run: _Run, event: str) -> None:
        run.tokens.append(EventToken(event))
        idx = len(run.tokens) - 1
        run.bad.extend((idx, rid) for rid in _emit(run.live, event))
        for rule in self.triggered.get(event, ()):
            names = _rule_measures(rule)
            # a measure has one value per instant: what the rule saw now is
            # what a later read in this instant sees
            run.read.update(n for n in names if n in run.measures)
            key = (rule.id, tuple(run.measures.get(n) for n in names))
            req = self._acts.get(key, False)
            if req is False:
                act = activate(rule, 0, run.measures, self.tc)
                req = act.requirement if act.kind is not ActivationKind.UNRESOLVED else None
                self._acts[key] = req
            if req is not None:
                _merge(run.live, (rule.id, req.kind, req.event), req.end)

    def tock(self, run: _Run) -> None:
        run.tokens.append(TOCK)
        run.live, expired = _tock(run.live)
        idx = len(run.tokens) - 1
        run.bad.extend((idx, rid) for rid in expired)
        run.read = set()

    # model firing --------------------------------------------------------

    def reads(self, run: _Run, names: tuple[str, ...]) -> Iterator[_Run]:
        todo = [n for n in names if n not in run.read]
        if not todo:
            yield run
            return
        n, rest = todo[0], tuple(todo[1:])
        for v in self.domains[n]:
            branch = run.copy()
            branch.read.add(n)
            branch.measures[n] = v
            branch.tokens.append(MeasureToken(n, v))
            if any(eval_guard(f, branch.measures) is False for f in self.facts):
                continue
            yield from self.reads(branch, rest)

    def fire(self, run: _Run, candidates: list[Transition]) -> Iterator[tuple[_Run, bool]]:
        """First enabled candidate fires; yields (run, fired) per read branch."""
        if not candidates:
            yield run, False
            return
        tr, rest = candidates[0], candidates[1:]
        for branch in self.reads(run, tr.reads()):
            if eval_guard(tr.guard, branch.measures) is True:
                branch.state = tr.target
                for e in tr.emits:
                    self.occur(branch, e)
                yield branch, True
            else:
                yield from self.fire(branch, rest)

    def autos(self, run: _Run, done: frozenset = frozenset()) -> Iterator[_Run]:
        if run.state in done:
            yield run
            return
        done = done | {run.state}
        for branch, fired in self.fire(run, self.m.outgoing(run.state, TriggerKind.AUTO)):
            if fired:
                yield from self.autos(branch, done)
            else:
                yield branch

    def env_events(self, run: _Run, events: tuple[str, ...]) -> Iterator[_Run]:
        if not events:
            yield run
            return
        e, rest = events[0], events[1:]
        run = run.copy()
        self.occur(run, e)
        for branch, _ in self.fire(run, self.m.outgoing(run.state, TriggerKind.EVENT, e)):
            yield from self.env_events(branch, rest)

    def unit(self, start: _Run, choice: tuple[str, ...], with_tock: bool = True) -> Iterator[_Run]:
        """Every run of one unit: autos, environment events, tock, on-tock."""
        begin = start.copy()
        begin.tokens, begin.bad = [], []
        for r1 in self.autos(begin):
            for r2 in self.env_events(r1, choice):
                if not with_tock:
                    yield r2
                    continue
                r2 = r2.copy()
                self.tock(r2)
                for r3, _ in self.fire(r2, self.m.outgoing(r2.state, TriggerKind.TOCK)):
                    yield r3

    # search --------------------------------------------------------------

    def search(self) -> Optional[list]:
        root = _Run(self.m.initial, {}, {}, set(), [], [])
        frontier: list[tuple[_Run, list]] = [(root, [])]
        seen = {root.key()}
        for _ in range(self.cfg.horizon + 1):
            nxt = []
            for node, path in frontier:
                for choice in self.choices:
                    for run in self.unit(node, choice):
                        if run.bad:
                            return path + self._cut(run)
                        k = run.key()
                        if k in seen:
                            continue
                        seen.add(k)
                        nxt.append((run, path + run.tokens))
            frontier = nxt
        return None

    def _cut(self, run: _Run) -> list:
        first = min(i for i, _ in run.bad)
        tock_at = run.tokens.index(TOCK)
        if first < tock_at:
            return run.tokens[:tock_at]
        overdue = self._overdue(run)
        tail = list(run.tokens)
        for choice in self.choices:
            for cont in self.unit(run, choice, with_tock=False):
                if any(isinstance(t, EventToken) and t.name in overdue for t in cont.tokens):
                    return tail + cont.tokens
        return tail

    def _overdue(self, run: _Run) -> set[str]:
        ids = {rid for _, rid in run.bad}
        out = set()
        for rule in self.rs.rules:
            if rule.id in ids:
                out.update(r.event for r in rule.responses() if not r.negated)
        return out


_RULE_MEASURES: dict = {}


def _rule_measures(rule) -> tuple[str, ...]:
    got = _RULE_MEASURES.get(rule)
    if got is None:
        names: dict[str, None] = {}
        for g in rule.guards():
            for n in g.measures():
                names.setdefault(n, None)
        got = _RULE_MEASURES[rule] = tuple(names)
    return got


def explore(m: AgentModel, rs: Ruleset, cfg: SearchConfig = DEFAULT_SEARCH,
            tc: TimeConfig = DEFAULT_TIME) -> ConformanceResult:
    """Check ``m`` against ``rs`` for every environment behaviour up to ``cfg.horizon``.

    Units 0..horizon are explored, each closed by a tock.  Obligations
    whose window ends after the horizon are left pending.
    """
    check_durations(rs, tc)
    warnings = []
    longest = max((r.longest_window(tc.quantum.seconds) for r in rs.rules), default=0)
    if longest > cfg.horizon:
        warnings.append(f"HorizonTooSmall: horizon {cfg.horizon} is shorter than the longest "
                        f"window ({longest} tocks); later deadlines are not checked")
    ex = _Explorer(m, rs, cfg, tc)
    tokens = ex.search()
    if tokens is None:
        return Conformant(cfg.horizon, tuple(warnings))
    trace = Trace(tuple(tokens))
    result = check_trace(rs, trace, tc)
    violated = tuple(sorted(result.violated_rules))
    lines = [f.message for f in result.violations]
    lines.append(f"found by bounded exploration up to horizon {cfg.horizon}")
    return Counterexample(trace, violated, "\n".join(lines), cfg.horizon, tuple(warnings))
