"""Domain types for SLEEC rulesets, traces, requirements and findings.

Every type is an immutable value.  Local invariants are enforced in
``__post_init__`` and raise :class:`InvariantError`, whose ``invariant``
attribute names the violated property.  Cross-reference checks on a whole
ruleset (name resolution, guard typing) live in :mod:`sleec.validation`.
"""

from __future__ import annotations

import enum
import math
import re
from dataclasses import dataclass, field
from typing import Iterator, Optional, Union

EVENT_NAME = re.compile(r"[A-Z][A-Za-z0-9_]*\Z")
MEASURE_NAME = re.compile(r"[a-z][A-Za-z0-9_]*\Z")
RULE_ID = re.compile(r"[A-Z][A-Za-z0-9_']*\Z")
ANNOTATION_ID = re.compile(r"[A-Za-z][A-Za-z0-9_']*\Z")

KEYWORDS = frozenset(
    {
        "event", "measure", "boolean", "numeric", "when", "then", "within",
        "unless", "not", "and", "or", "implies", "true", "false", "concern",
        "purpose", "fact", "tock", "second", "seconds", "minute", "minutes",
        "hour", "hours",
    }
)

RELOPS = ("<", "<=", ">", ">=", "=", "!=")


class InvariantError(ValueError):
    """A value was constructed in violation of one of its invariants."""

    def __init__(self, invariant: str, message: str):
        super().__init__(f"[{invariant}] {message}")
        self.invariant = invariant


class ConfigurationError(ValueError):
    pass


class NonIntegralDuration(ConfigurationError):
    pass


def _require(cond: bool, invariant: str, message: str) -> None:
    if not cond:
        raise InvariantError(invariant, message)


# --------------------------------------------------------------------------
# Source locations
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class SourceSpan:
    start: int
    end: int
    line: int
    column: int
    end_line: int
    end_column: int

    def __post_init__(self) -> None:
        _require(0 <= self.start <= self.end, "span-order", f"bad offsets {self.start}..{self.end}")
        _require(self.line >= 1 and self.column >= 1, "span-order", "line/column are 1-based")

    def __str__(self) -> str:
        return f"{self.line}:{self.column}"


class Severity(enum.Enum):
    ERROR = "error"
    WARNING = "warning"


@dataclass(frozen=True)
class Diagnostic:
    severity: Severity
    code: str
    message: str
    span: Optional[SourceSpan] = None

    def render(self, filename: str = "<input>") -> str:
        where = f"{filename}:{self.span}" if self.span else filename
        return f"{where}: {self.severity.value}[{self.code}]: {self.message}"

    def to_json(self) -> dict:
        span = None
        if self.span is not None:
            s = self.span
            span = {
                "start": s.start, "end": s.end, "line": s.line,
                "column": s.column, "end_line": s.end_line, "end_column": s.end_column,
            }
        return {
            "severity": self.severity.value,
            "code": self.code,
            "message": self.message,
            "span": span,
        }


class DiagnosticError(Exception):
    """Raised by the parsers; carries every diagnostic found."""

    def __init__(self, diagnostics: list[Diagnostic]):
        self.diagnostics = list(diagnostics)
        first = self.diagnostics[0].render() if self.diagnostics else "no diagnostics"
        extra = len(self.diagnostics) - 1
        super().__init__(first + (f" (+{extra} more)" if extra > 0 else ""))


# --------------------------------------------------------------------------
# Capabilities
# --------------------------------------------------------------------------


class CapabilityKind(enum.Enum):
    EVENT = "event"
    MEASURE = "measure"


class MeasureType(enum.Enum):
    BOOLEAN = "boolean"
    NUMERIC = "numeric"


@dataclass(frozen=True)
class CapabilityDecl:
    kind: CapabilityKind
    name: str
    measure_type: Optional[MeasureType] = None
    span: Optional[SourceSpan] = field(default=None, compare=False, repr=False)

    def __post_init__(self) -> None:
        if self.kind is CapabilityKind.EVENT:
            _require(bool(EVENT_NAME.match(self.name)), "event-name",
                     f"event name {self.name!r} must start with an uppercase letter")
            _require(self.measure_type is None, "measure-type-presence",
                     f"event {self.name!r} cannot carry a measure type")
        else:
            _require(bool(MEASURE_NAME.match(self.name)) and self.name not in KEYWORDS,
                     "measure-name",
                     f"measure name {self.name!r} must start with a lowercase letter and not be a keyword")
            _require(self.measure_type is not None, "measure-type-presence",
                     f"measure {self.name!r} needs a type")

    @classmethod
    def event(cls, name: str) -> "CapabilityDecl":
        return cls(CapabilityKind.EVENT, name)

    @classmethod
    def measure(cls, name: str, measure_type: MeasureType = MeasureType.BOOLEAN) -> "CapabilityDecl":
        return cls(CapabilityKind.MEASURE, name, measure_type)


# --------------------------------------------------------------------------
# Guards
# --------------------------------------------------------------------------


class Guard:
    """Base class of guard expression nodes."""

    span: Optional[SourceSpan]

    def children(self) -> tuple["Guard", ...]:
        return ()

    def measures(self) -> list[str]:
        """Measure names referenced, in order of first appearance."""
        seen: dict[str, None] = {}
        for node in self.walk():
            if isinstance(node, (MeasureAtom, Comparison)):
                seen.setdefault(node.name, None)
        return list(seen)

    def walk(self) -> Iterator["Guard"]:
        yield self
        for child in self.children():
            yield from child.walk()


@dataclass(frozen=True)
class Constant(Guard):
    value: bool
    span: Optional[SourceSpan] = field(default=None, compare=False, repr=False)

    def __post_init__(self) -> None:
        _require(isinstance(self.value, bool), "constant-bool", "constant must be true or false")


@dataclass(frozen=True)
class MeasureAtom(Guard):
    name: str
    span: Optional[SourceSpan] = field(default=None, compare=False, repr=False)

    def __post_init__(self) -> None:
        _require(bool(MEASURE_NAME.match(self.name)) and self.name not in KEYWORDS,
                 "measure-name", f"{self.name!r} is not a measure name")


Number = Union[int, float]


@dataclass(frozen=True)
class Comparison(Guard):
    name: str
    op: str
    value: Number
    span: Optional[SourceSpan] = field(default=None, compare=False, repr=False)

    def __post_init__(self) -> None:
        _require(bool(MEASURE_NAME.match(self.name)) and self.name not in KEYWORDS,
                 "measure-name", f"{self.name!r} is not a measure name")
        _require(self.op in RELOPS, "relop", f"unknown comparison operator {self.op!r}")
        _require(isinstance(self.value, (int, float)) and not isinstance(self.value, bool)
                 and math.isfinite(self.value),
                 "numeric-constant", f"comparison constant {self.value!r} must be a finite number")

    def holds(self, x: Number) -> bool:
        v = self.value
        return {
            "<": x < v, "<=": x <= v, ">": x > v,
            ">=": x >= v, "=": x == v, "!=": x != v,
        }[self.op]


@dataclass(frozen=True)
class Not(Guard):
    child: Guard
    span: Optional[SourceSpan] = field(default=None, compare=False, repr=False)

    def children(self) -> tuple[Guard, ...]:
        return (self.child,)


@dataclass(frozen=True)
class And(Guard):
    operands: tuple[Guard, ...]
    span: Optional[SourceSpan] = field(default=None, compare=False, repr=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "operands", tuple(self.operands))
        _require(len(self.operands) >= 2, "nary-arity", "'and' needs at least two operands")

    def children(self) -> tuple[Guard, ...]:
        return self.operands


@dataclass(frozen=True)
class Or(Guard):
    operands: tuple[Guard, ...]
    span: Optional[SourceSpan] = field(default=None, compare=False, repr=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "operands", tuple(self.operands))
        _require(len(self.operands) >= 2, "nary-arity", "'or' needs at least two operands")

    def children(self) -> tuple[Guard, ...]:
        return self.operands


@dataclass(frozen=True)
class Implies(Guard):
    lhs: Guard
    rhs: Guard
    span: Optional[SourceSpan] = field(default=None, compare=False, repr=False)

    def children(self) -> tuple[Guard, ...]:
        return (self.lhs, self.rhs)


# --------------------------------------------------------------------------
# Durations and rule bodies
# --------------------------------------------------------------------------


class TimeUnit(enum.Enum):
    SECONDS = 1
    MINUTES = 60
    HOURS = 3600

    @property
    def seconds(self) -> int:
        return self.value

    def keyword(self, magnitude: int) -> str:
        base = self.name.lower()[:-1]
        return base if magnitude == 1 else base + "s"


@dataclass(frozen=True)
class Duration:
    magnitude: int
    unit: TimeUnit = TimeUnit.MINUTES

    def __post_init__(self) -> None:
        _require(isinstance(self.magnitude, int) and not isinstance(self.magnitude, bool)
                 and self.magnitude >= 0,
                 "duration-non-negative", f"duration magnitude {self.magnitude!r} must be a non-negative integer")

    @property
    def seconds(self) -> int:
        return self.magnitude * self.unit.seconds

    def __str__(self) -> str:
        return f"{self.magnitude} {self.unit.keyword(self.magnitude)}"


@dataclass(frozen=True)
class Response:
    event: str
    negated: bool = False
    window: Optional[Duration] = None
    span: Optional[SourceSpan] = field(default=None, compare=False, repr=False)

    def __post_init__(self) -> None:
        _require(bool(EVENT_NAME.match(self.event)), "event-name",
                 f"response {self.event!r} must name an event")


@dataclass(frozen=True)
class Defeater:
    guard: Guard
    response: Optional[Response] = None
    span: Optional[SourceSpan] = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class Rule:
    """``id when trigger [and guard] then response unless ...``.

    Defeaters are kept in listing order; the last-listed is the outermost
    and takes precedence when several guards hold.
    """

    id: str
    trigger: str
    response: Response
    guard: Optional[Guard] = None
    defeaters: tuple[Defeater, ...] = ()
    span: Optional[SourceSpan] = field(default=None, compare=False, repr=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "defeaters", tuple(self.defeaters))
        _require(bool(RULE_ID.match(self.id)), "rule-id", f"bad rule id {self.id!r}")
        _require(bool(EVENT_NAME.match(self.trigger)), "event-name",
                 f"trigger {self.trigger!r} must name an event")

    def responses(self) -> list[Response]:
        out = [self.response]
        out.extend(d.response for d in self.defeaters if d.response is not None)
        return out

    def guards(self) -> list[Guard]:
        out = [self.guard] if self.guard is not None else []
        out.extend(d.guard for d in self.defeaters)
        return out

    def longest_window(self, quantum_seconds: int = 60) -> int:
        # in tocks, rounding up so horizon estimates never undershoot
        w = [r.window.seconds for r in self.responses() if r.window is not None]
        return -(-max(w, default=0) // quantum_seconds)


class AnnotationKind(enum.Enum):
    CONCERN = "concern"
    PURPOSE = "purpose"
    FACT = "fact"


@dataclass(frozen=True)
class Annotation:
    """A concern, purpose (both rule-shaped patterns) or a fact (a guard)."""

    kind: AnnotationKind
    id: str
    trigger: Optional[str] = None
    guard: Optional[Guard] = None
    response: Optional[Response] = None
    span: Optional[SourceSpan] = field(default=None, compare=False, repr=False)

    def __post_init__(self) -> None:
        _require(bool(ANNOTATION_ID.match(self.id)) and self.id not in KEYWORDS,
                 "annotation-id", f"bad annotation id {self.id!r}")
        if self.kind is AnnotationKind.FACT:
            _require(self.guard is not None and self.trigger is None and self.response is None,
                     "fact-shape", f"fact {self.id!r} is a single measure expression")
        else:
            _require(self.trigger is not None and self.response is not None,
                     "pattern-shape", f"{self.kind.value} {self.id!r} needs a trigger and a response")
            _require(bool(EVENT_NAME.match(self.trigger)), "event-name",
                     f"trigger {self.trigger!r} must name an event")

    @classmethod
    def fact(cls, id: str, guard: Guard) -> "Annotation":
        return cls(AnnotationKind.FACT, id, guard=guard)

    @classmethod
    def concern(cls, id: str, trigger: str, response: Response, guard: Optional[Guard] = None) -> "Annotation":
        return cls(AnnotationKind.CONCERN, id, trigger, guard, response)

    @classmethod
    def purpose(cls, id: str, trigger: str, response: Response, guard: Optional[Guard] = None) -> "Annotation":
        return cls(AnnotationKind.PURPOSE, id, trigger, guard, response)


@dataclass(frozen=True)
class Ruleset:
    """Declarations, rules and annotations.

    The normal constructor runs :func:`sleec.validation.validate_ruleset`
    and rejects any ruleset with errors.  :meth:`unchecked` builds one
    without validation, for tools that report errors as data.
    """

    declarations: tuple[CapabilityDecl, ...] = ()
    rules: tuple[Rule, ...] = ()
    annotations: tuple[Annotation, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "declarations", tuple(self.declarations))
        object.__setattr__(self, "rules", tuple(self.rules))
        object.__setattr__(self, "annotations", tuple(self.annotations))
        from sleec.validation import validate_ruleset

        errors = [d for d in validate_ruleset(self) if d.severity is Severity.ERROR]
        if errors:
            raise InvariantError(errors[0].code, "; ".join(d.message for d in errors))

    @classmethod
    def unchecked(cls, declarations=(), rules=(), annotations=()) -> "Ruleset":
        rs = object.__new__(cls)
        object.__setattr__(rs, "declarations", tuple(declarations))
        object.__setattr__(rs, "rules", tuple(rules))
        object.__setattr__(rs, "annotations", tuple(annotations))
        return rs

    # lookups -------------------------------------------------------------

    def decl(self, name: str) -> Optional[CapabilityDecl]:
        for d in self.declarations:
            if d.name == name:
                return d
        return None

    @property
    def events(self) -> list[str]:
        return [d.name for d in self.declarations if d.kind is CapabilityKind.EVENT]

    @property
    def measures(self) -> dict[str, MeasureType]:
        return {d.name: d.measure_type for d in self.declarations if d.kind is CapabilityKind.MEASURE}

    def rule(self, rule_id: str) -> Rule:
        for r in self.rules:
            if r.id == rule_id:
                return r
        raise KeyError(rule_id)

    def annotation(self, annotation_id: str) -> Annotation:
        for a in self.annotations:
            if a.id == annotation_id:
                return a
        raise KeyError(annotation_id)

    @property
    def facts(self) -> list[Annotation]:
        return [a for a in self.annotations if a.kind is AnnotationKind.FACT]

    def replace(self, *, rules=None, annotations=None, declarations=None) -> "Ruleset":
        return Ruleset.unchecked(
            self.declarations if declarations is None else declarations,
            self.rules if rules is None else rules,
            self.annotations if annotations is None else annotations,
        )


# --------------------------------------------------------------------------
# Traces
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class EventToken:
    name: str


@dataclass(frozen=True)
class MeasureToken:
    name: str
    value: Union[bool, int, float]


@dataclass(frozen=True)
class Tock:
    pass


TOCK = Tock()

TraceToken = Union[EventToken, MeasureToken, Tock]


@dataclass(frozen=True)
class Trace:
    tokens: tuple[TraceToken, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "tokens", tuple(self.tokens))

    def __len__(self) -> int:
        return len(self.tokens)

    def __iter__(self):
        return iter(self.tokens)

    def __add__(self, other: "Trace") -> "Trace":
        return Trace(self.tokens + other.tokens)

    def timestamps(self) -> list[int]:
        """Timestamp of each token: the number of tocks strictly before it."""
        out, t = [], 0
        for tok in self.tokens:
            out.append(t)
            if isinstance(tok, Tock):
                t += 1
        return out

    @property
    def tocks(self) -> int:
        return sum(1 for tok in self.tokens if isinstance(tok, Tock))

    def prefix(self, n: int) -> "Trace":
        return Trace(self.tokens[:n])


# --------------------------------------------------------------------------
# Requirements and findings
# --------------------------------------------------------------------------


class RequirementKind(enum.Enum):
    OBLIGATION = "obligation"
    PROHIBITION = "prohibition"


@dataclass(frozen=True)
class Requirement:
    source: str
    kind: RequirementKind
    event: str
    start: int
    end: int

    def __post_init__(self) -> None:
        _require(0 <= self.start <= self.end, "window-order",
                 f"requirement window [{self.start}, {self.end}] is empty")

    def covers(self, t: int) -> bool:
        return self.start <= t <= self.end

    def describe(self) -> str:
        verb = "must occur" if self.kind is RequirementKind.OBLIGATION else "must not occur"
        return f"{self.event} {verb} within [{self.start}, {self.end}]"

    def to_json(self) -> dict:
        return {
            "rule": self.source, "kind": self.kind.value, "event": self.event,
            "start": self.start, "end": self.end,
        }


class FindingKind(enum.Enum):
    CONFLICT = "conflict"
    REDUNDANCY = "redundancy"
    INSUFFICIENCY = "insufficiency"
    OVER_RESTRICTIVENESS = "over-restrictiveness"
    VIOLATION = "violation"
    WARNING = "warning"

    @property
    def order(self) -> int:
        return list(FindingKind).index(self)


_NEEDS_WITNESS = (FindingKind.CONFLICT, FindingKind.INSUFFICIENCY, FindingKind.VIOLATION)


@dataclass(frozen=True)
class Finding:
    kind: FindingKind
    rule_ids: tuple[str, ...] = ()
    annotation_id: Optional[str] = None
    witness: Optional[Trace] = None
    message: str = ""
    location: Optional[SourceSpan] = field(default=None, compare=False)
    horizon: Optional[int] = None
    requirements: tuple[Requirement, ...] = ()
    time: Optional[int] = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "rule_ids", tuple(self.rule_ids))
        object.__setattr__(self, "requirements", tuple(self.requirements))
        if self.kind in _NEEDS_WITNESS:
            _require(self.witness is not None, "finding-witness",
                     f"{self.kind.value} findings carry a witness trace")
        if self.kind is FindingKind.OVER_RESTRICTIVENESS:
            _require(self.horizon is not None, "finding-horizon",
                     "over-restrictiveness findings carry the searched horizon")

    @property
    def is_issue(self) -> bool:
        return self.kind is not FindingKind.WARNING

    def sort_key(self):
        return (self.kind.order, self.rule_ids, self.annotation_id or "", self.message)


def sort_findings(findings) -> list[Finding]:
    return sorted(findings, key=Finding.sort_key)
