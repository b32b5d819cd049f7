"""Lexer, parser and canonical formatter for ``.sleec`` rulesets and ``.trace`` files."""

from __future__ import annotations

import re
from dataclasses import dataclass
from decimal import Decimal
from typing import Optional

from sleec.core import (
    ANNOTATION_ID,
    EVENT_NAME,
    KEYWORDS,
    MEASURE_NAME,
    RELOPS,
    RULE_ID,
    And,
    Annotation,
    AnnotationKind,
    CapabilityDecl,
    CapabilityKind,
    Comparison,
    Constant,
    Defeater,
    Diagnostic,
    DiagnosticError,
    Duration,
    EventToken,
    Guard,
    Implies,
    InvariantError,
    MeasureAtom,
    MeasureToken,
    MeasureType,
    Not,
    Or,
    Response,
    Rule,
    Ruleset,
    Severity,
    SourceSpan,
    TimeUnit,
    Tock,
    TOCK,
    Trace,
)
from sleec.validation import validate_ruleset

UNITS = {
    "second": TimeUnit.SECONDS, "seconds": TimeUnit.SECONDS,
    "minute": TimeUnit.MINUTES, "minutes": TimeUnit.MINUTES,
    "hour": TimeUnit.HOURS, "hours": TimeUnit.HOURS,
}

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>[ \t\r\n]+)
  | (?P<comment>//[^\n]*)
  | (?P<number>-?\d+(?:\.\d+)?)
  | (?P<ident>[A-Za-z][A-Za-z0-9_']*)
  | (?P<op><=|>=|!=|->|[<>=(),:.])
    """,
    re.VERBOSE,
)


class _Positions:
    """Maps character offsets to byte offsets and 1-based line/column."""

    def __init__(self, src: str):
        self.src = src
        self._bytes = [0]
        for ch in src:
            self._bytes.append(self._bytes[-1] + len(ch.encode("utf-8")))
        self._line_starts = [0] + [m.end() for m in re.finditer("\n", src)]

    def _line_col(self, i: int) -> tuple[int, int]:
        lo, hi = 0, len(self._line_starts) - 1
        while lo < hi:
            mid = (lo + hi + 1) // 2
            if self._line_starts[mid] <= i:
                lo = mid
            else:
                hi = mid - 1
        return lo + 1, i - self._line_starts[lo] + 1

    def span(self, start: int, end: int) -> SourceSpan:
        l1, c1 = self._line_col(start)
        l2, c2 = self._line_col(end)
        return SourceSpan(self._bytes[start], self._bytes[end], l1, c1, l2, c2)


@dataclass
class _Tok:
    kind: str  # ident, kw, number, op, eof
    text: str
    start: int
    end: int

    def describe(self) -> str:
        return "end of input" if self.kind == "eof" else repr(self.text)


def _lex(src: str, pos: _Positions) -> tuple[list[_Tok], list[Diagnostic]]:
    toks: list[_Tok] = []
    diags: list[Diagnostic] = []
    i = 0
    while i < len(src):
        m = _TOKEN_RE.match(src, i)
        if m is None:
            j = i + 1
            diags.append(Diagnostic(Severity.ERROR, "lex", f"unexpected character {src[i]!r}",
                                    pos.span(i, j)))
            i = j
            continue
        kind = m.lastgroup
        text = m.group()
        if kind == "ident" and text in KEYWORDS:
            kind = "kw"
        if kind not in ("ws", "comment"):
            toks.append(_Tok(kind, text, m.start(), m.end()))
        i = m.end()
    toks.append(_Tok("eof", "", len(src), len(src)))
    return toks, diags


class _SyntaxError(Exception):
    def __init__(self, diag: Diagnostic):
        self.diag = diag


class _RulesetParser:
    def __init__(self, src: str):
        self.pos = _Positions(src)
        self.toks, self.diags = _lex(src, self.pos)
        self.i = 0

    # token helpers -------------------------------------------------------

    def peek(self, k: int = 0) -> _Tok:
        return self.toks[min(self.i + k, len(self.toks) - 1)]

    def at(self, text: str, k: int = 0) -> bool:
        t = self.peek(k)
        return t.kind in ("kw", "op") and t.text == text

    def advance(self) -> _Tok:
        t = self.peek()
        if t.kind != "eof":
            self.i += 1
        return t

    def fail(self, expected: list[str]) -> None:
        t = self.peek()
        msg = f"expected {' or '.join(expected)}, found {t.describe()}"
        raise _SyntaxError(Diagnostic(Severity.ERROR, "syntax", msg, self.pos.span(t.start, t.end)))

    def expect(self, text: str) -> _Tok:
        if not self.at(text):
            self.fail([repr(text)])
        return self.advance()

    def span_from(self, start_tok: _Tok) -> SourceSpan:
        last = self.toks[max(self.i - 1, 0)]
        return self.pos.span(start_tok.start, max(last.end, start_tok.start))

    def ident(self, pattern: re.Pattern, what: str) -> _Tok:
        t = self.peek()
        if t.kind != "ident" or not pattern.match(t.text):
            self.fail([what])
        return self.advance()

    def invariant(self, start: _Tok, exc: InvariantError) -> None:
        raise _SyntaxError(Diagnostic(Severity.ERROR, exc.invariant, str(exc), self.span_from(start)))

    # grammar -------------------------------------------------------------

    def at_item_start(self) -> bool:
        t = self.peek()
        if t.kind == "kw" and t.text in ("event", "measure", "concern", "purpose", "fact"):
            return True
        return t.kind == "ident" and self.at("when", 1)

    def resync(self) -> None:
        self.advance()
        while self.peek().kind != "eof" and not self.at_item_start():
            self.advance()

    def parse(self) -> Ruleset:
        decls: list[CapabilityDecl] = []
        rules: list[Rule] = []
        annotations: list[Annotation] = []
        names: dict[str, CapabilityDecl] = {}
        in_items = False
        while self.peek().kind != "eof":
            try:
                if self.at("event") or self.at("measure"):
                    if in_items:
                        self.fail(["a rule or annotation (declarations come first)"])
                    d = self.declaration()
                    if d.name in names:
                        self.diags.append(Diagnostic(Severity.ERROR, "duplicate",
                                                     f"capability {d.name!r} declared twice", d.span))
                    else:
                        names[d.name] = d
                        decls.append(d)
                elif self.at("concern") or self.at("purpose") or self.at("fact"):
                    in_items = True
                    annotations.append(self.annotation())
                elif self.peek().kind == "ident":
                    in_items = True
                    rules.append(self.rule())
                else:
                    self.fail(["'event'", "'measure'", "a rule id", "'concern'", "'purpose'", "'fact'"])
            except _SyntaxError as e:
                self.diags.append(e.diag)
                self.resync()
        if any(d.severity is Severity.ERROR for d in self.diags):
            raise DiagnosticError(self.diags)
        rs = Ruleset.unchecked(decls, rules, annotations)
        errors = [d for d in validate_ruleset(rs) if d.severity is Severity.ERROR]
        if errors:
            raise DiagnosticError(errors)
        return rs

    def declaration(self) -> CapabilityDecl:
        start = self.advance()
        try:
            if start.text == "event":
                name = self.ident(EVENT_NAME, "an event name (Capitalised)")
                return CapabilityDecl(CapabilityKind.EVENT, name.text, span=self.span_from(start))
            name = self.ident(MEASURE_NAME, "a measure name (lowercase)")
            self.expect(":")
            if self.at("boolean"):
                mt = MeasureType.BOOLEAN
            elif self.at("numeric"):
                mt = MeasureType.NUMERIC
            else:
                self.fail(["'boolean'", "'numeric'"])
            self.advance()
            return CapabilityDecl(CapabilityKind.MEASURE, name.text, mt, span=self.span_from(start))
        except InvariantError as e:
            self.invariant(start, e)

    def rule(self) -> Rule:
        start = self.ident(RULE_ID, "a rule id (Capitalised)")
        self.expect("when")
        trigger = self.ident(EVENT_NAME, "an event name").text
        guard = None
        if self.at("and"):
            self.advance()
            guard = self.guard()
        self.expect("then")
        response = self.response()
        defeaters = []
        while self.at("unless"):
            dstart = self.advance()
            dguard = self.guard()
            dresp = None
            if self.at("then"):
                self.advance()
                dresp = self.response()
            defeaters.append(Defeater(dguard, dresp, span=self.span_from(dstart)))
        if not (self.peek().kind == "eof" or self.at_item_start()):
            self.fail(["'unless'", "'within'", "next rule or annotation"])
        try:
            return Rule(start.text, trigger, response, guard, tuple(defeaters), span=self.span_from(start))
        except InvariantError as e:
            self.invariant(start, e)

    def annotation(self) -> Annotation:
        start = self.advance()
        kind = AnnotationKind(start.text)
        aid = self.ident(ANNOTATION_ID, "an annotation id").text
        if kind is AnnotationKind.FACT:
            g = self.guard()
            ann = Annotation(kind, aid, guard=g, span=self.span_from(start))
        else:
            self.expect("when")
            trigger = self.ident(EVENT_NAME, "an event name").text
            g = None
            if self.at("and"):
                self.advance()
                g = self.guard()
            self.expect("then")
            resp = self.response()
            ann = Annotation(kind, aid, trigger, g, resp, span=self.span_from(start))
        if not (self.peek().kind == "eof" or self.at_item_start()):
            self.fail(["next rule or annotation"])
        return ann

    def response(self) -> Response:
        start = self.peek()
        negated = False
        if self.at("not"):
            self.advance()
            negated = True
        event = self.ident(EVENT_NAME, "an event name").text
        window = None
        if self.at("within"):
            self.advance()
            num = self.peek()
            if num.kind != "number" or not num.text.isdigit():
                self.fail(["a non-negative integer"])
            self.advance()
            unit = self.peek()
            if unit.kind != "kw" or unit.text not in UNITS:
                self.fail(["'seconds'", "'minutes'", "'hours'"])
            self.advance()
            window = Duration(int(num.text), UNITS[unit.text])
        return Response(event, negated, window, span=self.span_from(start))

    def guard(self) -> Guard:
        start = self.peek()
        lhs = self.disjunction()
        if self.at("implies"):
            self.advance()
            rhs = self.guard()
            return Implies(lhs, rhs, span=self.span_from(start))
        return lhs

    def disjunction(self) -> Guard:
        start = self.peek()
        parts = [self.conjunction()]
        while self.at("or"):
            self.advance()
            parts.append(self.conjunction())
        return parts[0] if len(parts) == 1 else Or(tuple(parts), span=self.span_from(start))

    def conjunction(self) -> Guard:
        start = self.peek()
        parts = [self.unary()]
        while self.at("and"):
            self.advance()
            parts.append(self.unary())
        return parts[0] if len(parts) == 1 else And(tuple(parts), span=self.span_from(start))

    def unary(self) -> Guard:
        start = self.peek()
        if self.at("not"):
            self.advance()
            return Not(self.unary(), span=self.span_from(start))
        if self.at("("):
            self.advance()
            g = self.guard()
            self.expect(")")
            return g
        if self.at("true") or self.at("false"):
            self.advance()
            return Constant(start.text == "true", span=self.span_from(start))
        name = self.ident(MEASURE_NAME, "a measure name, 'not', 'true', 'false' or '('")
        if name.text.find("'") >= 0:
            self.fail(["a measure name without primes"])
        t = self.peek()
        if t.kind == "op" and t.text in RELOPS:
            self.advance()
            num = self.peek()
            if num.kind != "number":
                self.fail(["a number"])
            self.advance()
            return Comparison(name.text, t.text, parse_number(num.text), span=self.span_from(start))
        return MeasureAtom(name.text, span=self.span_from(start))


def parse_number(text: str):
    return float(text) if "." in text else int(text)


def parse_ruleset(src: str) -> Ruleset:
    """Parse ``.sleec`` text; raises :class:`DiagnosticError` on any error."""
    return _RulesetParser(src).parse()


def load_ruleset(path) -> Ruleset:
    with open(path, encoding="utf-8") as fh:
        return parse_ruleset(fh.read())


# --------------------------------------------------------------------------
# Formatting
# --------------------------------------------------------------------------


def format_number(x) -> str:
    if isinstance(x, bool):
        raise TypeError("booleans are not numbers here")
    if isinstance(x, int):
        return str(x)
    text = repr(float(x))
    if "e" in text or "E" in text:
        text = format(Decimal(text), "f")
        if "." not in text:
            text += ".0"
    return text


_PREC = {Implies: 0, Or: 1, And: 2}


def format_guard(g: Guard) -> str:
    if isinstance(g, Constant):
        return "true" if g.value else "false"
    if isinstance(g, MeasureAtom):
        return g.name
    if isinstance(g, Comparison):
        return f"{g.name} {g.op} {format_number(g.value)}"
    if isinstance(g, Not):
        inner = format_guard(g.child)
        return f"not ({inner})" if type(g.child) in _PREC else f"not {inner}"
    if isinstance(g, Implies):
        lhs = format_guard(g.lhs)
        if isinstance(g.lhs, Implies):
            lhs = f"({lhs})"
        return f"{lhs} implies {format_guard(g.rhs)}"
    if isinstance(g, (And, Or)):
        mine = _PREC[type(g)]
        parts = []
        for c in g.operands:
            s = format_guard(c)
            if type(c) in _PREC and _PREC[type(c)] <= mine:
                s = f"({s})"
            parts.append(s)
        return f" {'and' if isinstance(g, And) else 'or'} ".join(parts)
    raise TypeError(f"not a guard: {g!r}")


def format_response(r: Response) -> str:
    s = ("not " if r.negated else "") + r.event
    if r.window is not None:
        s += f" within {r.window}"
    return s


def format_rule(r: Rule) -> str:
    head = f"{r.id} when {r.trigger}"
    if r.guard is not None:
        head += f" and {format_guard(r.guard)}"
    lines = [f"{head} then {format_response(r.response)}"]
    for d in r.defeaters:
        line = f"  unless {format_guard(d.guard)}"
        if d.response is not None:
            line += f" then {format_response(d.response)}"
        lines.append(line)
    return "\n".join(lines)


def format_annotation(a: Annotation) -> str:
    if a.kind is AnnotationKind.FACT:
        return f"fact {a.id} {format_guard(a.guard)}"
    head = f"{a.kind.value} {a.id} when {a.trigger}"
    if a.guard is not None:
        head += f" and {format_guard(a.guard)}"
    return f"{head} then {format_response(a.response)}"


def format_decl(d: CapabilityDecl) -> str:
    if d.kind is CapabilityKind.EVENT:
        return f"event {d.name}"
    return f"measure {d.name}: {d.measure_type.value}"


def format_ruleset(rs: Ruleset) -> str:
    blocks = []
    if rs.declarations:
        blocks.append("\n".join(format_decl(d) for d in rs.declarations))
    if rs.rules:
        blocks.append("\n".join(format_rule(r) for r in rs.rules))
    if rs.annotations:
        blocks.append("\n".join(format_annotation(a) for a in rs.annotations))
    return "\n\n".join(blocks) + "\n" if blocks else ""


# --------------------------------------------------------------------------
# Traces
# --------------------------------------------------------------------------

_TRACE_ITEM = re.compile(r"//[^\n]*|[^,\s]+")
_NUMBER = re.compile(r"-?\d+(?:\.\d+)?\Z")


def parse_trace(src: str, rs: Ruleset) -> Trace:
    """Parse ``.trace`` text against the declarations of ``rs``."""
    pos = _Positions(src)
    tokens = []
    diags: list[Diagnostic] = []
    measures = rs.measures
    events = set(rs.events)
    for m in _TRACE_ITEM.finditer(src):
        text = m.group()
        if text.startswith("//"):
            continue
        span = pos.span(m.start(), m.end())

        def bad(code: str, msg: str) -> None:
            diags.append(Diagnostic(Severity.ERROR, code, msg, span))

        if text == "tock":
            tokens.append(TOCK)
            continue
        name, dot, value = text.partition(".")
        if not dot:
            if name in events:
                tokens.append(EventToken(name))
            elif name in measures:
                bad("type", f"measure {name!r} needs a value, e.g. {name}.true")
            else:
                bad("unknown", f"unknown capability {name!r}")
            continue
        if name not in measures:
            bad("unknown" if name not in events else "type",
                f"unknown measure {name!r}" if name not in events else f"event {name!r} cannot carry a value")
            continue
        if measures[name] is MeasureType.BOOLEAN:
            if value not in ("true", "false"):
                bad("type", f"boolean measure {name!r} given {value!r}")
                continue
            tokens.append(MeasureToken(name, value == "true"))
        else:
            if not _NUMBER.match(value):
                bad("type", f"numeric measure {name!r} given {value!r}")
                continue
            tokens.append(MeasureToken(name, parse_number(value)))
    if diags:
        raise DiagnosticError(diags)
    return Trace(tuple(tokens))


def load_trace(path, rs: Ruleset) -> Trace:
    with open(path, encoding="utf-8") as fh:
        return parse_trace(fh.read(), rs)


def format_token(tok) -> str:
    if isinstance(tok, Tock):
        return "tock"
    if isinstance(tok, EventToken):
        return tok.name
    v = tok.value
    return f"{tok.name}.{('true' if v else 'false') if isinstance(v, bool) else format_number(v)}"


def format_trace(tr: Trace) -> str:
    return ", ".join(format_token(t) for t in tr.tokens)
