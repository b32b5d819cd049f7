"""Static checks over a whole ruleset: name resolution, ids, guard typing."""

from __future__ import annotations

from typing import Optional

from sleec.core import (
    AnnotationKind,
    CapabilityKind,
    Comparison,
    Diagnostic,
    Guard,
    MeasureAtom,
    MeasureType,
    Response,
    Ruleset,
    Severity,
    SourceSpan,
)


def _err(code: str, message: str, span: Optional[SourceSpan]) -> Diagnostic:
    return Diagnostic(Severity.ERROR, code, message, span)


def _check_guard(g: Optional[Guard], rs: Ruleset, where: str, out: list[Diagnostic]) -> None:
    if g is None:
        return
    measures = rs.measures
    for node in g.walk():
        if not isinstance(node, (MeasureAtom, Comparison)):
            continue
        span = node.span
        if node.name not in measures:
            kind = "event" if rs.decl(node.name) else "name"
            out.append(_err("unresolved", f"{where}: undeclared measure {node.name!r}"
                            + (" (it is an event)" if kind == "event" else ""), span))
        elif isinstance(node, MeasureAtom) and measures[node.name] is not MeasureType.BOOLEAN:
            out.append(_err("type", f"{where}: numeric measure {node.name!r} used as a condition", span))
        elif isinstance(node, Comparison) and measures[node.name] is not MeasureType.NUMERIC:
            out.append(_err("type", f"{where}: boolean measure {node.name!r} compared with a number", span))


def _check_event(name: str, rs: Ruleset, where: str, span, out: list[Diagnostic]) -> None:
    d = rs.decl(name)
    if d is None:
        out.append(_err("unresolved", f"{where}: undeclared event {name!r}", span))
    elif d.kind is not CapabilityKind.EVENT:
        out.append(_err("type", f"{where}: {name!r} is a measure, not an event", span))


def _check_response(resp: Response, rs: Ruleset, where: str, out: list[Diagnostic]) -> None:
    _check_event(resp.event, rs, where, resp.span, out)
    if resp.window is not None and resp.window.magnitude < 0:
        out.append(_err("duration", f"{where}: negative duration", resp.span))


def validate_ruleset(rs: Ruleset) -> list[Diagnostic]:
    """All static errors of ``rs``, followed by warnings.

    Warnings flag trigger guards that no fact-consistent valuation makes
    true; those rules can never fire.
    """
    out: list[Diagnostic] = []
    seen: dict[str, object] = {}
    for d in rs.declarations:
        if d.name in seen:
            out.append(_err("duplicate", f"capability {d.name!r} declared twice", d.span))
        seen[d.name] = d
    ids: set[str] = set()
    for r in rs.rules:
        if r.id in ids:
            out.append(_err("duplicate", f"rule id {r.id!r} used twice", r.span))
        ids.add(r.id)
        _check_event(r.trigger, rs, f"rule {r.id}", r.span, out)
        _check_guard(r.guard, rs, f"rule {r.id}", out)
        _check_response(r.response, rs, f"rule {r.id}", out)
        for d in r.defeaters:
            _check_guard(d.guard, rs, f"rule {r.id}", out)
            if d.response is not None:
                _check_response(d.response, rs, f"rule {r.id}", out)
    for a in rs.annotations:
        if a.id in ids:
            out.append(_err("duplicate", f"id {a.id!r} used twice", a.span))
        ids.add(a.id)
        where = f"{a.kind.value} {a.id}"
        if a.kind is AnnotationKind.FACT:
            _check_guard(a.guard, rs, where, out)
        else:
            _check_event(a.trigger, rs, where, a.span, out)
            _check_guard(a.guard, rs, where, out)
            _check_response(a.response, rs, where, out)
    if out:
        return out

    from sleec.semantics import eval_guard, relevant_measures, valuations

    facts = [f.guard for f in rs.facts]
    for r in rs.rules:
        if r.guard is None:
            continue
        ms = relevant_measures([r.guard], facts)
        vals = valuations(ms, rs.measures, [r.guard], facts)
        if not any(eval_guard(r.guard, v) is True for v in vals):
            out.append(Diagnostic(Severity.WARNING, "unsatisfiable-guard",
                                  f"rule {r.id}: trigger guard can never hold", r.guard.span or r.span))
    return out
