"""Command-line interface: ``sleec check|analyze|monitor|verify|fmt``.

Exit status is 0 when clean, 1 when findings are present and 2 on usage,
parse or configuration errors.
"""

from __future__ import annotations

import argparse
import json
import os
import re
import sys
from pathlib import Path
from typing import Optional, Sequence, TextIO

from sleec.conformance import Counterexample, explore, parse_model
from sleec.core import (
    ConfigurationError,
    DiagnosticError,
    Duration,
    Finding,
    FindingKind,
    NonIntegralDuration,
    Ruleset,
    Severity,
    TimeUnit,
    sort_findings,
)
from sleec.monitor import MonitorSession, UnknownCapability
from sleec.parser import format_ruleset, format_trace, parse_ruleset, parse_trace
from sleec.semantics import TimeConfig
from sleec.validation import validate_ruleset
from sleec.wellformedness import ALL_CHECKS, DEFAULT_SEARCH, CheckKind, SearchConfig, analyze

EXIT_CLEAN, EXIT_FINDINGS, EXIT_ERROR = 0, 1, 2

_QUANTUM = re.compile(r"\s*(\d+)\s*(s|sec|secs|seconds?|m|min|mins|minutes?|h|hours?)\s*\Z")
_UNIT_OF = {"s": TimeUnit.SECONDS, "m": TimeUnit.MINUTES, "h": TimeUnit.HOURS}
_CHECK_NAMES = {
    "conflict": CheckKind.CONFLICT,
    "redundancy": CheckKind.REDUNDANCY,
    "insufficiency": CheckKind.INSUFFICIENCY,
    "over-restrictiveness": CheckKind.OVER_RESTRICTIVENESS,
    "overrestrictiveness": CheckKind.OVER_RESTRICTIVENESS,
}


class _UsageError(ValueError):
    pass


def parse_quantum(text: str) -> TimeConfig:
    """``1m``, ``30s``, ``2 minutes`` and similar."""
    m = _QUANTUM.match(text)
    if m is None or int(m.group(1)) <= 0:
        raise _UsageError(f"bad quantum {text!r}; use e.g. 1m, 30s, 1h")
    return TimeConfig(Duration(int(m.group(1)), _UNIT_OF[m.group(2)[0]]))


def parse_checks(text: str) -> frozenset:
    out = set()
    for part in filter(None, (p.strip().lower() for p in text.split(","))):
        if part == "all":
            out.update(ALL_CHECKS)
        elif part in _CHECK_NAMES:
            out.add(_CHECK_NAMES[part])
        else:
            raise _UsageError(f"unknown check {part!r}; choose from conflict, redundancy, "
                              "insufficiency, over-restrictiveness")
    return frozenset(out)


class _Style:
    def __init__(self, stream: TextIO):
        self.on = "NO_COLOR" not in os.environ and hasattr(stream, "isatty") and stream.isatty()

    def __call__(self, text: str, code: str) -> str:
        return f"\033[{code}m{text}\033[0m" if self.on else text


_KIND_COLOUR = {
    FindingKind.CONFLICT: "31", FindingKind.VIOLATION: "31",
    FindingKind.INSUFFICIENCY: "33", FindingKind.OVER_RESTRICTIVENESS: "33",
    FindingKind.REDUNDANCY: "36", FindingKind.WARNING: "35",
}


def finding_to_json(f: Finding) -> dict:
    return {
        "kind": f.kind.value,
        "rules": list(f.rule_ids),
        "annotation": f.annotation_id,
        "witness": format_trace(f.witness) if f.witness is not None else None,
        "horizon": f.horizon,
        "message": f.message,
    }


def _dump(obj, out: TextIO) -> None:
    out.write(json.dumps(obj, indent=2, ensure_ascii=False) + "\n")


def _render_finding(f: Finding, filename: str, style: _Style) -> str:
    head = style(f.kind.value, _KIND_COLOUR[f.kind])
    subject = ", ".join(f.rule_ids)
    if f.annotation_id:
        subject = f"{f.annotation_id}" + (f" (blocked by {subject})" if subject else "")
    where = f"{filename}:{f.location}: " if f.location else ""
    lines = [f"{where}{head}: {subject}" if subject else f"{where}{head}"]
    if f.message:
        lines.append(f"  {f.message}")
    if f.witness is not None:
        lines.append(f"  witness: {format_trace(f.witness)}")
    return "\n".join(lines)


def _read(path: str) -> str:
    try:
        return Path(path).read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as e:
        raise _UsageError(f"cannot read {path}: {e}") from e


def _load(path: str) -> Ruleset:
    return parse_ruleset(_read(path))


def _parse_in(path: str, parse):
    # re-label diagnostics with the file they come from
    try:
        return parse(_read(path))
    except DiagnosticError as e:
        raise _FileDiagnostics(path, e.diagnostics) from e


class _FileDiagnostics(Exception):
    def __init__(self, path: str, diagnostics):
        super().__init__(path)
        self.path = path
        self.diagnostics = diagnostics


def _exit_for(findings: Sequence[Finding], strict_warnings: bool = False) -> int:
    if any(f.is_issue for f in findings):
        return EXIT_FINDINGS
    if strict_warnings and findings:
        return EXIT_FINDINGS
    return EXIT_CLEAN


# --------------------------------------------------------------------------
# Subcommands
# --------------------------------------------------------------------------


def cmd_check(args, out: TextIO, err: TextIO) -> int:
    src = _read(args.file)
    try:
        rs = parse_ruleset(src)
    except DiagnosticError as e:
        diags = e.diagnostics
        if args.json:
            _dump([d.to_json() for d in diags], out)
        else:
            for d in diags:
                err.write(d.render(args.file) + "\n")
        return EXIT_ERROR
    diags = validate_ruleset(rs)
    if args.json:
        _dump([d.to_json() for d in diags], out)
    else:
        for d in diags:
            out.write(d.render(args.file) + "\n")
        if not diags:
            out.write(f"{args.file}: ok ({len(rs.rules)} rules, {len(rs.annotations)} annotations)\n")
    if args.strict_warnings and any(d.severity is Severity.WARNING for d in diags):
        return EXIT_FINDINGS
    return EXIT_CLEAN


def cmd_analyze(args, out: TextIO, err: TextIO) -> int:
    rs = _load(args.file)
    cfg = SearchConfig(
        horizon=args.horizon,
        max_env_events_per_unit=args.env_bound,
        checks=parse_checks(args.checks) if args.checks else ALL_CHECKS,
        auto_horizon=not args.fixed_horizon,
    )
    findings = analyze(rs, cfg, parse_quantum(args.quantum))
    if args.json:
        _dump([finding_to_json(f) for f in findings], out)
    else:
        style = _Style(out)
        for f in findings:
            out.write(_render_finding(f, args.file, style) + "\n")
        issues = sum(f.is_issue for f in findings)
        out.write(f"{issues} finding(s), {len(findings) - issues} warning(s) at horizon {cfg.horizon}\n")
    return _exit_for(findings, args.strict_warnings)


def _monitor_stream(rs: Ruleset, tc: TimeConfig, args, inp: TextIO, out: TextIO, err: TextIO) -> int:
    session = MonitorSession(rs, tc)
    for lineno, line in enumerate(inp, 1):
        try:
            tokens = parse_trace(line, rs).tokens
        except DiagnosticError as e:
            for d in e.diagnostics:
                err.write(f"<stdin>:{lineno}: {d.severity.value}[{d.code}]: {d.message}\n")
            return EXIT_ERROR
        for tok in tokens:
            out.write(session.step(tok).to_line() + "\n")
            out.flush()
    final = session.close(strict=args.strict)
    if final:
        out.write(json.dumps({"t": session.time, "end": True, "violations": [
            {"rules": list(f.rule_ids), "time": f.time, "message": f.message} for f in final]}) + "\n")
    return EXIT_FINDINGS if session.violations else EXIT_CLEAN


def cmd_monitor(args, out: TextIO, err: TextIO, inp: TextIO) -> int:
    rs = _load(args.file)
    tc = parse_quantum(args.quantum)
    if args.trace is None:
        return _monitor_stream(rs, tc, args, inp, out, err)
    trace = _parse_in(args.trace, lambda src: parse_trace(src, rs))
    session = MonitorSession(rs, tc)
    session.feed(trace)
    session.close(strict=args.strict)
    findings = sort_findings(session.findings)
    if args.json:
        _dump([finding_to_json(f) for f in findings], out)
    else:
        style = _Style(out)
        for f in findings:
            out.write(_render_finding(f, args.file, style) + "\n")
        pending = session.residual()
        if pending and not args.strict:
            out.write("pending at end of trace: " + "; ".join(r.describe() for r in pending) + "\n")
        out.write(f"{len(session.violations)} violation(s) over {trace.tocks} tock(s)\n")
    return EXIT_FINDINGS if session.violations else EXIT_CLEAN


def cmd_verify(args, out: TextIO, err: TextIO) -> int:
    rs = _load(args.file)
    model = _parse_in(args.model, lambda src: parse_model(src, rs))
    cfg = SearchConfig(horizon=args.horizon, max_env_events_per_unit=args.env_bound)
    result = explore(model, rs, cfg, parse_quantum(args.quantum))
    for w in result.warnings:
        err.write(f"warning: {w}\n")
    if args.json:
        body = {"conformant": result.conformant, "horizon": result.horizon}
        if isinstance(result, Counterexample):
            body.update(trace=format_trace(result.trace), rules=list(result.violated),
                        explanation=result.explanation)
        _dump(body, out)
    elif isinstance(result, Counterexample):
        style = _Style(out)
        out.write(style("counterexample", "31") + f": violates {', '.join(result.violated)}\n")
        out.write(format_trace(result.trace) + "\n")
        for line in result.explanation.splitlines():
            out.write(f"  {line}\n")
    else:
        out.write(f"Conformant at horizon {result.horizon} (bounded exploration, not a proof)\n")
    return EXIT_CLEAN if result.conformant else EXIT_FINDINGS


def cmd_fmt(args, out: TextIO, err: TextIO) -> int:
    src = _read(args.file)
    text = format_ruleset(parse_ruleset(src))
    if args.check:
        if text != src:
            err.write(f"{args.file}: not canonically formatted\n")
            return EXIT_FINDINGS
        return EXIT_CLEAN
    if args.write:
        if text != src:
            Path(args.file).write_text(text, encoding="utf-8")
        return EXIT_CLEAN
    out.write(text)
    return EXIT_CLEAN


# --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sleec", description="Check, analyse, monitor and verify SLEEC rulesets.")
    sub = p.add_subparsers(dest="command", required=True)

    c = sub.add_parser("check", help="parse and validate a ruleset")
    c.add_argument("file")
    c.add_argument("--json", action="store_true")
    c.add_argument("--strict-warnings", action="store_true")

    a = sub.add_parser("analyze", help="search for well-formedness issues")
    a.add_argument("file")
    a.add_argument("--horizon", type=int, default=DEFAULT_SEARCH.horizon)
    a.add_argument("--fixed-horizon", action="store_true",
                   help="do not raise the horizon to cover the longest window")
    a.add_argument("--checks", help="comma-separated subset of conflict,redundancy,"
                                    "insufficiency,over-restrictiveness")
    a.add_argument("--env-bound", type=int, default=DEFAULT_SEARCH.max_env_events_per_unit,
                   help="most environment events per time unit")
    a.add_argument("--quantum", default="1m", help="duration of one tock, e.g. 1m or 30s")
    a.add_argument("--json", action="store_true")
    a.add_argument("--strict-warnings", action="store_true")

    m = sub.add_parser("monitor", help="monitor a trace file or a token stream on stdin")
    m.add_argument("file")
    m.add_argument("--trace", help="trace file; without it tokens are read from stdin")
    m.add_argument("--strict", action="store_true", help="open obligations at the end are violations")
    m.add_argument("--quantum", default="1m")
    m.add_argument("--json", action="store_true")

    v = sub.add_parser("verify", help="explore an agent model against a ruleset")
    v.add_argument("file")
    v.add_argument("--model", required=True)
    v.add_argument("--horizon", type=int, default=DEFAULT_SEARCH.horizon)
    v.add_argument("--env-bound", type=int, default=DEFAULT_SEARCH.max_env_events_per_unit)
    v.add_argument("--quantum", default="1m")
    v.add_argument("--json", action="store_true")

    f = sub.add_parser("fmt", help="print or rewrite a ruleset in canonical form")
    f.add_argument("file")
    group = f.add_mutually_exclusive_group()
    group.add_argument("--write", action="store_true")
    group.add_argument("--check", action="store_true")
    return p


def main(argv: Optional[Sequence[str]] = None, out: TextIO = None, err: TextIO = None,
         inp: TextIO = None) -> int:
    out = out or sys.stdout
    err = err or sys.stderr
    inp = inp or sys.stdin
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    name = getattr(args, "file", "<input>")
    try:
        if args.command == "check":
            return cmd_check(args, out, err)
        if args.command == "analyze":
            return cmd_analyze(args, out, err)
        if args.command == "monitor":
            return cmd_monitor(args, out, err, inp)
        if args.command == "verify":
            return cmd_verify(args, out, err)
        return cmd_fmt(args, out, err)
    except DiagnosticError as e:
        for d in e.diagnostics:
            err.write(d.render(name) + "\n")
        return EXIT_ERROR
    except _FileDiagnostics as e:
        for d in e.diagnostics:
            err.write(d.render(e.path) + "\n")
        return EXIT_ERROR
    except (_UsageError, ConfigurationError, NonIntegralDuration, UnknownCapability, ValueError) as e:
        err.write(f"sleec: error: {e}\n")
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
