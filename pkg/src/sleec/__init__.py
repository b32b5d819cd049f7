"""SLEEC normative rules for autonomous agents.

Parse rulesets, analyse them for well-formedness issues, monitor traces
at runtime and check small agent models for conformance.
"""

from __future__ import annotations

from sleec.conformance import AgentModel, Conformant, Counterexample, explore, load_model, parse_model
from sleec.core import (
    Diagnostic,
    DiagnosticError,
    Duration,
    EventToken,
    Finding,
    FindingKind,
    InvariantError,
    MeasureToken,
    Requirement,
    Rule,
    Ruleset,
    TOCK,
    TimeUnit,
    Trace,
)
from sleec.monitor import MonitorSession, open_session
from sleec.parser import (
    format_rule,
    format_ruleset,
    format_trace,
    load_ruleset,
    load_trace,
    parse_ruleset,
    parse_trace,
)
from sleec.semantics import DEFAULT_TIME, TimeConfig, activate, check_trace, eval_guard
from sleec.validation import validate_ruleset
from sleec.wellformedness import DEFAULT_SEARCH, CheckKind, SearchConfig, analyze

__version__ = "0.1.0"

__all__ = [
    "AgentModel", "CheckKind", "Conformant", "Counterexample", "DEFAULT_SEARCH", "DEFAULT_TIME",
    "Diagnostic", "DiagnosticError", "Duration", "EventToken", "Finding", "FindingKind",
    "InvariantError", "MeasureToken", "MonitorSession", "Requirement", "Rule", "Ruleset",
    "SearchConfig", "TOCK", "TimeConfig", "TimeUnit", "Trace", "activate", "analyze",
    "check_trace", "eval_guard", "explore", "format_rule", "format_ruleset", "format_trace",
    "load_model", "load_ruleset", "load_trace", "open_session", "parse_model", "parse_ruleset",
    "parse_trace", "validate_ruleset",
]
