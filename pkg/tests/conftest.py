from __future__ import annotations

from pathlib import Path

import pytest
from hypothesis import HealthCheck, settings

from sleec.parser import load_ruleset, load_trace

CORPUS = Path(__file__).resolve().parent.parent / "corpus"

settings.register_profile(
    "default", max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")


@pytest.fixture(scope="session")
def corpus() -> Path:
    return CORPUS


@pytest.fixture(scope="session")
def table1():
    return load_ruleset(CORPUS / "almi_v1.sleec")


@pytest.fixture(scope="session")
def table2():
    return load_ruleset(CORPUS / "almi_v2.sleec")


@pytest.fixture(scope="session")
def r2_only():
    return load_ruleset(CORPUS / "almi_r2_only.sleec")


@pytest.fixture(scope="session")
def stage5(table1):
    return load_trace(CORPUS / "stage5.trace", table1)
