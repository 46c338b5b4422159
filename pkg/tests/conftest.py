from __future__ import annotations

import re

import pytest

from flowforge.dataset import load_desk
from flowforge.tools import business_registry

_ACCEPTANCE = re.compile(r"test_acceptance\.py::test_criterion_(\d+)_(\w+)")


@pytest.fixture(scope="session")
def desk():
    return load_desk()


@pytest.fixture(scope="session")
def desk_by_id(desk):
    return {i.id: i for i in desk}


@pytest.fixture
def math_registry():
    return business_registry(["math"])


def pytest_terminal_summary(terminalreporter):
    """One PASS/FAIL line per acceptance criterion, in criterion order."""
    lines = {}
    for status in ("passed", "failed", "error", "skipped"):
        for rep in terminalreporter.stats.get(status, []):
            m = _ACCEPTANCE.search(getattr(rep, "nodeid", ""))
            if m is None or getattr(rep, "when", "call") not in ("call", "setup"):
                continue
            n = int(m.group(1))
            ok = status == "passed"
            if n not in lines or not ok:
                lines[n] = f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {m.group(2).replace('_', ' ')}"
    if lines:
        terminalreporter.section("acceptance criteria")
        for n in sorted(lines):
            terminalreporter.write_line(lines[n])
