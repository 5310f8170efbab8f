from __future__ import annotations

import pytest

_CRITERIA: dict[str, str] = {}


@pytest.fixture
def criterion():
    """Record one pass/fail line per acceptance criterion, then assert."""

    def record(key: str, title: str, ok: bool, detail: str):
        line = f"{'PASS' if ok else 'FAIL'} [{key}] {title}: {detail}"
        _CRITERIA[key] = line
        print(line)
        assert ok, line

    return record


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(_CRITERIA, key=lambda k: int(k)):
        terminalreporter.write_line(_CRITERIA[key])
