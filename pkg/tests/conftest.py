"""Collects acceptance verdicts and prints one line per criterion after the run."""
from __future__ import annotations

import pytest

# criterion number -> list of (part, passed, detail)
ACCEPTANCE: dict[int, list[tuple[str, bool, str]]] = {}


@pytest.fixture
def report():
    def _report(criterion: int, part: str, passed: bool, detail: str) -> None:
        ACCEPTANCE.setdefault(criterion, []).append((part, bool(passed), detail))
        print(f"criterion {criterion} [{part}]: {'PASS' if passed else 'FAIL'} ({detail})")

    return _report


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        parts = ACCEPTANCE[n]
        ok = all(p[1] for p in parts)
        detail = "; ".join(f"{name}: {'ok' if good else 'FAILED'}, {info}" for name, good, info in parts)
        terminalreporter.write_line(f"criterion {n:>2}: {'PASS' if ok else 'FAIL'}  {detail}")
