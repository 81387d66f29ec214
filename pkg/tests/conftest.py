from __future__ import annotations

import time
from contextlib import contextmanager

import pytest

_LINES: list[str] = []


@contextmanager
def _criterion(number: int, title: str, limit: float):
    start = time.perf_counter()
    status, note = "FAIL", ""
    try:
        yield
        elapsed = time.perf_counter() - start
        if elapsed >= limit:
            note = f" (over the {limit:g} s limit)"
            raise AssertionError(f"criterion {number} took {elapsed:.2f} s, limit {limit:g} s")
        status = "PASS"
    finally:
        elapsed = time.perf_counter() - start
        _LINES.append(f"criterion {number:>2} {status}  {elapsed:7.2f} s / {limit:g} s  {title}{note}")


@pytest.fixture
def criterion():
    return _criterion


def pytest_terminal_summary(terminalreporter):
    if _LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_LINES, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
