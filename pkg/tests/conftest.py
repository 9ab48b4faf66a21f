from __future__ import annotations

import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from graph_rho.fjsp import Instance  # noqa: E402


@pytest.fixture
def t1() -> Instance:
    """Two jobs, two machines; the small worked example used across modules."""
    return Instance.from_lists(2, [
        [[(0, 3), (1, 5)], [(0, 2), (1, 2)]],
        [[(1, 4)], [(0, 3), (1, 1)]],
    ])


@pytest.fixture
def chain() -> Instance:
    return Instance.from_lists(1, [[[(0, 3)], [(0, 2)], [(0, 4)]]])


ACCEPTANCE: dict[int, tuple[bool, str]] = {}


@pytest.fixture
def criterion():
    """``criterion(n, ok, detail)`` records one acceptance line and fails the test when ``ok`` is false."""

    def record(n: int, ok: bool, detail: str) -> None:
        ACCEPTANCE[n] = (bool(ok), detail)
        print(f"criterion {n:>2}: {'PASS' if ok else 'FAIL'}  {detail}")
        assert ok, f"criterion {n}: {detail}"

    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:>2}: {'PASS' if ok else 'FAIL'}  {detail}")
