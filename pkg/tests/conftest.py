import numpy as np
import pytest

from calpath.graph import Graph

_CRITERIA: dict = {}


@pytest.fixture
def criterion():
    """Record one acceptance line: ``criterion(number, ok, detail)``."""

    def record(number: int, ok: bool, detail: str = ""):
        prev = _CRITERIA.get(number)
        ok = bool(ok) and (prev is None or prev[0])
        _CRITERIA[number] = (ok, detail if prev is None else f"{prev[1]}; {detail}")
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        ok, detail = _CRITERIA[number]
        terminalreporter.write_line(f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}")


@pytest.fixture
def triangle():
    # s=0, a=1, t=2; edges s-a, a-t, s-t
    return Graph(3, ((0, 1), (1, 2), (0, 2)))


@pytest.fixture
def diamond():
    # s=0, top=1, bottom=2, t=3
    return Graph(4, ((0, 1), (1, 3), (0, 2), (2, 3)))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
