import numpy as np
import pytest

from spatiotemporal_paoi.config import AnalysisParams, NetworkParams


@pytest.fixture
def net():
    return NetworkParams()


@pytest.fixture
def analysis():
    return AnalysisParams()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


_ACCEPTANCE: dict[int, str] = {}


@pytest.fixture
def criterion():
    """Record the pass/fail line of an acceptance criterion and print it."""

    def record(number: int, ok: bool, detail: str) -> bool:
        line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        _ACCEPTANCE[number] = line
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for n in sorted(_ACCEPTANCE):
            terminalreporter.write_line(_ACCEPTANCE[n])
