import numpy as np
import pytest

ACCEPTANCE_LINES: list[str] = []


def record(criterion: int, label: str, passed: bool, detail: str) -> None:
    line = f"criterion {criterion:2d} {'PASS' if passed else 'FAIL'}  {label}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
