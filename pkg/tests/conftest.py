import numpy as np
import pytest

from kfrsplit.grid import Grid, measure_from_fn

_ACCEPTANCE: list[tuple[str, bool, str]] = []


@pytest.fixture
def record_criterion():
    """Record one acceptance line; the terminal summary prints all of them."""

    def record(name: str, passed: bool, detail: str = "") -> bool:
        _ACCEPTANCE.append((name, bool(passed), detail))
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name, passed, detail in _ACCEPTANCE:
        status = "PASS" if passed else "FAIL"
        terminalreporter.write_line(f"{status}  {name}  {detail}")


@pytest.fixture
def unit_grid():
    return Grid(0.0, 1.0, 50)


@pytest.fixture
def sym_grid():
    return Grid(-1.0, 1.0, 100)


def bump(grid, center=0.0, width=0.15, height=1.0, background=0.0):
    return measure_from_fn(
        grid, lambda x: background + height * np.exp(-0.5 * ((x - center) / width) ** 2)
    )


def uniform(grid, value=1.0):
    return measure_from_fn(grid, lambda x: np.full_like(x, value))
