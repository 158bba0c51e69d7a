import warnings

import pytest

from discrete_darboux.spectral import BoundaryZeroWarning

CRITERIA: dict[int, str] = {}


def record(number: int, passed: bool, detail: str) -> None:
    """Store the one-line verdict of an acceptance criterion."""
    CRITERIA[number] = f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}"


@pytest.fixture(autouse=True)
def _quiet_edge_zeros():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", BoundaryZeroWarning)
        yield


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(CRITERIA):
        terminalreporter.write_line(CRITERIA[k])
