import pytest
from hypothesis import settings

from critmax.model import calibrate_critical

# numba compiles on first call; the CPU is also shared with long runs
settings.register_profile("default", deadline=None, max_examples=50)
settings.load_profile("default")


@pytest.fixture(scope="session")
def lognormal():
    return calibrate_critical("LognormalFixedN", {"b": 2, "sigma": 1.0}, ["mu"])


@pytest.fixture(scope="session")
def two_point():
    return calibrate_critical("TwoPointFixedN", {"b": 2, "x1": 1.0, "x2": -1.0}, ["p"])


_CRITERIA: dict[int, str] = {}


@pytest.fixture
def report_criterion():
    """Record one PASS/FAIL line per acceptance criterion for the summary."""

    def add(k: int, ok: bool, text: str) -> None:
        _CRITERIA[k] = f"CRITERION {k:2d} {'PASS' if ok else 'FAIL'}  {text}"
        print(_CRITERIA[k])

    return add


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for k in sorted(_CRITERIA):
            terminalreporter.write_line(_CRITERIA[k])
