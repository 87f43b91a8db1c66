import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("lab", deadline=None, derandomize=True, print_blob=True)
settings.load_profile("lab")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


_CRITERIA = {}


@pytest.fixture
def criterion():
    """``criterion(n, ok, detail)`` records one acceptance line for the session summary."""

    def record(n, ok, detail=""):
        line = f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}".rstrip()
        _CRITERIA[str(n)] = line
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(_CRITERIA, key=lambda k: (len(k), k)):
        terminalreporter.write_line(_CRITERIA[key])
