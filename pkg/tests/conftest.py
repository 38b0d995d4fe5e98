import pytest
from hypothesis import settings

from qds.security import thresholds

settings.register_profile("default", deadline=None, max_examples=100)
settings.load_profile("default")

TRIAL_E = 0.0108
TRIAL_P_E = 0.262


@pytest.fixture
def trial_thresholds():
    return thresholds(TRIAL_E, TRIAL_P_E)


_ACCEPTANCE_LINES = []


class _Recorder:
    def __init__(self, number, title):
        self.number, self.title, self.detail = number, title, ""

    def __enter__(self):
        return self

    def __exit__(self, kind, exc, tb):
        status = "PASS" if kind is None else "FAIL"
        detail = self.detail if kind is None else f"{self.detail} {kind.__name__}: {exc}".strip()
        line = f"[{status}] criterion {self.number:>2}: {self.title}"
        _ACCEPTANCE_LINES.append((self.number, line + (f" ({detail})" if detail else "")))
        print(_ACCEPTANCE_LINES[-1][1])
        return False


@pytest.fixture
def criterion():
    """``with criterion(n, title) as c:`` records one PASS/FAIL line; set ``c.detail`` for numbers."""
    return _Recorder


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for _, line in sorted(_ACCEPTANCE_LINES):
        terminalreporter.write_line(line)
