import os
import time

import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("thorough", deadline=None, max_examples=300)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

_ACCEPTANCE_LINES: list[str] = []


class _Verdict:
    """Records one PASS/FAIL line per acceptance criterion."""

    def __init__(self, number: int, title: str, limit_s: float):
        self.number, self.title, self.limit_s = number, title, limit_s
        self.started = time.perf_counter()

    def finish(self, ok: bool, detail: str):
        elapsed = time.perf_counter() - self.started
        in_time = elapsed < self.limit_s
        passed = ok and in_time
        line = (f"ACCEPTANCE {self.number} {self.title}: {'PASS' if passed else 'FAIL'} "
                f"({detail}; {elapsed:.1f}s of {self.limit_s:g}s)")
        _ACCEPTANCE_LINES.append(line)
        print(line)
        assert ok, detail
        assert in_time, f"runtime {elapsed:.1f}s exceeds {self.limit_s:g}s"


@pytest.fixture
def criterion():
    return _Verdict


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE_LINES, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
