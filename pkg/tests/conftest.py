import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

_VERDICTS: list[str] = []


@pytest.fixture
def verdict(request):
    """Record a one-line pass/fail result for an acceptance criterion.

    Call it with ``(label, passed, detail)``; the line is printed as the test
    runs and repeated in the terminal summary.
    """
    capman = request.config.pluginmanager.getplugin("capturemanager")

    def record(label: str, passed: bool, detail: str = "") -> bool:
        line = f"{label}: {'PASS' if passed else 'FAIL'}" + (f"  ({detail})" if detail else "")
        _VERDICTS.append(line)
        with capman.global_and_fixture_disabled():
            print(f"\n{line}")
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if _VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in _VERDICTS:
            terminalreporter.write_line(line)
