import pytest
from hypothesis import settings

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")

ACCEPTANCE_LINES = []


@pytest.fixture
def report():
    def _report(number: int, ok: bool, detail: str, seconds: float):
        line = f"[{'PASS' if ok else 'FAIL'}] criterion {number:2d}: {detail} ({seconds:.1f}s)"
        ACCEPTANCE_LINES.append((number, line))
        print(line)
        return line

    return _report


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for _, line in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(line)
