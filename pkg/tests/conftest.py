import pytest

# criterion number -> (passed, detail), filled by test_acceptance.py
ACCEPTANCE: dict = {}


@pytest.fixture
def record():
    def _record(n: int, passed: bool, detail: str):
        ACCEPTANCE[n] = (bool(passed), detail)
        return passed

    return _record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  criterion {n}: {detail}")
