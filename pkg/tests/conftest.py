import pytest

# (criterion id, passed, detail) appended by tests/test_acceptance.py
ACCEPTANCE = []


@pytest.fixture
def record():
    def _record(cid, passed, detail):
        ACCEPTANCE.append((cid, bool(passed), detail))
        return bool(passed)

    return _record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for cid, passed, detail in sorted(ACCEPTANCE, key=lambda r: str(r[0])):
        tr.write_line(f"criterion {cid}: {'PASS' if passed else 'FAIL'}  {detail}")
