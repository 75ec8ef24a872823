import pytest

# criterion id -> (passed, description), filled by test_acceptance.py
ACCEPTANCE_RESULTS = {}


@pytest.fixture
def acceptance():
    def record(cid, description, passed):
        ACCEPTANCE_RESULTS[cid] = (bool(passed), description)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for cid in sorted(ACCEPTANCE_RESULTS, key=lambda k: (len(k), k)):
        passed, desc = ACCEPTANCE_RESULTS[cid]
        terminalreporter.write_line(f"[{'PASS' if passed else 'FAIL'}] {cid}: {desc}")
