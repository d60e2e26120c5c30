import pytest

# criterion number -> (verdict, detail), filled by test_acceptance.py
ACCEPTANCE = {}


def record(number, verdict, detail=""):
    ACCEPTANCE[number] = (verdict, detail)
    print(f"criterion {number}: {verdict} {detail}")


@pytest.fixture
def acceptance_record():
    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        verdict, detail = ACCEPTANCE[number]
        terminalreporter.write_line(f"criterion {number:>2}: {verdict:<4} {detail}")
