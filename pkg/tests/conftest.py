import pytest

# filled by tests/test_acceptance.py: (number, title, passed, detail)
ACCEPTANCE = []


@pytest.fixture
def report():
    def add(number, title, passed, detail=""):
        ACCEPTANCE.append((number, title, bool(passed), detail))
        print(f"[{'PASS' if passed else 'FAIL'}] criterion {number}: {title} {detail}")

    return add


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number, title, passed, detail in sorted(ACCEPTANCE, key=lambda r: r[0]):
        terminalreporter.write_line(f"[{'PASS' if passed else 'FAIL'}] criterion {number}: {title} {detail}")
