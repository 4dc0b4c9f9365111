import pytest

ACCEPTANCE_LINES = []


@pytest.fixture
def acceptance_report(capsys):
    """Record one pass/fail line for an acceptance criterion and echo it immediately."""

    def report(number, name, ok, detail):
        line = f"ACCEPTANCE {number} {'PASS' if ok else 'FAIL'} {name}: {detail}"
        ACCEPTANCE_LINES.append(line)
        with capsys.disabled():
            print("\n" + line)
        return ok

    return report


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
