import pytest

ACCEPTANCE_LINES = []


@pytest.fixture
def criterion():
    """Record one status line per acceptance criterion; printed in the terminal summary."""
    def record(cid, status, detail):
        line = f"criterion {cid}: {status} ({detail})"
        ACCEPTANCE_LINES.append(line)
        print(line)
    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
