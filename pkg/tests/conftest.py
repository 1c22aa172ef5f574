from pathlib import Path

ACCEPTANCE_LINES: list[str] = []


def pytest_addoption(parser):
    parser.addoption("--real-data", type=Path, default=None,
                     help="CSV export of a real dataset for the optional full-size convergence check")


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
