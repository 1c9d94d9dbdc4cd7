"""Shared test plumbing.

The acceptance module records one line per criterion through the
``acceptance_recorder`` fixture; the terminal summary hook prints them
after the run so the gate's verdict is visible even when all tests pass
and capture hides in-test prints.
"""

import pytest

_acceptance_lines: list[str] = []


@pytest.fixture
def acceptance_recorder():
    return _acceptance_lines.append


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if _acceptance_lines:
        terminalreporter.section("acceptance criteria")
        for line in _acceptance_lines:
            terminalreporter.write_line(line)
