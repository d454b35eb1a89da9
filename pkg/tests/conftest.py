"""Shared pytest plumbing.

The acceptance checks register one result line each; printing them from
a terminal-summary hook keeps them visible under default output
capture.
"""

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance checks")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
