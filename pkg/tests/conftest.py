"""Shared test plumbing: collect acceptance verdict lines and print them
in the terminal summary, where pytest's output capture cannot eat them."""

verdicts = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if verdicts:
        terminalreporter.section("acceptance criteria")
        for line in verdicts:
            terminalreporter.write_line(line)
