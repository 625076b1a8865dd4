"""Shared pytest plumbing: surface the acceptance-criteria result lines in
the terminal summary, where capture can't swallow them."""

acceptance_lines = []


def pytest_terminal_summary(terminalreporter):
    if acceptance_lines:
        terminalreporter.section("acceptance criteria")
        for line in acceptance_lines:
            terminalreporter.write_line(line)
