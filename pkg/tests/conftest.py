"""Shared test plumbing: the acceptance-criteria result banner."""

_CRITERION_LINES = []


def record_criterion(number, ok, detail):
    """Log one acceptance criterion outcome; echoed in the terminal summary."""
    line = f"criterion {number}: {'PASS' if ok else 'FAIL'} ({detail})"
    _CRITERION_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if _CRITERION_LINES:
        terminalreporter.section("acceptance criteria")
        for line in _CRITERION_LINES:
            terminalreporter.write_line(line)
