"""Shared pytest plumbing: the acceptance report printed after the run.

Acceptance tests push one line each through record_criterion; the hook
below replays them in a dedicated section at the bottom of the terminal
output so the whole contract is readable at a glance even when every
test passes.
"""

_CRITERION_LINES: list[str] = []


def record_criterion(line: str) -> None:
    _CRITERION_LINES.append(line)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _CRITERION_LINES:
        return
    terminalreporter.section("acceptance summary")
    for line in _CRITERION_LINES:
        terminalreporter.write_line(line)
