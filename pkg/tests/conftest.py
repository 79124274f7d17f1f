import sys


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """Print the collected acceptance-criterion lines after the test run."""
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "REPORT_LINES", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
