"""Collects acceptance outcomes and prints one line per criterion at the end of the run."""

_RESULTS = {}


def pytest_runtest_logreport(report):
    if "test_acceptance.py::" not in report.nodeid:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        name = report.nodeid.split("::")[-1]
        _RESULTS[name] = report.outcome


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(_RESULTS):
        status = "PASS" if _RESULTS[name] == "passed" else "FAIL"
        terminalreporter.write_line(f"{status}  {name}")
