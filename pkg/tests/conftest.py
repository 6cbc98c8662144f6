import re

_CRITERION = re.compile(r"test_criterion_(\d+)_")
_outcomes: dict[int, str] = {}


def pytest_runtest_logreport(report):
    m = _CRITERION.search(report.nodeid)
    if not m:
        return
    n = int(m.group(1))
    if report.when == "call" or report.outcome != "passed":
        if hasattr(report, "wasxfail"):
            status = "FAIL (expected, see ledger)"
        else:
            status = "PASS" if report.passed else "FAIL"
        if _outcomes.get(n, "PASS") == "PASS" or status != "PASS":
            _outcomes[n] = status


def pytest_terminal_summary(terminalreporter):
    if not _outcomes:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_outcomes):
        terminalreporter.write_line(f"criterion {n:2d}: {_outcomes[n]}")
