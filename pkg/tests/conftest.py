import re

ACCEPTANCE: dict[int, tuple[str, str]] = {}


def pytest_runtest_logreport(report):
    m = re.search(r"test_acceptance\.py::test_criterion_(\d+)_(\w+)", report.nodeid)
    if not m:
        return
    n = int(m.group(1))
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        ACCEPTANCE[n] = ("PASS" if report.outcome == "passed" else "FAIL", m.group(2))


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    from test_acceptance import DETAILS

    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        status, name = ACCEPTANCE[n]
        detail = DETAILS.get(n, "")
        terminalreporter.write_line(f"{status} criterion {n:2d} {name}: {detail}")
