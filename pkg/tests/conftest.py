import pytest

_verdicts = {}


def pytest_runtest_logreport(report):
    if report.when == "call" or (report.when == "setup" and report.failed):
        num, title = getattr(report, "criterion", (None, None))
        if num is not None:
            _verdicts[num] = (title, report.outcome == "passed")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    out = yield
    mark = item.get_closest_marker("criterion")
    if mark is not None:
        out.get_result().criterion = mark.args


def pytest_terminal_summary(terminalreporter):
    if not _verdicts:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(_verdicts):
        title, ok = _verdicts[num]
        terminalreporter.write_line(f"criterion {num:>2}: {'PASS' if ok else 'FAIL'}  {title}")
