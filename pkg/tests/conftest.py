"""Collect outcomes of tests marked ``criterion`` and print one line per criterion."""

import pytest

_RESULTS = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion")


def pytest_runtest_logreport(report):
    info = getattr(report, "criterion", None)
    if info is None:
        return
    num, title = info
    prev = _RESULTS.get(num, (title, True))
    failed = report.failed or (report.when == "call" and report.skipped)
    _RESULTS[num] = (title, prev[1] and not failed)


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    mark = item.get_closest_marker("criterion")
    if mark is not None:
        outcome.get_result().criterion = tuple(mark.args)


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(_RESULTS):
        title, ok = _RESULTS[num]
        terminalreporter.write_line(f"criterion {num:2d}: {'PASS' if ok else 'FAIL'}  {title}")
