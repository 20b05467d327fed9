from __future__ import annotations

import pytest

_RESULTS: dict[int, tuple[str, str]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, description): acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    number, description = marker.args
    failed = report.failed
    if report.when == "call" or failed:
        prev = _RESULTS.get(number, ("PASS", description))[0]
        status = "FAIL" if failed or prev == "FAIL" else "PASS"
        _RESULTS[number] = (status, description)


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_RESULTS):
        status, description = _RESULTS[number]
        terminalreporter.write_line(f"[{status}] {number:2d} {description}")
