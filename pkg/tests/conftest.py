import time

import pytest

_outcomes: dict = {}
_names: dict = {}
_start = time.perf_counter()

SUITE_BUDGET = 60.0


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, name): acceptance criterion n")


def pytest_collection_modifyitems(items):
    for item in items:
        m = item.get_closest_marker("criterion")
        if m is not None:
            item.user_properties.append(("criterion", m.args[0]))
            _names[m.args[0]] = m.args[1]


@pytest.hookimpl(trylast=True)
def pytest_runtest_logreport(report):
    n = dict(report.user_properties).get("criterion")
    if n is None:
        return
    ok = report.passed or (report.when != "call" and not report.failed)
    if report.when == "call" or report.failed:
        _outcomes[n] = _outcomes.get(n, True) and ok


def pytest_terminal_summary(terminalreporter):
    if not _outcomes:
        return
    elapsed = time.perf_counter() - _start
    tr = terminalreporter
    tr.section("acceptance criteria")
    for n in sorted(_outcomes):
        ok = _outcomes[n]
        note = ""
        if n == 10:
            ok = ok and elapsed < SUITE_BUDGET
            note = f" (suite {elapsed:.1f}s, budget {SUITE_BUDGET:.0f}s)"
        tr.write_line(f"criterion {n:>2}: {'PASS' if ok else 'FAIL'}  {_names[n]}{note}")


def pytest_sessionfinish(session, exitstatus):
    if 10 in _outcomes and time.perf_counter() - _start >= SUITE_BUDGET and exitstatus == 0:
        session.exitstatus = 1
