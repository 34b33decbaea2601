import os
import sys

import pytest

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

DATA = os.path.join(os.path.dirname(os.path.abspath(__file__)), "data")

_acceptance: list[tuple[str, str, float]] = []


@pytest.fixture
def data_dir():
    return DATA


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    if not item.nodeid.split("::")[0].endswith("test_acceptance.py"):
        return
    doc = (getattr(item.function, "__doc__", None) or item.name).strip().splitlines()[0]
    if report.when == "call" or (report.when == "setup" and not report.passed):
        status = "PASS" if report.passed else ("SKIP" if report.skipped else "FAIL")
        _acceptance.append((status, doc, report.duration))


def pytest_terminal_summary(terminalreporter):
    if not _acceptance:
        return
    terminalreporter.section("acceptance criteria")
    for status, doc, duration in _acceptance:
        terminalreporter.write_line(f"[{status}] {doc} ({duration:.1f}s)")
    passed = sum(1 for s, _, _ in _acceptance if s == "PASS")
    terminalreporter.write_line(f"{passed}/{len(_acceptance)} acceptance criteria passed")
