import os
import sys

import pytest
from hypothesis import settings

sys.path.insert(0, os.path.dirname(__file__))

settings.register_profile("default", deadline=None, max_examples=100)
settings.load_profile("default")

_CRITERIA = {}


@pytest.fixture
def criterion(request):
    """Record an acceptance criterion's outcome under its marker label."""
    marker = request.node.get_closest_marker("criterion")
    label = marker.args[0] if marker else request.node.name
    _CRITERIA[request.node.nodeid] = [label, None, ""]

    def note(detail):
        _CRITERIA[request.node.nodeid][2] = detail

    return note


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    if report.when == "call" and item.nodeid in _CRITERIA:
        _CRITERIA[item.nodeid][1] = report.passed


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(label): acceptance criterion label")


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for label, passed, detail in _CRITERIA.values():
        status = "PASS" if passed else "FAIL"
        terminalreporter.write_line(f"{status}  {label}" + (f"  ({detail})" if detail else ""))
