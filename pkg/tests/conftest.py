"""Acceptance bookkeeping.

Tests marked ``@pytest.mark.acceptance("AC3", "title")`` are grouped by id.
A criterion passes when every test carrying its id passes; it is reported as
skipped when all of them were skipped. One line per criterion is printed at
the end of the run, together with any ``record_property("detail", ...)``
values the tests attached.
"""

import sys
from collections import OrderedDict
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

_RESULTS = OrderedDict()


def _entry(item):
    marker = item.get_closest_marker("acceptance")
    if marker is None:
        return None
    key, title = marker.args[0], marker.args[1]
    return _RESULTS.setdefault(key, {"title": title, "outcomes": [], "details": []})


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    entry = _entry(item)
    if entry is None:
        return
    if report.when == "call" or (report.when == "setup" and not report.passed):
        status = "passed" if report.passed else ("skipped" if report.skipped else "failed")
        entry["outcomes"].append(status)
        if report.skipped and isinstance(report.longrepr, tuple):
            entry["details"].append(str(report.longrepr[2]))
        for name, value in item.user_properties:
            if name == "detail":
                entry["details"].append(str(value))


def _order(key):
    digits = "".join(ch for ch in key if ch.isdigit())
    return int(digits) if digits else 0


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(_RESULTS, key=_order):
        entry = _RESULTS[key]
        outcomes = entry["outcomes"]
        if outcomes and all(o == "skipped" for o in outcomes):
            tag = "SKIP"
        elif outcomes and all(o in ("passed", "skipped") for o in outcomes):
            tag = "PASS"
        else:
            tag = "FAIL"
        line = f"[{tag}] {key} {entry['title']}"
        if entry["details"]:
            line += " | " + "; ".join(entry["details"])
        terminalreporter.write_line(line)
