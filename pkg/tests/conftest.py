"""Per-criterion reporting for the acceptance suite.

Tests carry ``@pytest.mark.acceptance("<criterion>")``. A criterion passes
only if every test tagged with it passed; skipped parts (optional long runs)
do not count either way.
"""
from collections import OrderedDict

import pytest

_results = OrderedDict()


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None:
        return
    name = marker.args[0]
    entry = _results.setdefault(name, {"passed": 0, "failed": [], "skipped": 0})
    if rep.when == "call" and rep.passed:
        entry["passed"] += 1
    elif rep.failed:
        entry["failed"].append(item.name)
    elif rep.skipped and rep.when in ("setup", "call"):
        entry["skipped"] += 1


def pytest_terminal_summary(terminalreporter):
    if not _results:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for name, r in _results.items():
        ok = not r["failed"] and r["passed"] > 0
        extra = f" ({r['skipped']} optional part(s) skipped)" if r["skipped"] else ""
        line = f"ACCEPTANCE {'PASS' if ok else 'FAIL'} {name}: {r['passed']} passed, {len(r['failed'])} failed{extra}"
        tr.write_line(line)
