"""Collects the outcome of every ``@pytest.mark.acceptance(n, title)`` test.

A criterion passes only if all of its tests pass.  Tests may attach a short
measurement with ``record_property("detail", ...)``; it is echoed next to
the criterion in the terminal summary.
"""

import pytest

_results: dict[int, dict] = {}


def pytest_collection_modifyitems(items):
    for item in items:
        m = item.get_closest_marker("acceptance")
        if m is not None:
            n, title = m.args
            item.user_properties.append(("acceptance", (n, title)))
            _results.setdefault(n, {"title": title, "ok": True, "seen": False, "details": []})


def pytest_runtest_logreport(report):
    props = dict(report.user_properties)
    if "acceptance" not in props:
        return
    n, _ = props["acceptance"]
    entry = _results[n]
    if report.when == "call" or report.outcome != "passed":
        entry["seen"] = entry["seen"] or report.when == "call"
        entry["ok"] = entry["ok"] and report.outcome == "passed"
    if report.when == "call":
        entry["details"] += [v for k, v in report.user_properties if k == "detail"]


@pytest.hookimpl(trylast=True)
def pytest_terminal_summary(terminalreporter):
    if not _results:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for n in sorted(_results):
        e = _results[n]
        status = "PASS" if e["ok"] and e["seen"] else ("FAIL" if e["seen"] or not e["ok"] else "SKIP")
        line = f"AC{n:<3} {status}  {e['title']}"
        if e["details"]:
            line += "  [" + "; ".join(e["details"]) + "]"
        tr.write_line(line)
