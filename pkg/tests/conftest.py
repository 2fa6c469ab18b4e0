"""Collects acceptance-criterion outcomes and prints one line per criterion."""
import pytest

_results = {}  # number -> {"name": str, "parts": [(test name, outcome, detail)]}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, name): acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    if report.when == "call" or (report.when == "setup" and not report.passed):
        number, name = marker.args
        entry = _results.setdefault(number, {"name": name, "parts": []})
        detail = ""
        if report.failed:
            detail = str(call.excinfo.value).splitlines()[0] if call.excinfo else "failed"
        entry["parts"].append((item.name, report.outcome, detail))


def pytest_terminal_summary(terminalreporter):
    if not _results:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for number in sorted(_results):
        entry = _results[number]
        ok = all(outcome == "passed" for _, outcome, _ in entry["parts"])
        tr.write_line(f"CRITERION {number:>2} {'PASS' if ok else 'FAIL'}  {entry['name']}")
        if not ok:
            for test, outcome, detail in entry["parts"]:
                tr.write_line(f"    {test}: {outcome.upper()} {detail}".rstrip())
