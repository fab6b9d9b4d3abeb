import re

import pytest

# acceptance outcomes, keyed by criterion number
_RESULTS: dict = {}
_NOTES: dict = {}


@pytest.fixture
def note(request):
    m = re.match(r"test_ac(\d+)_", request.node.name)
    key = int(m.group(1)) if m else None

    def add(text):
        if key is not None:
            _NOTES.setdefault(key, []).append(text)
    return add


def pytest_runtest_logreport(report):
    m = re.search(r"test_acceptance\.py::test_ac(\d+)_(\w+)", report.nodeid)
    if not m:
        return
    key = int(m.group(1))
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        ok = report.outcome == "passed"
        prev = _RESULTS.get(key)
        _RESULTS[key] = (ok and (prev is None or prev[0]), m.group(2).replace("_", " "))


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for key in sorted(_RESULTS):
        ok, title = _RESULTS[key]
        extra = "; ".join(_NOTES.get(key, []))
        tr.write_line(f"AC{key:<2} {'PASS' if ok else 'FAIL'}  {title}" + (f"  [{extra}]" if extra else ""))
