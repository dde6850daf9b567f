import re

import pytest

CRITERIA = {}
_DETAILS = {}


@pytest.fixture
def criterion_detail(request):
    """Let an acceptance test attach a one-line summary of what it measured."""
    m = re.match(r"test_criterion_(\d+)", request.node.name)
    key = int(m.group(1)) if m else None

    def record(text):
        if key is not None:
            _DETAILS.setdefault(key, []).append(text)

    return record


def pytest_runtest_logreport(report):
    m = re.match(r"test_criterion_(\d+)", report.nodeid.split("::")[-1])
    if not m or "test_acceptance" not in report.nodeid:
        return
    key = int(m.group(1))
    if report.when == "call" or report.outcome != "passed":
        ok = report.outcome == "passed"
        CRITERIA[key] = CRITERIA.get(key, True) and ok


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(CRITERIA):
        status = "PASS" if CRITERIA[key] else "FAIL"
        detail = "; ".join(_DETAILS.get(key, []))
        terminalreporter.write_line(f"criterion {key}: {status}" + (f"  ({detail})" if detail else ""))
