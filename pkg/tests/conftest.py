import hypothesis
import numpy as np
import pytest

np.seterr(over="raise", invalid="raise", divide="raise", under="ignore")

hypothesis.settings.register_profile("default", deadline=None)
hypothesis.settings.register_profile("fast", max_examples=10, deadline=None)
hypothesis.settings.load_profile("default")

ACCEPTANCE_LINES = []


@pytest.fixture
def criterion(request):
    """Record one PASS/FAIL line per acceptance criterion for the terminal summary."""
    def record(label):
        ACCEPTANCE_LINES.append((request.node.nodeid, label))
    return record


def pytest_runtest_makereport(item, call):
    if call.when == "call":
        for i, (nodeid, label) in enumerate(ACCEPTANCE_LINES):
            if nodeid == item.nodeid and not isinstance(label, tuple):
                ACCEPTANCE_LINES[i] = (nodeid, (label, call.excinfo is None))


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for _, entry in ACCEPTANCE_LINES:
        label, ok = entry if isinstance(entry, tuple) else (entry, False)
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {label}")
