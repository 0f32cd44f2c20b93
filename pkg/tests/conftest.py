import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("thorough", max_examples=400, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

# criterion number -> [title, outcomes of its tests, failure notes]
_ACCEPTANCE = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(number, title): acceptance criterion check")


def pytest_runtest_logreport(report):
    if report.when != "call" and not (report.when == "setup" and report.outcome != "passed"):
        return
    marker = getattr(report, "_acceptance", None)
    if marker is None:
        return
    number, title = marker
    entry = _ACCEPTANCE.setdefault(number, [title, [], []])
    entry[1].append(report.outcome)
    if report.outcome == "failed":
        msg = str(report.longrepr).strip().splitlines()
        entry[2].append(next((m for m in reversed(msg) if m.startswith("E ")), msg[-1] if msg else "")[:160])


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    m = item.get_closest_marker("acceptance")
    if m is not None:
        rep._acceptance = (m.args[0], m.args[1])


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for number in sorted(_ACCEPTANCE):
        title, outcomes, notes = _ACCEPTANCE[number]
        if "failed" in outcomes:
            status = "FAIL"
        elif outcomes and all(o == "skipped" for o in outcomes):
            status = "SKIP"
        else:
            status = "PASS"
        tr.write_line(f"[{status}] {number:>2}. {title}")
        for note in notes:
            tr.write_line(f"        {note}")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
