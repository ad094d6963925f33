import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# acceptance criteria report: one line per criterion after the run
ACCEPTANCE: dict[int, tuple[str, str]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n): acceptance criterion number")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or rep.when != "call":
        return
    n = marker.args[0]
    detail = getattr(item, "acceptance_detail", "")
    status = "PASS" if rep.passed else "FAIL"
    prev = ACCEPTANCE.get(n)
    if prev is None or prev[0] == "PASS":
        ACCEPTANCE[n] = (status, detail)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        status, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:2d}: {status}  {detail}".rstrip())
