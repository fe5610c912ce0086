import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from homwave.dyadic import build_system  # noqa: E402
from homwave.mra import build_splines  # noqa: E402
from homwave.space import fixture, parse_fixture  # noqa: E402
from homwave.wavelet import build_wavelets  # noqa: E402

FIXTURES = ["line4", "ring(16)", "cantor(3)", "cloud(64,2,7)"]


class Pipeline:
    def __init__(self, S, delta):
        self.S = S
        self.D = build_system(S, delta)
        self.B = build_splines(self.D)
        self.W = build_wavelets(self.B)


@pytest.fixture(scope="session")
def line4():
    return fixture("line4")


@pytest.fixture(scope="session")
def line4_pipe(line4):
    return Pipeline(line4, 0.5)


@pytest.fixture(scope="session", params=FIXTURES)
def pipe(request):
    return Pipeline(parse_fixture(request.param), 0.25)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# -- acceptance summary: one PASS/FAIL line per criterion -------------------

CRITERIA: dict = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or (rep.when != "call" and rep.passed):
        return
    n = mark.args[0]
    entry = CRITERIA.setdefault(n, {"title": mark.kwargs.get("title", ""), "passed": 0, "failed": []})
    if rep.passed:
        entry["passed"] += 1
    elif not rep.skipped:
        entry["failed"].append(item.name)


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(CRITERIA):
        e = CRITERIA[n]
        status = "FAIL" if e["failed"] else "PASS"
        extra = f" failed: {', '.join(e['failed'])}" if e["failed"] else ""
        terminalreporter.write_line(f"criterion {n:>2}: {status}  {e['title']} ({e['passed']} checks passed){extra}")
