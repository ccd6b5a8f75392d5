import csv
import time
from collections import defaultdict
from functools import lru_cache
from pathlib import Path

import pytest

from gsrchart.metrics import ChartDesign, evaluate
from gsrchart.optimizer import optimize_design

DATA = Path(__file__).resolve().parents[1] / "data"
TIMINGS: dict = {}


def load_reference():
    with (DATA / "reference_tables.csv").open() as fh:
        return {(int(r["gamma"]), float(r["mu"])): {k: float(v) for k, v in r.items()}
                for r in csv.DictReader(fh)}


REFERENCE = load_reference()


@lru_cache(maxsize=None)
def optimum(mu, gamma):
    t0 = time.perf_counter()
    res = optimize_design(mu, gamma)
    TIMINGS[(mu, gamma)] = time.perf_counter() - t0
    return res


@lru_cache(maxsize=None)
def report(mu, r, A):
    return evaluate(ChartDesign(r=r, A=A, mu=mu))


def reference_design(gamma, mu):
    ref = REFERENCE[(gamma, mu)]
    return ChartDesign(r=ref["r_star"], A=ref["a_star"], mu=mu)


@pytest.fixture(scope="session")
def reference():
    return REFERENCE


# One summary line per acceptance criterion, aggregated over its tests.
_CRITERIA: dict = {}
_OUTCOMES: dict = defaultdict(list)


def pytest_collection_modifyitems(items):
    for item in items:
        mark = item.get_closest_marker("criterion")
        if mark is not None:
            _CRITERIA[item.nodeid] = mark.args


def pytest_runtest_logreport(report):
    if report.nodeid not in _CRITERIA:
        return
    if report.when == "call" or report.outcome != "passed":
        _OUTCOMES[_CRITERIA[report.nodeid]].append(report.outcome)


def pytest_terminal_summary(terminalreporter):
    if not _OUTCOMES:
        return
    terminalreporter.section("acceptance criteria")
    for (n, title), outcomes in sorted(_OUTCOMES.items()):
        if any(o == "failed" for o in outcomes):
            verdict = "FAIL"
        elif all(o == "skipped" for o in outcomes):
            verdict = "SKIP"
        else:
            verdict = "PASS"
        terminalreporter.write_line(f"criterion {n:2d} {verdict}  {title} ({len(outcomes)} checks)")
