import math

import pytest

from impulse_games import CostSpec, GameParams

SQ2 = math.sqrt(2.0) / 2.0


@pytest.fixture(scope="session")
def defaults():
    """h=2, K=3, k=1, r=0.5, sigma=sqrt(2)/2, c=1."""
    return GameParams(CostSpec.symmetric(h=2.0, K=3.0, k=1.0, c=1.0), r=0.5, sigma=SQ2)


@pytest.fixture(scope="session")
def asym():
    cs = CostSpec(h=1.0, p=2.0, K_plus=3.25, K_minus=3.0, k_plus=1.5, k_minus=1.0)
    return GameParams(cs, r=0.5, sigma=1.0, alpha_slope=0.5)


# ---------------------------------------------------------------------------
# one PASS/FAIL line per acceptance criterion

_results: dict = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, title): acceptance criterion number and title")


def pytest_runtest_logreport(report):
    crit = getattr(report, "criterion", None)
    if crit is None:
        return
    if report.when == "call" or report.failed or report.skipped:
        _results.setdefault(crit, []).append(report.outcome)


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    m = item.get_closest_marker("criterion")
    if m is not None:
        rep.criterion = (int(m.args[0]), str(m.args[1]))


def pytest_terminal_summary(terminalreporter):
    if not _results:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for (n, title), outcomes in sorted(_results.items()):
        if "failed" in outcomes:
            state = "FAIL"
        elif "passed" in outcomes:
            state = "PASS"
        else:
            state = "SKIP"
        tr.write_line(f"{state} criterion {n}: {title}")
