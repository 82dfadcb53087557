import math

import numpy as np
import pytest

from thermoform.dynamics import Branch, MarkovMap1D
from thermoform.potential import Potential

GOLD = (1.0 + math.sqrt(5.0)) / 2.0


def benchmark_map(delta0=0.1):
    """Three atoms; the first branch is quadratic with f'(0) = 1/(1+delta0), the others are 3x mod 1."""
    b = 9.0 * (1.0 - 1.0 / (3.0 * (1.0 + delta0)))
    return MarkovMap1D(
        (0.0, 1.0 / 3.0, 2.0 / 3.0, 1.0),
        (Branch((0.0, 1.0 / (1.0 + delta0), b)), Branch.affine(3.0, -1.0), Branch.affine(3.0, -2.0)),
        q=1,
        delta0=delta0,
        name="benchmark",
    )


def doubling_map():
    return MarkovMap1D((0.0, 0.5, 1.0), (Branch.affine(2.0, 0.0), Branch.affine(2.0, -1.0)), name="doubling")


def golden_mean_map():
    a = 1.0 / GOLD
    return MarkovMap1D((0.0, a, 1.0), (Branch.affine(GOLD, 0.0), Branch.affine(GOLD, -1.0)), name="golden")


def two_shift_potential():
    """Per-atom weights (1, 2) on the doubling map: a Bernoulli(1/3, 2/3) equilibrium state."""
    return Potential.per_atom((0.0, math.log(2.0)), (0.0, 0.5, 1.0))


def tent_potential():
    return Potential("tent", (0.0, 0.5))


def indicator(lo, hi):
    return lambda x: ((np.asarray(x) >= lo) & (np.asarray(x) < hi)).astype(float)


@pytest.fixture(scope="session")
def bench():
    return benchmark_map()


@pytest.fixture(scope="session")
def doubling():
    return doubling_map()


@pytest.fixture(scope="session")
def golden():
    return golden_mean_map()


@pytest.fixture(scope="session")
def zero():
    return Potential.zero()


@pytest.fixture(scope="session")
def tent():
    return tent_potential()


@pytest.fixture(scope="session")
def two_shift():
    return two_shift_potential()


# ---------------------------------------------------------------------------
# one summary line per acceptance criterion

_CRITERIA = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or rep.when != "call":
        return
    number, title = mark.args
    detail = dict(item.user_properties).get("detail", "")
    if rep.failed and not detail:
        detail = str(call.excinfo.value).splitlines()[0][:160] if call.excinfo else ""
    _CRITERIA[number] = (title, rep.passed, detail)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        title, passed, detail = _CRITERIA[number]
        tr.write_line(f"[{'PASS' if passed else 'FAIL'}] {number:>2}. {title}: {detail}")
    n_pass = sum(p for _, p, _ in _CRITERIA.values())
    tr.write_line(f"{n_pass}/{len(_CRITERIA)} criteria pass")
