import logging

import numpy as np
import pytest

from milpgen.milp import MilpInstance, VarType


def random_instance(rng, m=None, n=None, density=0.4, name="rand", cont_max=None):
    """A random standardized instance mixing all four variable types."""
    m = int(rng.integers(1, 6)) if m is None else m
    n = int(rng.integers(1, 7)) if n is None else n
    mask = rng.random((m, n)) < density
    rows, cols = np.nonzero(mask)
    vals = rng.integers(-5, 6, rows.size).astype(float)
    vals[vals == 0] = 1.0
    vals = vals * rng.choice([1.0, 0.5, 0.25], rows.size)
    vtype = rng.integers(0, 4, n).astype(np.int8)
    lower = np.where(rng.random(n) < 0.2, -np.inf, rng.integers(-3, 2, n).astype(float))
    base = np.where(np.isinf(lower), 0.0, lower)
    upper = np.where(rng.random(n) < 0.2, np.inf, base + rng.integers(0, 4, n))
    binary = vtype == VarType.BINARY
    lower[binary], upper[binary] = 0.0, 1.0
    c = rng.integers(-4, 5, n).astype(float) * rng.choice([1.0, 0.5], n)
    b = rng.integers(-3, 8, m).astype(float)
    return MilpInstance.from_triplets(name, c, rows, cols, vals, b, lower, upper, vtype)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(autouse=True)
def _quiet_warnings(caplog):
    caplog.set_level(logging.ERROR, logger="milpgen")
    yield


def small_mixed_instance(rng, max_binary=12, max_cont=3, name="mixed"):
    """Random instance with 1..max_binary binaries and 0..max_cont continuous
    variables; continuous bounds are sometimes infinite so that infeasible and
    unbounded cases both occur."""
    nb = int(rng.integers(1, max_binary + 1))
    nc = int(rng.integers(0, max_cont + 1))
    n, m = nb + nc, int(rng.integers(1, 8))
    A = rng.integers(-5, 6, size=(m, n)).astype(float) * (rng.random((m, n)) < 0.6)
    b = rng.integers(-3, 10, size=m).astype(float)
    c = rng.integers(-5, 6, size=n).astype(float)
    lo, up = np.zeros(n), np.ones(n)
    up[nb:] = np.where(rng.random(nc) < 0.3, np.inf, rng.integers(1, 6, size=nc))
    lo[nb:] = np.where(rng.random(nc) < 0.2, -np.inf, 0.0)
    vt = np.array([VarType.BINARY] * nb + [VarType.CONTINUOUS] * nc, dtype=np.int8)
    r, k = np.nonzero(A)
    return MilpInstance.from_triplets(name, c, r, k, A[r, k], b, lo, up, vt)


# --------------------------------------------------------------------------
# acceptance reporting: one PASS/FAIL line per criterion in the terminal summary

_CRITERIA = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): numbered acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or not (rep.when == "call" or rep.failed):
        return
    detail = ", ".join(f"{k}={v}" for k, v in item.user_properties)
    _CRITERIA[mark.args[0]] = ("PASS" if rep.passed else "FAIL", mark.args[1], detail)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for num in sorted(_CRITERIA):
        status, title, detail = _CRITERIA[num]
        terminalreporter.write_line(f"criterion {num:>2}: {status}  {title}  [{detail}]")
