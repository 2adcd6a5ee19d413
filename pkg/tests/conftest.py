import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from slident import build_regressor, stack_outputs, tc_kernel
from slident.model import TimeSeries

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def random_problem(seed, m=3, T=4, N=34, scale=0.3):
    """Small random data set: (ts, data, reg, Sigma, ktilde)."""
    rng = np.random.default_rng(seed)
    Y = rng.standard_normal((N, m))
    Y[1:] += scale * Y[:-1]
    ts = TimeSeries(Y)
    A = rng.standard_normal((m, m))
    Sigma = A @ A.T / m + 0.5 * np.eye(m)
    kt = tc_kernel(rng.uniform(0.5, 2.0), rng.uniform(0.4, 0.9), T)
    return ts, stack_outputs(ts, T), build_regressor(ts, T), Sigma, kt


def random_orthonormal(rng, m, r):
    Q, _ = np.linalg.qr(rng.standard_normal((m, m)))
    return Q[:, :r]


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES = {}


def record_criterion(number, ok, detail):
    ACCEPTANCE_LINES[number] = f"{'PASS' if ok else 'FAIL'} criterion {number:>2}: {detail}"
    print(ACCEPTANCE_LINES[number])
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[k])
