import numpy as np
import pytest

from compatpriors.core_model import Dataset
from compatpriors.experiments import hald_dataset


def random_design(rng, n, p, corr=0.0):
    """Intercept plus p-1 Gaussian predictors; ``corr`` mixes column 1 into the rest."""
    Z = rng.standard_normal((n, p - 1))
    if p > 2 and corr:
        Z[:, 1:] += corr * Z[:, [0]]
    return np.column_stack([np.ones(n), Z])


def random_dataset(rng, n, p, corr=0.0, noise=1.0):
    X = random_design(rng, n, p, corr)
    beta = rng.normal(size=p)
    return Dataset(X @ beta + noise * rng.standard_normal(n), X)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def hald():
    return hald_dataset()


@pytest.fixture(scope="session")
def correlated_data():
    """Fixed correlated-design fixture shared by the coherence tests."""
    r = np.random.default_rng(7)
    n = 14
    X = np.column_stack([np.ones(n), r.standard_normal((n, 3))])
    X[:, 3] += 0.8 * X[:, 1]
    X[:, 2] += 0.5 * X[:, 1]
    y = X @ np.array([1.0, 1.5, -0.3, -0.8]) + r.standard_normal(n)
    return Dataset(y, X)


_REPORT = pytest.StashKey[list]()


@pytest.fixture
def criterion(request):
    """Call as criterion(number, ok, detail); the line is printed and repeated in the summary."""
    lines = request.config.stash.setdefault(_REPORT, [])

    def record(number, ok, detail):
        line = f"{'PASS' if ok else 'FAIL'} criterion {number}: {detail}"
        print(line)
        lines.append((number, line))
        return ok

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_REPORT, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(lines, key=lambda t: t[0]):
            terminalreporter.write_line(line)
