import numpy as np
import pytest

from lgr import variational as vi


def random_instance(rng, N=None, D=None, M=None, lam_range=(0.3, 1.5)):
    """Small random problem: data, models and moderately informative precisions."""
    N = N or int(rng.integers(5, 51))
    D = D or int(rng.integers(1, 4))
    M = M or int(rng.integers(1, 6))
    K = D + 1
    X = rng.uniform(-1, 1, size=(N, D))
    y = np.sin(2 * X.sum(axis=1)) + 0.1 * rng.standard_normal(N)
    centers = rng.uniform(-1, 1, size=(M, D))
    log_lambdas = np.log(rng.uniform(*lam_range, size=(M, D)))
    prec = vi.Precisions(
        beta_y=float(rng.uniform(2, 20)),
        beta_f=rng.uniform(2, 20, size=M),
        alpha=rng.uniform(0.5, 3, size=(M, K)),
    )
    return X, y, centers, log_lambdas, prec


def random_weights(rng, M, K):
    mean = rng.standard_normal((M, K))
    L = rng.standard_normal((M, K, K)) * 0.3
    cov = L @ np.swapaxes(L, 1, 2) + 0.1 * np.eye(K)
    return vi.WeightPosteriors(mean, cov)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# one line per acceptance criterion, printed in the terminal summary
ACCEPTANCE_LINES = []


def record(criterion, ok, detail):
    ACCEPTANCE_LINES.append(f"criterion {criterion}: {'PASS' if ok else 'FAIL'}  {detail}")
    print(ACCEPTANCE_LINES[-1])
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
