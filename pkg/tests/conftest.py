import numpy as np
import pytest

from occid import KernelConfig, OccupationBasis, Trajectory


def random_trajectory(rng, N=21, T=0.2, n=2, m=1, s=1):
    t = np.linspace(0.0, T, N)
    X = np.cumsum(rng.normal(scale=0.2, size=(N, n)), axis=0)
    U = rng.normal(size=(N, m)) if m else None
    D = rng.normal(size=(s - 1, n))
    return Trajectory(t, X, U, D)


def constant_trajectory(x0, T=1.0, N=11, u=None, s=1):
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    t = np.linspace(0.0, T, N)
    U = None if u is None else np.full((N, len(np.atleast_1d(u))), u, dtype=float)
    return Trajectory(t, np.tile(x0, (N, 1)), U, np.zeros((s - 1, x0.size)))


def random_basis(rng, M=3, s=1, n=2, m=1, shape=0.7, rule="trapezoid", N=21):
    trajs = tuple(random_trajectory(rng, N=N, n=n, m=m, s=s) for _ in range(M))
    return OccupationBasis(trajs, s, KernelConfig("gaussian", shape), rule)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES = []


@pytest.fixture
def verdict(request):
    """Record one summary line per acceptance criterion, printed after the run."""
    def record(criterion, ok, detail):
        line = f"criterion {criterion}: {'PASS' if ok else 'FAIL'}  {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
