import logging

import numpy as np
import pytest

from covact import SolverState


@pytest.fixture(autouse=True)
def _quiet_solvers(caplog):
    caplog.set_level(logging.ERROR, logger="covact")


def random_hpd(rng, L, cond=10.0):
    """Hermitian PD matrix with eigenvalues spread over [1, cond]."""
    X = rng.normal(size=(L, L)) + 1j * rng.normal(size=(L, L))
    Q, _ = np.linalg.qr(X)
    lam = np.geomspace(1.0, cond, L)
    A = (Q * lam) @ Q.conj().T
    return 0.5 * (A + A.conj().T)


def random_state(rng, B, N, L, a=None, noise_var=1.0):
    """Small well-conditioned problem with O(1) gains and a PD sample covariance."""
    S = (rng.normal(size=(L, B * N)) + 1j * rng.normal(size=(L, B * N))) / np.sqrt(2)
    G = rng.uniform(0.2, 2.0, size=(B, B * N))
    covs = np.stack([random_hpd(rng, L, cond=5.0) * rng.uniform(1.0, 3.0) for _ in range(B)])
    return SolverState(S, G, covs, noise_var, a=a)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def random_instance(rng, B):
    """Subproblem drawn from a random state, as the solvers would build it."""
    from covact.mle import coordinate_stats

    a = rng.uniform(size=3 * B)
    # put some coordinates on the box faces, where the solvers spend most time
    a = np.where(rng.uniform(size=a.size) < 0.3, rng.integers(0, 2, a.size), a)
    state = random_state(rng, B, 3, 5, a=a)
    i = int(rng.integers(state.size))
    return coordinate_stats(i, state).instance(state.a[i])


def grid_phi(inst, n=100_001):
    """Literal phi on a uniform grid of the step interval, log-domain points dropped."""
    d = np.linspace(inst.lower, inst.upper, n)
    u = 1.0 + np.outer(d, inst.gamma)
    ok = np.all(u > 0, axis=1)
    d, u = d[ok], u[ok]
    vals = np.sum(np.log(u) - d[:, None] * inst.beta / u, axis=1)
    return d, vals


# ---------------------------------------------------------------- acceptance summary

def pytest_configure(config):
    config.acceptance_lines = {}


@pytest.fixture
def criterion(request):
    """``criterion(n, ok, detail)`` records the verdict line and asserts ``ok``."""
    def record(n, ok, detail):
        line = f"criterion {n}: {'PASS' if ok else 'FAIL'} | {detail}"
        request.config.acceptance_lines[n] = line
        print(line)
        assert ok, line
    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = getattr(config, "acceptance_lines", {})
    if lines:
        terminalreporter.section("acceptance criteria")
        for n in sorted(lines):
            terminalreporter.write_line(lines[n])
