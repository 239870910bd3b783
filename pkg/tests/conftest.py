import numpy as np
import pytest

from asymptote.estimator import AsymptoticSolver
from asymptote.problem import load_fixture

# lines collected by the acceptance tests, echoed in the terminal summary
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def riccati():
    p = load_fixture("riccati")
    return p.system(), p.family()


@pytest.fixture(scope="session")
def oscillator():
    p = load_fixture("oscillator")
    return p.system(), p.family()


@pytest.fixture(scope="session")
def pendulum():
    p = load_fixture("pendulum-eq")
    return p.system(), p.family()


@pytest.fixture(scope="session")
def boundary():
    p = load_fixture("failing-boundary")
    return p.system(), p.family()


@pytest.fixture(scope="session")
def riccati_est():
    return AsymptoticSolver.from_problem(load_fixture("riccati")).fit()


@pytest.fixture(scope="session")
def oscillator_est():
    return AsymptoticSolver.from_problem(load_fixture("oscillator")).fit()


def contraction_ratios(est, alpha, pairs=20, seed=0):
    """Ratios |Phi C1 - Phi C2|_lam / |C1 - C2|_lam for random smooth pairs in the K-ball.

    ``Phi`` is the integral operator of the solved problem at ``alpha``; each
    ``C`` is ``rho K t**-lam v(t)`` with ``v`` a random trigonometric curve in
    ``log t`` of unit maximum length and ``rho`` uniform in ``[0, 1]``.
    """
    from asymptote.contraction import IntegralOperator, weighted_norm
    from asymptote.family import GridFunction, default_det_floor

    sol = est.solve(alpha)
    setup = sol.setup
    floor = lambda t: default_det_floor(t, est.profile_.p)  # noqa: E731
    op = IntegralOperator(est.system, est.family, sol.alpha, sol.Z, floor)
    g, lam, n = sol.Z.grid, setup.lam, est.family.n
    u = np.log(g / g[0]) / np.log(g[-1] / g[0])
    rng = np.random.default_rng(seed)

    def sample():
        v = sum(np.outer(np.cos(np.pi * m * u + rng.uniform(0, 2 * np.pi)), rng.normal(size=n))
                for m in range(4))
        v /= np.max(np.linalg.norm(v, axis=1))
        return rng.uniform(0, 1) * setup.K * g[:, None] ** (-lam) * v

    out = []
    for _ in range(pairs):
        c1, c2 = sample(), sample()
        assert weighted_norm(GridFunction(g, c1), lam) <= setup.K * (1 + 1e-12)
        num = weighted_norm(GridFunction(g, op(c1) - op(c2)), lam)
        out.append(num / weighted_norm(GridFunction(g, c1 - c2), lam))
    return setup.L, out
