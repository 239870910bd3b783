import math

import numpy as np
import pytest

from asymptote.contraction import (
    ContractionSetup,
    assemble,
    lipschitz_factors,
    picard_solve,
    remainder_decay,
    select_T,
    weighted_norm,
)
from asymptote.errors import ThresholdNotFound
from asymptote.exponents import ExponentProfile
from asymptote.family import (AsymptoticFamily, GridFunction, SystemDef, f_values, forcing,
                              geometric_grid, jacobian_values)

from conftest import contraction_ratios

RICCATI_EXPONENTS = dict(k=0.0, p=-2.0, q=-2.0, r=2.0, s=0.0, mu=4.0, a=1.0)


def riccati_profile():
    return ExponentProfile(**RICCATI_EXPONENTS)


# -- weighted norm ----------------------------------------------------------------

def test_weighted_norm_examples():
    g = geometric_grid(10.0, 1e4, 0.01)
    assert weighted_norm(GridFunction(g, 1.0 / g), 1.0) == pytest.approx(1.0, rel=1e-14)
    assert weighted_norm(GridFunction(g, np.zeros_like(g)), 1.0) == 0.0
    assert weighted_norm(GridFunction(g, 0.25 / g), 1.0) == pytest.approx(0.25, rel=1e-14)


def test_riccati_forcing_weighted_norm(riccati):
    sys, fam = riccati
    Z = forcing(sys, fam, (0.5,), 4.0, 4e4)
    assert weighted_norm(Z, 1.0) == pytest.approx(0.25, abs=1e-8)


# -- threshold selection ----------------------------------------------------------

def test_select_T_riccati_arithmetic():
    setup = select_T(riccati_profile(), M_K=1.0, M1=2.0, K=2.0, t0=1.0)
    assert setup.T == 4.0
    assert setup.L_K == pytest.approx(4 / 16)
    assert setup.L0 == pytest.approx(1 / 4)
    assert setup.T_max == 4e4
    # T = 2 is not enough
    L_K, L0 = lipschitz_factors(riccati_profile(), 1.0, 2.0, 2.0, 2.0)
    assert L_K >= 0.5 or L0 >= 0.5


def test_select_T_with_vanishing_constants():
    setup = select_T(riccati_profile(), M_K=0.0, M1=0.0, K=0.0, t0=3.0)
    assert setup.T == 3.0 and setup.L == 0.0


def test_select_T_accepts_radius_function():
    calls = []

    def K(T):
        calls.append(T)
        return 2.0 / T

    setup = select_T(riccati_profile(), M_K=1.0, M1=0.0, K=K, t0=1.0)
    # L_K = 2 K(T) / T^2 = 4 / T^3 first drops below 1/2 at T = 4
    assert setup.T == 4.0 and setup.K == 0.5
    assert calls[-1] == 4.0


def test_select_T_refuses_failing_conditions():
    bad = ExponentProfile(k=0.0, p=0.0, q=0.0, r=2.0, s=0.0, mu=3.0, a=1.0)
    with pytest.raises(ThresholdNotFound):
        select_T(bad, M_K=1.0, M1=1.0, K=1.0, t0=1.0)


def test_select_T_gives_up_after_twenty_doublings():
    with pytest.raises(ThresholdNotFound):
        select_T(riccati_profile(), M_K=1.0, M1=1e9, K=1.0, t0=1.0)


def test_setup_invariants():
    with pytest.raises(ValueError):
        ContractionSetup(1.0, 10.0, 1.0, 1.0, 1.0, 1.0, L_K=0.6, L0=0.1)
    with pytest.raises(ValueError):
        ContractionSetup(1.0, 10.0, 1.0, -1.0, 1.0, 1.0, L_K=0.1, L0=0.1)


# -- successive approximations -------------------------------------------------------

def test_riccati_fixed_point(riccati_est):
    sol = riccati_est.solve((0.5,))
    assert sol.converged and sol.iterations <= 20
    assert sol.C(10.0)[0] == pytest.approx(0.25 / 9.5, abs=1e-6)
    x = assemble(riccati_est.family, (0.5,), sol)
    assert x(10.0)[0] == pytest.approx(1 / 9.5, abs=1e-6)
    t = sol.C.grid
    assert np.max(np.abs(sol.C.values[:, 0] - 0.25 / (t - 0.5))) <= 1e-6
    # R = J C at the nodes
    J = jacobian_values(riccati_est.family, t, (0.5,))
    assert np.array_equal(sol.R.values, np.einsum("...ij,...j->...i", J, sol.C.values))
    assert weighted_norm(sol.C, sol.setup.lam) <= sol.setup.K
    assert sol.setup.K >= 2 * weighted_norm(sol.Z, sol.setup.lam) * (1 - 1e-9)


def test_exact_family_gives_zero_remainder():
    sys = SystemDef.from_strings(["0"], 0, 1.0)
    fam = AsymptoticFamily.from_strings(["a1"], [[-2, 2]], [[-1, 1]])
    from asymptote.estimator import AsymptoticSolver

    est = AsymptoticSolver(sys, fam).fit()
    sol = est.solve((0.5,))
    assert sol.iterations == 1 and not np.any(sol.C.values)
    x = assemble(fam, (0.5,), sol)
    assert np.all(x.values == 0.5)
    assert sol.setup.T == sys.t0
    assert remainder_decay(sol.R) == (-math.inf, 0.0)


def test_oscillator_convergence(oscillator_est):
    for alpha in ((1.0, 1.0), (0.0, -1.0)):
        sol = oscillator_est.solve(alpha)
        assert sol.converged and sol.iterations <= 15
        assert max(sol.ratios) <= 0.5
        assert math.isfinite(weighted_norm(sol.C, sol.setup.lam))


@pytest.mark.parametrize("name, alpha", [("riccati", (1.0,)), ("riccati", (-1.0,)),
                                         ("oscillator", (1.0, 1.0))])
def test_geometric_decrease(request, name, alpha):
    sol = request.getfixturevalue(name + "_est").solve(alpha)
    d = sol.increments
    assert all(b <= a for a, b in zip(d[1:], d[2:]))
    assert all(r <= 0.75 for r in sol.ratios)
    assert all(r <= sol.setup.L for r in sol.ratios)


@pytest.mark.parametrize("name, alpha", [("riccati", (1.0,)), ("oscillator", (1.0, 1.0))])
def test_contraction_certificate(request, name, alpha):
    L, ratios = contraction_ratios(request.getfixturevalue(name + "_est"), alpha)
    assert L < 1
    assert max(ratios) <= L


def test_assembled_solution_solves_the_equation(riccati_est):
    sys, fam = riccati_est.system, riccati_est.family
    sol = riccati_est.solve((1.0,))
    x = assemble(fam, (1.0,), sol)
    g = x.grid
    tm = np.sqrt(g[:-1] * g[1:])
    tm = tm[tm >= 100]
    res = np.abs(x.derivative(tm) - f_values(sys, x(tm), tm))[:, 0]
    assert np.max(res) <= 1e-8


@pytest.mark.parametrize("name, alpha", [("riccati", (1.0,)), ("riccati", (-0.5,)),
                                         ("oscillator", (1.0, 1.0))])
def test_decay_order_realised(request, name, alpha):
    est = request.getfixturevalue(name + "_est")
    slope, c = remainder_decay(est.solve(alpha).R, est.fit_mode, est.phase_scale)
    assert slope == pytest.approx(-est.profile_.nu, abs=0.15)
    assert 0 < c < math.inf
