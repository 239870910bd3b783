"""Successive approximations for the remainder in a weighted sup-norm space.

With ``R = J C`` the remainder equation becomes the fixed-point problem

    C(t) = Z(t) - int_t^inf [ M(s) C(s) + Gc(C(s), s) ] ds,

    M = -J^{-1} dY/dalpha,   Gc(C, t) = t**k J^{-1} G(J C, t),

which is a contraction on ``{ sup_{t>=T} t**lam |C(t)| <= K }`` once ``T`` is
large enough.  Integrals use the grid of the forcing term ``Z``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, asdict

import numpy as np
from scipy.interpolate import CubicSpline

from .errors import BallEscape, NoConvergence, ThresholdNotFound
from .exponents import estimate_exponent
from .family import (
    GridFunction,
    QuadratureSpec,
    X_values,
    default_det_floor,
    f_values,
    forcing,
    geometric_grid,
    inverse_values,
    jacobian_values,
    linearization_values,
    midpoints,
    nonlinear_values,
    reduced_matrix_values,
    tail_integral,
    taylor_remainder,
    _tk,
)

SAFETY = 1.5


def weighted_norm(g: GridFunction, lam: float) -> float:
    """Grid approximation of ``sup_t t**lam |g(t)|`` (max over the nodes)."""
    norms = g.norms()
    if not np.any(norms):
        return 0.0
    return float(np.max(g.grid ** lam * norms))


@dataclass
class ContractionSetup:
    T: float
    T_max: float
    lam: float
    K: float
    M_K: float
    M1: float
    L_K: float
    L0: float
    picard_tol: float = 1e-10
    max_iters: int = 50
    exponents: dict = field(default_factory=dict)

    def __post_init__(self):
        if not (self.L_K < 0.5 and self.L0 < 0.5):
            raise ValueError(f"not a contraction: L_K={self.L_K:.3g}, L0={self.L0:.3g}")
        if self.K < 0:
            raise ValueError("K must be nonnegative")

    @property
    def L(self):
        return self.L0 + self.L_K

    def to_dict(self):
        return asdict(self)


def lipschitz_factors(prof, M_K, M1, K, T):
    """``(L_K, L0)`` at threshold ``T``.

    L_K = M_K 2K T^(k + 2(r+q+1) - mu),  L0 = M1 T^(r+s+1-mu) / |r+s-mu-lam+1|.
    """
    if M_K * K == 0 or math.isinf(prof.mu):
        L_K = 0.0
    else:
        L_K = M_K * 2.0 * K * T ** (prof.k + 2.0 * (prof.r + prof.q + 1.0) - prof.mu)
    if M1 == 0 or math.isinf(prof.mu):
        L0 = 0.0
    else:
        den = abs(prof.r + prof.s - prof.mu - prof.lam + 1.0)
        L0 = M1 * T ** (prof.r + prof.s + 1.0 - prof.mu) / den
    return L_K, L0


def select_T(prof, M_K, M1, K, t0, tmax_factor=1e4, picard_tol=1e-10, max_iters=50):
    """Smallest ``T = t0 * 2**j`` (j <= 20) making both Lipschitz factors < 1/2.

    ``K`` is a ball radius or a callable ``K(T)`` giving the radius needed
    on ``[T, inf)``.
    """
    K_of = K if callable(K) else (lambda T: K)
    K0 = K_of(t0)
    if not math.isinf(prof.mu):
        eK = prof.k + 2.0 * (prof.r + prof.q + 1.0) - prof.mu
        e0 = prof.r + prof.s + 1.0 - prof.mu
        if (M_K * K0 > 0 and eK >= 0) or (M1 > 0 and e0 >= 0):
            raise ThresholdNotFound(
                f"T exponents must be negative (nonlinear {eK:.3g}, linear {e0:.3g}); "
                "the sufficient conditions fail")
    for j in range(21):
        T = t0 * 2.0 ** j
        K = K_of(T)
        L_K, L0 = lipschitz_factors(prof, M_K, M1, K, T)
        if L_K < 0.5 and L0 < 0.5:
            expo = dict(k=prof.k, p=prof.p, q=prof.q, r=prof.r, s=prof.s, mu=prof.mu)
            return ContractionSetup(T, T * tmax_factor, prof.lam, K, M_K, M1, L_K, L0,
                                    picard_tol, max_iters, expo)
    raise ThresholdNotFound(
        f"no T <= {t0 * 2.0 ** 20:g} gives L_K, L0 < 1/2 (at the last candidate "
        f"L_K={L_K:.3g}, L0={L0:.3g})")


# ---------------------------------------------------------------------------
# constants


def _norm_constant(mats, t, expo):
    """``sup_t |A(t)|_2 t**-expo`` over samples."""
    return float(np.max(np.linalg.norm(mats, ord=2, axis=(1, 2)) * t ** (-expo)))


def estimate_M1(sys, fam, alpha, prof, t):
    """1.5 x the largest ``|M(t)| t**(mu - r - s)`` on the sample times ``t``."""
    if math.isinf(prof.mu):
        return 0.0
    M = reduced_matrix_values(sys, fam, t, alpha, default_det_floor(t, prof.p))
    return SAFETY * _norm_constant(M, t, prof.r + prof.s - prof.mu)


def estimate_M_K(sys, fam, alpha, radius, t_lo, t_hi, samples=500, seed=0):
    """1.5 x the largest ``|G(R, t)| / |R|**2`` over random ``t`` and ``0 < |R| <= radius``."""
    rng = np.random.default_rng(seed)
    n = sys.n
    t = np.exp(rng.uniform(np.log(t_lo), np.log(t_hi), samples))
    d = rng.normal(size=(samples, n))
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    rad = max(radius, 1e-8) * rng.uniform(0.01, 1.0, samples)
    R = d * rad[:, None]
    G = nonlinear_values(sys, fam, t, alpha, R)
    return SAFETY * float(np.max(np.linalg.norm(G, axis=1) / rad ** 2))


# ---------------------------------------------------------------------------
# the integral operator


class IntegralOperator:
    """``C -> Z - int_t^{T_max} [M C + Gc(C)]`` with everything pre-evaluated on the grid."""

    def __init__(self, sys, fam, alpha, Z: GridFunction, det_floor):
        self.sys, self.fam = sys, fam
        self.alpha = tuple(float(a) for a in alpha)
        self.Z = Z
        g = Z.grid
        self.grid = g
        self.u = np.log(g)
        self._pts = [g, midpoints(g)]
        self._pre = [self._precompute(t, det_floor) for t in self._pts]

    def _precompute(self, t, det_floor):
        sys, fam, a = self.sys, self.fam, self.alpha
        J = jacobian_values(fam, t, a)
        Jinv = inverse_values(J, det_floor(t))
        X = X_values(fam, t, a)
        return dict(
            t=t, J=J, Jinv=Jinv, X=X,
            M=reduced_matrix_values(sys, fam, t, a, det_floor(t)),
            tk=_tk(sys.k, t),
        )

    def _integrand(self, C, pre):
        R = np.einsum("...ij,...j->...i", pre["J"], C)
        G = taylor_remainder(self.sys, pre["t"], pre["X"], R)
        Gc = pre["tk"][:, None] * np.einsum("...ij,...j->...i", pre["Jinv"], G)
        return np.einsum("...ij,...j->...i", pre["M"], C) + Gc

    def integral(self, C):
        """``int_t^{T_max} [M C + Gc(C)]`` at the nodes, for node values ``C``."""
        Cm = CubicSpline(self.u, C, axis=0)(0.5 * (self.u[:-1] + self.u[1:]))
        hn = self._integrand(C, self._pre[0])
        hm = self._integrand(Cm, self._pre[1])
        return tail_integral(self.grid, hn, hm)

    def __call__(self, C):
        return self.Z.values - self.integral(C)

    def remainder(self, C):
        return np.einsum("...ij,...j->...i", self._pre[0]["J"], C)


def operator_tail_bound(setup, c_norm):
    """Bound on ``|int_{T_max}^inf [M C + Gc(C)]|`` for ``|C|_lam = c_norm``."""
    e = setup.exponents
    if not e or c_norm == 0:
        return 0.0
    lam, Tm = setup.lam, setup.T_max
    lin_e = e["r"] + e["s"] - e["mu"] - lam + 1.0
    non_e = e["k"] + e["r"] + 2 * e["q"] - 2 * lam + 1.0
    out = setup.M1 * c_norm * Tm ** lin_e / abs(lin_e) if lin_e < 0 else math.inf
    out += setup.M_K * c_norm ** 2 * Tm ** non_e / abs(non_e) if non_e < 0 else math.inf
    return out


def _wnorm(grid, v, lam):
    norms = np.linalg.norm(v, axis=1)
    if not np.any(norms):
        return 0.0
    return float(np.max(grid ** lam * norms))


@dataclass
class RemainderSolution:
    C: GridFunction
    R: GridFunction
    iterations: int
    final_delta: float
    tail_bound: float
    increments: list = field(default_factory=list)
    converged: bool = True
    setup: ContractionSetup = None
    alpha: tuple = ()
    Z: GridFunction = None

    @property
    def ratios(self):
        d = self.increments
        return [d[i + 1] / d[i] for i in range(len(d) - 1) if d[i] > 0]

    def stats(self):
        return dict(iterations=self.iterations, final_delta=self.final_delta,
                    tail_bound=self.tail_bound, converged=self.converged,
                    increments=list(self.increments),
                    max_ratio=max(self.ratios[1:] or self.ratios or [0.0]))


def picard_solve(setup, sys, fam, alpha, Z=None, quad=QuadratureSpec(), p_hat=0.0):
    """Iterate ``C <- Z - int (M C + Gc(C))`` from ``C = Z`` to a fixed point.

    Stops when the weighted increment is below ``picard_tol * max(1, |C|)``.
    Raises ``BallEscape`` if an iterate leaves the ``K`` ball and
    ``NoConvergence`` if ``max_iters`` is reached without decreasing
    increments.
    """
    alpha = tuple(float(a) for a in alpha)
    floor = lambda t: default_det_floor(t, p_hat)  # noqa: E731
    if Z is None:
        Z = forcing(sys, fam, alpha, setup.T, setup.T_max, quad, floor)
    lam = setup.lam
    g = Z.grid
    if math.isinf(lam) or not np.any(Z.values):
        C = np.zeros_like(Z.values)
        zero = GridFunction(g, C)
        return RemainderSolution(zero, GridFunction(g, C.copy()), 1, 0.0,
                                 Z.meta.get("tail_bound", 0.0), [0.0], True, setup, alpha, Z)
    op = IntegralOperator(sys, fam, alpha, Z, floor)
    C = Z.values.copy()
    incs = []
    slack = 1.0 + 1e-9
    converged = False
    for it in range(1, setup.max_iters + 1):
        C_new = op(C)
        if _wnorm(g, C_new, lam) > setup.K * slack:
            raise BallEscape(
                f"iterate {it} has weighted norm {_wnorm(g, C_new, lam):.4g} > K={setup.K:.4g}")
        inc = _wnorm(g, C_new - C, lam)
        incs.append(inc)
        size = _wnorm(g, C, lam)
        C = C_new
        if inc <= setup.picard_tol * max(1.0, size):
            converged = True
            break
    if not converged and len(incs) > 1 and incs[-1] >= incs[-2]:
        raise NoConvergence(f"increments stalled at {incs[-1]:.3e} after {len(incs)} iterations")
    tail = Z.meta.get("tail_bound", 0.0) + operator_tail_bound(setup, _wnorm(g, C, lam))
    return RemainderSolution(GridFunction(g, C), GridFunction(g, op.remainder(C)), len(incs),
                             incs[-1], tail, incs, converged, setup, alpha, Z)


def assemble(fam, alpha, sol: RemainderSolution) -> GridFunction:
    """``x = X + J C`` on the grid; ``meta`` carries the fitted decay of ``|x - X|``."""
    g = sol.R.grid
    x = X_values(fam, g, alpha) + sol.R.values
    slope, c = remainder_decay(sol.R)
    return GridFunction(g, x, {"decay_slope": slope, "decay_const": c})


def remainder_decay(R: GridFunction, mode="auto", phase_scale=None, decades=2.0):
    """Fitted ``(slope, c)`` with ``|R(t)| <= c t**slope`` on the top decades of the grid."""
    lo = max(R.grid[0], R.grid[-1] / 10.0 ** decades)
    hi = R.grid[-1]
    if not np.any(R.values):
        return -math.inf, 0.0
    sampler = lambda t: np.linalg.norm(R(t), axis=-1)  # noqa: E731
    if mode != "raw":
        hi_fit = hi / 2.0 if hi / 2.0 >= 10 * lo else hi
    else:
        hi_fit = hi
    slope, _ = estimate_exponent(sampler, (lo, hi_fit), 50, mode, phase_scale, horizon=hi)
    if math.isinf(slope):
        return slope, 0.0
    ts = np.geomspace(lo, hi_fit, 50)
    return slope, float(np.max(sampler(ts) * ts ** (-slope)))


def build_setup(sys, fam, alpha, prof, quad=QuadratureSpec(), tmax_factor=1e4, seed=0,
                picard_tol=1e-10, max_iters=50, samples=500):
    """Estimate ``K``, ``M_K``, ``M1`` for one parameter value and select ``T``.

    Returns ``(setup, Z)`` with ``Z`` the forcing on ``[T, T_max]``.  For a
    candidate threshold ``T`` the radius is ``K(T) = 2 sup_{t>=T} t**lam |Z(t)|``,
    read off a forcing computed once on ``[t0, tmax_factor * t0]``; ``M_K`` is
    measured with the (largest) radius at ``t0``.  ``K`` is re-checked on the
    final grid and enlarged if needed.
    """
    alpha = tuple(float(a) for a in alpha)
    floor = lambda t: default_det_floor(t, prof.p)  # noqa: E731
    t0 = sys.t0
    Z0 = forcing(sys, fam, alpha, t0, t0 * tmax_factor, quad, floor)
    exact = not np.any(Z0.values) or math.isinf(prof.mu)
    ts = Z0.grid
    # running sup from the right of t**lam |Z|: the radius needed on [T, inf)
    wz = np.zeros(len(ts)) if exact else ts ** prof.lam * Z0.norms()
    sup_right = np.maximum.accumulate(wz[::-1])[::-1]
    i_last = max(int(np.searchsorted(ts, ts[-1] / 10.0)), 0)

    def K_of(T):
        if exact:
            return 0.0
        i = min(int(np.searchsorted(ts, T * (1 - 1e-12))), i_last)
        return 2.0 * float(sup_right[i])

    K = K_of(t0)
    if exact:
        M1 = M_K = 0.0
    else:
        M1 = estimate_M1(sys, fam, alpha, prof, ts)
        J = jacobian_values(fam, ts, alpha)
        c_q = _norm_constant(J, ts, prof.q)
        c_r = _norm_constant(inverse_values(J, floor(ts)), ts, prof.r)
        radius = c_q * K * t0 ** (prof.q - prof.lam)
        M_K = estimate_M_K(sys, fam, alpha, radius, t0, t0 * tmax_factor, samples, seed)
        M_K *= c_r * c_q ** 2
    boost = 1.0
    for _ in range(6):
        setup = select_T(prof, M_K, M1, lambda T: boost * K_of(T), t0, tmax_factor,
                         picard_tol, max_iters)
        Z = forcing(sys, fam, alpha, setup.T, setup.T_max, quad, floor)
        zn = weighted_norm(Z, prof.lam) if not exact else 0.0
        if 2.0 * zn <= setup.K * (1 + 1e-9):
            return setup, Z
        boost *= 2.0 * zn / setup.K
    raise ThresholdNotFound("could not fit the forcing inside the ball")
