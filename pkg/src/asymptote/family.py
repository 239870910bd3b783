"""The ODE system, the candidate asymptotic family and the derived quantities.

Everything here is evaluated from exact symbolic derivatives of the
user-supplied expressions.  Array conventions: node vectors are stored as
``(N, n)`` and matrices as ``(N, n, n)`` where ``N`` is the number of time
points.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Optional, Sequence

import numpy as np
from scipy.interpolate import CubicSpline

from . import expr as E
from ._fit import decade_running_max, loglog_slope, TINY
from .errors import NonConvergentTail, SingularJacobian

Box = tuple  # tuple of (lo, hi) pairs


@dataclass(frozen=True)
class SystemDef:
    """``dx/dt = t**k * f(x, t)`` considered for ``t >= t0``."""

    n: int
    k: float
    f: tuple
    t0: float
    domain_hint: Optional[Box] = None

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("n must be >= 1")
        if self.k < 0:
            raise ValueError("k must be >= 0")
        if not self.t0 > 0:
            raise ValueError("t0 must be > 0")
        if len(self.f) != self.n:
            raise ValueError(f"f has {len(self.f)} components, expected {self.n}")
        for i, e in enumerate(self.f):
            bad = {s for s in e.symbols() if s[0] == "a"}
            if bad:
                raise ValueError(f"f{i + 1} must not reference parameters, found {sorted(bad)}")

    @classmethod
    def from_strings(cls, f, k, t0, domain_hint=None):
        n = len(f)
        return cls(n, float(k), tuple(E.parse(s, n) for s in f), float(t0), domain_hint)

    def rhs(self, t, x):
        """``t**k f(x, t)`` for a single state."""
        return self.rhs_function()(t, x)

    def rhs_function(self):
        """Fast scalar-path callable ``(t, x) -> t**k f(x, t)`` as an array."""
        fn = _scalar_rhs(self)
        k = self.k
        if k:
            return lambda t, x: (t ** k) * np.array(fn(t, x))
        return lambda t, x: np.array(fn(t, x))


@dataclass(frozen=True)
class AsymptoticFamily:
    """Candidate ``X(t; alpha)`` with its parameter domain and working compact."""

    X: tuple
    param_domain: Box
    compact: Box

    def __post_init__(self):
        n = len(self.X)
        if len(self.param_domain) != n or len(self.compact) != n:
            raise ValueError("parameter boxes must have one interval per component")
        for i, e in enumerate(self.X):
            bad = {s for s in e.symbols() if s[0] == "x"}
            if bad:
                raise ValueError(f"X{i + 1} must not reference state variables")
        for (lo, hi), (clo, chi) in zip(self.param_domain, self.compact):
            if not (lo < clo <= chi < hi):
                raise ValueError("compact must lie strictly inside the parameter domain")

    @property
    def n(self):
        return len(self.X)

    @classmethod
    def from_strings(cls, X, param_domain, compact):
        n = len(X)
        box = lambda b: tuple((float(lo), float(hi)) for lo, hi in b)  # noqa: E731
        return cls(tuple(E.parse(s, n) for s in X), box(param_domain), box(compact))

    def in_domain(self, alpha):
        return all(lo < a < hi for a, (lo, hi) in zip(alpha, self.param_domain))

    def in_compact(self, alpha):
        return all(lo <= a <= hi for a, (lo, hi) in zip(alpha, self.compact))

    def grid(self, per_axis=3):
        """Tensor grid of the compact: ``per_axis`` equispaced values per axis."""
        axes = [np.linspace(lo, hi, per_axis) if hi > lo else np.array([lo])
                for lo, hi in self.compact]
        return np.array(list(itertools.product(*axes)), dtype=float)

    def max_norm(self, t0, t_max, alphas, points=400):
        """Largest ``|X(t; alpha)|`` seen on a geometric grid: a numeric check
        that the family stays in a bounded set."""
        t = np.geomspace(t0, t_max, points)
        vals = [np.linalg.norm(X_values(self, t, a), axis=1).max() for a in alphas]
        return float(max(vals))


# ---------------------------------------------------------------------------
# symbolic derivation (cached per system/family pair)


@dataclass
class _Derived:
    n: int
    k: float
    X: list
    dXdt: list
    J: list  # J[i][j] = dX_i/da_j
    dJdt: list
    Y: list
    dYda: list
    dfdx: list  # symbolic in x, t


@lru_cache(maxsize=64)
def _derive(sys: SystemDef, fam: AsymptoticFamily) -> _Derived:
    n = sys.n
    if fam.n != n:
        raise ValueError("system and family dimensions differ")
    tk = E.power(E.T, sys.k) if sys.k else E.ONE
    sub = {E.x_(j + 1): fam.X[j] for j in range(n)}
    dXdt = [E.differentiate(x, E.T) for x in fam.X]
    J = _jacobian_exprs(fam)
    dJdt = [[E.differentiate(e, E.T) for e in row] for row in J]
    Y = [E.sub(dXdt[i], E.mul(tk, E.substitute(sys.f[i], sub))) for i in range(n)]
    dYda = [[E.differentiate(y, E.a_(j + 1)) for j in range(n)] for y in Y]
    dfdx = [[E.differentiate(g, E.x_(j + 1)) for j in range(n)] for g in sys.f]
    return _Derived(n, sys.k, list(fam.X), dXdt, J, dJdt, Y, dYda, dfdx)


@lru_cache(maxsize=64)
def _scalar_rhs(sys):
    return E.compile_tuple(sys.f)


def _vec(exprs, t, x=(), alpha=()):
    t = np.asarray(t, dtype=float)
    return np.stack([E.compile_vector(e)(t, x, alpha) for e in exprs], axis=-1)


def _mat(rows, t, x=(), alpha=()):
    t = np.asarray(t, dtype=float)
    return np.stack([np.stack([E.compile_vector(e)(t, x, alpha) for e in row], axis=-1)
                     for row in rows], axis=-2)


def _tk(k, t):
    return np.asarray(t, dtype=float) ** k if k else np.ones_like(np.asarray(t, dtype=float))


# vectorised evaluators: t of shape (N,) -> (N, n) or (N, n, n)

def X_values(fam, t, alpha):
    return _vec(fam.X, t, (), tuple(alpha))


def f_values(sys, x, t):
    """``f(x, t)`` for node states ``x`` of shape (N, n)."""
    x = np.asarray(x, dtype=float)
    return _vec(sys.f, t, tuple(x.T), ())


def residual_values(sys, fam, t, alpha):
    return _vec(_derive(sys, fam).Y, t, (), tuple(alpha))


def dYda_values(sys, fam, t, alpha):
    return _mat(_derive(sys, fam).dYda, t, (), tuple(alpha))


@lru_cache(maxsize=64)
def _jacobian_exprs(fam):
    return [[E.differentiate(x, E.a_(j + 1)) for j in range(fam.n)] for x in fam.X]


def jacobian_values(fam, t, alpha):
    return _mat(_jacobian_exprs(fam), t, (), tuple(alpha))


def dJdt_values(sys, fam, t, alpha):
    return _mat(_derive(sys, fam).dJdt, t, (), tuple(alpha))


def linearization_values(sys, fam, t, alpha):
    d = _derive(sys, fam)
    Xv = X_values(fam, t, alpha)
    return _mat(d.dfdx, t, tuple(Xv.T), ())


@lru_cache(maxsize=64)
def _hessian_exprs(sys: SystemDef):
    """``H[i][j][l] = d^2 f_i / dx_j dx_l``."""
    n = sys.n
    return tuple(tuple(tuple(E.differentiate(E.differentiate(g, E.x_(j + 1)), E.x_(l + 1))
                             for l in range(n)) for j in range(n)) for g in sys.f)


# Gauss-Legendre nodes on [0, 1] with the Taylor weight (1 - theta) folded in
_GL_X, _GL_W = np.polynomial.legendre.leggauss(4)
_THETA = 0.5 * (_GL_X + 1.0)
_THETA_W = 0.5 * _GL_W * (1.0 - _THETA)


def nonlinear_values(sys, fam, t, alpha, R):
    """``G(R, t) = f(X+R, t) - f(X, t) - df/dx(X, t) R`` row by row.

    Evaluated through the integral form of Taylor's remainder,
    ``int_0^1 (1-theta) R^T f''(X + theta R) R dtheta``, so that ``G`` keeps
    full relative accuracy when ``|R|`` is tiny compared with ``|f|`` (the
    direct difference loses it to cancellation).  Exact for polynomial
    ``f`` of degree <= 8; for other smooth ``f`` the error is
    ``O(|R|**8)``.
    """
    t = np.asarray(t, dtype=float)
    return taylor_remainder(sys, t, X_values(fam, t, alpha), np.asarray(R, dtype=float))


def taylor_remainder(sys, t, Xv, R):
    """``f(Xv+R) - f(Xv) - f'(Xv) R`` for node states ``Xv`` and offsets ``R`` (N, n)."""
    H = _hessian_exprs(sys)
    G = np.zeros_like(R)
    for th, w in zip(_THETA, _THETA_W):
        x = tuple((Xv + th * R).T)
        for i in range(sys.n):
            Hi = _mat(H[i], t, x, ())
            G[:, i] += w * np.einsum("...j,...jl,...l->...", R, Hi, R)
    return G


def nonlinear_values_direct(sys, fam, t, alpha, R):
    """``f(X+R) - f(X) - M0 R`` by plain differencing (reference for tests)."""
    t = np.asarray(t, dtype=float)
    R = np.asarray(R, dtype=float)
    Xv = X_values(fam, t, alpha)
    M0 = linearization_values(sys, fam, t, alpha)
    return (f_values(sys, Xv + R, t) - f_values(sys, Xv, t)
            - np.einsum("...ij,...j->...i", M0, R))


def inverse_values(J, det_floor):
    """Batched inverse (LU with partial pivoting via LAPACK) with a singularity guard."""
    J = np.asarray(J, dtype=float)
    det = np.linalg.det(J)
    floor = np.broadcast_to(np.asarray(det_floor, dtype=float), det.shape)
    bad = (np.abs(det) < floor) | (det == 0)
    if np.any(bad):
        i = int(np.flatnonzero(np.atleast_1d(bad))[0])
        raise SingularJacobian(
            f"|det J| = {float(np.atleast_1d(np.abs(det))[i]):.3e} below floor "
            f"{float(np.atleast_1d(floor)[i]):.3e} (sample {i})"
        )
    return np.linalg.inv(J)


def reduced_matrix_values(sys, fam, t, alpha, det_floor=0.0):
    """``M(t) = -J^{-1} dY/dalpha``."""
    Jinv = inverse_values(jacobian_values(fam, t, alpha), det_floor)
    return -Jinv @ dYda_values(sys, fam, t, alpha)


# ---------------------------------------------------------------------------
# single-point operations


def residual(sys, fam, t, alpha):
    """``Y(t; alpha) = dX/dt - t**k f(X, t)``."""
    return residual_values(sys, fam, [t], alpha)[0]


def jacobian(fam, t, alpha):
    """``J(t; alpha) = dX/dalpha``; entry ``(i, j)`` is ``dX_i/da_j``."""
    return jacobian_values(fam, [t], alpha)[0]


def jacobian_inverse(J, det_floor=1e-10):
    J = np.asarray(J, dtype=float)
    if J.ndim != 2 or J.shape[0] != J.shape[1]:
        raise ValueError("J must be square")
    return inverse_values(J[None], det_floor)[0]


def linearization(sys, fam, t, alpha):
    """``M0 = df/dx`` evaluated on the family."""
    return linearization_values(sys, fam, [t], alpha)[0]


def nonlinear_part(sys, fam, t, alpha, R):
    return nonlinear_values(sys, fam, [t], alpha, np.asarray(R, dtype=float)[None])[0]


def reduced_matrix(sys, fam, t, alpha, det_floor=0.0):
    return reduced_matrix_values(sys, fam, [t], alpha, det_floor)[0]


def jacobian_identity_defect(sys, fam, t, alpha):
    """``dJ/dt - t**k M0 J - dY/dalpha`` on an array of times, shape (N, n, n)."""
    t = np.asarray(t, dtype=float)
    J = jacobian_values(fam, t, alpha)
    lhs = dJdt_values(sys, fam, t, alpha) - _tk(sys.k, t)[:, None, None] * (
        linearization_values(sys, fam, t, alpha) @ J)
    return lhs - dYda_values(sys, fam, t, alpha)


# ---------------------------------------------------------------------------
# grid functions and quadrature


@dataclass
class GridFunction:
    """Vector function sampled on a geometric grid, cubic in ``log t`` between nodes."""

    grid: np.ndarray
    values: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.grid = np.asarray(self.grid, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim == 1:
            self.values = self.values[:, None]
        if len(self.grid) != len(self.values):
            raise ValueError("grid and values differ in length")
        if len(self.grid) > 1:
            if np.any(np.diff(self.grid) <= 0):
                raise ValueError("grid must be strictly increasing")
            ratios = self.grid[1:] / self.grid[:-1]
            if np.max(np.abs(ratios / ratios[0] - 1.0)) > 1e-12:
                raise ValueError("grid must be geometric")
        self._spline = None

    @property
    def n(self):
        return self.values.shape[1]

    def norms(self):
        return np.linalg.norm(self.values, axis=1)

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        scalar = t.ndim == 0
        t = np.atleast_1d(t)
        if np.any(t < self.grid[0] * (1 - 1e-14)) or np.any(t > self.grid[-1] * (1 + 1e-14)):
            raise ValueError("evaluation outside the grid")
        if self._spline is None:
            self._spline = CubicSpline(np.log(self.grid), self.values, axis=0)
        out = self._spline(np.log(t))
        idx = np.searchsorted(self.grid, t)
        idx = np.clip(idx, 0, len(self.grid) - 1)
        hit = self.grid[idx] == t
        out[hit] = self.values[idx[hit]]
        return out[0] if scalar else out

    def derivative(self, t):
        """``d/dt`` of the interpolant."""
        if self._spline is None:
            self._spline = CubicSpline(np.log(self.grid), self.values, axis=0)
        t = np.asarray(t, dtype=float)
        return self._spline(np.log(t), 1) / t[..., None]


def geometric_grid(T, T_max, step_u, intervals=None):
    """Nodes ``T * exp(i*du)`` with ``du <= step_u`` ending exactly at ``T_max``.

    ``intervals`` fixes the number of intervals instead (``step_u`` ignored).
    """
    span = np.log(T_max / T)
    m = intervals if intervals is not None else max(int(np.ceil(span / step_u - 1e-9)), 2)
    du = span / m
    g = T * np.exp(du * np.arange(m + 1))
    g[-1] = T_max
    g[0] = T
    return g


def midpoints(grid):
    return np.sqrt(grid[:-1] * grid[1:])


def tail_integral(grid, h_nodes, h_mid):
    """``I(t_i) = int_{t_i}^{t_end} h dt`` by Simpson's rule in ``u = log t``.

    ``h_nodes`` has shape (N, ...) and ``h_mid`` (N-1, ...), sampled at the
    nodes and at the geometric midpoints.
    """
    g = np.asarray(grid, dtype=float)
    tm = midpoints(g)
    du = np.log(g[1:] / g[:-1])
    shape = (-1,) + (1,) * (np.ndim(h_nodes) - 1)
    gn = h_nodes * g.reshape(shape)
    gm = h_mid * tm.reshape(shape)
    cell = du.reshape(shape) / 6.0 * (gn[:-1] + 4.0 * gm + gn[1:])
    out = np.zeros_like(gn)
    out[:-1] = np.cumsum(cell[::-1], axis=0)[::-1]
    return out


@dataclass(frozen=True)
class QuadratureSpec:
    """Node-density and refinement policy for integrals in ``log t``."""

    rel_tol: float = 1e-8
    points_per_decade: int = 200
    phase_scale: Optional[float] = None  # fastest angular frequency, if oscillatory
    points_per_period: int = 40
    max_refine: int = 6

    def step_u(self, T_max):
        du = np.log(10.0) / self.points_per_decade
        if self.phase_scale:
            du = min(du, 2 * np.pi / self.phase_scale / self.points_per_period / T_max)
        return du


def default_det_floor(t, p_hat):
    return 1e-10 * np.asarray(t, dtype=float) ** p_hat


def _weighted_sup(t, v, lam):
    return float(np.max(t ** lam * np.linalg.norm(v.reshape(len(t), -1), axis=1)))


def _envelope_fit(t, y):
    """Slope/constant of a power-law envelope of nonnegative samples ``y(t)``."""
    if np.count_nonzero(y > TINY) <= len(y) // 2:
        return -np.inf, 0.0
    env = decade_running_max(t, y)
    slope, icpt, _, _ = loglog_slope(t, np.maximum(env, TINY))
    return slope, float(np.exp(icpt))


def forcing(sys, fam, alpha, T, T_max, quad=QuadratureSpec(), det_floor=None,
            residual_scale=1.0):
    """``Z(t) = int_t^inf J^{-1} Y`` on a geometric grid over ``[T, T_max]``.

    The finite part is integrated by adaptive composite Simpson in ``log t``.
    The part beyond ``T_max`` is estimated by matching the finite integrals of
    the top decade to ``c t**(1-beta) - tail`` where ``t**-beta`` is the
    fitted decay of the integrand; the fitted tail is added to the values and
    a power-law bound on it is stored in ``meta['tail_bound']``.
    ``residual_scale`` multiplies ``Y`` (test hook for linearity).
    """
    alpha = tuple(float(a) for a in alpha)

    def integrand(t):
        J = jacobian_values(fam, t, alpha)
        floor = 0.0 if det_floor is None else det_floor(t)
        Jinv = inverse_values(J, floor)
        Y = residual_scale * residual_values(sys, fam, t, alpha)
        return np.einsum("...ij,...j->...i", Jinv, Y)

    m = len(geometric_grid(T, T_max, quad.step_u(T_max))) - 1
    prev = None
    for level in range(quad.max_refine + 1):
        grid = geometric_grid(T, T_max, None, intervals=m)
        hn, hm = integrand(grid), integrand(midpoints(grid))
        if level == 0:
            mag = np.linalg.norm(hn, axis=1)
            top = grid >= T_max / 10.0
            slope, c_env = _envelope_fit(grid[top], mag[top])
            if slope == -np.inf:
                Z = GridFunction(grid, np.zeros_like(hn), {"tail": np.zeros(fam.n),
                                                          "tail_bound": 0.0,
                                                          "decay_slope": -np.inf})
                return Z
            if slope >= -1.0:
                raise NonConvergentTail(
                    f"integrand of Z decays like t^{slope:.3f}; need exponent < -1")
            lam = -(slope + 1.0)
        I = tail_integral(grid, hn, hm)
        if prev is not None:
            delta = I[::2] - prev[1]
            if _weighted_sup(prev[0], delta, lam) <= quad.rel_tol * _weighted_sup(grid, I, lam):
                break
        prev = (grid, I)
        m *= 2

    # tail beyond T_max: least squares for I(t) ~ c t^(slope+1) - tail on the top decade
    top = grid >= T_max / 10.0
    A = np.column_stack([grid[top] ** (slope + 1.0), -np.ones(top.sum())])
    coef, *_ = np.linalg.lstsq(A, I[top], rcond=None)
    tail = coef[1]
    c_env = float(np.max(np.linalg.norm(hn[top], axis=1) * grid[top] ** (-slope)))
    tail_bound = c_env * T_max ** (slope + 1.0) / abs(slope + 1.0)
    return GridFunction(grid, I + tail, {"tail": tail, "tail_bound": tail_bound,
                                         "decay_slope": slope, "refinements": level})
