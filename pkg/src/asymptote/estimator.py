"""Estimator-style facade over the profile / construct / verify chain.

``fit`` measures the exponents of the family (over a set of parameter
values) and evaluates the sufficient conditions; everything after that is
per parameter value and cached:

>>> est = AsymptoticSolver.from_problem(load_fixture("riccati")).fit()
>>> est.conditions_.verdict
True
>>> est.predict([[10.0, 0.5]])          # rows: t, alpha_1..alpha_n
array([[0.10526316]])
"""
from __future__ import annotations

import math

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from .contraction import assemble, build_setup, picard_solve, remainder_decay
from .errors import ConditionsNotMet
from .exponents import check_conditions, profile
from .family import AsymptoticFamily, QuadratureSpec, SystemDef
from .verify import compare_decay, sweep_uniformity


def default_sweep_grid(fam: AsymptoticFamily, per_axis=None):
    """Tensor grid of the compact with at least five points (corners included)."""
    if per_axis is None:
        per_axis = 3 if 3 ** fam.n >= 5 else 5
    return fam.grid(per_axis)


class AsymptoticSolver(BaseEstimator):
    """Construct and check the exact solutions attached to an asymptotic family.

    Parameters
    ----------
    system, family : SystemDef, AsymptoticFamily
        The equation ``x' = t**k f(x, t)`` and the candidate ``X(t; alpha)``.
    phase_scale : float, optional
        Fastest angular frequency of the family; turns on phase-resolving
        grids and envelope sampling.
    fit_window, fit_points, fit_mode
        Exponent regression window ``(lo, hi)`` (default ``(10 t0, 1000 t0)``),
        number of samples and mode (``auto``, ``raw`` or ``envelope``).
    points_per_decade, points_per_period, rel_tol
        Quadrature grid density and refinement tolerance.
    tmax_factor : float
        Truncation point ``T_max = tmax_factor * T``.
    picard_tol, max_iters
        Successive-approximation stopping rule.
    rtol, atol
        Upper limits for the reference integrator tolerances.
    samples, seed
        Random probes used to bound the quadratic part of ``f``.
    """

    def __init__(self, system=None, family=None, phase_scale=None, fit_window=None,
                 fit_points=50, fit_mode="auto", points_per_decade=200,
                 points_per_period=40, rel_tol=1e-8, tmax_factor=1e4, picard_tol=1e-10,
                 max_iters=50, rtol=1e-10, atol=1e-12, samples=500, seed=0):
        self.system = system
        self.family = family
        self.phase_scale = phase_scale
        self.fit_window = fit_window
        self.fit_points = fit_points
        self.fit_mode = fit_mode
        self.points_per_decade = points_per_decade
        self.points_per_period = points_per_period
        self.rel_tol = rel_tol
        self.tmax_factor = tmax_factor
        self.picard_tol = picard_tol
        self.max_iters = max_iters
        self.rtol = rtol
        self.atol = atol
        self.samples = samples
        self.seed = seed

    @classmethod
    def from_problem(cls, prob, **overrides):
        """Build from a :class:`~asymptote.problem.ProblemFile`; keyword
        arguments take precedence over the file's ``overrides``."""
        s = prob.settings()
        params = {k: s[k] for k in ("fit_points", "fit_mode", "points_per_decade",
                                    "points_per_period", "rel_tol", "tmax_factor",
                                    "picard_tol", "max_iters", "rtol", "atol", "samples")}
        params["fit_window"] = tuple(s["fit_window"]) if s["fit_window"] else None
        params.update({k: v for k, v in overrides.items() if v is not None})
        return cls(prob.system(), prob.family(), phase_scale=prob.phase_scale, **params)

    # -- validation -----------------------------------------------------------

    def _validate_params(self):
        if not isinstance(self.system, SystemDef) or not isinstance(self.family, AsymptoticFamily):
            raise TypeError("system and family must be SystemDef and AsymptoticFamily instances")
        if self.system.n != self.family.n:
            raise ValueError("system and family dimensions differ")
        if self.fit_mode not in ("auto", "raw", "envelope"):
            raise ValueError(f"fit_mode must be auto, raw or envelope, got {self.fit_mode!r}")
        if self.tmax_factor < 10:
            raise ValueError("tmax_factor must be at least 10")
        if self.phase_scale is not None and not self.phase_scale > 0:
            raise ValueError("phase_scale must be positive")

    def _check_alphas(self, A, within="compact"):
        n = self.family.n
        A = check_array(A, dtype=float, ensure_2d=True)
        if A.shape[1] != n:
            raise ValueError(f"expected {n} parameter columns, got {A.shape[1]}")
        test = self.family.in_compact if within == "compact" else self.family.in_domain
        for a in A:
            if not test(a):
                raise ValueError(f"alpha {tuple(a)} outside the {within}")
        return A

    def _quad(self):
        return QuadratureSpec(rel_tol=self.rel_tol, points_per_decade=self.points_per_decade,
                              phase_scale=self.phase_scale,
                              points_per_period=self.points_per_period)

    # -- estimator API --------------------------------------------------------

    def fit(self, A=None, y=None):
        """Fit the exponent profile on the parameter values ``A`` (rows of
        alpha, default the 3**n grid of the compact) and check the conditions."""
        self._validate_params()
        A = self.family.grid(3) if A is None else self._check_alphas(A)
        self.profile_ = profile(self.system, self.family, A, self.fit_window,
                                self.fit_points, self.fit_mode, self.phase_scale)
        self.conditions_ = check_conditions(self.profile_)
        self.n_features_in_ = self.family.n
        self.solutions_ = {}
        return self

    def _require_pass(self):
        check_is_fitted(self, "conditions_")
        if not self.conditions_.verdict:
            c = self.conditions_
            raise ConditionsNotMet(
                f"sufficient conditions fail (margins {c.margin1:.4g}, {c.margin2:.4g})")

    def solve(self, alpha):
        """Remainder solution for one parameter value (cached)."""
        self._require_pass()
        alpha = np.atleast_1d(np.asarray(alpha, dtype=float))
        a = tuple(float(v) for v in self._check_alphas([alpha], within="domain")[0])
        if a not in self.solutions_:
            setup, Z = build_setup(self.system, self.family, a, self.profile_, self._quad(),
                                   self.tmax_factor, self.seed, self.picard_tol,
                                   self.max_iters, self.samples)
            self.solutions_[a] = picard_solve(setup, self.system, self.family, a, Z,
                                              self._quad(), self.profile_.p)
        return self.solutions_[a]

    def predict(self, Q):
        """Exact solution values for rows ``[t, alpha_1, ..., alpha_n]``.

        ``t`` must lie in the constructed interval ``[T, T_max]`` of its alpha.
        """
        self._require_pass()
        n = self.family.n
        Q = check_array(Q, dtype=float, ensure_2d=True)
        if Q.shape[1] != n + 1:
            raise ValueError(f"expected {n + 1} columns (t, alpha_1..alpha_{n}), got {Q.shape[1]}")
        out = np.empty((len(Q), n))
        alphas = [tuple(row) for row in Q[:, 1:]]
        for a in sorted(set(alphas)):
            rows = np.array([i for i, b in enumerate(alphas) if b == a])
            sol = self.solve(a)
            t = Q[rows, 0]
            lo, hi = sol.R.grid[0], sol.R.grid[-1]
            if np.any(t < lo) or np.any(t > hi):
                raise ValueError(f"t outside the constructed interval [{lo:g}, {hi:g}] for alpha {a}")
            out[rows] = assemble(self.family, a, sol)(t)
        return out

    def transform(self, A):
        """Per-alpha ``(slope, c)`` of the constructed remainder ``|x - X| <= c t**slope``."""
        self._require_pass()
        A = self._check_alphas(A, within="domain")
        rows = []
        for a in A:
            sol = self.solve(a)
            rows.append(remainder_decay(sol.R, self.fit_mode, self.phase_scale))
        return np.array(rows, dtype=float)

    # -- verification ---------------------------------------------------------

    def verify(self, alpha):
        """``(slope, c)`` of ``|x_ref - X|`` from backward reference integration."""
        sol = self.solve(alpha)
        slope, c, _ = compare_decay(self.system, self.family, sol.alpha, sol, self.rtol,
                                    self.atol, self.fit_mode, self.phase_scale)
        return slope, c

    def sweep(self, A=None, per_axis=None):
        """Uniformity of the decay over the compact (default grid: corners included)."""
        self._require_pass()
        A = default_sweep_grid(self.family, per_axis) if A is None else self._check_alphas(A)
        return sweep_uniformity(self.system, self.family, self.solve, A, self.profile_.nu,
                                rtol=self.rtol, atol=self.atol, mode=self.fit_mode,
                                phase_scale=self.phase_scale)

    def decay_ok(self, slope):
        """Whether a fitted slope realises the guaranteed order ``nu`` (0.15 slack)."""
        check_is_fitted(self, "profile_")
        return slope == -math.inf or slope <= -self.profile_.nu + 0.15
