"""Power-law exponents of the family and the sufficient conditions they must meet."""
from __future__ import annotations

import math
from dataclasses import dataclass, field, asdict

import numpy as np

from ._fit import TINY, decade_running_max, lag1_autocorrelation, loglog_slope
from .errors import SingularJacobian
from .family import (
    default_det_floor,
    dYda_values,
    inverse_values,
    jacobian_values,
    residual_values,
)

# half-widths never drop below this; exact power laws otherwise report
# round-off sized intervals that no relation check can honour
HW_FLOOR = 1e-9

NEG_INF = -math.inf


def _dense_grid(lo, hi, fit_t, phase_scale, points_per_decade=400, per_period=40):
    """Increasing samples over [lo, hi] that contain ``fit_t`` and resolve the phase."""
    step_u = math.log(10.0) / points_per_decade
    dt_max = 2 * math.pi / phase_scale / per_period if phase_scale else math.inf
    if dt_max == math.inf:
        t = np.geomspace(lo, hi, int(math.ceil(math.log(hi / lo) / step_u)) + 1)
    else:
        # geometric while the relative step is finer than the phase step, uniform after
        t_switch = min(max(dt_max / (math.exp(step_u) - 1.0), lo), hi)
        a = np.geomspace(lo, t_switch, max(int(math.ceil(math.log(t_switch / lo) / step_u)), 1) + 1)
        b = np.linspace(t_switch, hi, max(int(math.ceil((hi - t_switch) / dt_max)), 1) + 1)
        t = np.concatenate([a, b[1:]])
    return np.unique(np.concatenate([t, fit_t]))


def estimate_exponent(sampler, window, points=50, mode="auto", phase_scale=None,
                      horizon=None):
    """Fit ``sampler(t) ~ c t**slope`` on a geometric grid over ``window``.

    ``sampler`` maps an array of times to nonnegative values.  In envelope
    mode the samples are first replaced by their running maximum over one
    decade ``[t, 10 t]`` (clipped at ``horizon``, default ``10 * window[1]``),
    taken on a grid dense enough to resolve oscillations of angular frequency
    ``phase_scale``.  ``mode="auto"`` fits the raw samples and switches to the
    envelope when they are not all positive, when the log-log residuals are
    autocorrelated above 0.5, or when the fit is poor.

    Returns ``(slope, half_width)`` with ``half_width = 2 * stderr``.  A
    sampler that is below 1e-300 on more than half the points is treated as
    identically zero and yields ``(-inf, 0.0)``.
    """
    lo, hi = float(window[0]), float(window[1])
    if not hi >= 10 * lo * (1 - 1e-12):
        raise ValueError("fit window must span at least a factor of 10")
    if points < 20:
        raise ValueError("need at least 20 points")
    if mode not in ("auto", "raw", "envelope"):
        raise ValueError(f"unknown mode {mode!r}")
    t = np.geomspace(lo, hi, points)

    if mode != "envelope":
        y = np.asarray(sampler(t), dtype=float)
        if np.count_nonzero(y >= TINY) <= points // 2:
            return NEG_INF, 0.0
        positive = bool(np.all(y > 0))
        if mode == "raw" and not positive:
            raise ValueError("raw mode needs a positive sampler")
        if positive:
            slope, _, se, resid = loglog_slope(t, y)
            hw = max(2 * se, HW_FLOOR)
            rough = lag1_autocorrelation(resid) > 0.5 and np.std(resid) > 1e-8
            if mode == "raw" or not (rough or hw > 0.05):
                return slope, hw

    end = 10 * hi if horizon is None else max(float(horizon), hi)
    td = _dense_grid(lo, end, t, phase_scale)
    yd = np.asarray(sampler(td), dtype=float)
    if np.count_nonzero(yd >= TINY) <= len(yd) // 2:
        return NEG_INF, 0.0
    env = decade_running_max(td, yd, horizon=end)[np.searchsorted(td, t)]
    slope, _, se, _ = loglog_slope(t, np.maximum(env, TINY))
    return slope, max(2 * se, HW_FLOOR)


@dataclass
class ExponentProfile:
    """Fitted exponents with their confidence half-widths.

    ``lam`` and ``nu`` are derived on access from ``mu``, ``r`` and ``q``.
    """

    k: float
    p: float
    q: float
    r: float
    s: float
    mu: float
    a: float
    n: int = 1
    hw: dict = field(default_factory=lambda: dict(p=0.0, q=0.0, r=0.0, s=0.0, mu=0.0))

    @property
    def lam(self):
        return self.mu - self.r - 1.0

    @property
    def nu(self):
        return self.mu - self.r - self.q - 1.0

    def relation_tolerances(self):
        h = self.hw
        return (h["p"] + self.n * h["q"] + HW_FLOOR,
                h["r"] + (self.n - 1) * h["q"] + h["p"] + HW_FLOOR)

    def relations(self):
        """The two exponent inequalities ``p <= q n`` and ``r <= q (n-1) - p``."""
        tol1, tol2 = self.relation_tolerances()
        return (self.p <= self.q * self.n + tol1,
                self.r <= self.q * (self.n - 1) - self.p + tol2)

    def to_dict(self):
        d = asdict(self)
        d["lambda"] = self.lam
        d["nu"] = self.nu
        return d


@dataclass
class ConditionReport:
    cond1: bool
    margin1: float
    cond2: bool
    margin2: float
    nu: float
    tol1: float = 0.0
    tol2: float = 0.0

    @property
    def verdict(self):
        return self.cond1 and self.cond2

    def to_dict(self):
        d = asdict(self)
        d["verdict"] = self.verdict
        return d


def check_conditions(prof: ExponentProfile) -> ConditionReport:
    """Both strict inequalities, evaluated conservatively.

    ``margin`` is the literal difference; a condition passes only when the
    margin exceeds the summed half-widths of the exponents involved.
    """
    h = prof.hw
    m1 = prof.mu - (prof.r + prof.s + 1.0)
    m2 = prof.mu - (2.0 * (prof.r + prof.q + 1.0) + prof.k)
    tol1 = h["mu"] + h["r"] + h["s"]
    tol2 = h["mu"] + 2.0 * (h["r"] + h["q"])
    return ConditionReport(m1 - tol1 > 0, m1, m2 - tol2 > 0, m2, prof.nu, tol1, tol2)


def _matrix_exponent(values_fn, window, points, mode, phase_scale, shape):
    """Max over entries of per-entry fits; identically-zero entries are skipped."""
    best, best_hw = NEG_INF, 0.0
    for idx in np.ndindex(*shape):
        sl, hw = estimate_exponent(lambda t, idx=idx: np.abs(values_fn(t)[(slice(None),) + idx]),
                                   window, points, mode, phase_scale)
        if sl > best:
            best, best_hw = sl, hw
    return best, best_hw


def default_window(t0):
    lo = 10.0 * t0
    return (lo, 100.0 * lo)


def profile(sys, fam, alpha_grid=None, window=None, points=50, mode="auto",
            phase_scale=None) -> ExponentProfile:
    """Fit every exponent on the pointwise maximum over ``alpha_grid``.

    ``mu`` comes from ``|Y|``, ``s`` from ``|dY/dalpha|`` (minus ``mu``), ``q``
    and ``r`` from the entries of ``J`` and ``J^{-1}``, and ``p``/``a`` from
    ``det J``.  The default grid is the 3**n corner-and-centre grid of the
    compact.
    """
    alphas = fam.grid(3) if alpha_grid is None else np.atleast_2d(np.asarray(alpha_grid, float))
    if len(alphas) == 0:
        raise ValueError("alpha_grid is empty")
    for a in alphas:
        if not fam.in_compact(a):
            raise ValueError(f"alpha {tuple(a)} outside the compact")
    window = default_window(sys.t0) if window is None else window
    n = sys.n
    fit = dict(window=window, points=points, mode=mode, phase_scale=phase_scale)

    def sup(fn):
        return lambda t: np.max([np.abs(fn(t, a)) for a in alphas], axis=0)

    detJ = sup(lambda t, a: np.linalg.det(jacobian_values(fam, t, a)))
    if not np.any(detJ(np.geomspace(*window, points))):
        raise SingularJacobian("det J vanishes identically: X does not depend on every parameter")
    p, hw_p = estimate_exponent(detJ, window, points, "raw")
    t_top = np.geomspace(window[1] / 10.0, window[1], 20)
    a_coef = float(np.mean(detJ(t_top) * t_top ** (-p)))

    q, hw_q = _matrix_exponent(sup(lambda t, a: jacobian_values(fam, t, a)),
                               shape=(n, n), **fit)
    floor = lambda t: default_det_floor(t, p)  # noqa: E731
    r, hw_r = _matrix_exponent(
        sup(lambda t, a: inverse_values(jacobian_values(fam, t, a), floor(t))),
        shape=(n, n), **fit)

    y_slope, hw_y = _matrix_exponent(sup(lambda t, a: residual_values(sys, fam, t, a)),
                                     shape=(n,), **fit)
    mu = -y_slope
    if math.isinf(mu):
        s, hw_s = 0.0, HW_FLOOR
    else:
        d_slope, hw_d = _matrix_exponent(sup(lambda t, a: dYda_values(sys, fam, t, a)),
                                         shape=(n, n), **fit)
        s, hw_s = (d_slope + mu, hw_d + hw_y) if d_slope > NEG_INF else (0.0, HW_FLOOR)

    return ExponentProfile(k=sys.k, p=p, q=q, r=r, s=s, mu=mu, a=a_coef, n=n,
                           hw=dict(p=hw_p, q=hw_q, r=hw_r, s=hw_s, mu=hw_y))
