"""Reference integration and checks of the decay order of the constructed solution."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from statistics import median

import numpy as np

from .errors import AsymptoteError, DomainExit, StepUnderflow
from .exponents import estimate_exponent
from .family import X_values

# Dormand-Prince 5(4) tableau
_C = (0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0)
_A = (
    (),
    (1 / 5,),
    (3 / 40, 9 / 40),
    (44 / 45, -56 / 15, 32 / 9),
    (19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729),
    (9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656),
    (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84),
)
_B = _A[6] + (0.0,)
_A_MAT = np.zeros((7, 7))
for _i, _row in enumerate(_A):
    _A_MAT[_i, :len(_row)] = _row
_B_VEC = np.array(_B)
# difference between the 5th and embedded 4th order weights
_E = (71 / 57600, 0.0, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40)
# dense output (Hairer & Wanner, contd5)
_D = (-12715105075 / 11282082432, 0.0, 87487479700 / 32700410799,
      -10690763975 / 1880347072, 701980252875 / 199316789632,
      -1453857185 / 822651844, 69997945 / 29380423)
_E_VEC = np.array(_E)
_D_VEC = np.array(_D)


RTOL_MIN = 1e-13


@dataclass
class Trajectory:
    times: np.ndarray
    states: np.ndarray
    rtol: float
    atol: float
    n_accepted: int = 0
    n_rejected: int = 0
    n_evals: int = 0
    max_error_ratio: float = 0.0  # largest accepted local error / tolerance
    _dense: list = field(default_factory=list, repr=False)

    @property
    def mean_step(self):
        return float(np.mean(np.abs(np.diff(self.times)))) if len(self.times) > 1 else 0.0

    def __call__(self, t):
        """Dense output (4th order) at ``t``; scalar or array."""
        t = np.asarray(t, dtype=float)
        scalar = t.ndim == 0
        t = np.atleast_1d(t)
        ts = self.times
        sign = 1.0 if ts[-1] >= ts[0] else -1.0
        key = sign * ts
        lo, hi = min(ts[0], ts[-1]), max(ts[0], ts[-1])
        if np.any(t < lo - 1e-12 * abs(lo)) or np.any(t > hi + 1e-12 * abs(hi)):
            raise ValueError("evaluation outside the trajectory")
        idx = np.clip(np.searchsorted(key, sign * t, side="right") - 1, 0, len(ts) - 2)
        out = np.empty((len(t), self.states.shape[1]))
        for i, j in enumerate(idx):
            t_old, h, r = self._dense[j]
            th = (t[i] - t_old) / h
            th1 = 1.0 - th
            out[i] = r[0] + th * (r[1] + th1 * (r[2] + th * (r[3] + th1 * r[4])))
        return out[0] if scalar else out


def integrate_reference(sys, t_start, x_start, t_end, rtol=1e-10, atol=1e-12,
                        first_step=None, adaptive=True, max_steps=5_000_000):
    """Dormand-Prince 5(4) with PI step-size control and dense output.

    Integrates ``dx/dt = t**k f(x, t)`` from ``t_start`` to ``t_end`` (either
    direction).  With ``adaptive=False`` the step is held at ``first_step``
    (used for convergence-order checks).
    """
    x = np.array(x_start, dtype=float)
    if not np.all(np.isfinite(x)):
        raise ValueError("x_start must be finite")
    if min(t_start, t_end) < sys.t0 * (1 - 1e-12):
        raise ValueError("integration interval must lie in [t0, inf)")
    rhs = sys.rhs_function()
    box = sys.domain_hint
    direction = 1.0 if t_end >= t_start else -1.0
    span = abs(t_end - t_start)
    t = float(t_start)
    times, states, dense = [t], [x.copy()], []
    traj = Trajectory(None, None, rtol, atol)
    if span == 0:
        traj.times, traj.states = np.array(times), np.array(states)
        return traj

    n = len(x)
    ks = np.empty((7, n))
    ks[0] = rhs(t, x)
    traj.n_evals += 1
    if first_step is None:
        # Hairer's starting-step heuristic
        sc = atol + rtol * np.abs(x)
        d0 = np.linalg.norm(x / sc) / math.sqrt(n)
        d1 = np.linalg.norm(ks[0] / sc) / math.sqrt(n)
        h = 1e-6 if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
        h = min(h, span)
    else:
        h = abs(first_step)
    beta, expo, safety = 0.04, 0.2 - 0.75 * 0.04, 0.9
    err_old = 1e-4
    reject = False
    tiny = 1e-14 * max(abs(t_end), 1.0)
    while direction * (t_end - t) > tiny:
        if traj.n_accepted + traj.n_rejected > max_steps:
            raise StepUnderflow("step budget exhausted")
        if h < 1e-13 * max(abs(t), 1.0):
            raise StepUnderflow(f"step size underflow at t={t:.6g}")
        last = h >= abs(t_end - t) * (1 - 1e-12)
        if last:
            h = abs(t_end - t)
        hs = direction * h
        for i in range(1, 7):
            ks[i] = rhs(t + _C[i] * hs, x + hs * (_A_MAT[i, :i] @ ks[:i]))
        traj.n_evals += 6
        x_new = x + hs * (_B_VEC @ ks)
        if not adaptive:
            err = 0.0
        else:
            e = hs * (_E_VEC @ ks)
            sc = atol + rtol * np.maximum(np.abs(x), np.abs(x_new))
            err = math.sqrt(float(np.dot(e / sc, e / sc)) / n)
        if not np.all(np.isfinite(x_new)):
            err = math.inf
        if err <= 1.0:
            ydiff = x_new - x
            bspl = hs * ks[0] - ydiff
            r5 = hs * (_D_VEC @ ks)
            dense.append((t, hs, (x, ydiff, bspl, ydiff - hs * ks[6] - bspl, r5)))
            t = t_end if last else t + hs
            x = x_new
            ks[0] = ks[6]
            traj.n_accepted += 1
            traj.max_error_ratio = max(traj.max_error_ratio, err)
            times.append(t)
            states.append(x)
            if box is not None and any(not lo <= v <= hi for v, (lo, hi) in zip(x, box)):
                raise DomainExit(f"state left the domain hint at t={t:.6g}")
            if adaptive:
                # PI controller (Gustafsson) with the usual clamps
                fac = err_old ** beta / max(err, 1e-10) ** expo if err > 0 else 10.0
                fac = min(10.0, max(0.2, safety * fac))
                if reject:
                    fac = min(fac, 1.0)
                h *= fac
                err_old = max(err, 1e-4)
            reject = False
        else:
            traj.n_rejected += 1
            reject = True
            h *= max(0.2, safety / err ** 0.2) if math.isfinite(err) else 0.2
    traj.times = np.array(times)
    traj.states = np.array(states)
    traj._dense = dense
    return traj


def observed_order(sys, t_start, x_start, t_end, exact, rtols, atol=1e-300):
    """Convergence order seen through the step-size controller.

    Integrates with each ``rtol`` and regresses ``log |error at t_end|`` on
    ``log mean step``.  Returns ``(order, errors, mean_steps)``.
    """
    errs, steps = [], []
    for rt in rtols:
        tr = integrate_reference(sys, t_start, x_start, t_end, rtol=rt, atol=atol)
        errs.append(float(np.max(np.abs(tr.states[-1] - np.asarray(exact, dtype=float)))))
        steps.append(tr.mean_step)
    slope = np.polyfit(np.log(steps), np.log(errs), 1)[0]
    return float(slope), errs, steps


def compare_decay(sys, fam, alpha, sol, rtol=1e-10, atol=1e-12, mode="auto",
                  phase_scale=None, x_seed=None):
    """Integrate back from the assembled far-field state and fit ``|x_ref - X|``.

    Returns ``(slope, c, trajectory)`` fitted on the top two decades of
    ``[T, T_max]``.  ``rtol``/``atol`` are upper limits: both are tightened
    so the local error target stays two orders below the smallest remainder
    in the fit window (``rtol`` is not pushed below ``RTOL_MIN``).  If the
    difference never exceeds ``10 (atol + rtol |x|)`` the remainder is
    treated as identically zero and ``(-inf, 0.0)`` is returned.
    """
    alpha = tuple(float(a) for a in alpha)
    g = sol.R.grid
    T, T_max = g[0], g[-1]
    if x_seed is None:
        x_seed = X_values(fam, [T_max], alpha)[0] + sol.R.values[-1]
    lo = max(T, T_max / 100.0)
    top = g >= lo
    r_top = np.linalg.norm(sol.R.values[top], axis=1)
    if np.any(r_top > 0):
        r_min = float(np.min(r_top[r_top > 0]))
        x_top = np.linalg.norm(X_values(fam, g[top], alpha) + sol.R.values[top], axis=1)
        atol = min(atol, 0.01 * r_min)
        rtol = max(min(rtol, 0.01 * float(np.min(r_top[r_top > 0] / np.maximum(x_top[r_top > 0], 1e-300)))), RTOL_MIN)
    traj = integrate_reference(sys, T_max, x_seed, T, rtol, atol)
    check_t = np.geomspace(lo, T_max, 400)
    diff = np.linalg.norm(traj(check_t) - X_values(fam, check_t, alpha), axis=1)
    scale = atol + rtol * np.max(np.abs(traj.states))
    if np.max(diff) <= 10.0 * scale:
        return -math.inf, 0.0, traj

    def sampler(t):
        return np.linalg.norm(traj(t) - X_values(fam, t, alpha), axis=-1)

    hi_fit = T_max / 2.0 if (mode != "raw" and T_max / 2.0 >= 10 * lo) else T_max
    slope, _ = estimate_exponent(sampler, (lo, hi_fit), 50, mode, phase_scale, horizon=T_max)
    ts = np.geomspace(lo, hi_fit, 50)
    c = float(np.max(sampler(ts) * ts ** (-slope))) if math.isfinite(slope) else 0.0
    return slope, c, traj


@dataclass
class UniformityReport:
    alphas: list
    slopes: list
    constants: list
    nu: float
    errors: list = field(default_factory=list)
    slope_tol: float = 0.15
    ratio_limit: float = 10.0

    @property
    def max_constant(self):
        return max(self.constants) if self.constants else 0.0

    @property
    def constant_ratio(self):
        cs = [c for c, s in zip(self.constants, self.slopes) if math.isfinite(s)]
        if not cs:
            return 1.0
        med = median(cs)
        return max(cs) / med if med > 0 else math.inf

    @property
    def verdict(self):
        if any(self.errors):
            return False
        slopes_ok = all(s <= -self.nu + self.slope_tol for s in self.slopes)
        return slopes_ok and self.constant_ratio <= self.ratio_limit

    def to_dict(self):
        return dict(alphas=[list(a) for a in self.alphas],
                    slopes=[_num(s) for s in self.slopes],
                    constants=list(self.constants), nu=self.nu,
                    errors=list(self.errors), max_constant=self.max_constant,
                    constant_ratio=self.constant_ratio, verdict=self.verdict)


def _num(v):
    if math.isnan(v):
        return "nan"
    return v if math.isfinite(v) else ("-inf" if v < 0 else "inf")


def sweep_uniformity(sys, fam, sol_builder, alpha_samples, nu, **compare_kw):
    """Run ``sol_builder(alpha)`` and ``compare_decay`` for every sample.

    ``sol_builder`` returns a remainder solution; failures are recorded per
    sample and make the verdict fail.
    """
    alpha_samples = [tuple(float(v) for v in a) for a in alpha_samples]
    if len(alpha_samples) < 5:
        raise ValueError("need at least 5 parameter samples")
    slopes, consts, errors = [], [], []
    for a in alpha_samples:
        try:
            sol = sol_builder(a)
            slope, c, _ = compare_decay(sys, fam, a, sol, **compare_kw)
            errors.append("")
        except AsymptoteError as err:
            slope, c = math.nan, math.nan
            errors.append(f"{type(err).__name__}: {err}")
        slopes.append(slope)
        consts.append(c)
    return UniformityReport(alpha_samples, slopes, consts, nu, errors)
