"""Log-log regression primitives shared by the exponent and quadrature code."""
import numpy as np

TINY = 1e-300


def loglog_slope(t, y):
    """Least-squares slope of log y against log t.

    Returns ``(slope, intercept, stderr, resid)`` where ``resid`` are the
    regression residuals in log space.
    """
    lt = np.log(np.asarray(t, dtype=float))
    ly = np.log(np.asarray(y, dtype=float))
    A = np.column_stack([lt, np.ones_like(lt)])
    coef, *_ = np.linalg.lstsq(A, ly, rcond=None)
    resid = ly - A @ coef
    dof = max(len(lt) - 2, 1)
    s2 = float(resid @ resid) / dof
    sxx = float(np.sum((lt - lt.mean()) ** 2))
    stderr = np.sqrt(s2 / sxx) if sxx > 0 else np.inf
    return float(coef[0]), float(coef[1]), float(stderr), resid


def lag1_autocorrelation(r):
    r = np.asarray(r, dtype=float) - np.mean(r)
    den = float(r @ r)
    if den <= 1e-30 * max(len(r), 1):
        return 0.0
    return float(r[:-1] @ r[1:]) / den


def decade_running_max(t, y, horizon=None):
    """max of ``y`` over ``[t_i, min(10 t_i, horizon)]`` for every sample ``t_i``.

    ``t`` must be increasing.  Monotone-deque sliding maximum, O(len(t)).
    """
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    hi = t[-1] if horizon is None else horizon
    ends = np.searchsorted(t, np.minimum(10.0 * t, hi), side="right")
    out = np.empty_like(y)
    dq = []  # indices, values decreasing
    head = 0
    j = 0
    for i in range(len(t)):
        while j < ends[i]:
            while len(dq) > head and y[dq[-1]] <= y[j]:
                dq.pop()
            dq.append(j)
            j += 1
        while dq[head] < i:
            head += 1
        out[i] = y[dq[head]]
    return out
