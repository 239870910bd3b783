"""Command line driver: ``asymptote {check,solve,verify,sweep} PROBLEM [options]``.

``PROBLEM`` is a JSON problem file or the name of a bundled fixture
(riccati, oscillator, pendulum-eq, failing-boundary).

Exit status: 0 when the verdict passes, 2 when the sufficient conditions (or
the decay/uniformity verdict) fail, 1 on any error.  ``solve``, ``verify``
and ``sweep`` refuse to run (status 2) when the conditions fail.

With ``--out DIR`` the machine-readable report goes to ``DIR/report.json``
(sorted keys, no timestamps, byte-identical across identical runs), the
human-readable one to ``DIR/report.txt`` and, for ``solve``, the sampled
solution to ``DIR/solution.csv``.  The human form is always printed.
"""
from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from pathlib import Path

import numpy as np

from .contraction import remainder_decay
from .errors import AsymptoteError
from .estimator import AsymptoticSolver, default_sweep_grid
from .family import X_values, residual_values
from .problem import FIXTURES, fixture_path, load_problem
from .verify import UniformityReport

EXIT_PASS, EXIT_ERROR, EXIT_FAIL = 0, 1, 2


def _clean(v):
    """JSON-safe copy: numpy scalars to Python, tuples to lists, non-finite to strings."""
    if isinstance(v, dict):
        return {str(k): _clean(x) for k, x in v.items()}
    if isinstance(v, (list, tuple, np.ndarray)):
        return [_clean(x) for x in v]
    if isinstance(v, (bool, np.bool_)):
        return bool(v)
    if isinstance(v, (int, np.integer)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return v
    return v


def dumps_report(report: dict) -> str:
    return json.dumps(_clean(report), sort_keys=True, indent=2) + "\n"


def _flatten(d, prefix=""):
    for key in sorted(d):
        v = d[key]
        name = f"{prefix}{key}"
        if isinstance(v, dict):
            yield from _flatten(v, name + ".")
        elif isinstance(v, list) and v and isinstance(v[0], dict):
            for i, item in enumerate(v):
                yield from _flatten(item, f"{name}[{i}].")
        else:
            yield name, json.dumps(v)


def render_text(report: dict) -> str:
    """Human-readable form: a headline, then every leaf of the machine report."""
    rep = _clean(report)
    lines = [f"{rep['problem']['name']}: {rep['command']} -> {rep['status'].upper()}"]
    if rep.get("message"):
        lines.append(rep["message"])
    width = max(len(k) for k, _ in _flatten(rep))
    lines += [f"  {k.ljust(width)}  {v}" for k, v in _flatten(rep)]
    return "\n".join(lines) + "\n"


def _resolve(problem: str) -> Path:
    p = Path(problem)
    if not p.exists() and (problem in FIXTURES or problem[:-5] in FIXTURES):
        return fixture_path(problem)
    return p


def _parse_alpha(text, n):
    try:
        vals = [float(v) for v in text.split(",")]
    except ValueError:
        raise ValueError(f"--alpha must be a comma list of numbers, got {text!r}") from None
    if len(vals) != n:
        raise ValueError(f"--alpha needs {n} value(s), got {len(vals)}")
    return tuple(vals)


def _base_report(command, prob, est):
    prof = est.profile_
    return {
        "command": command,
        "problem": prob.to_dict(),
        "settings": {k: v for k, v in est.get_params().items() if k not in ("system", "family")},
        "profile": prof.to_dict(),
        "conditions": est.conditions_.to_dict(),
        "relations": list(prof.relations()),
    }


def _alpha_record(est, alpha, reference=True):
    sol = est.solve(alpha)
    stats = sol.stats()
    slope, c = remainder_decay(sol.R, est.fit_mode, est.phase_scale)
    rec = {"alpha": list(sol.alpha), "setup": sol.setup.to_dict(), "picard": stats,
           "remainder_decay": {"slope": slope, "c": c}}
    if reference:
        rs, rc = est.verify(alpha)
        rec["reference_decay"] = {"slope": rs, "c": rc, "ok": est.decay_ok(rs)}
    return rec


def write_solution_csv(path, est, alpha):
    """Columns t, X_i, R_i, |Y|, |R|, t^nu |R| on the construction grid."""
    sol = est.solve(alpha)
    fam, sysd = est.family, est.system
    g = sol.R.grid
    Xv = X_values(fam, g, sol.alpha)
    R = sol.R.values
    Y = np.linalg.norm(residual_values(sysd, fam, g, sol.alpha), axis=1)
    Rn = np.linalg.norm(R, axis=1)
    nu = est.profile_.nu
    scaled = g ** nu * Rn if math.isfinite(nu) else np.zeros_like(Rn)
    n = fam.n
    header = (["t"] + [f"X_{i + 1}" for i in range(n)] + [f"R_{i + 1}" for i in range(n)]
              + ["|Y|", "|R|", "t^nu|R|"])
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for i in range(len(g)):
            row = [g[i], *Xv[i], *R[i], Y[i], Rn[i], scaled[i]]
            w.writerow([repr(float(v)) for v in row])


def run(command, problem, alpha=None, out=None, seed=None, tmax_factor=None,
        points_per_decade=None, stream=None):
    """Execute one subcommand; returns ``(exit_status, report_dict)``."""
    stream = sys.stdout if stream is None else stream
    report = {"command": command, "problem": {"name": str(problem)}}
    status = EXIT_ERROR
    est = None
    try:
        prob = load_problem(_resolve(problem))
        report["problem"] = prob.to_dict()
        settings = prob.settings()
        est = AsymptoticSolver.from_problem(prob, seed=seed, tmax_factor=tmax_factor,
                                            points_per_decade=points_per_decade).fit()
        report = _base_report(command, prob, est)
        if not est.conditions_.verdict:
            status = EXIT_FAIL
            if command != "check":
                report["message"] = f"refusing to {command}: sufficient conditions fail"
        elif command == "check":
            status = EXIT_PASS
        elif command == "solve":
            a = (_parse_alpha(alpha, prob.n) if alpha
                 else tuple(0.5 * (lo + hi) for lo, hi in prob.compact))
            report["solution"] = _alpha_record(est, a, reference=False)
            if out:
                Path(out).mkdir(parents=True, exist_ok=True)
                write_solution_csv(Path(out) / "solution.csv", est, a)
            status = EXIT_PASS
        elif command == "verify":
            alphas = ([_parse_alpha(alpha, prob.n)] if alpha
                      else [tuple(a) for a in default_sweep_grid(est.family,
                                                                 settings["sweep_per_axis"])])
            recs, slopes, consts, errors = [], [], [], []
            for a in alphas:
                try:
                    rec = _alpha_record(est, a)
                    slopes.append(rec["reference_decay"]["slope"])
                    consts.append(rec["reference_decay"]["c"])
                    errors.append("")
                except AsymptoteError as exc:
                    rec = {"alpha": list(a), "error": f"{type(exc).__name__}: {exc}"}
                    slopes.append(math.nan)
                    consts.append(math.nan)
                    errors.append(rec["error"])
                recs.append(rec)
            report["alphas"] = recs
            ok = not any(errors) and all(est.decay_ok(sl) for sl in slopes)
            if len(alphas) >= 5:
                uni = UniformityReport(alphas, slopes, consts, est.profile_.nu, errors)
                report["uniformity"] = uni.to_dict()
                ok = ok and uni.verdict
            status = EXIT_PASS if ok else EXIT_FAIL
        elif command == "sweep":
            uni = est.sweep(per_axis=settings["sweep_per_axis"])
            report["uniformity"] = uni.to_dict()
            report["picard"] = [dict(alpha=list(a), iterations=s.iterations,
                                     final_delta=s.final_delta, T=s.setup.T,
                                     L=s.setup.L)
                                for a, s in sorted(est.solutions_.items())]
            status = EXIT_PASS if uni.verdict else EXIT_FAIL
        else:
            raise ValueError(f"unknown command {command!r}")
    except (AsymptoteError, ValueError, KeyError) as exc:
        status = EXIT_ERROR
        report["error"] = f"{type(exc).__name__}: {exc}"
    report["status"] = {EXIT_PASS: "pass", EXIT_FAIL: "fail", EXIT_ERROR: "error"}[status]
    report["exit_code"] = status
    text = render_text(report)
    stream.write(text)
    if out:
        Path(out).mkdir(parents=True, exist_ok=True)
        (Path(out) / "report.json").write_text(dumps_report(report))
        (Path(out) / "report.txt").write_text(text)
    return status, report


def build_parser():
    ap = argparse.ArgumentParser(
        prog="asymptote",
        description="Check, construct and verify exact solutions behind an asymptotic family.")
    sub = ap.add_subparsers(dest="command", required=True)
    helps = {
        "check": "fit the exponents and evaluate the sufficient conditions",
        "solve": "construct the remainder for one parameter value (writes solution.csv)",
        "verify": "construct and compare against backward reference integration",
        "sweep": "uniformity of the decay over a grid of the parameter compact",
    }
    for name, text in helps.items():
        p = sub.add_parser(name, help=text, description=text)
        p.add_argument("problem", help="problem JSON file or bundled fixture name")
        p.add_argument("--alpha", help="parameter vector as a comma list, e.g. 0.5,-1")
        p.add_argument("--out", help="directory for report.json / report.txt / solution.csv")
        p.add_argument("--seed", type=int, default=None, help="seed for the M_K probes")
        p.add_argument("--tmax-factor", type=float, default=None, help="T_max = factor * T")
        p.add_argument("--points-per-decade", type=int, default=None,
                       help="quadrature nodes per decade (non-oscillatory grids)")
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    status, _ = run(args.command, args.problem, args.alpha, args.out, args.seed,
                    args.tmax_factor, args.points_per_decade)
    return status


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
