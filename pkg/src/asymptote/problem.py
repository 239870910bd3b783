"""Problem files: JSON descriptions of a system, a candidate family and run settings."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

from . import expr as E
from .errors import AsymptoteError, ProblemFileError
from .family import AsymptoticFamily, SystemDef

# run settings a problem file may override, with their defaults
DEFAULT_SETTINGS = {
    "fit_window": None,        # [lo, hi]; default (10 t0, 1000 t0)
    "fit_points": 50,
    "fit_mode": "auto",        # auto | raw | envelope
    "points_per_decade": 200,
    "points_per_period": 40,
    "rel_tol": 1e-8,
    "tmax_factor": 1e4,
    "picard_tol": 1e-10,
    "max_iters": 50,
    "rtol": 1e-10,
    "atol": 1e-12,
    "samples": 500,
    "sweep_per_axis": None,    # default: 3 per axis (at least 5 samples overall)
    "domain_hint": None,       # per-component [lo, hi] box for the integrator
}

_REQUIRED = ("name", "n", "k", "t0", "f", "X", "A0", "compact")
_OPTIONAL = ("phase_scale", "overrides", "description")

FIXTURES = ("riccati", "oscillator", "pendulum-eq", "failing-boundary")


def _line_of(text, needle):
    """1-based line of the first occurrence of ``needle`` in ``text`` (0 if absent)."""
    if not text or needle is None:
        return 0
    pos = text.find(json.dumps(needle) if not isinstance(needle, str) else f'"{needle}"')
    if pos < 0:
        pos = text.find(str(needle))
    return text.count("\n", 0, pos) + 1 if pos >= 0 else 0


@dataclass
class ProblemFile:
    name: str
    n: int
    k: float
    t0: float
    f: list
    X: list
    A0: list
    compact: list
    phase_scale: float = None
    overrides: dict = field(default_factory=dict)
    description: str = ""
    source: str = ""

    def settings(self):
        s = dict(DEFAULT_SETTINGS)
        s.update(self.overrides)
        return s

    def system(self) -> SystemDef:
        hint = self.settings()["domain_hint"]
        hint = tuple(tuple(map(float, b)) for b in hint) if hint else None
        return SystemDef.from_strings(self.f, self.k, self.t0, hint)

    def family(self) -> AsymptoticFamily:
        return AsymptoticFamily.from_strings(self.X, self.A0, self.compact)

    def to_dict(self):
        d = dict(name=self.name, n=self.n, k=self.k, t0=self.t0, f=list(self.f),
                 X=list(self.X), A0=[list(b) for b in self.A0],
                 compact=[list(b) for b in self.compact])
        if self.phase_scale is not None:
            d["phase_scale"] = self.phase_scale
        if self.overrides:
            d["overrides"] = dict(self.overrides)
        return d


def _err(text, needle, message):
    line = _line_of(text, needle)
    where = f"line {line}: " if line else ""
    return ProblemFileError(where + message)


def _box(text, key, value, n):
    if not isinstance(value, list) or len(value) != n:
        raise _err(text, key, f"'{key}' must be a list of {n} [lo, hi] pairs")
    out = []
    for b in value:
        if (not isinstance(b, list) or len(b) != 2
                or not all(isinstance(v, (int, float)) for v in b) or not b[0] <= b[1]):
            raise _err(text, key, f"'{key}' entries must be [lo, hi] with lo <= hi, got {b!r}")
        out.append((float(b[0]), float(b[1])))
    return out


def parse_problem(data: dict, text: str = "") -> ProblemFile:
    """Validate a decoded problem document; ``text`` is used for line context."""
    if not isinstance(data, dict):
        raise ProblemFileError("problem file must contain a JSON object")
    missing = [k for k in _REQUIRED if k not in data]
    if missing:
        raise ProblemFileError(f"missing required field(s): {', '.join(missing)}")
    unknown = sorted(set(data) - set(_REQUIRED) - set(_OPTIONAL))
    if unknown:
        raise _err(text, unknown[0], f"unknown field(s): {', '.join(unknown)}")
    n = data["n"]
    if not isinstance(n, int) or isinstance(n, bool) or n < 1:
        raise _err(text, "n", "'n' must be a positive integer")
    for key in ("k", "t0"):
        if not isinstance(data[key], (int, float)) or isinstance(data[key], bool):
            raise _err(text, key, f"'{key}' must be a number")
    if data["k"] < 0:
        raise _err(text, "k", "'k' must be nonnegative")
    if not data["t0"] > 0:
        raise _err(text, "t0", "'t0' must be positive")
    for key in ("f", "X"):
        arr = data[key]
        if not isinstance(arr, list) or not all(isinstance(s, str) for s in arr):
            raise _err(text, key, f"'{key}' must be a list of expression strings")
        if len(arr) != n:
            raise _err(text, key, f"'{key}' has {len(arr)} entries, expected n = {n}")
    A0 = _box(text, "A0", data["A0"], n)
    compact = _box(text, "compact", data["compact"], n)
    ps = data.get("phase_scale")
    if ps is not None and (not isinstance(ps, (int, float)) or not ps > 0):
        raise _err(text, "phase_scale", "'phase_scale' must be a positive number")
    overrides = data.get("overrides", {}) or {}
    if not isinstance(overrides, dict):
        raise _err(text, "overrides", "'overrides' must be an object")
    bad = sorted(set(overrides) - set(DEFAULT_SETTINGS))
    if bad:
        raise _err(text, bad[0], f"unknown override(s): {', '.join(bad)}")
    if overrides.get("fit_mode", "auto") not in ("auto", "raw", "envelope"):
        raise _err(text, "fit_mode", "'fit_mode' must be auto, raw or envelope")
    prob = ProblemFile(str(data["name"]), n, float(data["k"]), float(data["t0"]),
                       list(data["f"]), list(data["X"]), A0, compact,
                       float(ps) if ps is not None else None, dict(overrides),
                       str(data.get("description", "")), text)
    # every expression must parse under the declared n
    for key, arr in (("f", prob.f), ("X", prob.X)):
        for i, src in enumerate(arr):
            try:
                E.parse(src, n)
            except AsymptoteError as exc:
                raise _err(text, src, f"{key}[{i}] = {src!r}: {exc}") from None
    for (lo, hi), (clo, chi) in zip(A0, compact):
        if not (lo < clo <= chi < hi):
            raise _err(text, "compact", "'compact' must lie strictly inside 'A0'")
    if not all(math.isfinite(v) for b in A0 + compact for v in b):
        raise _err(text, "A0", "parameter bounds must be finite")
    try:
        prob.system()
        prob.family()
    except ValueError as exc:
        raise ProblemFileError(str(exc)) from None
    return prob


def load_problem(path) -> ProblemFile:
    """Read and validate a problem file; errors carry the offending line."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ProblemFileError(f"cannot read {path}: {exc.strerror}") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ProblemFileError(f"line {exc.lineno}: invalid JSON ({exc.msg})") from None
    return parse_problem(data, text)


def fixture_path(name: str) -> Path:
    """Location of a bundled fixture (``riccati``, ``oscillator``, ...)."""
    stem = name[:-5] if name.endswith(".json") else name
    if stem not in FIXTURES:
        raise KeyError(f"unknown fixture {name!r}; bundled: {', '.join(FIXTURES)}")
    return Path(__file__).resolve().parent / "fixtures" / (stem + ".json")


def load_fixture(name: str) -> ProblemFile:
    return load_problem(fixture_path(name))
