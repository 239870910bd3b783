"""A small expression language for right-hand sides and asymptotic families.

Grammar (lowest to highest precedence)::

    expr    := term (('+' | '-') term)*
    term    := unary (('*' | '/') unary)*
    unary   := '-' unary | '+' unary | power
    power   := primary ('^' unary)?
    primary := NUMBER | 't' | 'x<i>' | 'a<i>' | FUNC '(' expr ')' | '(' expr ')'

``FUNC`` is one of ``sin cos exp log sqrt abs``.  Exponents must fold to a
numeric constant at parse time, so ``t^(-3)`` and ``x1^(1/3)`` are accepted
while ``t^x1`` is not.

Trees are immutable and hashable.  ``evaluate`` walks the tree and accepts
scalars or numpy arrays; ``compile_scalar`` / ``compile_vector`` generate
Python callables for hot loops and fall back to the tree walk when they hit
a domain error, so the error names the offending subexpression.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import DomainError, DSLSyntaxError, IndexOutOfRange, UnknownIdentifier

FUNCTIONS = ("sin", "cos", "exp", "log", "sqrt", "abs")

# precedence tiers used by the printer
_P_ADD, _P_MUL, _P_NEG, _P_POW, _P_ATOM = 1, 2, 3, 4, 5


class Expression:
    """Base class of all AST nodes."""

    prec = _P_ATOM

    def __str__(self):
        return to_text(self)

    def symbols(self):
        """Set of ``(kind, index)`` pairs referenced by the tree."""
        return _symbols(self)

    def evaluate(self, t, x=(), alpha=()):
        return evaluate(self, t, x, alpha)

    def diff(self, var):
        return differentiate(self, var)


@dataclass(frozen=True)
class Num(Expression):
    value: float


@dataclass(frozen=True)
class Sym(Expression):
    kind: str  # 't', 'x' or 'a'
    index: int = 0  # 1-based for x and a


@dataclass(frozen=True)
class Neg(Expression):
    arg: Expression
    prec = _P_NEG


@dataclass(frozen=True)
class Add(Expression):
    left: Expression
    right: Expression
    prec = _P_ADD


@dataclass(frozen=True)
class Sub(Expression):
    left: Expression
    right: Expression
    prec = _P_ADD


@dataclass(frozen=True)
class Mul(Expression):
    left: Expression
    right: Expression
    prec = _P_MUL


@dataclass(frozen=True)
class Div(Expression):
    left: Expression
    right: Expression
    prec = _P_MUL


@dataclass(frozen=True)
class Pow(Expression):
    base: Expression
    exponent: float
    prec = _P_POW


@dataclass(frozen=True)
class Call(Expression):
    name: str
    arg: Expression


T = Sym("t")
ZERO = Num(0.0)
ONE = Num(1.0)


def x_(i):
    return Sym("x", i)


def a_(i):
    return Sym("a", i)


# ---------------------------------------------------------------------------
# parsing

_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)|(?P<name>[A-Za-z_][A-Za-z_0-9]*)|(?P<op>[-+*/^()]))"
)
_VAR = re.compile(r"([xa])(\d+)$")


def _tokenize(source):
    pos, out = 0, []
    while pos < len(source):
        m = _TOKEN.match(source, pos)
        if m is None or m.end() == pos:
            if source[pos:].strip() == "":
                break
            bad = pos + len(source[pos:]) - len(source[pos:].lstrip())
            raise DSLSyntaxError(f"unexpected character {source[bad]!r}", bad)
        kind = m.lastgroup
        out.append((kind, m.group(kind), m.start(kind)))
        pos = m.end()
    out.append(("end", "", len(source)))
    return out


class _Parser:
    def __init__(self, source, n):
        self.source = source
        self.n = n
        self.tokens = _tokenize(source)
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, value):
        kind, text, off = self.take()
        if text != value:
            found = "end of input" if kind == "end" else repr(text)
            raise DSLSyntaxError(f"expected {value!r}, found {found}", off)

    def parse(self):
        if not self.source.strip():
            raise DSLSyntaxError("empty expression", 0)
        e = self.expr()
        kind, text, off = self.peek()
        if kind != "end":
            raise DSLSyntaxError(f"unexpected {text!r}", off)
        return e

    def expr(self):
        e = self.term()
        while self.peek()[1] in ("+", "-") and self.peek()[0] == "op":
            op = self.take()[1]
            r = self.term()
            e = Add(e, r) if op == "+" else Sub(e, r)
        return e

    def term(self):
        e = self.unary()
        while self.peek()[1] in ("*", "/") and self.peek()[0] == "op":
            op = self.take()[1]
            r = self.unary()
            e = Mul(e, r) if op == "*" else Div(e, r)
        return e

    def unary(self):
        kind, text, _ = self.peek()
        if kind == "op" and text == "-":
            self.take()
            return Neg(self.unary())
        if kind == "op" and text == "+":
            self.take()
            return self.unary()
        return self.power()

    def power(self):
        base = self.primary()
        if self.peek()[0] == "op" and self.peek()[1] == "^":
            off = self.take()[2]
            ex = self.unary()
            if ex.symbols():
                raise DSLSyntaxError("exponent must be a numeric constant", off + 1)
            try:
                value = float(evaluate(ex, 1.0))
            except DomainError as err:
                raise DSLSyntaxError(f"exponent does not evaluate: {err}", off + 1) from None
            return Pow(base, value)
        return base

    def primary(self):
        kind, text, off = self.take()
        if kind == "num":
            return Num(float(text))
        if kind == "op" and text == "(":
            e = self.expr()
            self.expect(")")
            return e
        if kind == "name":
            if text in FUNCTIONS:
                self.expect("(")
                arg = self.expr()
                self.expect(")")
                return Call(text, arg)
            if text == "t":
                return T
            m = _VAR.match(text)
            if m:
                idx = int(m.group(2))
                if not 1 <= idx <= self.n:
                    raise IndexOutOfRange(
                        f"variable index out of range: {text!r} (n={self.n})", off
                    )
                return Sym(m.group(1), idx)
            raise UnknownIdentifier(f"unknown identifier {text!r}", off)
        if kind == "end":
            raise DSLSyntaxError("unexpected end of input", off)
        raise DSLSyntaxError(f"unexpected {text!r}", off)


def parse(source: str, n: int) -> Expression:
    """Parse ``source`` for a problem of dimension ``n``."""
    if n < 1:
        raise ValueError("n must be >= 1")
    return _Parser(source, n).parse()


# ---------------------------------------------------------------------------
# printing


def _num_text(v):
    if v == int(v) and abs(v) < 1e15:
        return str(int(v))
    return repr(float(v))


def to_text(e: Expression) -> str:
    if isinstance(e, Num):
        s = _num_text(abs(e.value))
        return s if e.value >= 0 else f"(-{s})"
    if isinstance(e, Sym):
        return "t" if e.kind == "t" else f"{e.kind}{e.index}"
    if isinstance(e, Neg):
        inner = to_text(e.arg)
        return "-" + (f"({inner})" if e.arg.prec < _P_NEG else inner)
    if isinstance(e, (Add, Sub, Mul, Div)):
        tier = e.prec
        op = {Add: "+", Sub: "-", Mul: "*", Div: "/"}[type(e)]
        left = to_text(e.left)
        right = to_text(e.right)
        if e.left.prec < tier:
            left = f"({left})"
        if e.right.prec <= tier:
            right = f"({right})"
        return f"{left} {op} {right}"
    if isinstance(e, Pow):
        base = to_text(e.base)
        if e.base.prec <= _P_POW:
            base = f"({base})"
        ex = _num_text(abs(e.exponent))
        ex = ex if e.exponent >= 0 else f"(-{ex})"
        return f"{base}^{ex}"
    if isinstance(e, Call):
        return f"{e.name}({to_text(e.arg)})"
    raise TypeError(f"not an expression: {e!r}")


# ---------------------------------------------------------------------------
# structure helpers


def _symbols(e):
    if isinstance(e, Sym):
        return {(e.kind, e.index)}
    if isinstance(e, Num):
        return set()
    if isinstance(e, (Neg, Call)):
        return _symbols(e.arg)
    if isinstance(e, Pow):
        return _symbols(e.base)
    return _symbols(e.left) | _symbols(e.right)


def substitute(e: Expression, mapping: dict) -> Expression:
    """Replace symbols by expressions; ``mapping`` is keyed by ``Sym`` nodes."""
    if isinstance(e, Sym):
        return mapping.get(e, e)
    if isinstance(e, Num):
        return e
    if isinstance(e, Neg):
        return Neg(substitute(e.arg, mapping))
    if isinstance(e, Call):
        return Call(e.name, substitute(e.arg, mapping))
    if isinstance(e, Pow):
        return Pow(substitute(e.base, mapping), e.exponent)
    return type(e)(substitute(e.left, mapping), substitute(e.right, mapping))


# ---------------------------------------------------------------------------
# evaluation


def _lookup(vec, i, e):
    try:
        return vec[i - 1]
    except (IndexError, TypeError):
        raise DomainError(f"no value supplied for {to_text(e)}", to_text(e)) from None


def evaluate(e: Expression, t, x=(), alpha=()):
    """Evaluate by walking the tree.  Works elementwise on numpy arrays."""
    with np.errstate(all="ignore"):
        return _ev(e, t, x, alpha)


def _fail(msg, e):
    raise DomainError(msg, to_text(e))


def _ev(e, t, x, a):
    if isinstance(e, Num):
        return e.value
    if isinstance(e, Sym):
        if e.kind == "t":
            return t
        return _lookup(x if e.kind == "x" else a, e.index, e)
    if isinstance(e, Neg):
        return -_ev(e.arg, t, x, a)
    if isinstance(e, Add):
        return _ev(e.left, t, x, a) + _ev(e.right, t, x, a)
    if isinstance(e, Sub):
        return _ev(e.left, t, x, a) - _ev(e.right, t, x, a)
    if isinstance(e, Mul):
        return _ev(e.left, t, x, a) * _ev(e.right, t, x, a)
    if isinstance(e, Div):
        num = _ev(e.left, t, x, a)
        den = _ev(e.right, t, x, a)
        if np.any(np.asarray(den) == 0):
            _fail("division by zero", e)
        return np.divide(num, den) if _is_array(num, den) else num / den
    if isinstance(e, Pow):
        b = _ev(e.base, t, x, a)
        p = e.exponent
        barr = np.asarray(b, dtype=float)
        if p < 0 and np.any(barr == 0):
            _fail("zero raised to a negative power", e)
        if p != int(p) and np.any(barr < 0):
            _fail("negative base with fractional exponent", e)
        if isinstance(b, np.ndarray):
            out = np.power(barr, int(p) if p == int(p) else p)
        else:
            out = float(b) ** (int(p) if p == int(p) else p)
        _check_finite(out, e)
        return out
    if isinstance(e, Call):
        v = _ev(e.arg, t, x, a)
        arr = np.asarray(v, dtype=float)
        if e.name == "log" and np.any(arr <= 0):
            _fail("log of non-positive value", e)
        if e.name == "sqrt" and np.any(arr < 0):
            _fail("sqrt of negative value", e)
        out = getattr(np, e.name if e.name != "abs" else "abs")(arr)
        _check_finite(out, e)
        return out if isinstance(v, np.ndarray) else float(out)
    raise TypeError(f"not an expression: {e!r}")


def _is_array(*vals):
    return any(isinstance(v, np.ndarray) for v in vals)


def _check_finite(v, e):
    if not np.all(np.isfinite(v)):
        _fail("overflow", e)


# ---------------------------------------------------------------------------
# code generation


def _codegen(e):
    if isinstance(e, Num):
        return repr(float(e.value))
    if isinstance(e, Sym):
        if e.kind == "t":
            return "t"
        return f"{'x' if e.kind == 'x' else 'alpha'}[{e.index - 1}]"
    if isinstance(e, Neg):
        return f"(-{_codegen(e.arg)})"
    if isinstance(e, (Add, Sub, Mul, Div)):
        op = {Add: "+", Sub: "-", Mul: "*", Div: "/"}[type(e)]
        return f"({_codegen(e.left)} {op} {_codegen(e.right)})"
    if isinstance(e, Pow):
        if e.exponent == int(e.exponent):
            return f"({_codegen(e.base)} ** {int(e.exponent)})"
        return f"_rpow({_codegen(e.base)}, {e.exponent!r})"
    if isinstance(e, Call):
        return f"_{e.name}({_codegen(e.arg)})"
    raise TypeError(f"not an expression: {e!r}")


def _scalar_rpow(b, p):
    if b < 0:
        raise ValueError("negative base")
    return b ** p


_SCALAR_NS = {
    "_sin": math.sin, "_cos": math.cos, "_exp": math.exp, "_log": math.log,
    "_sqrt": math.sqrt, "_abs": abs, "_rpow": _scalar_rpow,
}
_VECTOR_NS = {
    "_sin": np.sin, "_cos": np.cos, "_exp": np.exp, "_log": np.log,
    "_sqrt": np.sqrt, "_abs": np.abs, "_rpow": np.power,
}


@lru_cache(maxsize=4096)
def compile_scalar(e: Expression):
    """Callable ``f(t, x, alpha) -> float`` using :mod:`math`."""
    fn = eval(f"lambda t, x, alpha: {_codegen(e)}", dict(_SCALAR_NS))  # noqa: S307

    def run(t, x=(), alpha=()):
        try:
            return fn(t, x, alpha)
        except (ValueError, ZeroDivisionError, OverflowError):
            return float(evaluate(e, t, x, alpha))

    return run


def compile_tuple(exprs):
    """Single callable ``f(t, x, alpha) -> tuple`` evaluating several expressions."""
    exprs = tuple(exprs)
    body = ", ".join(_codegen(e) for e in exprs)
    fn = eval(f"lambda t, x, alpha: ({body},)", dict(_SCALAR_NS))  # noqa: S307

    def run(t, x=(), alpha=()):
        try:
            return fn(t, x, alpha)
        except (ValueError, ZeroDivisionError, OverflowError):
            return tuple(float(evaluate(e, t, x, alpha)) for e in exprs)

    return run


@lru_cache(maxsize=4096)
def compile_vector(e: Expression):
    """Callable ``f(t, x, alpha) -> ndarray`` broadcasting over ``t`` and ``x`` rows."""
    fn = eval(f"lambda t, x, alpha: {_codegen(e)}", dict(_VECTOR_NS))  # noqa: S307

    def run(t, x=(), alpha=()):
        t = np.asarray(t, dtype=float)
        try:
            with np.errstate(all="raise"):
                out = fn(t, x, alpha)
        except (FloatingPointError, ZeroDivisionError, ValueError):
            out = evaluate(e, t, x, alpha)
        out = np.asarray(out, dtype=float)
        shape = np.broadcast_shapes(out.shape, t.shape, *(np.shape(v) for v in x))
        return np.array(np.broadcast_to(out, shape))

    return run


# ---------------------------------------------------------------------------
# differentiation


def num(v):
    v = float(v)
    return Num(v) if v >= 0 else Neg(Num(-v))


def _const(e):
    if isinstance(e, Num):
        return e.value
    if isinstance(e, Neg) and isinstance(e.arg, Num):
        return -e.arg.value
    return None


def add(a, b):
    ca, cb = _const(a), _const(b)
    if ca == 0:
        return b
    if cb == 0:
        return a
    if ca is not None and cb is not None:
        return num(ca + cb)
    if isinstance(b, Neg):
        return Sub(a, b.arg)
    return Add(a, b)


def sub(a, b):
    ca, cb = _const(a), _const(b)
    if cb == 0:
        return a
    if ca == 0:
        return neg(b)
    if ca is not None and cb is not None:
        return num(ca - cb)
    return Sub(a, b)


def neg(a):
    c = _const(a)
    if c is not None:
        return num(-c)
    if isinstance(a, Neg):
        return a.arg
    return Neg(a)


def mul(a, b):
    ca, cb = _const(a), _const(b)
    if ca == 0 or cb == 0:
        return ZERO
    if ca == 1:
        return b
    if cb == 1:
        return a
    if ca == -1:
        return neg(b)
    if cb == -1:
        return neg(a)
    if ca is not None and cb is not None:
        return num(ca * cb)
    return Mul(a, b)


def div(a, b):
    ca, cb = _const(a), _const(b)
    if ca == 0:
        return ZERO
    if cb == 1:
        return a
    return Div(a, b)


def power(b, p):
    if p == 0:
        return ONE
    if p == 1:
        return b
    return Pow(b, float(p))


def differentiate(e: Expression, var) -> Expression:
    """Symbolic derivative with respect to ``var``.

    ``var`` is a ``Sym`` node or its text form (``"t"``, ``"x2"``, ``"a1"``).
    """
    if isinstance(var, str):
        var = T if var == "t" else Sym(var[0], int(var[1:]))
    return _d(e, var)


def _d(e, v):
    if isinstance(e, Num):
        return ZERO
    if isinstance(e, Sym):
        return ONE if e == v else ZERO
    if isinstance(e, Neg):
        return neg(_d(e.arg, v))
    if isinstance(e, Add):
        return add(_d(e.left, v), _d(e.right, v))
    if isinstance(e, Sub):
        return sub(_d(e.left, v), _d(e.right, v))
    if isinstance(e, Mul):
        return add(mul(_d(e.left, v), e.right), mul(e.left, _d(e.right, v)))
    if isinstance(e, Div):
        du, dw = _d(e.left, v), _d(e.right, v)
        if _const(dw) == 0:
            return div(du, e.right)
        return div(sub(mul(du, e.right), mul(e.left, dw)), power(e.right, 2))
    if isinstance(e, Pow):
        du = _d(e.base, v)
        if _const(du) == 0:
            return ZERO
        return mul(mul(num(e.exponent), power(e.base, e.exponent - 1)), du)
    if isinstance(e, Call):
        u = e.arg
        du = _d(u, v)
        if _const(du) == 0:
            return ZERO
        outer = {
            "sin": lambda: Call("cos", u),
            "cos": lambda: neg(Call("sin", u)),
            "exp": lambda: e,
            "log": lambda: div(ONE, u),
            "sqrt": lambda: div(ONE, mul(Num(2.0), e)),
            "abs": lambda: div(u, e),
        }[e.name]()
        return mul(outer, du)
    raise TypeError(f"not an expression: {e!r}")
