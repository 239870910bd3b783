import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from asymptote import expr as E
from asymptote.errors import DomainError, DSLSyntaxError, IndexOutOfRange, UnknownIdentifier


def ev(src, t=1.0, x=(), alpha=(), n=2):
    return E.evaluate(E.parse(src, n), t, x, alpha)


# -- parsing -------------------------------------------------------------------

def test_parse_shape_of_riccati_family():
    e = E.parse("1/t + a1/t^2", 1)
    assert e == E.Add(E.Div(E.Num(1.0), E.T), E.Div(E.a_(1), E.Pow(E.T, 2.0)))


def test_unary_minus_binds_looser_than_power():
    e = E.parse("-t^(-3) * x1^3", 2)
    assert isinstance(e, E.Mul)
    assert e.left == E.Neg(E.Pow(E.T, -3.0))
    assert e.right == E.Pow(E.x_(1), 3.0)
    assert E.parse("-2^2", 1).evaluate(1.0) == -4.0


def test_precedence_and_associativity():
    assert ev("2 - 3 - 4") == -5
    assert ev("24 / 4 / 2") == 3
    assert ev("2 + 3 * 4 ^ 2") == 50
    assert ev("(2 + 3) * 4") == 20


def test_index_out_of_range():
    with pytest.raises(IndexOutOfRange) as info:
        E.parse("x3", 2)
    assert info.value.offset == 0
    with pytest.raises(IndexOutOfRange):
        E.parse("1 + x0", 2)
    with pytest.raises(IndexOutOfRange):
        E.parse("a2", 1)


def test_unknown_identifier_and_syntax_offsets():
    with pytest.raises(UnknownIdentifier) as info:
        E.parse("1 + y1", 1)
    assert info.value.offset == 4
    with pytest.raises(DSLSyntaxError) as info:
        E.parse("1 + * t", 1)
    assert info.value.offset == 4
    with pytest.raises(DSLSyntaxError) as info:
        E.parse("sin(t", 1)
    assert info.value.offset == 5
    with pytest.raises(DSLSyntaxError):
        E.parse("   ", 1)
    with pytest.raises(DSLSyntaxError):
        E.parse("t ^ x1", 1)  # exponents must be numeric
    with pytest.raises(DSLSyntaxError):
        E.parse("t $ 2", 1)
    with pytest.raises(ValueError):
        E.parse("t", 0)


# -- evaluation ----------------------------------------------------------------

def test_eval_examples():
    assert ev("t^2", t=3) == 9
    assert ev("a1*cos(t)+a2*sin(t)", t=0.0, alpha=(2, 5)) == 2
    assert ev("1/t + a1/t^2", t=10, alpha=(1,), n=1) == pytest.approx(0.11, rel=1e-15)


def test_eval_vectorised_matches_scalar():
    e = E.parse("exp(-t) * sin(x1) + sqrt(t) / (1 + a1^2)", 1)
    ts = np.linspace(0.5, 5, 7)
    vec = E.evaluate(e, ts, (np.full(7, 0.3),), (2.0,))
    for t, v in zip(ts, vec):
        assert E.evaluate(e, t, (0.3,), (2.0,)) == pytest.approx(v, rel=1e-15)


@pytest.mark.parametrize("src, bad", [
    ("log(t - 2)", "log(t - 2)"),
    ("sqrt(-t)", "sqrt(-t)"),
    ("1 / (t - 1)", "1 / (t - 1)"),
    ("(t - 1)^(-2)", "(t - 1)^(-2)"),
    ("(-t)^0.5", "(-t)^0.5"),
])
def test_domain_errors_name_the_subexpression(src, bad):
    with pytest.raises(DomainError) as info:
        ev(src, t=1.0)
    assert info.value.subexpression == bad


def test_eval_is_pure():
    e = E.parse("exp(sin(x1 * t)) / (1 + a1^2) - log(t) * x2^3", 2)
    first = E.evaluate(e, 1.7, (0.3, -1.1), (0.9, 0.0))
    for _ in range(5):
        assert E.evaluate(e, 1.7, (0.3, -1.1), (0.9, 0.0)) == first
    fn = E.compile_scalar(e)
    assert fn(1.7, (0.3, -1.1), (0.9, 0.0)) == pytest.approx(first, rel=1e-15)


def test_compiled_tuple_agrees_with_tree_walk():
    exprs = [E.parse(s, 2) for s in ("x2", "-x1 + t^(-3) * x1^3")]
    fn = E.compile_tuple(exprs)
    got = fn(2.0, (0.5, -0.25), ())
    want = [E.evaluate(e, 2.0, (0.5, -0.25)) for e in exprs]
    assert list(got) == pytest.approx(want, rel=1e-15)


# -- differentiation -----------------------------------------------------------

@pytest.mark.parametrize("src, var, expect, point", [
    ("1/t", "t", "-1/t^2", dict(t=2.5)),
    ("sin(x1)", "x1", "cos(x1)", dict(t=1.0, x=(0.7,))),
    ("a1^2 / t^4", "a1", "2*a1/t^4", dict(t=1.5, alpha=(0.8,))),
])
def test_derivative_examples(src, var, expect, point):
    d = E.differentiate(E.parse(src, 1), var)
    ref = E.parse(expect, 1)
    args = dict(x=(0.0,), alpha=(0.0,))
    args.update(point)
    assert E.evaluate(d, **args) == pytest.approx(E.evaluate(ref, **args), rel=1e-14)


def test_derivative_of_independent_variable_is_zero():
    assert E.differentiate(E.parse("t^3 + a1", 1), "x1") == E.ZERO


# -- random-expression properties ----------------------------------------------

_leaf = st.sampled_from(["t", "x1", "x2", "a1", "a2", "0.5", "2", "1.5"])


def _grow(children):
    unary = st.one_of(
        children.map(lambda a: f"sin({a})"),
        children.map(lambda a: f"cos({a})"),
        children.map(lambda a: f"exp(sin({a}))"),
        children.map(lambda a: f"log(2 + cos({a}))"),
        children.map(lambda a: f"sqrt(1 + ({a})^2)"),
        children.map(lambda a: f"(1 + ({a})^2)^(-1.5)"),
        children.map(lambda a: f"-({a})"),
        st.tuples(children, st.sampled_from(["2", "3"])).map(lambda p: f"({p[0]})^{p[1]}"),
    )
    binary = st.tuples(children, st.sampled_from(["+", "-", "*"]), children).map(
        lambda p: f"({p[0]}) {p[1]} ({p[2]})")
    quotient = st.tuples(children, children).map(lambda p: f"({p[0]}) / (2 + sin({p[1]}))")
    return st.one_of(unary, binary, quotient)


safe_exprs = st.recursive(_leaf, _grow, max_leaves=8)
coords = st.floats(-1.5, 1.5, allow_nan=False)


@settings(max_examples=200, deadline=None)
@given(src=safe_exprs, var=st.sampled_from(["t", "x1", "x2", "a1", "a2"]),
       t=st.floats(0.5, 2.5), x1=coords, x2=coords, a1=coords, a2=coords)
def test_symbolic_derivative_matches_central_difference(src, var, t, x1, x2, a1, a2):
    e = E.parse(src, 2)
    d = E.differentiate(e, var)
    point = {"t": t, "x1": x1, "x2": x2, "a1": a1, "a2": a2}

    def at(p):
        return E.evaluate(e, p["t"], (p["x1"], p["x2"]), (p["a1"], p["a2"]))

    v = point[var]
    h = max(abs(v), 1.0) * 2.0 ** -17
    hi, lo = dict(point), dict(point)
    hi[var], lo[var] = v + h, v - h
    fd = (at(hi) - at(lo)) / (2 * h)
    sym = E.evaluate(d, t, (x1, x2), (a1, a2))
    assert math.isfinite(sym)
    assert abs(sym - fd) / (1 + abs(sym)) <= 1e-6


@settings(max_examples=200, deadline=None)
@given(src=safe_exprs)
def test_print_is_idempotent_and_round_trips(src):
    e = E.parse(src, 2)
    text = E.to_text(e)
    again = E.parse(text, 2)
    assert again == e
    assert E.to_text(again) == text


@settings(max_examples=50, deadline=None)
@given(src=safe_exprs, var=st.sampled_from(["t", "x1", "a2"]))
def test_derivative_prints_and_reparses(src, var):
    d = E.differentiate(E.parse(src, 2), var)
    assert E.parse(E.to_text(d), 2) == d
