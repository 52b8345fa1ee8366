from fractions import Fraction

import pytest
from hypothesis import given, settings, strategies as st

from impasse.expr import (Add, Const, DomainError, ExprSyntaxError, MissingCoordinate, Pow, Sub,
                          UnknownFunction, UnknownVariable, Var, diff, evaluate, max_order, parse,
                          simplify, substitute, to_str, variables)


def test_parse_single_variable():
    assert parse("x") == Var("x")


def test_parse_precedence_shape():
    e = parse("u1^2 + x - 1/4")
    assert isinstance(e, Sub)
    assert isinstance(e.left, Add)
    assert e.left.left == Pow(Var("u1"), Fraction(2))
    assert simplify(e.right) == Const(Fraction(1, 4))


def test_parse_irregular_example_expression():
    e = parse("u*(u1)^2 + x")
    assert variables(e) == {"x", "u", "u1"}
    assert max_order(e) == 1


def test_u0_is_u():
    assert parse("u0") == parse("u")


def test_decimal_literals_are_exact():
    assert simplify(parse("0.25")) == Const(Fraction(1, 4))
    assert evaluate(parse("0.1 + 0.2"), {"x": 0}) == Fraction(3, 10)


def test_unary_minus_binds_looser_than_power():
    assert evaluate(parse("-x^2"), {"x": 3}) == -9


@pytest.mark.parametrize("text, offset", [("x +", 3), ("(x", 2), ("2**x", 2)])
def test_syntax_error_offsets(text, offset):
    with pytest.raises(ExprSyntaxError) as info:
        parse(text)
    assert info.value.offset == offset
    assert info.value.expected


def test_unknown_variable_and_function():
    with pytest.raises(UnknownVariable):
        parse("y + 1")
    with pytest.raises(UnknownFunction):
        parse("tan(x)")


def test_eval_examples():
    assert evaluate(parse("u*(u1)^2+x"), {"x": 0, "u": 0, "u1": -1}) == 0
    assert evaluate(parse("x"), {"x": 3, "u": 7}) == 3
    assert evaluate(parse("u1^2+x-1/4"), {"x": 0, "u": 5, "u1": Fraction(1, 2)}) == 0


@pytest.mark.parametrize("text, point", [
    ("1/x", {"x": 0}), ("ln(x)", {"x": 0}), ("sqrt(x)", {"x": -1}),
    ("x^(1/2)", {"x": -4}), ("x^(-1)", {"x": 0}),
])
def test_domain_errors(text, point):
    with pytest.raises(DomainError):
        evaluate(parse(text), point)


def test_odd_root_of_negative():
    assert evaluate(parse("x^(1/3)"), {"x": -8}) == -2


def test_missing_coordinate():
    with pytest.raises(MissingCoordinate):
        evaluate(parse("x + u"), {"x": 1})


def test_diff_examples():
    assert simplify(diff(parse("u1^2+x-1/4"), "u1")) == simplify(parse("2*u1"))
    assert simplify(diff(parse("u*(u1)^2+x"), "u1")) == simplify(parse("2*u*u1"))
    assert simplify(diff(parse("sin(x)*u"), "x")) == simplify(parse("cos(x)*u"))


@pytest.mark.parametrize("text, expected", [
    ("0*u1 + x", "x"), ("(1/2)*(2*u)", "u"), ("x^1 + 0/5", "x"),
])
def test_simplify_examples(text, expected):
    assert simplify(parse(text)) == parse(expected)


def test_printer_output():
    assert to_str(parse("u1^2 + x - 1/4")) == "u1^2 + x - 1 / 4"
    assert to_str(parse("x^(1/3)")) == "x^(1/3)"


def test_substitute():
    e = substitute(parse("x*u1 + u"), {"x": parse("2*x")})
    assert evaluate(e, {"x": 1, "u": 1, "u1": 1}) == 3


# random expressions over the jet alphabet
_leaves = st.one_of(
    st.sampled_from(["x", "u", "u1", "u2"]),
    st.fractions(min_value=-5, max_value=5, max_denominator=7).map(
        lambda f: f"({f.numerator}/{f.denominator})"),
)


def _combine(children):
    return st.one_of(
        st.tuples(children, st.sampled_from("+-*"), children).map(lambda t: f"({t[0]} {t[1]} {t[2]})"),
        st.tuples(children, st.integers(0, 3)).map(lambda t: f"({t[0]})^{t[1]}"),
        children.map(lambda c: f"-({c})"),
    )


expressions = st.recursive(_leaves, _combine, max_leaves=8)
points = st.fixed_dictionaries({n: st.fractions(-3, 3, max_denominator=5) for n in ("x", "u", "u1", "u2")})


@settings(max_examples=60, deadline=None)
@given(expressions, points)
def test_print_parse_round_trip(text, point):
    e = parse(text)
    again = parse(to_str(e))
    assert evaluate(again, point) == evaluate(e, point)
    assert to_str(again) == to_str(e)


@settings(max_examples=60, deadline=None)
@given(expressions, points)
def test_simplify_preserves_value(text, point):
    e = parse(text)
    assert evaluate(simplify(e), point) == evaluate(e, point)


@settings(max_examples=40, deadline=None)
@given(expressions, points, st.sampled_from(["x", "u", "u1"]))
def test_diff_matches_difference_quotient(text, point, var):
    e = parse(text)
    d = evaluate(diff(e, var), point)
    h = 1e-6
    p = {k: float(v) for k, v in point.items()}
    hi = dict(p, **{var: p[var] + h})
    lo = dict(p, **{var: p[var] - h})
    fd = (evaluate(e, hi) - evaluate(e, lo)) / (2 * h)
    assert fd == pytest.approx(float(d), rel=1e-5, abs=1e-4)


def test_bare_exponent_then_division():
    assert parse("x^2/3") == parse("(x^2)/3")
    assert parse("x^(2/3)") == Pow(Var("x"), Fraction(2, 3))
    assert parse("x^-1") == Pow(Var("x"), Fraction(-1))
