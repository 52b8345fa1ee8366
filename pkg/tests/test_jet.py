import random
from fractions import Fraction

import pytest

from impasse.expr import Var, diff, evaluate, parse, simplify
from impasse.jet import (ImplicitEq, JetPoint, QuasiLinearEq, UnsupportedShape, compute_h,
                         contact_trans, contact_vert, formal_derivative, h_value, prolong,
                         prolong_by_derivative)


def same(a, b, names=("x", "u", "u1", "u2", "u3", "u4", "u5", "u6"), trials=8):
    rng = random.Random(7)
    for _ in range(trials):
        p = {n: Fraction(rng.randint(-9, 9), rng.randint(1, 4)) for n in names}
        if evaluate(a, p) != evaluate(b, p):
            return False
    return True


def test_jetpoint_basics():
    p = JetPoint([0, 1, Fraction(1, 2)])
    assert p.order == 1
    assert p.names == ("x", "u", "u1")
    assert p["u1"] == Fraction(1, 2)
    assert p.is_exact
    assert not p.as_float().is_exact


def test_jetpoint_from_mapping():
    p = JetPoint.from_mapping({"x": 0, "u0": 2, "u1": 3})
    assert p.coords == (0, 2, 3)
    with pytest.raises(ValueError):
        JetPoint.from_mapping({"x": 0, "u1": 3})


def test_contact_trans_examples():
    assert same(contact_trans(parse("u*(u1)^2+x"), 1), parse("1 + u1^3"))
    assert same(contact_trans(parse("u1^2+x-1/4"), 1), parse("1"))
    assert same(contact_trans(parse("x"), 0), parse("1"))


def test_contact_vert_examples():
    assert same(contact_vert(parse("u*(u1)^2+x"), 1), parse("2*u*u1"))
    assert same(contact_vert(parse("u1^2+x-1/4"), 0), parse("0"))
    assert same(contact_vert(parse("x*u2"), 2), parse("x"))


def test_formal_derivative_examples():
    assert same(formal_derivative(parse("x*u2 - u1^2 - x + 1/4"), 2),
                parse("x*u3 + u2 - 2*u1*u2 - 1"))
    assert same(formal_derivative(parse("u"), 0), parse("u1"))
    assert same(formal_derivative(parse("u*(u1)^2+x"), 1), parse("(1+u1^3) + 2*u*u1*u2"))


def test_formal_derivative_chain_rule():
    # D_x F along a polynomial curve equals d/dx of F evaluated on the curve
    F = parse("x*u1^2 - u*u2 + x^2")
    curve = {"x": parse("x"), "u": parse("x^3 + 2*x"), "u1": parse("3*x^2 + 2"),
             "u2": parse("6*x"), "u3": parse("6")}
    from impasse.expr import substitute
    lhs = substitute(formal_derivative(F, 2), curve)
    rhs = diff(substitute(F, curve), "x")
    assert same(lhs, rhs, names=("x",))


def test_compute_h_examples():
    eq = QuasiLinearEq(parse("x"), parse("u1^2+x-1/4"), 2)
    assert simplify(compute_h(eq, 3)) == parse("1")
    assert same(compute_h(eq, 4), parse("2*u2^2"))
    assert simplify(compute_h(QuasiLinearEq(parse("x"), parse("u1"), 2), 3)) == parse("0")


def test_compute_h_rejects_other_shapes():
    with pytest.raises(UnsupportedShape):
        compute_h(QuasiLinearEq(parse("u"), parse("u1"), 2), 3)


def test_prolong_examples():
    eq = QuasiLinearEq(parse("x"), parse("u1^2+x-1/4"), 2)
    assert same(prolong(eq, 3).F, parse("x*u3 + (1 - 2*u1)*u2 - 1"))
    lin = QuasiLinearEq(parse("x"), parse("u1"), 2)
    assert same(prolong(lin, 2).F, parse("x*u2 - u1"))
    assert same(prolong(lin, 3).F, parse("x*u3"))


@pytest.mark.parametrize("f", ["u1^2+x-1/4", "x*u1^3 - u + 2*x^2", "u*u1 + x"])
@pytest.mark.parametrize("g", ["x", "x - x^2"])
def test_prolong_matches_repeated_derivative(g, f):
    eq = QuasiLinearEq(parse(g), parse(f), 2)
    F = eq.as_implicit()
    for k in range(3, 6):
        F = prolong_by_derivative(F)
        assert same(prolong(eq, k).F, F.F)


@pytest.mark.parametrize("f", ["u1^2+x-1/4", "x*u1^3 - u + 2*x^2", "sin(u1) + exp(x)*u"])
def test_series_h_matches_symbolic(f):
    eq = QuasiLinearEq(parse("x + x^2/3"), parse(f), 2)
    rng = random.Random(3)
    for k in range(3, 7):
        pt = [Fraction(rng.randint(-4, 4), 3) for _ in range(k)]
        sym = evaluate(compute_h(eq, k), dict(zip(("x", "u", "u1", "u2", "u3", "u4", "u5"), pt)))
        num = h_value(eq, k, pt)
        assert float(num) == pytest.approx(float(sym), rel=1e-12, abs=1e-12)
        if "sin" not in f:
            assert num == sym


def test_eq_order_checks():
    with pytest.raises(ValueError):
        ImplicitEq(parse("u3"), 2)
    assert QuasiLinearEq(parse("x"), parse("u1"), 2).as_implicit().order == 2
