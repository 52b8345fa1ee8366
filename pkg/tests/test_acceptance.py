"""Acceptance checks, one group per criterion; a summary line per criterion is
printed at the end of the pytest run."""
import math
import random
import time
from contextlib import contextmanager
from fractions import Fraction

import numpy as np
import pytest

from impasse.classify import (FiberKind, ImpasseClass, PointClass, VectorFieldSpec,
                              classify_impasse, classify_point, fiber_case,
                              first_order_discriminant, jacobian_at, project_field,
                              vessiot_generator)
from impasse.dynamics import (ImproperBehavior, estimate_limit_powerlaw, fit_holder_exponent,
                              improper_impasse_behavior, integrate, shoot_manifold)
from impasse.expr import evaluate, jet_names, parse, simplify
from impasse.ivp import (Case, SecondOrderIvp, detect_resonance, diagnose, impasse_parameters,
                         jacobian_spectrum, rescale_ivp, taylor_coefficients)
from impasse.jet import (ImplicitEq, QuasiLinearEq, contact_vert, formal_derivative,
                         prolong, prolong_by_derivative)

F = Fraction
QUAD = "u1^2+x-1/4"


@contextmanager
def within(seconds):
    t0 = time.perf_counter()
    yield
    assert time.perf_counter() - t0 < seconds


def ql(g, f, q):
    return QuasiLinearEq(parse(g), parse(f), q)


@pytest.mark.criterion(1, "irregular singularity of u u1^2 + x, spectrum {0, 2, -3}")
def test_criterion_1():
    eq = ImplicitEq(parse("u*u1^2 + x"), 1)
    with within(1.0):
        assert classify_point(eq, (0, 0, -1)) is PointClass.IRREGULAR_SINGULAR
        jr = jacobian_at(vessiot_generator(eq), (0, 0, -1))
        assert sorted(jr.eigenvalues) == [-3, 0, 2]
        assert all(isinstance(v, Fraction) for v in jr.eigenvalues)
        info = {e.value: e for e in jr.eigen}[2]
        assert [list(v) for v in info.vectors] == [[1, -1, 0]]
        assert info.tangent == (True,) and info.transversal == (True,)
        jf = jacobian_at(vessiot_generator(eq), (0.0, 0.0, -1.0))
        for got, want in zip(sorted(np.real(jf.eigenvalues)), (-3, 0, 2)):
            assert abs(got - want) <= 1e-12


@pytest.mark.criterion(2, "complex spectrum of (u, u - x)")
def test_criterion_2():
    eq = ql("u", "u-x", 1)
    with within(1.0):
        assert classify_impasse(eq, (0, 0)) is ImpasseClass.PROPER
        assert fiber_case(eq, (0, 0)).kind is FiberKind.NO_REAL_IRREGULAR
        assert first_order_discriminant(eq, (0, 0)) == -3
        vals = sorted(jacobian_at(project_field(eq), (0, 0)).eigenvalues, key=lambda z: z.imag)
        z = 0.5 + 0.5j * math.sqrt(3)
        assert abs(vals[0] - z.conjugate()) <= 1e-12
        assert abs(vals[1] - z) <= 1e-12


@pytest.mark.criterion(3, "nilpotent point of (x^2, u^2 + x) and vertical lines")
def test_criterion_3():
    eq = ql("x^2", "u^2+x", 1)
    with within(5.0):
        assert fiber_case(eq, (0, 0)).kind is FiberKind.NONE_GENERICITY3
        assert list(jacobian_at(project_field(eq), (0, 0)).eigenvalues) == [0, 0]
        for u0 in (1, -1):
            assert improper_impasse_behavior(eq, (0, u0)) is ImproperBehavior.VERTICAL_LINE


@pytest.mark.criterion(4, "dichotomy example: both branches of x u'' = u'^2 + x - 1/4")
def test_criterion_4():
    with within(1.0):
        neg = diagnose(SecondOrderIvp("x", QUAD, 0, 0, F(-1, 2)))
    assert neg.case is Case.NEGATIVE_PRODUCT
    assert neg.verdict == "unique two-sided smooth solution"
    with within(1.0):
        crit = diagnose(SecondOrderIvp("x", QUAD, 0, 0, F(1, 2)))
    assert crit.case is Case.CRITICAL_RESONANCE
    assert (crit.k, crit.resonance_parameter) == (1, 1)
    assert "no solution is 2 times differentiable" in crit.solution_family.notes[0]


@pytest.mark.criterion(5, "resonance family (a u1)^2 + x - b^2")
def test_criterion_5():
    with within(1.0):
        for b, k in ((F(1, 2), 1), (F(1), 2), (F(3, 2), 3), (F("0.7"), None)):
            ivp = SecondOrderIvp("x", f"u1^2 + x - ({b.numerator}/{b.denominator})^2", 0, 0, b)
            p = impasse_parameters(ivp)
            assert p.proper
            assert detect_resonance(p.delta, p.gamma).k == k
            assert detect_resonance(p.delta, p.gamma).exact


@pytest.mark.criterion(6, "Taylor chain against the shot manifold")
def test_criterion_6():
    ivp = SecondOrderIvp("x", QUAD, 0, 0, F(-1, 2))
    with within(10.0):
        assert taylor_coefficients(ivp, 3) == [F(1, 2), F(1, 6)]
        plus = shoot_manifold(ivp, 2, 1, x_extent=0.01)
        minus = shoot_manifold(ivp, 2, -1, x_extent=0.01)
        h = 1e-3
        c2 = (plus.interpolate("u", h)[0] + minus.interpolate("u", -h)[0]) / h ** 2
        c3 = (plus.interpolate("u1", h)[0] + 1.0 + minus.interpolate("u1", -h)[0]) / h ** 2
        assert abs(c2 - 0.5) <= 1e-4
        assert abs(c3 - 1 / 6) <= 1e-4

        cs = [0, F(-1, 2)] + taylor_coefficients(ivp, 4)
        P = np.polynomial.Polynomial([float(c) / math.factorial(i) for i, c in enumerate(cs)])
        xs = 2.0 ** -np.arange(3, 10)
        res = [abs(x * P.deriv(2)(x) - (P.deriv()(x) ** 2 + x - 0.25)) for x in xs]
        assert np.polyfit(np.log(xs), np.log(res), 1)[0] >= 2.9


@pytest.mark.criterion(7, "power-law family of x u'' = (3/2) u' + x")
def test_criterion_7():
    ivp = SecondOrderIvp("x", "(3/2)*u1+x", 0, 0, 0)
    with within(10.0):
        d = diagnose(ivp)
        assert d.case is Case.POSITIVE_PRODUCT
        assert d.k == 2 and d.limit_descriptor.exponent == F(1, 2)
        eps = 1e-4
        for C in (2.0, -1.0):
            tr = shoot_manifold(ivp, 2, 1, eps=eps, offset=C * eps ** 1.5, check=False,
                                x_extent=0.05)
            x, u1 = tr.graph("u1", 0.0, 1)
            sel = x > 1e-4
            Cfit = np.median((u1[sel] + 2 * x[sel]) / x[sel] ** 1.5)
            # the member is u' = C x^(3/2) - 2x
            assert np.max(np.abs(u1[sel] - (Cfit * x[sel] ** 1.5 - 2 * x[sel]))) < 1e-8
            est = estimate_limit_powerlaw(tr, 2, -2.0, 0.5, 0.0)
            assert abs(est.value - 1.5 * Cfit) <= 0.01 * abs(1.5 * Cfit)
            assert abs(fit_holder_exponent(tr, 2, -2.0, 0.0) - 0.5) <= 0.025


@pytest.mark.criterion(8, "gamma = 0: closed form of the model system, m = 3")
def test_criterion_8():
    with within(5.0):
        for dsign in (1, -1):
            fld = VectorFieldSpec(("x", "u", "u1"),
                                  (parse("x"), parse("x*u1"), parse(f"{dsign}*u1^3")))
            c = 4.0
            tr = integrate(fld, [1.0, 0.0, c ** -0.5], 1.0, 1e-12)
            v = (c - 2 * dsign * tr.ts) ** -0.5
            assert tr.ts[-1] == pytest.approx(1.0)
            assert np.max(np.abs(tr.column("u1") - v)) <= 1e-6
            assert np.max(np.abs(tr.column("x") - np.exp(tr.ts))) <= 1e-6
        d = diagnose(SecondOrderIvp("x", "-2*u1^3", 0, 3, 0))
        assert d.case is Case.GAMMA_ZERO
        assert d.solution_family.count == "one"
        assert d.solution_family.sidedness == "two_sided"
        assert d.solution_family.regularity == "Smooth"


@pytest.mark.criterion(9, "smooth resonance of x u'' = u'")
def test_criterion_9():
    a = 0.75
    with within(5.0):
        d = diagnose(SecondOrderIvp("x", "u1", 0, F(3, 4), 0))
        assert d.case is Case.SMOOTH_RESONANCE and d.resonance_parameter == 0
        fld = project_field(SecondOrderIvp("x", "u1", 0, F(3, 4), 0).eq)
        for b in (-1.3, 0.4, 2.0):
            for xs in (1e-5, -1e-5):
                # x' = x carries both sides away from the impasse point
                tr = integrate(fld, [xs, a + b * xs ** 2, 2 * b * xs], 30.0, 1e-12,
                               bounds=[(-0.5, 0.5), (-np.inf, np.inf), (-np.inf, np.inf)])
                x = tr.column("x")
                assert np.max(np.abs(x)) >= 0.4
                assert np.max(np.abs(tr.column("u") - (a + b * x ** 2))) <= 1e-6


def _random_poly(rng, names, terms=4, degree=2):
    parts = []
    for _ in range(terms):
        c = F(rng.randint(-4, 4), rng.randint(1, 3))
        mono = "*".join(f"{rng.choice(names)}^{rng.randint(0, degree)}" for _ in range(2))
        parts.append(f"({c.numerator}/{c.denominator})*{mono}")
    return " + ".join(parts)


def _point(rng, names, exact=True):
    if exact:
        return {n: F(rng.randint(-6, 6), rng.randint(1, 4)) for n in names}
    return {n: rng.uniform(-1.5, 1.5) for n in names}


@pytest.mark.criterion(10, "property suites")
def test_criterion_10_quasi_linearity_of_formal_derivative():
    rng = random.Random(101)
    for _ in range(50):
        q = rng.randint(1, 3)
        Fx = parse(_random_poly(rng, list(jet_names(q))))
        D = formal_derivative(Fx, q)
        top = f"u{q + 1}"
        dvert = contact_vert(Fx, q)
        p = _point(rng, jet_names(q + 1))
        s = F(rng.randint(-5, 5), rng.randint(1, 3))
        lifted = dict(p, **{top: p[top] + s})
        assert evaluate(D, lifted) - evaluate(D, p) == s * evaluate(dvert, p)


@pytest.mark.criterion(10, "property suites")
def test_criterion_10_prolongation_matches_repeated_derivative():
    rng = random.Random(102)
    eqs = []
    for _ in range(5):
        g = f"x + ({rng.randint(-3, 3)}/{rng.randint(1, 3)})*x^2"
        eqs.append(QuasiLinearEq(parse(g), parse(_random_poly(rng, ["x", "u", "u1"], 3, 3)), 2))
    checked = 0
    for eq in eqs:
        Fk = eq.as_implicit()
        for k in range(3, 7):
            Fk = prolong_by_derivative(Fk)
            Pk = prolong(eq, k).F
            for _ in range(5):
                p = _point(rng, jet_names(k), exact=False)
                a, b = evaluate(Pk, p), evaluate(Fk.F, p)
                assert abs(a - b) <= 1e-10 * max(1.0, abs(b))
                checked += 1
    assert checked == 100


@pytest.mark.criterion(10, "property suites")
def test_criterion_10_contact_property():
    rng = random.Random(103)
    for q in range(1, 6):
        names = list(jet_names(q - 1))
        Y = project_field(QuasiLinearEq(parse(_random_poly(rng, names)),
                                        parse(_random_poly(rng, names)), q))
        for _ in range(10):
            p = _point(rng, Y.names)
            vx = evaluate(Y.components[0], p)
            for i in range(q - 1):
                assert evaluate(Y.components[i + 1], p) == p[Y.names[i + 2]] * vx


@pytest.mark.criterion(10, "property suites")
def test_criterion_10_scaling_invariance():
    eq = ImplicitEq(parse("u*u1^2 + x"), 1)
    cases = [("u", "u-x", (0, 0)), ("x^2", "u^2+x", (0, 0)), ("u", "x", (0, 0)),
             ("u", "u1^2-1", (0, 0, 1)), ("x", QUAD, (0, 0, F(1, 2))), ("u", "1", (0, 0))]
    for lam in (F(-2), F(1, 3), F(9, 4)):
        c = parse(f"({lam.numerator}/{lam.denominator})")
        scaled = ImplicitEq(simplify(c * eq.F), 1)
        for p in [(0, 0, -1), (0, 4, 0), (1, -1, 1)]:
            assert classify_point(scaled, p) is classify_point(eq, p)
        for g, f, p in cases:
            e1 = ql(g, f, len(p) - 1)
            e2 = QuasiLinearEq(simplify(c * e1.g), simplify(c * e1.f), e1.order)
            k1 = classify_impasse(e1, p)
            assert classify_impasse(e2, p) is k1
            if k1 is ImpasseClass.PROPER:
                assert fiber_case(e2, p).kind is fiber_case(e1, p).kind
        for c1 in (F(-1, 2), F(1, 2)):
            i1 = SecondOrderIvp("x", QUAD, 0, 0, c1)
            i2 = SecondOrderIvp(simplify(c * parse("x")), simplify(c * parse(QUAD)), 0, 0, c1)
            assert diagnose(i2).case is diagnose(i1).case


@pytest.mark.criterion(10, "property suites")
def test_criterion_10_rescaling_covariance():
    rng = random.Random(104)
    for _ in range(10):
        gamma = rng.uniform(-4, 4)
        b, c = rng.uniform(-2, 2), rng.uniform(-2, 2)
        ivp = SecondOrderIvp(f"x + {rng.uniform(-1, 1)!r}*x^2",
                             f"{gamma!r}*u1 + {b!r}*x + {c!r}*u*u1", 0.0, 0.0, 0.0)
        alpha = rng.choice([-1, 1]) * rng.uniform(0.2, 5)
        p, q = impasse_parameters(ivp), impasse_parameters(rescale_ivp(ivp, alpha))
        assert abs(q.delta - p.delta / alpha) <= 1e-12 * abs(p.delta / alpha)
        assert abs(q.gamma - p.gamma / alpha) <= 1e-12 * max(1e-300, abs(p.gamma / alpha))


@pytest.mark.criterion(10, "property suites")
def test_criterion_10_eigenvector_identity():
    rng = random.Random(105)
    for _ in range(6):
        gamma = F(rng.choice([-9, -5, -1, 1, 3, 7, 11]), 2)
        cs = [F(rng.randint(-3, 3), rng.randint(1, 3)) for _ in range(3)]
        f = (f"({gamma.numerator}/{gamma.denominator})*u1 + ({cs[0].numerator}/{cs[0].denominator})*x"
             f" + ({cs[1].numerator}/{cs[1].denominator})*u*u1"
             f" + ({cs[2].numerator}/{cs[2].denominator})*x*u1^2")
        ivp = SecondOrderIvp("x - x^2/2", f, 0, 0, 0)
        taylor = taylor_coefficients(ivp, 6)
        for q in range(2, 7):
            last = jacobian_spectrum(ivp, q).delta_eigenvector[-1]
            assert isinstance(last, Fraction)
            assert last == taylor[q - 2]
