import csv
import math
from fractions import Fraction

import numpy as np
import pytest

from impasse.classify import NonFiniteField, VectorFieldSpec, project_field
from impasse.dynamics import (G_SIGN_CHANGE, ImproperBehavior, InsufficientApproach,
                              NotImproperImpasse, analyze_improper, classify_planar,
                              contact_residual, estimate_limit_powerlaw, estimate_limit_resonant,
                              find_stationary, fit_holder_exponent, improper_impasse_behavior,
                              integrate, portrait, shoot_manifold, trace_resonant_member)
from impasse.expr import parse
from impasse.ivp import ResonanceBelow, SecondOrderIvp
from impasse.jet import QuasiLinearEq

F = Fraction
QUAD = "u1^2+x-1/4"


def field(*comps, names=("x", "u", "u1")):
    return VectorFieldSpec(names[:len(comps)], tuple(parse(c) for c in comps))


def test_linear_field_accuracy():
    tr = integrate(field("1", "u1", "-u", names=("x", "u", "u1")), [0.0, 0.0, 1.0], 3.0, 1e-11)
    x = tr.column("x")
    assert np.max(np.abs(tr.column("u") - np.sin(x))) < 1e-9
    assert tr.meta["status"] == "tmax"


def test_zero_field_is_constant():
    tr = integrate(field("0", "0"), [0.5, 2.0], 1.0)
    assert np.all(tr.ys == [0.5, 2.0])


def test_nonfinite_start_raises():
    with pytest.raises(NonFiniteField):
        integrate(field("1", "1/x"), [0.0, 1.0], 1.0)


def test_trajectory_arrays_are_read_only():
    tr = integrate(field("1", "u"), [0.0, 1.0], 0.1)
    with pytest.raises(ValueError):
        tr.ys[0, 0] = 3.0


def test_sign_change_event_located():
    # Y = (u, 1): g = u crosses zero at t = 1/2
    eq = QuasiLinearEq(parse("u"), parse("1"), 1)
    tr = integrate(project_field(eq), [0.0, -0.5], 1.0, 1e-10, sign_of=eq.g)
    evs = [e for e in tr.events if e.kind == G_SIGN_CHANGE]
    assert len(evs) == 1
    assert evs[0].t == pytest.approx(0.5, abs=1e-8)


def test_interpolate_and_csv(tmp_path):
    tr = integrate(field("1", "u"), [0.0, 1.0], 1.0, 1e-11)
    assert tr.interpolate("u", 0.5)[0] == pytest.approx(math.exp(0.5), rel=1e-9)
    p = tmp_path / "t.csv"
    tr.to_csv(p)
    rows = list(csv.reader(open(p)))
    assert rows[0] == ["t", "x", "u", "event"]
    assert len(rows) == len(tr) + 1
    assert float(rows[-1][2]) == tr.ys[-1, 1]


def test_reversed_trajectory():
    tr = integrate(field("1", "u"), [0.0, 1.0], 1.0)
    rv = tr.reversed()
    assert np.all(np.diff(rv.ts) > 0)
    assert np.all(rv.ys[0] == tr.ys[-1])


def test_shoot_negative_product_reproduces_taylor():
    ivp = SecondOrderIvp("x", QUAD, 0, 0, F(-1, 2))
    plus = shoot_manifold(ivp, 2, 1, x_extent=0.01)
    minus = shoot_manifold(ivp, 2, -1, x_extent=0.01)
    assert plus.meta["stable"] and minus.meta["stable"]
    h = 1e-3
    up, um = plus.interpolate("u", h)[0], minus.interpolate("u", -h)[0]
    u1p, u1m = plus.interpolate("u1", h)[0], minus.interpolate("u1", -h)[0]
    assert (up - 2 * 0 + um) / h ** 2 == pytest.approx(0.5, abs=1e-4)
    assert (u1p - 2 * -0.5 + u1m) / h ** 2 == pytest.approx(1 / 6, abs=1e-4)
    assert contact_residual(plus) < 1e-8


def test_shoot_rejects_resonance_below():
    with pytest.raises(ResonanceBelow):
        shoot_manifold(SecondOrderIvp("x", "u1", 0, 0, 0), 3, 1)


def test_positive_product_family_limits():
    ivp = SecondOrderIvp("x", "(3/2)*u1+x", 0, 0, 0)
    C = 2.0
    eps = 1e-4
    tr = shoot_manifold(ivp, 2, 1, eps=eps, offset=C * eps ** 1.5,
                        check=False, x_extent=0.05)
    x, u1 = tr.graph("u1", 0.0, 1)
    sel = x > 1e-3
    Cfit = np.mean((u1[sel] + 2 * x[sel]) / x[sel] ** 1.5)
    est = estimate_limit_powerlaw(tr, 2, -2.0, 0.5, 0.0)
    assert est.value == pytest.approx(1.5 * Cfit, rel=1e-2)
    assert fit_holder_exponent(tr, 2, -2.0, 0.0) == pytest.approx(0.5, abs=0.025)


def test_smooth_member_has_no_holder_signal():
    ivp = SecondOrderIvp("x", "(3/2)*u1+x", 0, 0, 0)
    tr = shoot_manifold(ivp, 2, 1, eps=1e-4, check=False, x_extent=0.05)
    with pytest.raises(InsufficientApproach):
        fit_holder_exponent(tr, 2, -2.0, 0.0)
    assert fit_holder_exponent(tr, 1, 0.0, 0.0) >= 0.95


@pytest.mark.parametrize("eta", [0.5, -2.0])
def test_resonant_member_recovers_eta(eta):
    ivp = SecondOrderIvp("x", QUAD, 0, 0, F(1, 2))
    tr = trace_resonant_member(ivp, 1, eta)
    est = estimate_limit_resonant(tr, 1, 0.5, 1.0, 0.0)
    assert est.value == pytest.approx(eta, rel=1e-2)


def test_smooth_resonance_trace_is_degenerate():
    ivp = SecondOrderIvp("x", "u1", 0, 1, 0)
    b = 0.7
    xs = 1e-6
    tr = integrate(project_field(ivp.eq), [xs, 1 + b * xs ** 2, 2 * b * xs], 5.0, 1e-12,
                   bounds=[(0, 0.02), (-np.inf, np.inf), (-np.inf, np.inf)])
    x = tr.column("x")
    assert np.max(np.abs(tr.column("u") - (1 + b * x ** 2))) < 1e-12
    est = estimate_limit_resonant(tr, 1, 0.0, 1.0, 0.0, A=1.0)
    assert not est.converged
    assert est.degenerate


@pytest.mark.parametrize("g, f, rho, behavior", [
    ("u", "1", (0, 0), ImproperBehavior.SIGN_CHANGE_PLUS),
    ("u^2", "1", (0, 0), ImproperBehavior.NO_SIGN_CHANGE),
    ("x^2", "u^2+x", (0, 1), ImproperBehavior.VERTICAL_LINE),
    ("x^2", "u^2+x", (0, -1), ImproperBehavior.VERTICAL_LINE),
])
def test_improper_behaviors(g, f, rho, behavior):
    eq = QuasiLinearEq(parse(g), parse(f), 1)
    assert improper_impasse_behavior(eq, rho) is behavior


def test_improper_sign_change_event():
    a = analyze_improper(QuasiLinearEq(parse("u"), parse("1"), 1), (0, 0))
    assert len([e for e in a.events if e.kind == G_SIGN_CHANGE]) == 1
    assert a.g_before < 0 < a.g_after


def test_improper_requires_improper_point():
    with pytest.raises(NotImproperImpasse):
        analyze_improper(QuasiLinearEq(parse("u"), parse("u"), 1), (0, 0))


@pytest.mark.parametrize("J, kind", [
    ([[1, 0], [0, -1]], "saddle"), ([[0, 1], [-1, 0]], "centre"), ([[-1, 2], [-2, -1]], "focus"),
    ([[0, 1], [0, 0]], "nilpotent"), ([[1, 1], [0, 1]], "one-tangent node"),
    ([[2, 0], [0, 2]], "star node"), ([[1, 0], [0, 0]], "semi-hyperbolic"), ([[1, 0], [0, 3]], "node"),
])
def test_classify_planar(J, kind):
    assert classify_planar(J) == kind


def test_quadratic_subsystem_stationary_points():
    fld = field("x", "u1^2+x-1/4", names=("x", "u1"))
    pts = {sp.point: sp for sp in find_stationary(fld, ((-1, 1), (-1, 1)))}
    assert set(pts) == {(0, F(-1, 2)), (0, F(1, 2))}
    assert pts[(0, F(-1, 2))].kind == "saddle"
    assert pts[(0, F(1, 2))].kind == "one-tangent node"
    assert all(sp.exact for sp in pts.values())


def test_nilpotent_point_found_once():
    fld = field("x^2", "u^2+x", names=("x", "u"))
    pts = find_stationary(fld, ((-1, 1), (-1, 1)))
    assert len(pts) == 1
    assert pts[0].kind == "nilpotent"


def test_linear_saddle_separatrices_stay_on_axes():
    fld = field("x", "-u", names=("x", "u"))
    pr = portrait(fld, ((-1, 1), (-1, 1)), seeds=4)
    seps = [t for t in pr if t.meta.get("separatrix")]
    assert len(seps) == 4
    for t in seps:
        on_axis = np.minimum(np.abs(t.ys[:, 0]), np.abs(t.ys[:, 1]))
        assert np.max(on_axis) == 0.0


def test_portrait_workers_are_deterministic():
    fld = field("u", "u-x", names=("x", "u"))
    a = portrait(fld, ((-1, 1), (-1, 1)), seeds=4)
    b = portrait(fld, ((-1, 1), (-1, 1)), seeds=4, workers=3)
    assert len(a) == len(b)
    for s, t in zip(a, b):
        assert np.array_equal(s.ys, t.ys)


def _bessel_u1(x, C):
    sp = pytest.importorskip("scipy.special")
    if x[0] > 0:
        s = np.sqrt(x)
        return 0.5 - s * (C * sp.y0(2 * s) + sp.j0(2 * s)) / (C * sp.y1(2 * s) + sp.j1(2 * s))
    s = np.sqrt(-x)
    return 0.5 + s * (C * sp.k0(2 * s) - sp.i0(2 * s)) / (C * sp.k1(2 * s) + sp.i1(2 * s))


@pytest.mark.parametrize("eta", [0.5, 2.0, -1.0])
def test_resonant_member_matches_bessel_closed_form(eta):
    ivp = SecondOrderIvp("x", QUAD, 0, 0, F(1, 2))
    tr = trace_resonant_member(ivp, 1, eta)
    est = float(estimate_limit_resonant(tr, 1, 0.5, 1.0, 0.0))
    ge = np.euler_gamma
    if eta > 0:
        # the small-x expansion of the closed form fixes this sign of C
        C = -math.pi / (2 * ge + math.log(est))
    else:
        C = 2 / (math.log(-1 / est) - 2 * ge)
    x, u1 = tr.graph("u1", 0.0, 1 if eta > 0 else -1)
    sel = (np.abs(x) >= 1e-4) & (np.abs(x) <= 1e-2)
    assert np.max(np.abs(u1[sel] - _bessel_u1(x[sel], C))) < 1e-4
