"""Singular initial value problems ``g(x) u'' = f(x, u, u')``, ``u(y) = c0``,
``u'(y) = c1`` at a simple zero y of g.

The two scalars ``delta = g'(y)`` and ``gamma = f_u1(y, c0, c1)`` govern the
local picture: the sign of their product, whether ``gamma`` is an integer
multiple ``k delta`` (a resonance at order k) and, at a resonance, whether
the remainder ``h_(k+2)`` vanishes on the unique chain of irregular
singularities above the initial point.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from typing import Optional

from .expr import (Const, Expr, ExprError, Var, as_expr, coord_name, diff, evaluate,
                   jet_names, simplify, substitute, term_scale, variables)
from .jet import (JetPoint, QuasiLinearEq, UnsupportedShape, compute_h, h_value,
                  prolong_coefficient)
from .classify import (TAU_ON, FiberKind, NotProperImpasse, VectorFieldSpec, fiber_case,
                       is_zero, jacobian_at, reduced_form_warning)

TAU_RES = 1e-9
NEAR_RES = 1e-4
KMAX = 20


class NotAZero(ExprError):
    pass


class NotSimpleZero(ExprError):
    pass


class NotProper(ExprError):
    pass


class ResonanceEncountered(ArithmeticError):
    """The Taylor recursion hit a vanishing divisor ``(q-1) delta - gamma``."""

    def __init__(self, k: int, partial: list):
        self.k = k
        self.partial = list(partial)
        super().__init__(f"resonance at order {k}; chain known through c{k}")


class ResonanceBelow(ArithmeticError):
    def __init__(self, k: int):
        self.k = k
        super().__init__(f"resonance at order {k} below the requested order")


def _num(v):
    """Normalize user input: ints and numeric strings become Fractions."""
    if isinstance(v, str):
        return Fraction(v.strip())
    if isinstance(v, int) and not isinstance(v, bool):
        return Fraction(v)
    return v


@dataclass(frozen=True)
class SecondOrderIvp:
    g: Expr
    f: Expr
    y: object = Fraction(0)
    c0: object = Fraction(0)
    c1: object = Fraction(0)

    def __post_init__(self):
        object.__setattr__(self, "g", as_expr(self.g))
        object.__setattr__(self, "f", as_expr(self.f))
        for name in ("y", "c0", "c1"):
            object.__setattr__(self, name, _num(getattr(self, name)))
        if not variables(self.g) <= {"x"}:
            raise UnsupportedShape("g must depend on x only")
        if not variables(self.f) <= {"x", "u", "u1"}:
            raise UnsupportedShape("f may depend on x, u, u1 only")

    @property
    def eq(self) -> QuasiLinearEq:
        return QuasiLinearEq(self.g, self.f, 2)

    @property
    def rho1(self) -> JetPoint:
        return JetPoint([self.y, self.c0, self.c1])

    def point(self, *higher) -> JetPoint:
        return JetPoint([self.y, self.c0, self.c1, *higher])


@dataclass(frozen=True)
class ImpasseParameters:
    delta: object
    gamma: object
    proper: bool


def impasse_parameters(ivp: SecondOrderIvp, tau_on: float = TAU_ON) -> ImpasseParameters:
    xpt = {"x": ivp.y}
    if not is_zero(ivp.g, xpt, tau_on):
        raise NotAZero(f"g(y) = {evaluate(ivp.g, xpt)} is not zero")
    gp = diff(ivp.g, "x")
    if is_zero(gp, xpt, tau_on):
        raise NotSimpleZero("g'(y) vanishes; y is not a simple zero")
    delta = evaluate(gp, xpt)
    gamma = evaluate(diff(ivp.f, "u1"), ivp.rho1)
    proper = is_zero(ivp.f, ivp.rho1, tau_on)
    if not ivp.rho1.is_exact:
        # float input selects the float path, also for constant derivatives
        delta, gamma = float(delta), float(gamma)
    return ImpasseParameters(delta, gamma, proper)


@dataclass(frozen=True)
class ResonanceOrder:
    """Outcome of the resonance search.

    ``k`` is the resonance order or None.  ``near_k``/``near_gap`` record the
    closest integer ratio when it is within the near-resonance band.
    """

    k: Optional[int]
    exact: bool
    gamma_zero: bool = False
    near_k: Optional[int] = None
    near_gap: Optional[float] = None

    @property
    def near(self) -> bool:
        return self.near_k is not None


def _resonant(delta, gamma, k: int, tau_res: float) -> bool:
    if isinstance(delta, Fraction) and isinstance(gamma, Fraction):
        return gamma == k * delta
    return abs(gamma - k * delta) <= tau_res * max(1.0, abs(gamma), abs(delta))


def detect_resonance(delta, gamma, kmax: int = KMAX, tau_res: float = TAU_RES) -> ResonanceOrder:
    """Smallest k in [1, kmax] with ``k delta = gamma``.

    Exact for rational inputs; otherwise within ``tau_res`` relative.  A zero
    ``gamma`` is flagged separately and is not a resonance.
    """
    if delta == 0:
        raise ValueError("delta must be non-zero")
    exact = isinstance(delta, Fraction) and isinstance(gamma, Fraction)
    gamma_zero = gamma == 0 if exact else abs(gamma) <= tau_res * max(1.0, abs(delta))
    if gamma_zero:
        return ResonanceOrder(None, exact, True)
    for k in range(1, kmax + 1):
        if _resonant(delta, gamma, k, tau_res):
            return ResonanceOrder(k, exact)
    ratio = float(gamma) / float(delta)
    k0 = round(ratio)
    if 1 <= k0 <= kmax:
        gap = abs(float(gamma) - k0 * float(delta)) / abs(float(delta))
        if 0 < gap < NEAR_RES:
            return ResonanceOrder(None, exact, False, k0, gap)
    return ResonanceOrder(None, exact)


@dataclass(frozen=True)
class TaylorChain:
    """Derivative values ``c0, c1, ..., cn`` of the distinguished solution at y.

    ``divisors[q]`` is ``(q-1) delta - gamma`` used for ``c_q``; its size is the
    conditioning of that step.
    """

    coeffs: tuple
    divisors: dict

    @property
    def exact(self) -> bool:
        return all(isinstance(c, Fraction) for c in self.coeffs)

    def polynomial(self, x, y=0):
        return sum(c * (x - y) ** i / math.factorial(i) for i, c in enumerate(self.coeffs))


def taylor_chain(ivp: SecondOrderIvp, n: int, tau_on: float = TAU_ON,
                 tau_res: float = TAU_RES) -> TaylorChain:
    """Chain of irregular singularities ``c_q = h_(q+1)(rho_(q-1)) / ((q-1) delta - gamma)``.

    Raises :class:`ResonanceEncountered` with the partial chain when a divisor
    vanishes.
    """
    params = impasse_parameters(ivp, tau_on)
    if not params.proper:
        raise NotProper("f does not vanish at the initial point")
    delta, gamma = params.delta, params.gamma
    coeffs = [ivp.c0, ivp.c1]
    divisors = {}
    eq = ivp.eq
    for q in range(2, n + 1):
        div = (q - 1) * delta - gamma
        divisors[q] = div
        if _resonant(delta, gamma, q - 1, tau_res):
            raise ResonanceEncountered(q - 1, coeffs[2:])
        h = h_value(eq, q + 1, [ivp.y] + coeffs)
        coeffs.append(h / div)
    return TaylorChain(tuple(coeffs), divisors)


def taylor_coefficients(ivp: SecondOrderIvp, n: int, **kw) -> list:
    """The derivative values ``c2, ..., cn`` (exact when the input is rational)."""
    return list(taylor_chain(ivp, n, **kw).coeffs[2:])


def resonance_parameter(ivp: SecondOrderIvp, k: int, **kw):
    """``A_k = h_(k+2)(rho_k)`` on the unique chain below the resonance."""
    if k < 1:
        raise ValueError("resonance order must be positive")
    try:
        chain = list(taylor_chain(ivp, k, **kw).coeffs)
    except ResonanceEncountered as exc:
        if exc.k < k:
            raise
        chain = [ivp.c0, ivp.c1] + exc.partial
    return h_value(ivp.eq, k + 2, [ivp.y] + chain[:k + 1])


# --------------------------------------------------------------------------
# prolonged projected fields

def extended_field(ivp: SecondOrderIvp, q: int) -> VectorFieldSpec:
    """The field on J_(q-1) whose u(k-1) component is ``h_k - [(k-2) g' - f_u1] u(k-1)``.

    For q = 2 it is the projected field ``(g, g u1, f)``.
    """
    if q < 2:
        raise ValueError("q must be at least 2")
    eq = ivp.eq
    comps = [ivp.g, simplify(ivp.g * Var("u1")), ivp.f]
    for k in range(3, q + 1):
        comps.append(simplify(compute_h(eq, k) - prolong_coefficient(eq, k) * Var(coord_name(k - 1))))
    return VectorFieldSpec(jet_names(q - 1), tuple(comps), label=f"extended_q{q}")


@dataclass(frozen=True)
class Spectrum:
    q: int
    full: tuple
    relevant: tuple
    delta_eigenvector: tuple
    point: JetPoint


def _check_below(delta, gamma, q, tau_res):
    for k in range(1, q):
        if _resonant(delta, gamma, k, tau_res):
            raise ResonanceBelow(k)


def jacobian_spectrum(ivp: SecondOrderIvp, q: int, tau_on: float = TAU_ON,
                      tau_res: float = TAU_RES) -> Spectrum:
    """Spectrum of the extended field's Jacobian at ``rho_(q-1)``.

    ``full`` is computed from the Jacobian; ``relevant`` is the triple
    ``(delta, 0, gamma - (q-2) delta)``; the delta-eigenvector is
    ``(1, c1, ..., c(q-1), c_q)`` whose last entry is
    ``-h_(q+1) / (gamma - (q-1) delta)``.
    """
    params = impasse_parameters(ivp, tau_on)
    if not params.proper:
        raise NotProper("f does not vanish at the initial point")
    delta, gamma = params.delta, params.gamma
    _check_below(delta, gamma, q, tau_res)
    chain = list(taylor_chain(ivp, q - 1, tau_on, tau_res).coeffs)
    rho = JetPoint([ivp.y] + chain)
    jac = jacobian_at(extended_field(ivp, q), rho)
    last = -h_value(ivp.eq, q + 1, rho) / (gamma - (q - 1) * delta)
    vec = (Fraction(1) if isinstance(last, Fraction) else 1.0,) + tuple(chain[1:]) + (last,)
    relevant = (delta, delta * 0, gamma - (q - 2) * delta)
    return Spectrum(q, jac.eigenvalues, relevant, vec, rho)


def expected_spectrum(delta, gamma, q: int) -> list:
    """``delta, 0, gamma, gamma - delta, ..., gamma - (q-2) delta``."""
    return [delta, delta * 0] + [gamma - j * delta for j in range(q - 1)]


# --------------------------------------------------------------------------
# diagnosis

class Case(str, Enum):
    NEGATIVE_PRODUCT = "NegativeProduct"
    POSITIVE_PRODUCT = "PositiveProduct"
    GAMMA_ZERO = "GammaZero"
    SMOOTH_RESONANCE = "SmoothResonance"
    CRITICAL_RESONANCE = "CriticalResonance"
    NO_STRONG_SOLUTION = "NoStrongSolution"


@dataclass(frozen=True)
class PowerLaw:
    exponent: object
    k: int


@dataclass(frozen=True)
class LogExp:
    delta: object
    k: int


@dataclass(frozen=True)
class SolutionFamily:
    count: str          # "none" | "one" | "one_parameter"
    sidedness: str      # "two_sided" | "none"
    regularity: str     # "Smooth" | "C^k_not_C^(k+1)" rendered with k | "none"
    notes: tuple = ()


@dataclass(frozen=True)
class IvpDiagnosis:
    case: Case
    delta: object
    gamma: object
    k: Optional[int]
    resonance_parameter: object
    taylor: tuple
    solution_family: SolutionFamily
    limit_descriptor: object
    fiber: Optional[str] = None
    near_resonance: Optional[dict] = None
    gamma_zero_subcase: Optional[dict] = None
    warnings: tuple = ()

    @property
    def verdict(self) -> str:
        return verdict_line(self)


def verdict_line(d: IvpDiagnosis) -> str:
    if d.case is Case.NEGATIVE_PRODUCT:
        return "unique two-sided smooth solution"
    if d.case is Case.POSITIVE_PRODUCT:
        return (f"one-parameter family of two-sided solutions; one smooth member, "
                f"the others C^{d.k} but not C^{d.k + 1}")
    if d.case is Case.GAMMA_ZERO:
        return "unique two-sided smooth solution (further one-sided solutions possible)"
    if d.case is Case.SMOOTH_RESONANCE:
        return f"smooth resonance at order k={d.k} (A={_fmt(d.resonance_parameter)})"
    if d.case is Case.CRITICAL_RESONANCE:
        return f"critical resonance at order k={d.k} (A={_fmt(d.resonance_parameter)})"
    return "no strong solution"


def _fmt(v) -> str:
    if isinstance(v, Fraction):
        return str(v.numerator) if v.denominator == 1 else f"{v.numerator}/{v.denominator}"
    return f"{v:.17g}"


def _ceil_ratio(gamma, delta) -> int:
    r = gamma / delta
    if isinstance(r, Fraction):
        return math.ceil(r)
    return math.ceil(r - 1e-12)


def _gamma_zero_subcase(ivp: SecondOrderIvp, delta, tau_on: float) -> dict:
    """Order m and sign of the first non-vanishing u1-derivative of f at rho1.

    The saddle / node / saddle-node reading applies only when the linear
    part matches the model ``x u'' = d (u')^m``, i.e. ``f_x = f_u = 0`` at rho1.
    """
    rho = ivp.rho1
    fx = diff(ivp.f, "x")
    fu = diff(ivp.f, "u")
    if not (is_zero(fx, rho, tau_on) and is_zero(fu, rho, tau_on)):
        return {"status": "undetermined",
                "reason": "f_x or f_u is non-zero at the initial point; the model case does not apply"}
    d_expr = diff(ivp.f, "u1")
    for m in range(2, 13):
        d_expr = diff(d_expr, "u1")
        if not is_zero(d_expr, rho, tau_on):
            d = evaluate(d_expr, rho) / math.factorial(m)
            s = 1 if d * delta > 0 else -1
            if m % 2 == 0:
                label, extra = "saddle-node", "infinitely many additional one-sided solutions"
            elif s < 0:
                label, extra = "saddle", "no further one-sided solutions"
            else:
                label, extra = "node", "additional one-sided solutions with a vertical tangent"
            return {"status": "determined", "m": m, "d": d, "sign": s,
                    "subsystem": label, "one_sided": extra}
    return {"status": "undetermined", "reason": "no non-vanishing u1-derivative up to order 12"}


def diagnose(ivp: SecondOrderIvp, n: int = 4, kmax: int = KMAX, tau_on: float = TAU_ON,
             tau_res: float = TAU_RES) -> IvpDiagnosis:
    """Existence, uniqueness and regularity verdict for the initial value problem."""
    params = impasse_parameters(ivp, tau_on)
    delta, gamma = params.delta, params.gamma
    warns = []
    w = reduced_form_warning(ivp.eq)
    if w:
        warns.append(w)

    if not params.proper:
        notes = ("f does not vanish at the initial point: it is an improper impasse point, "
                 "the fibre of the equation above it is empty, so no twice differentiable "
                 "solution passes through it",)
        fam = SolutionFamily("none", "none", "none", notes)
        return IvpDiagnosis(Case.NO_STRONG_SOLUTION, delta, gamma, None, None,
                            (ivp.c0, ivp.c1), fam, None, None, None, None, tuple(warns))

    fiber = fiber_case(ivp.eq, ivp.rho1, tau_on)
    fiber_label = fiber.kind.value
    res = detect_resonance(delta, gamma, kmax, tau_res)
    near = {"k": res.near_k, "relative_gap": res.near_gap} if res.near else None
    if near:
        warns.append(f"near-resonance: gamma/delta is within {res.near_gap:.3g} of {res.near_k}")

    def chain(upto):
        try:
            return taylor_chain(ivp, upto, tau_on, tau_res).coeffs
        except ResonanceEncountered as exc:
            return (ivp.c0, ivp.c1, *exc.partial)

    if res.gamma_zero:
        sub = _gamma_zero_subcase(ivp, delta, tau_on)
        notes = ("possible additional one-sided solutions, see the dynamics module",)
        if sub.get("status") == "determined":
            notes += (f"model subsystem is a {sub['subsystem']}: {sub['one_sided']}",)
        fam = SolutionFamily("one", "two_sided", "Smooth", notes)
        return IvpDiagnosis(Case.GAMMA_ZERO, delta, gamma, None, None, chain(n), fam, None,
                            fiber_label, near, sub, tuple(warns))

    if res.k is not None:
        k = res.k
        A = resonance_parameter(ivp, k, tau_on=tau_on, tau_res=tau_res)
        smooth = A == 0 if isinstance(A, Fraction) else abs(A) <= tau_on
        taylor = chain(k)
        if smooth:
            fam = SolutionFamily("one_parameter", "two_sided", "Smooth",
                                 (f"all solutions smooth, parameterised by u^({k + 1})(y)",))
            return IvpDiagnosis(Case.SMOOTH_RESONANCE, delta, gamma, k, A, taylor, fam, None,
                                fiber_label, near, None, tuple(warns))
        notes = (f"no solution is {k + 1} times differentiable at y",
                 "members are indexed by the limit of (x-y) exp(-delta (u^(k)(x)-c_k)/(x-y))")
        if fiber.kind is FiberKind.NONE_GENERICITY3:
            notes += ("the fibre above the initial point holds no irregular singularity; "
                      "only weak solutions exist there",)
        fam = SolutionFamily("one_parameter", "two_sided", f"C^{k}_not_C^{k + 1}", notes)
        return IvpDiagnosis(Case.CRITICAL_RESONANCE, delta, gamma, k, A, taylor, fam,
                            LogExp(delta, k), fiber_label, near, None, tuple(warns))

    if delta * gamma < 0:
        fam = SolutionFamily("one", "two_sided", "Smooth",
                             ("no additional one-sided solutions",))
        return IvpDiagnosis(Case.NEGATIVE_PRODUCT, delta, gamma, None, None, chain(n), fam,
                            None, fiber_label, near, None, tuple(warns))

    k = _ceil_ratio(gamma, delta)
    exponent = (gamma - (k - 1) * delta) / delta
    fam = SolutionFamily("one_parameter", "two_sided", f"C^{k}_not_C^{k + 1}",
                         ("exactly one member is smooth",
                          f"all members share the Taylor polynomial of degree {k}"))
    return IvpDiagnosis(Case.POSITIVE_PRODUCT, delta, gamma, k, None, chain(max(n, k)), fam,
                        PowerLaw(exponent, k), fiber_label, near, None, tuple(warns))


def rescale_ivp(ivp: SecondOrderIvp, alpha) -> SecondOrderIvp:
    """The same problem in the coordinate ``xi = y + alpha (x - y)``.

    With ``v(xi) = u(x)`` the equation becomes ``G v'' = F`` where
    ``G(xi) = g(x)`` and ``F = f(x, v, alpha v') / alpha^2``, so that
    ``delta`` and ``gamma`` both scale by ``1/alpha``.
    """
    alpha = _num(alpha)
    if alpha == 0:
        raise ValueError("alpha must be non-zero")
    a = Const(alpha)
    back = Const(ivp.y) + (Var("x") - Const(ivp.y)) / a
    g = simplify(substitute(ivp.g, {"x": back}))
    f = simplify(substitute(ivp.f, {"x": back, "u1": a * Var("u1")}) / (a * a))
    return SecondOrderIvp(g, f, ivp.y, ivp.c0, ivp.c1 / alpha)
