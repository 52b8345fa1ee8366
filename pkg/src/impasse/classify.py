"""Point taxonomy for implicit and quasi-linear equations.

For an implicit equation ``F = 0`` of order q the Vessiot space at a point is
spanned by vectors ``a C^(q) + b C_q`` with ``C^(q)F a + C_qF b = 0``.  The
point is regular when ``C_qF`` does not vanish, regular singular when only
``C^(q)F`` survives and irregular singular when both vanish.

For a quasi-linear equation ``g uq = f`` the Vessiot spaces project to the
field ``Y = g C^(q-1) + f C_(q-1)`` on J_(q-1).  Points where ``g = 0`` are
impasse points; they are proper when ``f`` vanishes as well.
"""
from __future__ import annotations

import cmath
import math
import warnings
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from functools import cached_property
from typing import Sequence

from .expr import (Expr, ExprError, Const, Var, coord_name, diff, evaluate, has_functions,
                   jet_names, simplify, term_scale, to_str, variables)
from .jet import ImplicitEq, JetPoint, QuasiLinearEq, contact_trans, contact_vert
from . import linalg

TAU_ON = 1e-9
TAU_TANGENT = 1e-8


class PointClass(str, Enum):
    REGULAR = "RegularPoint"
    REGULAR_SINGULAR = "RegularSingular"
    IRREGULAR_SINGULAR = "IrregularSingular"


class ImpasseClass(str, Enum):
    REGULAR = "Regular"
    IMPROPER = "ImproperImpasse"
    PROPER = "ProperImpasse"


class FiberKind(str, Enum):
    TWO_IRREGULAR = "TwoIrregular"
    NO_REAL_IRREGULAR = "NoRealIrregular"
    ONE_IRREGULAR = "OneIrregular"
    NONE_GENERICITY3 = "NoneGenericity3"
    WHOLE_FIBER = "WholeFiberIrregular"


class NotOnEquation(ExprError):
    pass


class NotProperImpasse(ExprError):
    pass


class NonFiniteField(ExprError):
    pass


def _coords(p):
    return p if isinstance(p, JetPoint) else JetPoint(p)


def is_zero(e: Expr, p, tau: float = TAU_ON) -> bool:
    """Zero test with the rational fast path and a relative float tolerance."""
    v = evaluate(e, p)
    if isinstance(v, Fraction):
        return v == 0
    return abs(v) <= tau * max(1.0, term_scale(e, p))


# --------------------------------------------------------------------------
# vector fields

@dataclass(frozen=True)
class VectorFieldSpec:
    """A polynomial-or-elementary vector field on named jet coordinates.

    ``constraints`` are functions whose zero set the field is meant to be
    tangent to (the equation manifold); they are used to flag spurious
    eigenvectors of ambient Jacobians.
    """

    names: tuple[str, ...]
    components: tuple[Expr, ...]
    constraints: tuple[Expr, ...] = ()
    label: str = ""

    def __post_init__(self):
        if len(self.names) != len(self.components):
            raise ValueError("one component per state variable is required")
        allowed = set(self.names)
        for c in self.components + self.constraints:
            extra = variables(c) - allowed
            if extra:
                raise ValueError(f"component uses undeclared coordinates {sorted(extra)}")

    @property
    def dim(self) -> int:
        return len(self.names)

    def _mapping(self, p) -> dict:
        vals = p.coords if isinstance(p, JetPoint) else tuple(p)
        if len(vals) != self.dim:
            raise ValueError(f"expected {self.dim} coordinates, got {len(vals)}")
        return dict(zip(self.names, vals))

    def __call__(self, p) -> list:
        m = self._mapping(p)
        return [evaluate(c, m) for c in self.components]

    @cached_property
    def jacobian_exprs(self) -> tuple[tuple[Expr, ...], ...]:
        return tuple(tuple(diff(c, v) for v in self.names) for c in self.components)

    def jacobian(self, p) -> list[list]:
        m = self._mapping(p)
        return [[evaluate(e, m) for e in row] for row in self.jacobian_exprs]

    def __str__(self):
        return "(" + ", ".join(to_str(c) for c in self.components) + ")"


@dataclass(frozen=True)
class EigenInfo:
    value: object
    multiplicity: int
    vectors: tuple
    tangent: tuple = ()        # per vector: tangent to every constraint
    transversal: tuple = ()    # per vector: nonzero x-component


@dataclass(frozen=True)
class JacobianResult:
    matrix: tuple
    eigenvalues: tuple         # with multiplicity, sorted
    eigen: tuple[EigenInfo, ...]

    def spectrum(self) -> list:
        return list(self.eigenvalues)


def jacobian_at(fld: VectorFieldSpec, p, tol: float = 1e-9) -> JacobianResult:
    """Jacobian of ``fld`` at ``p`` with its spectrum and eigenvectors.

    Eigenvectors of real eigenvalues are scaled to first nonzero component 1 and
    checked for tangency against every constraint gradient (tolerance 1e-8)
    and for transversality (nonzero x-component).
    """
    J = fld.jacobian(p)
    pairs = linalg.eigen(J, tol)
    m = fld._mapping(p)
    grads = [[evaluate(diff(c, v), m) for v in fld.names] for c in fld.constraints]
    xi = fld.names.index("x") if "x" in fld.names else None
    infos = []
    for pr in pairs:
        tang, trans = [], []
        for v in pr.vectors:
            norm = math.sqrt(sum(float(a) ** 2 for a in v)) or 1.0
            ok = True
            for gr in grads:
                dot = sum(a * b for a, b in zip(gr, v))
                gnorm = math.sqrt(sum(float(a) ** 2 for a in gr)) or 1.0
                if isinstance(dot, Fraction):
                    ok = ok and dot == 0
                else:
                    ok = ok and abs(dot) <= TAU_TANGENT * gnorm * norm
            tang.append(ok)
            if xi is None:
                trans.append(False)
            else:
                vx = v[xi]
                trans.append(vx != 0 if isinstance(vx, Fraction) else abs(vx) > TAU_TANGENT * norm)
        infos.append(EigenInfo(pr.value, pr.multiplicity, pr.vectors, tuple(tang), tuple(trans)))
    vals = tuple(v for e in infos for v in [e.value] * e.multiplicity)
    return JacobianResult(tuple(tuple(r) for r in J), vals, tuple(infos))


# --------------------------------------------------------------------------
# implicit equations

def classify_point(eq: ImplicitEq, rho, tau_on: float = TAU_ON) -> PointClass:
    """Regular / regular singular / irregular singular classification."""
    rho = _coords(rho)
    if rho.order != eq.order:
        raise ValueError(f"point of order {rho.order} for an order-{eq.order} equation")
    if not is_zero(eq.F, rho, tau_on):
        raise NotOnEquation(f"F = {float(evaluate(eq.F, rho))!r} at {rho}")
    q = eq.order
    if not is_zero(contact_vert(eq.F, q), rho, tau_on):
        return PointClass.REGULAR
    if not is_zero(contact_trans(eq.F, q), rho, tau_on):
        return PointClass.REGULAR_SINGULAR
    return PointClass.IRREGULAR_SINGULAR


def vessiot_generator(eq: ImplicitEq) -> VectorFieldSpec:
    """``X = C_qF C^(q) - C^(q)F C_q`` on the order-q jet coordinates."""
    q = eq.order
    a = contact_vert(eq.F, q)
    b = contact_trans(eq.F, q)
    comps = [a] + [simplify(a * Var(coord_name(i + 1))) for i in range(q)] + [simplify(-b)]
    return VectorFieldSpec(jet_names(q), tuple(comps), (eq.F,), label="vessiot")


# --------------------------------------------------------------------------
# quasi-linear equations

def project_field(eq: QuasiLinearEq) -> VectorFieldSpec:
    """``Y = g C^(q-1) + f C_(q-1)`` with components ``(g, g u1, ..., g u(q-1), f)``."""
    q = eq.order
    comps = [eq.g] + [simplify(eq.g * Var(coord_name(i + 1))) for i in range(q - 1)] + [eq.f]
    return VectorFieldSpec(jet_names(q - 1), tuple(comps), label="projected")


def classify_impasse(eq: QuasiLinearEq, rho, tau_on: float = TAU_ON) -> ImpasseClass:
    rho = _coords(rho)
    if not is_zero(eq.g, rho, tau_on):
        return ImpasseClass.REGULAR
    if not is_zero(eq.f, rho, tau_on):
        return ImpasseClass.IMPROPER
    return ImpasseClass.PROPER


@dataclass(frozen=True)
class FiberCase:
    """Irregular singularities in the fiber of J_q over a proper impasse point.

    They are the roots w of ``Cf + (B - Cg) w - A w^2 = 0`` with
    ``A = C_(q-1) g``, ``B = C_(q-1) f``, ``Cg = C^(q-1) g``, ``Cf = C^(q-1) f``.
    """

    kind: FiberKind
    roots: tuple = ()
    discriminant: object = None
    coefficients: dict = field(default_factory=dict)


def _zero_value(v, scale, tau) -> bool:
    if isinstance(v, Fraction):
        return v == 0
    return abs(v) <= tau * max(1.0, scale)


def _sqrt_exact(v):
    if isinstance(v, Fraction) and v >= 0:
        from .expr import _exact_root
        r = _exact_root(v, 2)
        if r is not None:
            return r
    return math.sqrt(v) if v >= 0 else cmath.sqrt(v)


def fiber_case(eq: QuasiLinearEq, rho, tau_on: float = TAU_ON) -> FiberCase:
    rho = _coords(rho)
    if classify_impasse(eq, rho, tau_on) is not ImpasseClass.PROPER:
        raise NotProperImpasse(f"{rho} is not a proper impasse point")
    q = eq.order
    exprs = {
        "A": contact_vert(eq.g, q - 1),
        "B": contact_vert(eq.f, q - 1),
        "Cg": contact_trans(eq.g, q - 1),
        "Cf": contact_trans(eq.f, q - 1),
    }
    vals = {k: evaluate(e, rho) for k, e in exprs.items()}
    scales = {k: term_scale(e, rho) for k, e in exprs.items()}
    A, B, Cg, Cf = vals["A"], vals["B"], vals["Cg"], vals["Cf"]
    lin = B - Cg
    lin_zero = _zero_value(lin, max(scales["B"], scales["Cg"]), tau_on)
    if not _zero_value(A, scales["A"], tau_on):
        disc = lin * lin + 4 * Cf * A
        disc_scale = max(1.0, abs(float(lin)) ** 2 + 4 * abs(float(Cf * A)))
        if not isinstance(disc, Fraction) and abs(disc) <= tau_on * disc_scale:
            disc = 0.0
        s = _sqrt_exact(disc)
        if isinstance(s, complex):
            roots = ((lin + s) / (2 * A), (lin - s) / (2 * A))
            kind = FiberKind.NO_REAL_IRREGULAR
        else:
            roots = tuple(sorted({(lin + s) / (2 * A), (lin - s) / (2 * A)}, reverse=True)) \
                if disc != 0 else (lin / (2 * A),) * 2
            kind = FiberKind.TWO_IRREGULAR
        return FiberCase(kind, roots, disc, vals)
    if not lin_zero:
        return FiberCase(FiberKind.ONE_IRREGULAR, (-Cf / lin,), None, vals)
    if not _zero_value(Cf, scales["Cf"], tau_on):
        return FiberCase(FiberKind.NONE_GENERICITY3, (), None, vals)
    return FiberCase(FiberKind.WHOLE_FIBER, (), None, vals)


def first_order_discriminant(eq: QuasiLinearEq, rho):
    """``(f_u - g_x)^2 + 4 f_x g_u`` for a first-order equation."""
    if eq.order != 1:
        raise ValueError("the discriminant formula applies to first-order equations")
    rho = _coords(rho)
    d = {name: evaluate(diff(e, v), rho)
         for name, e, v in (("fu", eq.f, "u"), ("gx", eq.g, "x"), ("fx", eq.f, "x"), ("gu", eq.g, "u"))}
    return (d["fu"] - d["gx"]) ** 2 + 4 * d["fx"] * d["gu"]


# --------------------------------------------------------------------------
# reduced form

def _is_polynomial(e: Expr) -> bool:
    from .expr import Div, Pow, Func
    if isinstance(e, Func):
        return False
    if isinstance(e, Pow):
        return e.exponent.denominator == 1 and e.exponent >= 0 and _is_polynomial(e.base)
    if isinstance(e, Div):
        return isinstance(e.right, Const) and _is_polynomial(e.left)
    for child in ("arg", "left", "right", "base"):
        sub = getattr(e, child, None)
        if isinstance(sub, Expr) and not _is_polynomial(sub):
            return False
    return True


def _to_sympy(e: Expr, sympy):
    from .expr import Add, Sub, Mul, Div, Neg, Pow
    if isinstance(e, Const):
        return sympy.Rational(e.value.numerator, e.value.denominator)
    if isinstance(e, Var):
        return sympy.Symbol(e.name)
    if isinstance(e, Neg):
        return -_to_sympy(e.arg, sympy)
    if isinstance(e, Pow):
        return _to_sympy(e.base, sympy) ** int(e.exponent)
    a, b = _to_sympy(e.left, sympy), _to_sympy(e.right, sympy)
    if isinstance(e, Add):
        return a + b
    if isinstance(e, Sub):
        return a - b
    if isinstance(e, Mul):
        return a * b
    return a / b


def reduced_form_warning(eq: QuasiLinearEq) -> str | None:
    """Warn when polynomial g and f share a non-constant common factor.

    Uses sympy for the polynomial GCD; returns None if either side is not
    polynomial or sympy is unavailable.
    """
    if not (_is_polynomial(eq.g) and _is_polynomial(eq.f)):
        return None
    try:
        import sympy
    except ImportError:  # pragma: no cover
        return None
    g, f = _to_sympy(eq.g, sympy), _to_sympy(eq.f, sympy)
    if g == 0 or f == 0:
        return None
    common = sympy.gcd(g, f)
    if common.is_number:
        return None
    return f"g and f share the common factor {sympy.sstr(common).replace('**', '^')}; "\
           "the equation is not in reduced form"
