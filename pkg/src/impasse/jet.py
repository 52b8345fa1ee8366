"""Contact-field calculus on the jet spaces J_q and prolongation of
quasi-linear second-order equations ``g(x) u'' = f(x, u, u')``.

On J_q the coordinates are ``(x, u, u1, ..., uq)``.  The two contact fields

    C^(q) = d/dx + u1 d/du + ... + uq d/du(q-1)      (transversal)
    C_q   = d/duq                                    (vertical)

encode the chain rule.  The formal derivative of a function F on J_q is
``D_x F = C^(q) F + C_q F * u(q+1)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import Mapping, Sequence

from math import factorial

from .series import curve_from_derivatives, series_eval
from .expr import (Expr, Var, Const, ExprError, as_expr, coord_index, coord_name, diff,
                   jet_names, max_order, simplify, variables)


class UnsupportedShape(ExprError):
    pass


class JetPoint:
    """A point ``(x, u, u1, ..., uq)`` of the order-q jet space.

    Coordinates may be ints, Fractions or floats.  Integers are stored as
    Fractions so that exact arithmetic propagates.
    """

    __slots__ = ("coords",)

    def __init__(self, coords: Sequence):
        coords = tuple(Fraction(c) if isinstance(c, int) and not isinstance(c, bool) else c
                       for c in coords)
        if len(coords) < 2:
            raise ValueError("a jet point needs at least x and u")
        self.coords = coords

    @classmethod
    def from_mapping(cls, values: Mapping[str, object], order: int | None = None) -> "JetPoint":
        values = dict(values)
        if "u0" in values and "u" not in values:
            values["u"] = values.pop("u0")
        if order is None:
            order = max(int(k[1:]) if len(k) > 1 else 0 for k in values if k != "x")
        names = jet_names(order)
        missing = [n for n in names if n not in values]
        if missing:
            raise ValueError(f"missing coordinates {missing} for an order-{order} point")
        extra = set(values) - set(names)
        if extra:
            raise ValueError(f"coordinates {sorted(extra)} exceed order {order}")
        return cls([values[n] for n in names])

    @property
    def order(self) -> int:
        return len(self.coords) - 2

    @property
    def names(self) -> tuple[str, ...]:
        return jet_names(self.order)

    @property
    def is_exact(self) -> bool:
        return all(isinstance(c, Fraction) for c in self.coords)

    def truncate(self, order: int) -> "JetPoint":
        if order < 0 or order > self.order:
            raise ValueError(f"cannot truncate an order-{self.order} point to order {order}")
        return JetPoint(self.coords[:order + 2])

    def extend(self, *values) -> "JetPoint":
        return JetPoint(self.coords + tuple(values))

    def as_float(self) -> "JetPoint":
        return JetPoint([float(c) for c in self.coords])

    def as_dict(self) -> dict:
        return dict(zip(self.names, self.coords))

    def __getitem__(self, key):
        if isinstance(key, str):
            return self.coords[coord_index(key)]
        return self.coords[key]

    def __len__(self):
        return len(self.coords)

    def __iter__(self):
        return iter(self.coords)

    def __eq__(self, other):
        return isinstance(other, JetPoint) and self.coords == other.coords

    def __hash__(self):
        return hash(self.coords)

    def __repr__(self):
        inner = ", ".join(f"{n}={c}" for n, c in zip(self.names, self.coords))
        return f"JetPoint({inner})"


def _check_order(e: Expr, bound: int, what: str):
    if max_order(e) > bound:
        raise ValueError(f"{what} involves derivatives above order {bound}")


@dataclass(frozen=True)
class ImplicitEq:
    """Scalar equation ``F(x, u, ..., uq) = 0`` of order q."""

    F: Expr
    order: int

    def __post_init__(self):
        object.__setattr__(self, "F", as_expr(self.F))
        if self.order < 1:
            raise ValueError("order must be at least 1")
        _check_order(self.F, self.order, "F")


@dataclass(frozen=True)
class QuasiLinearEq:
    """Quasi-linear equation ``g * uq = f`` with g, f of order below q."""

    g: Expr
    f: Expr
    order: int

    def __post_init__(self):
        object.__setattr__(self, "g", as_expr(self.g))
        object.__setattr__(self, "f", as_expr(self.f))
        if self.order < 1:
            raise ValueError("order must be at least 1")
        _check_order(self.g, self.order - 1, "g")
        _check_order(self.f, self.order - 1, "f")

    def as_implicit(self) -> ImplicitEq:
        uq = Var(coord_name(self.order))
        return ImplicitEq(simplify(self.g * uq - self.f), self.order)


def contact_trans(e: Expr, q: int) -> Expr:
    """Apply the transversal contact field C^(q); no d/duq term is included."""
    if q < 0:
        raise ValueError("q must be non-negative")
    out = diff(e, "x")
    names = variables(e)
    for i in range(q):
        ui = coord_name(i)
        if ui in names:
            out = out + Var(coord_name(i + 1)) * diff(e, ui)
    return simplify(out)


def contact_vert(e: Expr, q: int) -> Expr:
    """Apply the vertical contact field C_q = d/duq."""
    if q < 0:
        raise ValueError("q must be non-negative")
    return diff(e, coord_name(q))


def formal_derivative(F: Expr, q: int) -> Expr:
    """Total x-derivative of a function on J_q; linear in u(q+1)."""
    F = as_expr(F)
    return simplify(contact_trans(F, q) + contact_vert(F, q) * Var(coord_name(q + 1)))


def _second_order_parts(eq: QuasiLinearEq):
    if eq.order != 2:
        raise UnsupportedShape(f"prolongation formula needs order 2, got {eq.order}")
    if not variables(eq.g) <= {"x"}:
        raise UnsupportedShape("g must depend on x only")
    if not variables(eq.f) <= {"x", "u", "u1"}:
        raise UnsupportedShape("f may depend on x, u, u1 only")
    return diff(eq.g, "x"), diff(eq.f, "u1")


@lru_cache(maxsize=512)
def _h_chain(g: Expr, f: Expr, k: int) -> Expr:
    gp = simplify(diff(g, "x"))
    fu1 = diff(f, "u1")
    if k == 3:
        return contact_trans(f, 1)
    prev = _h_chain(g, f, k - 1)
    coeff = Const(k - 3) * gp - fu1
    return contact_trans(prev - coeff * Var(coord_name(k - 2)), k - 2)


def compute_h(eq: QuasiLinearEq, k: int) -> Expr:
    """Lower-order remainder h_k of the k-th prolongation (k >= 3).

    ``h_3 = C^(1) f`` and ``h_k = C^(k-2)(h_(k-1) - [(k-3) g' - f_u1] u(k-2))``.
    The result involves coordinates up to ``u(k-2)``.
    """
    _second_order_parts(eq)
    if k < 3:
        raise ValueError("h_k is defined for k >= 3")
    return _h_chain(eq.g, eq.f, k)


def h_value(eq: QuasiLinearEq, k: int, point) -> object:
    """Value of h_k at a jet point of order >= k-2, without building h_k.

    Along the polynomial curve with the point's derivatives and vanishing
    u(k-1), uk, the (k-2)-th x-derivative of ``g u2 - f`` equals F_k, which
    there reduces to ``-h_k``.  Exact for rational input.
    """
    _second_order_parts(eq)
    if k < 3:
        raise ValueError("h_k is defined for k >= 3")
    coords = point.coords if hasattr(point, "coords") else tuple(point)
    if len(coords) < k:
        raise ValueError(f"h_{k} needs a point of order >= {k - 2}")
    y, derivs = coords[0], list(coords[1:k])
    n = k - 1
    curve = curve_from_derivatives(y, derivs, n)
    residual = series_eval(eq.g * Var("u2") - eq.f, curve, n)
    return -residual[k - 2] * factorial(k - 2)


def prolong_coefficient(eq: QuasiLinearEq, k: int) -> Expr:
    """The factor ``(k-2) g' - f_u1`` multiplying u(k-1) in F_k."""
    gp, fu1 = _second_order_parts(eq)
    return simplify(Const(k - 2) * gp - fu1)


def prolong(eq: QuasiLinearEq, k: int) -> ImplicitEq:
    """The k-th prolonged equation ``F_k = g uk + [(k-2) g' - f_u1] u(k-1) - h_k``."""
    _second_order_parts(eq)
    if k < 2:
        raise ValueError("prolongation order must be at least 2")
    uk = Var(coord_name(k))
    if k == 2:
        return ImplicitEq(simplify(eq.g * uk - eq.f), 2)
    F = eq.g * uk + prolong_coefficient(eq, k) * Var(coord_name(k - 1)) - compute_h(eq, k)
    return ImplicitEq(simplify(F), k)


def prolong_by_derivative(F: ImplicitEq, times: int = 1) -> ImplicitEq:
    """Generic prolongation by repeated formal differentiation."""
    expr, q = F.F, F.order
    for _ in range(times):
        expr = formal_derivative(expr, q)
        q += 1
    return ImplicitEq(expr, q)
