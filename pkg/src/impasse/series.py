"""Truncated power-series evaluation of expressions along a curve.

Given Taylor coefficients (not derivatives) of every coordinate as a function
of ``t = x - y``, :func:`series_eval` returns the Taylor coefficients of an
expression composed with that curve.  Arithmetic is exact when every input is
rational and no transcendental function intervenes.

This is used to evaluate remainders of high prolongations at a point without
building the (fast-growing) symbolic expressions.
"""
from __future__ import annotations

import math
from fractions import Fraction
from math import factorial
from typing import Mapping, Sequence

from .expr import (Add, Const, DomainError, Div, Expr, Func, MissingCoordinate, Mul, Neg,
                   Pow, Sub, Var, _apply, _power)


def _mul(a, b, n):
    return [sum(a[j] * b[i - j] for j in range(i + 1)) for i in range(n)]


def _div(a, c, n):
    if c[0] == 0:
        raise DomainError("series division by a function vanishing at the base point")
    b = []
    for i in range(n):
        s = a[i] - sum(b[j] * c[i - j] for j in range(i))
        b.append(s / c[0])
    return b


def _pow(a, r: Fraction, n):
    if r.denominator == 1 and r.numerator >= 0:
        out = [a[0] * 0 + 1] + [a[0] * 0] * (n - 1)
        base, k = list(a), r.numerator
        while k:
            if k & 1:
                out = _mul(out, base, n)
            k >>= 1
            if k:
                base = _mul(base, base, n)
        return out
    if a[0] == 0:
        raise DomainError("non-analytic power of a series vanishing at the base point")
    b = [_power(a[0], r)]
    rr = r if isinstance(b[0], Fraction) else float(r)
    for i in range(1, n):
        s = sum(((rr + 1) * j - i) * a[j] * b[i - j] for j in range(1, i + 1))
        b.append(s / (i * a[0]))
    return b


def _exp(a, n):
    b = [_apply("exp", a[0])]
    for i in range(1, n):
        b.append(sum(j * a[j] * b[i - j] for j in range(1, i + 1)) / i)
    return b


def _ln(a, n):
    b = [_apply("ln", a[0])]
    for i in range(1, n):
        s = a[i] - sum(j * b[j] * a[i - j] for j in range(1, i)) / i
        b.append(s / a[0])
    return b


def _sincos(a, n):
    s = [_apply("sin", a[0])]
    c = [_apply("cos", a[0])]
    for i in range(1, n):
        s.append(sum(j * a[j] * c[i - j] for j in range(1, i + 1)) / i)
        c.append(-sum(j * a[j] * s[i - j] for j in range(1, i + 1)) / i)
    return s, c


def series_eval(e: Expr, coeffs: Mapping[str, Sequence], n: int) -> list:
    """Taylor coefficients ``[e_0, ..., e_(n-1)]`` of ``e`` along the curve."""
    memo: dict[Expr, list] = {}

    def go(node: Expr) -> list:
        hit = memo.get(node)
        if hit is not None:
            return hit
        if isinstance(node, Const):
            out = [node.value] + [Fraction(0)] * (n - 1)
        elif isinstance(node, Var):
            try:
                src = coeffs[node.name]
            except KeyError:
                raise MissingCoordinate(f"no series for coordinate {node.name!r}") from None
            out = list(src[:n]) + [Fraction(0)] * max(0, n - len(src))
        elif isinstance(node, Add):
            out = [p + q for p, q in zip(go(node.left), go(node.right))]
        elif isinstance(node, Sub):
            out = [p - q for p, q in zip(go(node.left), go(node.right))]
        elif isinstance(node, Neg):
            out = [-p for p in go(node.arg)]
        elif isinstance(node, Mul):
            out = _mul(go(node.left), go(node.right), n)
        elif isinstance(node, Div):
            out = _div(go(node.left), go(node.right), n)
        elif isinstance(node, Pow):
            out = _pow(go(node.base), node.exponent, n)
        elif isinstance(node, Func):
            a = go(node.arg)
            if node.name == "exp":
                out = _exp(a, n)
            elif node.name == "ln":
                out = _ln(a, n)
            elif node.name == "sqrt":
                out = _pow(a, Fraction(1, 2), n)
            else:
                s, c = _sincos(a, n)
                out = s if node.name == "sin" else c
        else:
            raise TypeError(f"not an expression: {node!r}")
        for v in out:
            if isinstance(v, float) and not math.isfinite(v):
                raise DomainError("non-finite series coefficient")
        memo[node] = out
        return out

    return go(e)


def curve_from_derivatives(y, derivs: Sequence, n: int) -> dict[str, list]:
    """Series for x, u, u1, ... of the polynomial curve with the given derivative values at y.

    ``derivs[i]`` is the i-th derivative u^(i)(y); missing ones are taken as 0.
    """
    d = list(derivs) + [Fraction(0)] * max(0, 2 * n + 2 - len(derivs))
    d = [c if isinstance(c, float) else Fraction(c) for c in d]
    out = {"x": ([y, Fraction(1)] + [Fraction(0)] * n)[:n]}
    # u^(j) has coefficients d[j + i] / i!
    for j in range(n + 1):
        name = "u" if j == 0 else f"u{j}"
        out[name] = [d[j + i] / factorial(i) for i in range(n)]
    return out
