"""Small dense eigenproblems through the characteristic polynomial.

Matrices here are at most ~8x8 and frequently rational, so the characteristic
polynomial is formed exactly (Faddeev-LeVerrier over Fractions), rational
roots are split off exactly with their multiplicities, and any remaining
factor is solved numerically and Newton-polished.
"""
from __future__ import annotations

import cmath
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np


@dataclass(frozen=True)
class Eigenpair:
    value: complex | Fraction | float
    multiplicity: int
    vectors: tuple  # basis of the eigenspace (real eigenvalues only), may be empty


def _is_exact(M) -> bool:
    return all(isinstance(v, (int, Fraction)) for row in M for v in row)


def charpoly(M: Sequence[Sequence]) -> list:
    """Coefficients ``[1, c1, ..., cn]`` of det(t I - M), highest degree first."""
    n = len(M)
    exact = _is_exact(M)
    one = Fraction(1) if exact else 1.0
    A = [[Fraction(v) if exact else float(v) for v in row] for row in M]
    coeffs = [one]
    Mk = [[one * 0] * n for _ in range(n)]
    for k in range(1, n + 1):
        # Mk = A (M_{k-1} + c_{k-1} I)
        prev = [row[:] for row in Mk]
        for i in range(n):
            prev[i][i] += coeffs[-1]
        Mk = [[sum(A[i][l] * prev[l][j] for l in range(n)) for j in range(n)] for i in range(n)]
        tr = sum(Mk[i][i] for i in range(n))
        coeffs.append(-tr / k)
    return coeffs


def _poly_eval(c, t):
    v = c[0] * 0
    for a in c:
        v = v * t + a
    return v


def _deflate(c, r):
    out = [c[0]]
    for a in c[1:-1]:
        out.append(a + out[-1] * r)
    return out


def _divisors(n: int, limit: int = 20000):
    n = abs(n)
    if n == 0:
        return [0]
    if n > 10 ** 12:
        return [1]
    out = set()
    i = 1
    while i * i <= n and i <= limit:
        if n % i == 0:
            out.add(i)
            out.add(n // i)
        i += 1
    return sorted(out)


def _rational_roots(c: list[Fraction]):
    """Exact rational roots of a rational polynomial, with multiplicities."""
    roots = []
    c = list(c)
    while len(c) > 1 and c[-1] == 0:
        roots.append(Fraction(0))
        c.pop()
    if len(c) <= 1:
        return roots, c
    den = 1
    for a in c:
        den = den * a.denominator // math.gcd(den, a.denominator)
    ints = [int(a * den) for a in c]
    cands = set()
    for p in _divisors(ints[-1]):
        for q in _divisors(ints[0]):
            cands.add(Fraction(p, q))
            cands.add(Fraction(-p, q))
    for r in sorted(cands):
        while len(c) > 1 and _poly_eval(c, r) == 0:
            roots.append(r)
            c = _deflate(c, r)
    return roots, c


def _numeric_roots(c) -> list[complex]:
    c = [complex(a) for a in c]
    deg = len(c) - 1
    if deg <= 0:
        return []
    if deg == 1:
        return [-c[1] / c[0]]
    if deg == 2:
        a, b, d = c
        disc = b * b - 4 * a * d
        s = cmath.sqrt(disc)
        # stable quadratic formula
        qv = -(b + s) / 2 if (b.conjugate() * s).real >= 0 else -(b - s) / 2
        if qv == 0:
            return [0j, 0j]
        return [qv / a, d / qv]
    roots = list(np.roots(np.array(c)))
    return [complex(r) for r in roots]


def _polish(c, r: complex, iters: int = 3) -> complex:
    dc = [a * (len(c) - 1 - i) for i, a in enumerate(c[:-1])]
    for _ in range(iters):
        d = _poly_eval(dc, r)
        if d == 0:
            break
        step = _poly_eval(c, r) / d
        if not cmath.isfinite(step):
            break
        if abs(step) > 1e-6 * max(1.0, abs(r)):
            break
        r = r - step
    return r


def _clean(z: complex, scale: float):
    if abs(z.imag) <= 1e-13 * max(1.0, scale):
        return float(z.real)
    return z


def _sort_key(v):
    z = complex(v)
    return (-z.real, -z.imag)


def eigenvalues(M) -> list:
    """Eigenvalues with multiplicity, sorted by real part then imaginary part, descending.

    Exact rational eigenvalues are returned as Fractions when M is rational.
    """
    n = len(M)
    if n == 0:
        return []
    exact = _is_exact(M)
    c = charpoly(M)
    vals: list = []
    if exact:
        rat, c = _rational_roots(c)
        vals.extend(rat)
    cf = [complex(a) for a in c]
    scale = max([1.0] + [abs(float(v)) for row in M for v in row])
    for r in _numeric_roots(cf):
        vals.append(_clean(_polish(cf, r), scale))
    return sorted(vals, key=_sort_key)


def group_eigenvalues(vals, tol: float = 1e-9) -> list[tuple[object, int]]:
    groups: list[list] = []
    for v in vals:
        for g in groups:
            if _close(g[0], v, tol):
                g[1] += 1
                break
        else:
            groups.append([v, 1])
    return [(g[0], g[1]) for g in groups]


def _close(a, b, tol):
    if isinstance(a, Fraction) and isinstance(b, Fraction):
        return a == b
    return abs(complex(a) - complex(b)) <= tol * max(1.0, abs(complex(a)))


def nullspace(M, tol: float = 1e-9) -> list[list]:
    """Basis of the kernel by Gaussian elimination, each scaled so its first nonzero entry is 1."""
    exact = _is_exact(M)
    A = [[Fraction(v) if exact else complex(v) for v in row] for row in M]
    rows, cols = len(A), len(A[0]) if A else 0
    scale = max([1.0] + [abs(complex(v)) for row in A for v in row])
    pivots = []
    r = 0
    for col in range(cols):
        if r >= rows:
            break
        if exact:
            piv = next((i for i in range(r, rows) if A[i][col] != 0), None)
        else:
            best = max(range(r, rows), key=lambda i: abs(A[i][col]))
            piv = best if abs(A[best][col]) > tol * scale else None
        if piv is None:
            continue
        A[r], A[piv] = A[piv], A[r]
        p = A[r][col]
        A[r] = [v / p for v in A[r]]
        for i in range(rows):
            if i != r and A[i][col] != 0:
                fac = A[i][col]
                A[i] = [a - fac * b for a, b in zip(A[i], A[r])]
        pivots.append(col)
        r += 1
    free = [c for c in range(cols) if c not in pivots]
    basis = []
    for fcol in free:
        v = [Fraction(0) if exact else 0j for _ in range(cols)]
        v[fcol] = Fraction(1) if exact else 1 + 0j
        for i, pc in enumerate(pivots):
            v[pc] = -A[i][fcol]
        basis.append(_normalize_first(v, exact))
    return basis


def _normalize_first(v, exact):
    lead = next((a for a in v if (a != 0 if exact else abs(a) > 1e-14)), None)
    if lead is None:
        return v
    out = [a / lead for a in v]
    if not exact:
        out = [float(a.real) if abs(a.imag) < 1e-12 else a for a in out]
    return out


def _float_kernel(A, mult: int) -> tuple:
    A = np.array([[float(v) for v in row] for row in A])
    _, sv, vt = np.linalg.svd(A)
    scale = max(1.0, float(np.abs(A).max()))
    # numerical rank deficiency; at least one direction since the shift is an eigenvalue
    dim = max(1, int(np.sum(sv <= 1e-7 * scale)))
    dim = min(dim, mult)
    basis = vt[-dim:][::-1]
    out = []
    for v in basis:
        lead = next((a for a in v if abs(a) > 1e-12), 1.0)
        out.append(tuple(float(a / lead) for a in v))
    return tuple(out)


def eigen(M, tol: float = 1e-9) -> list[Eigenpair]:
    """Grouped eigenvalues with eigenvectors for the real ones.

    Eigenvectors are scaled with first nonzero component 1.
    """
    n = len(M)
    vals = eigenvalues(M)
    out = []
    for val, mult in group_eigenvalues(vals, tol if _is_exact(M) else max(tol, 1e-7)):
        vecs: tuple = ()
        if not isinstance(val, complex):
            shifted = [[(M[i][j] - val if i == j else M[i][j]) for j in range(n)] for i in range(n)]
            if isinstance(val, Fraction) and _is_exact(M):
                vecs = tuple(tuple(v) for v in nullspace(shifted))
            else:
                vecs = _float_kernel(shifted, mult)
        out.append(Eigenpair(val, mult, vecs))
    return out
