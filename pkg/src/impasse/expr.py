"""Symbolic expressions over the jet coordinates ``x, u, u1, u2, ...``.

Expressions are immutable trees.  Constants are exact :class:`fractions.Fraction`
values, so that a decimal literal such as ``0.25`` is stored as ``1/4`` and
integer relations between derived quantities survive parsing.

The public surface is :func:`parse`, :func:`evaluate`, :func:`diff`,
:func:`simplify` and :func:`to_str`.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Mapping, Sequence, Union

Number = Union[int, float, Fraction]

FUNCTIONS = ("sin", "cos", "exp", "ln", "sqrt")


class ExprError(ValueError):
    pass


class ParseError(ExprError):
    pass


class ExprSyntaxError(ParseError):
    """Malformed input.  ``offset`` is a byte offset into the source text."""

    def __init__(self, message: str, offset: int, expected: Iterable[str] = ()):
        self.offset = offset
        self.expected = tuple(sorted(set(expected)))
        detail = f" (expected one of: {', '.join(self.expected)})" if self.expected else ""
        super().__init__(f"{message} at offset {offset}{detail}")


class UnknownVariable(ParseError):
    def __init__(self, name: str, offset: int):
        self.name = name
        self.offset = offset
        super().__init__(f"unknown variable {name!r} at offset {offset}; "
                         "allowed: x, u, u0, u1, u2, ...")


class UnknownFunction(ParseError):
    def __init__(self, name: str, offset: int):
        self.name = name
        self.offset = offset
        super().__init__(f"unknown function {name!r} at offset {offset}; "
                         f"allowed: {', '.join(FUNCTIONS)}")


class DomainError(ExprError, ArithmeticError):
    pass


class MissingCoordinate(ExprError, LookupError):
    pass


# --------------------------------------------------------------------------
# nodes

def _node(cls):
    cls = dataclass(frozen=True, eq=True, slots=True)(cls)
    base_init = cls.__init__

    def __init__(self, *args, **kwargs):
        base_init(self, *args, **kwargs)
        object.__setattr__(self, "_hash", hash((cls.__name__,) + self._key()))

    cls.__init__ = __init__
    cls.__hash__ = lambda self: self._hash
    return cls


class Expr:
    """Base class of all expression nodes."""

    __slots__ = ()

    def _key(self) -> tuple:
        raise NotImplementedError

    def __str__(self) -> str:
        return to_str(self)

    # convenience operators, used heavily by the jet calculus
    def __add__(self, other): return Add(self, as_expr(other))
    def __radd__(self, other): return Add(as_expr(other), self)
    def __sub__(self, other): return Sub(self, as_expr(other))
    def __rsub__(self, other): return Sub(as_expr(other), self)
    def __mul__(self, other): return Mul(self, as_expr(other))
    def __rmul__(self, other): return Mul(as_expr(other), self)
    def __truediv__(self, other): return Div(self, as_expr(other))
    def __rtruediv__(self, other): return Div(as_expr(other), self)
    def __neg__(self): return Neg(self)

    def __pow__(self, exponent):
        return Pow(self, Fraction(exponent))


@_node
class Const(Expr):
    value: Fraction
    _hash: int = field(init=False, repr=False, compare=False, default=0)

    def __post_init__(self):
        v = self.value
        if not isinstance(v, Fraction):
            if isinstance(v, float) and not math.isfinite(v):
                raise ValueError("constants must be finite")
            object.__setattr__(self, "value", Fraction(v))

    def _key(self):
        return (self.value,)


@_node
class Var(Expr):
    name: str
    _hash: int = field(init=False, repr=False, compare=False, default=0)

    def __post_init__(self):
        object.__setattr__(self, "name", canonical_name(self.name))

    def _key(self):
        return (self.name,)


@_node
class Neg(Expr):
    arg: Expr
    _hash: int = field(init=False, repr=False, compare=False, default=0)

    def _key(self):
        return (self.arg._hash,)


@_node
class Add(Expr):
    left: Expr
    right: Expr
    _hash: int = field(init=False, repr=False, compare=False, default=0)

    def _key(self):
        return (self.left._hash, self.right._hash)


@_node
class Sub(Expr):
    left: Expr
    right: Expr
    _hash: int = field(init=False, repr=False, compare=False, default=0)

    def _key(self):
        return (self.left._hash, self.right._hash)


@_node
class Mul(Expr):
    left: Expr
    right: Expr
    _hash: int = field(init=False, repr=False, compare=False, default=0)

    def _key(self):
        return (self.left._hash, self.right._hash)


@_node
class Div(Expr):
    left: Expr
    right: Expr
    _hash: int = field(init=False, repr=False, compare=False, default=0)

    def _key(self):
        return (self.left._hash, self.right._hash)


@_node
class Pow(Expr):
    base: Expr
    exponent: Fraction
    _hash: int = field(init=False, repr=False, compare=False, default=0)

    def __post_init__(self):
        if not isinstance(self.exponent, Fraction):
            object.__setattr__(self, "exponent", Fraction(self.exponent))

    def _key(self):
        return (self.base._hash, self.exponent)


@_node
class Func(Expr):
    name: str
    arg: Expr
    _hash: int = field(init=False, repr=False, compare=False, default=0)

    def __post_init__(self):
        if self.name not in FUNCTIONS:
            raise UnknownFunction(self.name, 0)

    def _key(self):
        return (self.name, self.arg._hash)


ZERO = Const(0)
ONE = Const(1)

_BINARY = (Add, Sub, Mul, Div)


def as_expr(value) -> Expr:
    if isinstance(value, Expr):
        return value
    if isinstance(value, str):
        return parse(value)
    return Const(value)


# --------------------------------------------------------------------------
# jet coordinate alphabet

_VAR_RE = re.compile(r"^(x|u(\d*))$")


def canonical_name(name: str) -> str:
    """Map ``u0`` to ``u``; reject anything outside the jet alphabet."""
    m = _VAR_RE.match(name)
    if not m:
        raise UnknownVariable(name, 0)
    if name == "x":
        return "x"
    digits = m.group(2)
    order = int(digits) if digits else 0
    return coord_name(order)


def coord_name(order: int) -> str:
    """Name of the ``order``-th derivative coordinate; order -1 means ``x``."""
    if order == -1:
        return "x"
    if order < 0:
        raise ValueError(f"no coordinate of order {order}")
    return "u" if order == 0 else f"u{order}"


def coord_index(name: str) -> int:
    """Position of a coordinate in a jet point: x -> 0, u -> 1, u_k -> k + 1."""
    name = canonical_name(name)
    if name == "x":
        return 0
    return 1 if name == "u" else int(name[1:]) + 1


def jet_names(order: int) -> tuple[str, ...]:
    return ("x",) + tuple(coord_name(i) for i in range(order + 1))


# --------------------------------------------------------------------------
# parser

_TOKEN_RE = re.compile(r"""
    (?P<ws>\s+)
  | (?P<num>(?:\d+(?:\.\d*)?|\.\d+)(?:[eE][+-]?\d+)?)
  | (?P<ident>[A-Za-z_][A-Za-z_0-9]*)
  | (?P<op>[-+*/^()])
""", re.VERBOSE)


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.tokens: list[tuple[str, str, int]] = []
        pos = 0
        while pos < len(text):
            m = _TOKEN_RE.match(text, pos)
            if not m:
                raise ExprSyntaxError(f"unexpected character {text[pos]!r}",
                                      _byte_offset(text, pos),
                                      ("number", "identifier", "operator"))
            kind = m.lastgroup
            if kind != "ws":
                self.tokens.append((kind, m.group(), _byte_offset(text, pos)))
            pos = m.end()
        self.tokens.append(("end", "", _byte_offset(text, len(text))))
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def advance(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect_op(self, op: str):
        kind, val, off = self.peek()
        if kind != "op" or val != op:
            raise ExprSyntaxError(f"unexpected {_describe(kind, val)}", off, (repr(op),))
        self.advance()

    def parse(self) -> Expr:
        e = self.expr()
        kind, val, off = self.peek()
        if kind != "end":
            raise ExprSyntaxError(f"unexpected {_describe(kind, val)}", off,
                                  ("'+'", "'-'", "'*'", "'/'", "'^'", "end of input"))
        return e

    def expr(self) -> Expr:
        left = self.term()
        while True:
            kind, val, _ = self.peek()
            if kind == "op" and val in "+-":
                self.advance()
                right = self.term()
                left = Add(left, right) if val == "+" else Sub(left, right)
            else:
                return left

    def term(self) -> Expr:
        left = self.factor()
        while True:
            kind, val, _ = self.peek()
            if kind == "op" and val in "*/":
                self.advance()
                right = self.factor()
                left = Mul(left, right) if val == "*" else Div(left, right)
            else:
                return left

    def factor(self) -> Expr:
        kind, val, _ = self.peek()
        if kind == "op" and val == "-":
            self.advance()
            return Neg(self.factor())
        base = self.atom()
        kind, val, _ = self.peek()
        if kind == "op" and val == "^":
            self.advance()
            return Pow(base, self.exponent())
        return base

    def exponent(self) -> Fraction:
        kind, val, off = self.peek()
        if kind == "op" and val == "(":
            self.advance()
            value = self.signed_rational()
            self.expect_op(")")
            return value
        # a bare exponent is a signed number: x^2/3 is (x^2)/3
        return self.signed_rational(allow_ratio=False)

    def signed_rational(self, allow_ratio: bool = True) -> Fraction:
        sign = 1
        kind, val, off = self.peek()
        if kind == "op" and val in "+-":
            self.advance()
            sign = -1 if val == "-" else 1
            kind, val, off = self.peek()
        if kind != "num":
            raise ExprSyntaxError(f"unexpected {_describe(kind, val)} in exponent",
                                  off, ("number", "'('", "'-'"))
        self.advance()
        value = Fraction(val)
        kind, val, off = self.peek()
        if allow_ratio and kind == "op" and val == "/":
            nxt = self.tokens[self.i + 1]
            if nxt[0] != "num":
                raise ExprSyntaxError(f"unexpected {_describe(nxt[0], nxt[1])} in exponent",
                                      nxt[2], ("number",))
            self.advance()
            self.advance()
            denom = Fraction(nxt[1])
            if denom == 0:
                raise ExprSyntaxError("zero denominator in exponent", nxt[2])
            value /= denom
        return sign * value

    def atom(self) -> Expr:
        kind, val, off = self.peek()
        if kind == "num":
            self.advance()
            return Const(Fraction(val))
        if kind == "ident":
            self.advance()
            nxt = self.peek()
            if nxt[0] == "op" and nxt[1] == "(":
                if val not in FUNCTIONS:
                    raise UnknownFunction(val, off)
                self.advance()
                arg = self.expr()
                self.expect_op(")")
                return Func(val, arg)
            if val in FUNCTIONS:
                raise ExprSyntaxError(f"function {val!r} needs an argument", nxt[2], ("'('",))
            if not _VAR_RE.match(val):
                raise UnknownVariable(val, off)
            return Var(val)
        if kind == "op" and val == "(":
            self.advance()
            e = self.expr()
            self.expect_op(")")
            return e
        raise ExprSyntaxError(f"unexpected {_describe(kind, val)}", off,
                              ("number", "identifier", "'('", "'-'"))


def _byte_offset(text: str, pos: int) -> int:
    return len(text[:pos].encode("utf-8"))


def _describe(kind: str, val: str) -> str:
    return "end of input" if kind == "end" else repr(val)


def parse(text: str) -> Expr:
    """Parse ``text`` into an expression tree.

    Precedence from tightest to loosest: ``^``, unary minus, ``* /``, ``+ -``.
    Binary operators associate to the left.  The exponent of ``^`` is a signed
    number literal, or a signed rational in parentheses such as ``x^(1/3)``.

    >>> to_str(parse("u1^2 + x - 1/4"))
    'u1^2 + x - 1/4'
    """
    return _Parser(text).parse()


# --------------------------------------------------------------------------
# printer

_PREC = {Add: 1, Sub: 1, Mul: 2, Div: 2}
_SYMBOL = {Add: "+", Sub: "-", Mul: "*", Div: "/"}


def _format_fraction(value: Fraction) -> str:
    if value.denominator == 1:
        return str(value.numerator)
    d = value.denominator
    while d % 2 == 0:
        d //= 2
    while d % 5 == 0:
        d //= 5
    if d == 1:
        # terminating decimal, re-parses to the same exact constant
        digits = 0
        scaled = value
        while scaled.denominator != 1:
            scaled *= 10
            digits += 1
        text = f"{abs(scaled.numerator):0{digits + 1}d}"
        text = text[:-digits] + "." + text[-digits:]
        return ("-" if value < 0 else "") + text
    return f"{value.numerator}/{value.denominator}"


def _const_str(value: Fraction, context: str) -> str:
    text = _format_fraction(value)
    if value < 0 or (value.denominator != 1 and "/" in text):
        return f"({text})"
    return text


def _exponent_str(value: Fraction) -> str:
    if value.denominator == 1:
        return str(value.numerator)
    return f"({value.numerator}/{value.denominator})"


def to_str(e: Expr) -> str:
    """Canonical serializer; ``parse(to_str(parse(s))) == parse(s)``."""
    if isinstance(e, Const):
        return _const_str(e.value, "atom")
    if isinstance(e, Var):
        return e.name
    if isinstance(e, Func):
        return f"{e.name}({to_str(e.arg)})"
    if isinstance(e, Neg):
        inner = to_str(e.arg)
        if isinstance(e.arg, _BINARY) or isinstance(e.arg, Neg):
            inner = f"({inner})"
        return "-" + inner
    if isinstance(e, Pow):
        base = to_str(e.base)
        simple = isinstance(e.base, (Var, Func)) or (
            isinstance(e.base, Const) and e.base.value >= 0 and e.base.value.denominator == 1)
        if not simple:
            base = f"({base})"
        return f"{base}^{_exponent_str(e.exponent)}"
    cls = type(e)
    prec = _PREC[cls]
    left = to_str(e.left)
    right = to_str(e.right)
    if isinstance(e.left, _BINARY) and _PREC[type(e.left)] < prec:
        left = f"({left})"
    if isinstance(e.right, _BINARY) and _PREC[type(e.right)] <= prec:
        right = f"({right})"
    elif isinstance(e.right, Neg):
        right = f"({right})"
    return f"{left} {_SYMBOL[cls]} {right}"


# --------------------------------------------------------------------------
# inspection

def variables(e: Expr) -> frozenset[str]:
    out: set[str] = set()
    stack = [e]
    while stack:
        n = stack.pop()
        if isinstance(n, Var):
            out.add(n.name)
        elif isinstance(n, (Neg, Func)):
            stack.append(n.arg)
        elif isinstance(n, Pow):
            stack.append(n.base)
        elif isinstance(n, _BINARY):
            stack.append(n.left)
            stack.append(n.right)
    return frozenset(out)


def max_order(e: Expr) -> int:
    """Highest derivative order occurring in ``e``; -1 if only ``x`` or nothing."""
    return max((coord_index(v) - 1 for v in variables(e)), default=-1)


def has_functions(e: Expr) -> bool:
    if isinstance(e, Func):
        return True
    if isinstance(e, Pow):
        return e.exponent.denominator != 1 or has_functions(e.base)
    if isinstance(e, Neg):
        return has_functions(e.arg)
    if isinstance(e, _BINARY):
        return has_functions(e.left) or has_functions(e.right)
    return False


# --------------------------------------------------------------------------
# evaluation

def _lookup(point, name: str):
    if isinstance(point, Mapping):
        try:
            return point[name]
        except KeyError:
            if name == "u" and "u0" in point:
                return point["u0"]
            raise MissingCoordinate(f"point has no coordinate {name!r}") from None
    idx = coord_index(name)
    coords = point.coords if hasattr(point, "coords") else point
    if idx >= len(coords):
        raise MissingCoordinate(
            f"coordinate {name!r} needs a jet point of order >= {idx - 1}, got {len(coords) - 2}")
    return coords[idx]


def _exact_root(value: Fraction, q: int):
    """q-th root of a non-negative rational if it is rational, else None."""
    def iroot(n: int) -> int | None:
        r = round(n ** (1.0 / q)) if n else 0
        for cand in (r - 1, r, r + 1):
            if cand >= 0 and cand ** q == n:
                return cand
        return None
    if value.numerator.bit_length() > 600 or value.denominator.bit_length() > 600:
        return None
    a, b = iroot(value.numerator), iroot(value.denominator)
    if a is None or b is None:
        return None
    return Fraction(a, b)


def _power(base, exponent: Fraction):
    if exponent.denominator == 1:
        n = exponent.numerator
        if base == 0 and n < 0:
            raise DomainError("0 raised to a negative power")
        try:
            return base ** n
        except OverflowError as exc:
            raise DomainError(str(exc)) from None
    p, q = exponent.numerator, exponent.denominator
    if base < 0:
        if q % 2 == 0:
            raise DomainError(f"negative base {float(base)!r} with exponent {exponent}")
        return -_power(-base, exponent) if p % 2 else _power(-base, exponent)
    if base == 0:
        if p < 0:
            raise DomainError("0 raised to a negative power")
        return base * 0
    if isinstance(base, Fraction) or isinstance(base, int):
        root = _exact_root(Fraction(base), q)
        if root is not None:
            return _power(root, Fraction(p))
    try:
        return float(base) ** float(exponent)
    except OverflowError as exc:
        raise DomainError(str(exc)) from None


def _apply(name: str, a):
    if name == "sin":
        return math.sin(a)
    if name == "cos":
        return math.cos(a)
    if name == "exp":
        try:
            return math.exp(a)
        except OverflowError:
            raise DomainError(f"exp overflow at {float(a)!r}") from None
    if name == "ln":
        if a <= 0:
            raise DomainError(f"ln of non-positive value {float(a)!r}")
        return math.log(a)
    if a < 0:
        raise DomainError(f"sqrt of negative value {float(a)!r}")
    if isinstance(a, (int, Fraction)):
        root = _exact_root(Fraction(a), 2)
        if root is not None:
            return root
    return math.sqrt(a)


def evaluate(e: Expr, point) -> Number:
    """Evaluate ``e`` at a jet point (or a name -> value mapping).

    Rational inputs stay exact: if every coordinate is an ``int`` or
    ``Fraction`` and no transcendental function is met, the result is a
    ``Fraction``.  Any float input switches the affected subtree to floats.

    Raises :class:`DomainError` for division by zero, ``ln`` of a non-positive
    number, ``sqrt`` of a negative number, ``0`` to a negative power, and for
    non-finite intermediate results.
    """
    v = _eval(e, point)
    if isinstance(v, float) and not math.isfinite(v):
        raise DomainError("non-finite result")
    return v


def _eval(e: Expr, point):
    if isinstance(e, Const):
        return e.value
    if isinstance(e, Var):
        v = _lookup(point, e.name)
        if isinstance(v, int) and not isinstance(v, bool):
            return Fraction(v)
        return v
    if isinstance(e, Add):
        return _eval(e.left, point) + _eval(e.right, point)
    if isinstance(e, Sub):
        return _eval(e.left, point) - _eval(e.right, point)
    if isinstance(e, Mul):
        v = _eval(e.left, point) * _eval(e.right, point)
        if isinstance(v, float) and not math.isfinite(v):
            raise DomainError("overflow in product")
        return v
    if isinstance(e, Div):
        num = _eval(e.left, point)
        den = _eval(e.right, point)
        if den == 0:
            raise DomainError("division by zero")
        return num / den
    if isinstance(e, Neg):
        return -_eval(e.arg, point)
    if isinstance(e, Pow):
        return _power(_eval(e.base, point), e.exponent)
    if isinstance(e, Func):
        return _apply(e.name, _eval(e.arg, point))
    raise TypeError(f"not an expression: {e!r}")


# --------------------------------------------------------------------------
# differentiation

def diff(e: Expr, var: str) -> Expr:
    """Partial derivative of ``e`` with respect to the coordinate ``var``, simplified."""
    return simplify(_diff(e, canonical_name(var)))


def _diff(e: Expr, v: str) -> Expr:
    if isinstance(e, Const):
        return ZERO
    if isinstance(e, Var):
        return ONE if e.name == v else ZERO
    if v not in variables(e):
        return ZERO
    if isinstance(e, Add):
        return Add(_diff(e.left, v), _diff(e.right, v))
    if isinstance(e, Sub):
        return Sub(_diff(e.left, v), _diff(e.right, v))
    if isinstance(e, Neg):
        return Neg(_diff(e.arg, v))
    if isinstance(e, Mul):
        return Add(Mul(_diff(e.left, v), e.right), Mul(e.left, _diff(e.right, v)))
    if isinstance(e, Div):
        num = Sub(Mul(_diff(e.left, v), e.right), Mul(e.left, _diff(e.right, v)))
        return Div(num, Pow(e.right, Fraction(2)))
    if isinstance(e, Pow):
        n = e.exponent
        return Mul(Mul(Const(n), Pow(e.base, n - 1)), _diff(e.base, v))
    if isinstance(e, Func):
        a = e.arg
        da = _diff(a, v)
        if e.name == "sin":
            outer = Func("cos", a)
        elif e.name == "cos":
            outer = Neg(Func("sin", a))
        elif e.name == "exp":
            outer = e
        elif e.name == "ln":
            return Div(da, a)
        else:
            return Div(da, Mul(Const(2), e))
        return Mul(outer, da)
    raise TypeError(f"not an expression: {e!r}")


# --------------------------------------------------------------------------
# simplification
#
# Sums are flattened into (coefficient, monomial) terms with like monomials
# merged; products into a rational coefficient times base^exponent factors.
# Factors are sorted so commuted products compare equal.  No expansion of
# products of sums is attempted.

def simplify(e: Expr) -> Expr:
    """Syntactic simplification: constant folding, neutral-element removal,
    coefficient collection and merging of like terms.  Idempotent."""
    for _ in range(20):
        s = _simp(e)
        if s == e:
            return s
        e = s
    return e


_simp_cache: dict[Expr, Expr] = {}


def _simp(e: Expr) -> Expr:
    if isinstance(e, (Const, Var)):
        return e
    hit = _simp_cache.get(e)
    if hit is not None:
        return hit
    out = _simp_uncached(e)
    if len(_simp_cache) > 200_000:
        _simp_cache.clear()
    _simp_cache[e] = out
    return out


def _simp_uncached(e: Expr) -> Expr:
    if isinstance(e, (Add, Sub)):
        return _rebuild_sum(*_collect_sum(Add(_simp(e.left), _simp(e.right))
                                          if isinstance(e, Add)
                                          else Sub(_simp(e.left), _simp(e.right))))
    if isinstance(e, Neg):
        inner = _simp(e.arg)
        if isinstance(inner, (Add, Sub)):
            return _rebuild_sum(*_collect_sum(Neg(inner)))
        return _rebuild_product(*_collect_product(Neg(inner)))
    if isinstance(e, Mul):
        return _rebuild_product(*_collect_product(Mul(_simp(e.left), _simp(e.right))))
    if isinstance(e, Div):
        num, den = _simp(e.left), _simp(e.right)
        if isinstance(den, Const):
            if den.value == 0:
                return Div(num, den)
            return _rebuild_product(*_collect_product(Mul(Const(1 / den.value), num)))
        if num == ZERO:
            return ZERO
        if num == den:
            return ONE
        coef, factors = _collect_product(num)
        if coef != 1 and factors:
            # pull the numeric coefficient in front of the quotient
            rest = _rebuild_product(Fraction(1), factors)
            return _rebuild_product(coef, [(Div(rest, den), Fraction(1))])
        return Div(num, den)
    if isinstance(e, Pow):
        base = _simp(e.base)
        n = e.exponent
        if n == 0:
            return ONE
        if n == 1:
            return base
        if isinstance(base, Const):
            try:
                v = _power(base.value, n)
            except DomainError:
                return Pow(base, n)
            if isinstance(v, Fraction):
                return Const(v)
            return Pow(base, n)
        return _rebuild_product(*_collect_product(Pow(base, n)))
    if isinstance(e, Func):
        arg = _simp(e.arg)
        if isinstance(arg, Const):
            v = arg.value
            if v == 0 and e.name in ("sin", "sqrt"):
                return ZERO
            if v == 0 and e.name in ("cos", "exp"):
                return ONE
            if v == 1 and e.name == "ln":
                return ZERO
            if e.name == "sqrt" and v > 0:
                root = _exact_root(v, 2)
                if root is not None:
                    return Const(root)
        return Func(e.name, arg)
    raise TypeError(f"not an expression: {e!r}")


def _collect_product(e: Expr) -> tuple[Fraction, list[tuple[Expr, Fraction]]]:
    coef = Fraction(1)
    factors: dict[Expr, Fraction] = {}

    def walk(node: Expr, power: Fraction):
        nonlocal coef
        if isinstance(node, Const):
            if power.denominator == 1 and not (node.value == 0 and power < 0):
                coef *= node.value ** power.numerator
            else:
                factors[node] = factors.get(node, Fraction(0)) + power
        elif isinstance(node, Neg) and power.denominator == 1:
            if power.numerator % 2:
                coef = -coef
            walk(node.arg, power)
        elif isinstance(node, Mul) and power.denominator == 1:
            walk(node.left, power)
            walk(node.right, power)
        elif isinstance(node, Pow) and power.denominator == 1:
            if node.exponent.denominator == 1:
                walk(node.base, node.exponent * power)
            else:
                factors[node.base] = factors.get(node.base, Fraction(0)) + node.exponent * power
        else:
            factors[node] = factors.get(node, Fraction(0)) + power

    walk(e, Fraction(1))
    items = [(b, p) for b, p in factors.items() if p != 0]
    items.sort(key=_factor_key)
    return coef, items


def _factor_key(item):
    base, power = item
    if isinstance(base, Var):
        return (0, coord_index(base.name), "", power)
    return (1, 0, to_str(base), power)


def _rebuild_product(coef: Fraction, factors: Sequence[tuple[Expr, Fraction]]) -> Expr:
    if coef == 0:
        return ZERO
    body: list[Expr] = []
    for base, p in factors:
        if p == 1 and not isinstance(base, (Const, Mul, Neg)):
            body.append(base)
        else:
            body.append(Pow(base, p))
    if not body:
        return Const(coef)
    mag = abs(coef)
    node = None if mag == 1 else Const(mag)
    for b in body:
        node = b if node is None else Mul(node, b)
    return Neg(node) if coef < 0 else node


def _collect_sum(e: Expr):
    const = Fraction(0)
    terms: dict[tuple, list] = {}

    def walk(node: Expr, sign: int):
        nonlocal const
        if isinstance(node, Add):
            walk(node.left, sign)
            walk(node.right, sign)
        elif isinstance(node, Sub):
            walk(node.left, sign)
            walk(node.right, -sign)
        elif isinstance(node, Neg):
            walk(node.arg, -sign)
        elif isinstance(node, Const):
            const += sign * node.value
        else:
            coef, factors = _collect_product(node)
            if not factors:
                const += sign * coef
                return
            key = tuple(factors)
            if key in terms:
                terms[key][0] += sign * coef
            else:
                terms[key] = [sign * coef, factors]

    walk(e, 1)
    return const, [(c, f) for c, f in terms.values() if c != 0]


def _rebuild_sum(const: Fraction, terms) -> Expr:
    node = None
    for coef, factors in terms:
        t = _rebuild_product(abs(coef), factors)
        if node is None:
            node = Neg(t) if coef < 0 else t
        else:
            node = Sub(node, t) if coef < 0 else Add(node, t)
    if const != 0:
        c = Const(abs(const))
        if node is None:
            return Const(const)
        node = Sub(node, c) if const < 0 else Add(node, c)
    return ZERO if node is None else node


def substitute(e: Expr, mapping: Mapping[str, Expr]) -> Expr:
    """Replace variables by expressions (not simplified)."""
    mapping = {canonical_name(k): as_expr(v) for k, v in mapping.items()}

    def go(n: Expr) -> Expr:
        if isinstance(n, Var):
            return mapping.get(n.name, n)
        if isinstance(n, Const):
            return n
        if isinstance(n, Neg):
            return Neg(go(n.arg))
        if isinstance(n, Func):
            return Func(n.name, go(n.arg))
        if isinstance(n, Pow):
            return Pow(go(n.base), n.exponent)
        return type(n)(go(n.left), go(n.right))

    return go(e)


def term_scale(e: Expr, point) -> float:
    """Sum of magnitudes of the top-level additive terms of ``e`` at ``point``.

    Used as the local scale for zero tests, so that a value which is a small
    difference of large terms is not mistaken for a genuine zero.
    """
    total = 0.0
    stack = [e]
    while stack:
        n = stack.pop()
        if isinstance(n, (Add, Sub)):
            stack.append(n.left)
            stack.append(n.right)
        elif isinstance(n, Neg):
            stack.append(n.arg)
        else:
            total += abs(float(evaluate(n, point)))
    return total
