"""Bytecode compilation of vector fields and backend selection.

A field is compiled once into a flat stack program (opcode and argument
arrays plus a constant pool).  Two interchangeable kernels execute it: the
Cython extension ``_ckernel`` and the reference ``_kernel_py``.  The compiled
one is used when importable unless the environment variable
``IMPASSE_PURE_PYTHON`` is set to a non-empty value other than ``0``.
"""
from __future__ import annotations

import os
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .expr import Add, Const, Div, Expr, Func, Mul, Neg, Pow, Sub, Var
from . import _kernel_py
from ._kernel_py import (OP_ADD, OP_CONST, OP_COS, OP_DIV, OP_EXP, OP_LN, OP_MUL, OP_NEG,
                         OP_POWI, OP_POWR, OP_SIN, OP_SQRT, OP_STORE, OP_SUB, OP_VAR)
from ._kernel_py import (BLOWUP, BOUNDS, BUFFER_FULL, DOMAIN, STATIONARY, STEP_COLLAPSE,
                         TMAX)


def _load_backend():
    if os.environ.get("IMPASSE_PURE_PYTHON", "") not in ("", "0"):
        return _kernel_py, "python"
    try:
        from . import _ckernel
    except ImportError:
        return _kernel_py, "python"
    return _ckernel, "cython"


_backend, BACKEND = _load_backend()

_FUNC_OPS = {"sin": OP_SIN, "cos": OP_COS, "exp": OP_EXP, "ln": OP_LN, "sqrt": OP_SQRT}
_BIN_OPS = {Add: OP_ADD, Sub: OP_SUB, Mul: OP_MUL, Div: OP_DIV}


@dataclass(frozen=True)
class Program:
    ops: np.ndarray
    args: np.ndarray
    consts: np.ndarray
    stack_size: int
    nout: int
    names: tuple


def compile_field(components: Sequence[Expr], names: Sequence[str]) -> Program:
    """Compile expressions over ``names`` into one program writing ``out[i]``."""
    index = {n: i for i, n in enumerate(names)}
    ops: list[int] = []
    args: list[int] = []
    consts: list[float] = []
    const_index: dict = {}
    depth = 0
    max_depth = 0

    def const(v: float) -> int:
        key = float(v)
        if key not in const_index:
            const_index[key] = len(consts)
            consts.append(key)
        return const_index[key]

    def emit(op, arg=0, delta=0):
        nonlocal depth, max_depth
        ops.append(op)
        args.append(arg)
        depth += delta
        max_depth = max(max_depth, depth)

    def go(e: Expr):
        if isinstance(e, Const):
            emit(OP_CONST, const(e.value), 1)
        elif isinstance(e, Var):
            if e.name not in index:
                raise KeyError(f"coordinate {e.name!r} is not a state variable")
            emit(OP_VAR, index[e.name], 1)
        elif isinstance(e, Neg):
            go(e.arg)
            emit(OP_NEG)
        elif isinstance(e, Func):
            go(e.arg)
            emit(_FUNC_OPS[e.name])
        elif isinstance(e, Pow):
            go(e.base)
            if e.exponent.denominator == 1:
                emit(OP_POWI, int(e.exponent))
            else:
                k = len(consts)
                consts.extend([float(e.exponent.numerator), float(e.exponent.denominator)])
                emit(OP_POWR, k)
        else:
            go(e.left)
            go(e.right)
            emit(_BIN_OPS[type(e)], 0, -1)

    for i, c in enumerate(components):
        go(c)
        emit(OP_STORE, i, -1)
    if not consts:
        consts.append(0.0)
    return Program(np.array(ops, dtype=np.int32), np.array(args, dtype=np.int32),
                   np.array(consts, dtype=np.float64), max(1, max_depth), len(components),
                   tuple(names))


def evaluate_program(prog: Program, y, backend=None) -> tuple[np.ndarray, bool]:
    """Evaluate the compiled field at ``y``; returns (values, ok)."""
    be = backend or _backend
    out = np.zeros(prog.nout)
    stack = np.zeros(prog.stack_size)
    rc = be.eval_program(prog.ops, prog.args, prog.consts, np.asarray(y, dtype=np.float64),
                         out, stack)
    return out, rc == 0


STATUS_NAMES = {TMAX: "tmax", BLOWUP: "Blowup", STEP_COLLAPSE: "StationaryApproach",
                DOMAIN: "LeftDomain", BOUNDS: "LeftBounds", STATIONARY: "StationaryApproach",
                BUFFER_FULL: "MaxSteps"}


def run(prog: Program, y0, tmax: float, tol: float, *, sign: float = 1.0,
        normalize: bool = False, lo=None, hi=None, h0: float | None = None,
        max_steps: int = 200_000, norm_floor: float = 0.0, chunk: int = 2048,
        backend=None):
    """Integrate from t = 0 to ``tmax``; returns (ts, ys, ds, status)."""
    be = backend or _backend
    n = prog.nout
    y0 = np.asarray(y0, dtype=np.float64)
    lo = np.full(n, -np.inf) if lo is None else np.asarray(lo, dtype=np.float64)
    hi = np.full(n, np.inf) if hi is None else np.asarray(hi, dtype=np.float64)
    h = h0 if h0 is not None else min(1e-3, tmax) if tmax > 0 else 0.0
    t = 0.0
    ts_parts, ys_parts, ds_parts = [], [], []
    total = 0
    status = BUFFER_FULL
    while True:
        cap = min(chunk, max_steps - total + 1)
        ts = np.empty(cap)
        ys = np.empty((cap, n))
        ds = np.empty((cap, n))
        rows, status, h = be.advance(prog.ops, prog.args, prog.consts, prog.stack_size, y0,
                                     t, tmax, h, tol, sign, normalize, lo, hi, ts, ys, ds,
                                     norm_floor)
        if rows == 0:
            break
        # the first row of a continuation chunk repeats the previous last row
        start = 0 if not ts_parts else 1
        ts_parts.append(ts[start:rows])
        ys_parts.append(ys[start:rows])
        ds_parts.append(ds[start:rows])
        total += rows - start
        if status != BUFFER_FULL or total >= max_steps:
            break
        t = float(ts[rows - 1])
        y0 = ys[rows - 1].copy()
    if not ts_parts:
        return np.empty(0), np.empty((0, n)), np.empty((0, n)), status
    return (np.concatenate(ts_parts), np.concatenate(ys_parts), np.concatenate(ds_parts),
            status)
