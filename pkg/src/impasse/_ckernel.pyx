# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled integration kernel; see ``_kernel_py.py`` for the reference version."""
from libc.math cimport sin, cos, exp, log, sqrt, pow, fabs, isfinite, fmax, fmin

DEF OP_CONST = 0
DEF OP_VAR = 1
DEF OP_ADD = 2
DEF OP_SUB = 3
DEF OP_MUL = 4
DEF OP_DIV = 5
DEF OP_NEG = 6
DEF OP_POWI = 7
DEF OP_POWR = 8
DEF OP_SIN = 9
DEF OP_COS = 10
DEF OP_EXP = 11
DEF OP_LN = 12
DEF OP_SQRT = 13
DEF OP_STORE = 14

DEF S_BUFFER_FULL = 0
DEF S_TMAX = 1
DEF S_BLOWUP = 2
DEF S_STEP_COLLAPSE = 3
DEF S_DOMAIN = 4
DEF S_BOUNDS = 5
DEF S_STATIONARY = 6

BUFFER_FULL, TMAX, BLOWUP, STEP_COLLAPSE, DOMAIN, BOUNDS, STATIONARY = 0, 1, 2, 3, 4, 5, 6

cdef double BLOWUP_NORM = 1e12
cdef double MIN_STEP = 1e-14

cdef double A21 = 1.0 / 5
cdef double A31 = 3.0 / 40, A32 = 9.0 / 40
cdef double A41 = 44.0 / 45, A42 = -56.0 / 15, A43 = 32.0 / 9
cdef double A51 = 19372.0 / 6561, A52 = -25360.0 / 2187, A53 = 64448.0 / 6561, A54 = -212.0 / 729
cdef double A61 = 9017.0 / 3168, A62 = -355.0 / 33, A63 = 46732.0 / 5247, A64 = 49.0 / 176
cdef double A65 = -5103.0 / 18656
cdef double B1 = 35.0 / 384, B3 = 500.0 / 1113, B4 = 125.0 / 192, B5 = -2187.0 / 6784
cdef double B6 = 11.0 / 84
cdef double E1 = 71.0 / 57600, E3 = -71.0 / 16695, E4 = 71.0 / 1920, E5 = -17253.0 / 339200
cdef double E6 = 22.0 / 525, E7 = -1.0 / 40


cdef double ipow(double b, long n) nogil:
    cdef double r = 1.0
    cdef long m = n if n >= 0 else -n
    while m:
        if m & 1:
            r *= b
        m >>= 1
        if m:
            b *= b
    return r if n >= 0 else 1.0 / r


cdef int c_eval(const int[:] ops, const int[:] args, const double[:] consts,
                double* y, double* out, double* stack, int nout) nogil:
    cdef Py_ssize_t pc, nops = ops.shape[0]
    cdef int sp = 0, op, a, i
    cdef double b, p, q, r
    for pc in range(nops):
        op = ops[pc]
        a = args[pc]
        if op == OP_CONST:
            stack[sp] = consts[a]
            sp += 1
        elif op == OP_VAR:
            stack[sp] = y[a]
            sp += 1
        elif op == OP_ADD:
            sp -= 1
            stack[sp - 1] += stack[sp]
        elif op == OP_SUB:
            sp -= 1
            stack[sp - 1] -= stack[sp]
        elif op == OP_MUL:
            sp -= 1
            stack[sp - 1] *= stack[sp]
        elif op == OP_DIV:
            sp -= 1
            if stack[sp] == 0.0:
                return 1
            stack[sp - 1] /= stack[sp]
        elif op == OP_NEG:
            stack[sp - 1] = -stack[sp - 1]
        elif op == OP_POWI:
            b = stack[sp - 1]
            if b == 0.0 and a < 0:
                return 1
            stack[sp - 1] = ipow(b, a)
        elif op == OP_POWR:
            b = stack[sp - 1]
            p = consts[a]
            q = consts[a + 1]
            if b < 0.0:
                if (<long>q) % 2 == 0:
                    return 1
                r = pow(-b, p / q)
                stack[sp - 1] = -r if (<long>p) % 2 else r
            elif b == 0.0:
                if p < 0:
                    return 1
                stack[sp - 1] = 0.0
            else:
                stack[sp - 1] = pow(b, p / q)
        elif op == OP_SIN:
            stack[sp - 1] = sin(stack[sp - 1])
        elif op == OP_COS:
            stack[sp - 1] = cos(stack[sp - 1])
        elif op == OP_EXP:
            if stack[sp - 1] > 709.0:
                return 1
            stack[sp - 1] = exp(stack[sp - 1])
        elif op == OP_LN:
            if stack[sp - 1] <= 0.0:
                return 1
            stack[sp - 1] = log(stack[sp - 1])
        elif op == OP_SQRT:
            if stack[sp - 1] < 0.0:
                return 1
            stack[sp - 1] = sqrt(stack[sp - 1])
        else:
            sp -= 1
            out[a] = stack[sp]
    for i in range(nout):
        if not isfinite(out[i]):
            return 1
    return 0


cdef int c_rhs(const int[:] ops, const int[:] args, const double[:] consts,
               double* y, double* out, double* stack, int n, double sign, bint normalize) nogil:
    cdef int i
    cdef double nrm = 0.0, scale = sign
    if c_eval(ops, args, consts, y, out, stack, n):
        return 1
    if normalize:
        for i in range(n):
            nrm += out[i] * out[i]
        nrm = sqrt(nrm)
        if nrm < 1e-300:
            return 2
        scale = sign / nrm
    for i in range(n):
        out[i] *= scale
    return 0


def eval_program(const int[:] ops, const int[:] args, const double[:] consts,
                 double[:] y, double[:] out, double[:] stack):
    return c_eval(ops, args, consts, &y[0], &out[0], &stack[0], out.shape[0])


def advance(const int[:] ops, const int[:] args, const double[:] consts, int stack_size,
            double[:] y0, double t0, double tmax, double h, double tol, double sign,
            bint normalize, double[:] lo, double[:] hi, double[:] ts, double[:, :] ys,
            double[:, :] ds, double norm_floor):
    cdef int n = y0.shape[0]
    cdef Py_ssize_t cap = ts.shape[0], rows = 0
    cdef int i, rc, hit_domain, status = S_BUFFER_FULL
    cdef double t = t0, err, e, sc, r, nrm, fac, fn
    cdef double[:, :] work
    import numpy as np
    work = np.zeros((10, max(n, 1)), dtype=np.float64)
    stack_arr = np.zeros(max(1, stack_size), dtype=np.float64)
    cdef double[:] stackv = stack_arr
    cdef double* y = &work[0, 0]
    cdef double* k1 = &work[1, 0]
    cdef double* k2 = &work[2, 0]
    cdef double* k3 = &work[3, 0]
    cdef double* k4 = &work[4, 0]
    cdef double* k5 = &work[5, 0]
    cdef double* k6 = &work[6, 0]
    cdef double* k7 = &work[7, 0]
    cdef double* tmp = &work[8, 0]
    cdef double* ynew = &work[9, 0]
    cdef double* stack = &stackv[0]

    for i in range(n):
        y[i] = y0[i]
    with nogil:
        rc = c_rhs(ops, args, consts, y, k1, stack, n, sign, normalize)
    if rc == 1:
        return 0, S_DOMAIN, h
    ts[0] = t
    if rc == 2:
        for i in range(n):
            ys[0, i] = y[i]
            ds[0, i] = 0.0
        return 1, S_STATIONARY, h
    for i in range(n):
        ys[0, i] = y[i]
        ds[0, i] = k1[i]
    rows = 1
    hit_domain = 0

    with nogil:
        while rows < cap:
            if t >= tmax:
                status = S_TMAX
                break
            if h > tmax - t:
                h = tmax - t
            if h < MIN_STEP * fmax(1.0, fabs(t)):
                status = S_DOMAIN if hit_domain else S_STEP_COLLAPSE
                break

            for i in range(n):
                tmp[i] = y[i] + h * A21 * k1[i]
            rc = c_rhs(ops, args, consts, tmp, k2, stack, n, sign, normalize)
            if rc == 0:
                for i in range(n):
                    tmp[i] = y[i] + h * (A31 * k1[i] + A32 * k2[i])
                rc = c_rhs(ops, args, consts, tmp, k3, stack, n, sign, normalize)
            if rc == 0:
                for i in range(n):
                    tmp[i] = y[i] + h * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i])
                rc = c_rhs(ops, args, consts, tmp, k4, stack, n, sign, normalize)
            if rc == 0:
                for i in range(n):
                    tmp[i] = y[i] + h * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i])
                rc = c_rhs(ops, args, consts, tmp, k5, stack, n, sign, normalize)
            if rc == 0:
                for i in range(n):
                    tmp[i] = y[i] + h * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i] + A64 * k4[i]
                                         + A65 * k5[i])
                rc = c_rhs(ops, args, consts, tmp, k6, stack, n, sign, normalize)
            if rc == 0:
                for i in range(n):
                    ynew[i] = y[i] + h * (B1 * k1[i] + B3 * k3[i] + B4 * k4[i] + B5 * k5[i]
                                          + B6 * k6[i])
                rc = c_rhs(ops, args, consts, ynew, k7, stack, n, sign, normalize)
            hit_domain = rc == 1
            if rc != 0:
                h *= 0.25
                continue

            err = 0.0
            for i in range(n):
                e = h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i]
                         + E7 * k7[i])
                sc = tol * fmax(1.0, fmax(fabs(y[i]), fabs(ynew[i])))
                r = fabs(e) / sc
                if r > err:
                    err = r
            if not isfinite(err):
                h *= 0.25
                continue
            if err <= 1.0:
                t += h
                nrm = 0.0
                for i in range(n):
                    y[i] = ynew[i]
                    k1[i] = k7[i]
                    nrm += y[i] * y[i]
                ts[rows] = t
                for i in range(n):
                    ys[rows, i] = y[i]
                    ds[rows, i] = k1[i]
                rows += 1
                if err == 0.0:
                    fac = 5.0
                else:
                    fac = fmin(5.0, fmax(0.2, 0.9 * pow(err, -0.2)))
                h *= fac
                if sqrt(nrm) > BLOWUP_NORM:
                    status = S_BLOWUP
                    break
                rc = 0
                for i in range(n):
                    if y[i] < lo[i] or y[i] > hi[i]:
                        rc = 1
                if rc:
                    status = S_BOUNDS
                    break
                if norm_floor > 0.0:
                    fn = 0.0
                    if normalize:
                        c_eval(ops, args, consts, y, tmp, stack, n)
                        for i in range(n):
                            fn += tmp[i] * tmp[i]
                    else:
                        for i in range(n):
                            fn += k1[i] * k1[i]
                    if sqrt(fn) < norm_floor:
                        status = S_STATIONARY
                        break
            else:
                h *= fmax(0.2, 0.9 * pow(err, -0.2))
    return rows, status, h
