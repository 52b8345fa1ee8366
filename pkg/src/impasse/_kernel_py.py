"""Pure-Python integration kernel.

Mirrors ``_ckernel.pyx`` line for line: a stack-machine evaluator for
compiled vector fields and a Dormand-Prince 5(4) stepper writing into
preallocated buffers.  Used when the compiled extension is unavailable or
``IMPASSE_PURE_PYTHON`` is set.
"""
import math

# opcodes (keep in sync with kernel.py and _ckernel.pyx)
OP_CONST, OP_VAR, OP_ADD, OP_SUB, OP_MUL, OP_DIV, OP_NEG = 0, 1, 2, 3, 4, 5, 6
OP_POWI, OP_POWR, OP_SIN, OP_COS, OP_EXP, OP_LN, OP_SQRT, OP_STORE = 7, 8, 9, 10, 11, 12, 13, 14

# status codes
BUFFER_FULL, TMAX, BLOWUP, STEP_COLLAPSE, DOMAIN, BOUNDS, STATIONARY = 0, 1, 2, 3, 4, 5, 6

BLOWUP_NORM = 1e12
MIN_STEP = 1e-14

A21 = 1 / 5
A31, A32 = 3 / 40, 9 / 40
A41, A42, A43 = 44 / 45, -56 / 15, 32 / 9
A51, A52, A53, A54 = 19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729
A61, A62, A63, A64, A65 = 9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656
B1, B3, B4, B5, B6 = 35 / 384, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84
E1, E3, E4, E5, E6, E7 = 71 / 57600, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40


def _as_list(a):
    return a.tolist() if hasattr(a, "tolist") else list(a)


def eval_program(ops, args, consts, y, out, stack):
    """Run the program; returns 0 on success, 1 on a domain error."""
    sp = 0
    for pc in range(len(ops)):
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
            try:
                stack[sp - 1] = b ** a
            except OverflowError:
                return 1
        elif op == OP_POWR:
            b = stack[sp - 1]
            p = consts[a]
            q = consts[a + 1]
            if b < 0.0:
                if int(q) % 2 == 0:
                    return 1
                r = (-b) ** (p / q)
                stack[sp - 1] = -r if int(p) % 2 else r
            elif b == 0.0:
                if p < 0:
                    return 1
                stack[sp - 1] = 0.0
            else:
                stack[sp - 1] = b ** (p / q)
        elif op == OP_SIN:
            stack[sp - 1] = math.sin(stack[sp - 1])
        elif op == OP_COS:
            stack[sp - 1] = math.cos(stack[sp - 1])
        elif op == OP_EXP:
            if stack[sp - 1] > 709.0:
                return 1
            stack[sp - 1] = math.exp(stack[sp - 1])
        elif op == OP_LN:
            if stack[sp - 1] <= 0.0:
                return 1
            stack[sp - 1] = math.log(stack[sp - 1])
        elif op == OP_SQRT:
            if stack[sp - 1] < 0.0:
                return 1
            stack[sp - 1] = math.sqrt(stack[sp - 1])
        else:  # OP_STORE
            sp -= 1
            out[a] = stack[sp]
    for v in out:
        if not math.isfinite(v):
            return 1
    return 0


def _rhs(ops, args, consts, y, out, stack, sign, normalize):
    if eval_program(ops, args, consts, y, out, stack):
        return 1
    n = len(out)
    scale = sign
    if normalize:
        nrm = math.sqrt(sum(v * v for v in out))
        if nrm < 1e-300:
            return 2
        scale = sign / nrm
    for i in range(n):
        out[i] *= scale
    return 0


def advance(ops, args, consts, stack_size, y0, t0, tmax, h, tol, sign, normalize,
            lo, hi, ts, ys, ds, norm_floor):
    """Integrate from (t0, y0) writing accepted steps into ts/ys/ds.

    Row 0 receives the start state.  Returns ``(rows, status, h_next)``.
    """
    ops, args, consts = _as_list(ops), _as_list(args), _as_list(consts)
    n = len(y0)
    cap = len(ts)
    stack = [0.0] * max(1, stack_size)
    y = [float(v) for v in y0]
    k1 = [0.0] * n
    k2 = [0.0] * n
    k3 = [0.0] * n
    k4 = [0.0] * n
    k5 = [0.0] * n
    k6 = [0.0] * n
    k7 = [0.0] * n
    tmp = [0.0] * n
    ynew = [0.0] * n
    t = t0

    rc = _rhs(ops, args, consts, y, k1, stack, sign, normalize)
    if rc == 1:
        return 0, DOMAIN, h
    if rc == 2:
        ts[0] = t
        for i in range(n):
            ys[0, i] = y[i]
            ds[0, i] = 0.0
        return 1, STATIONARY, h
    ts[0] = t
    for i in range(n):
        ys[0, i] = y[i]
        ds[0, i] = k1[i]
    rows = 1
    hit_domain = False

    while rows < cap:
        if t >= tmax:
            return rows, TMAX, h
        if h > tmax - t:
            h = tmax - t
        if h < MIN_STEP * max(1.0, abs(t)):
            return rows, DOMAIN if hit_domain else STEP_COLLAPSE, h

        for i in range(n):
            tmp[i] = y[i] + h * A21 * k1[i]
        rc = _rhs(ops, args, consts, tmp, k2, stack, sign, normalize)
        if rc == 0:
            for i in range(n):
                tmp[i] = y[i] + h * (A31 * k1[i] + A32 * k2[i])
            rc = _rhs(ops, args, consts, tmp, k3, stack, sign, normalize)
        if rc == 0:
            for i in range(n):
                tmp[i] = y[i] + h * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i])
            rc = _rhs(ops, args, consts, tmp, k4, stack, sign, normalize)
        if rc == 0:
            for i in range(n):
                tmp[i] = y[i] + h * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i])
            rc = _rhs(ops, args, consts, tmp, k5, stack, sign, normalize)
        if rc == 0:
            for i in range(n):
                tmp[i] = y[i] + h * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i] + A64 * k4[i]
                                     + A65 * k5[i])
            rc = _rhs(ops, args, consts, tmp, k6, stack, sign, normalize)
        if rc == 0:
            for i in range(n):
                ynew[i] = y[i] + h * (B1 * k1[i] + B3 * k3[i] + B4 * k4[i] + B5 * k5[i]
                                      + B6 * k6[i])
            rc = _rhs(ops, args, consts, ynew, k7, stack, sign, normalize)
        hit_domain = rc == 1
        if rc != 0:
            # an intermediate stage left the domain: retry with a smaller step
            h *= 0.25
            continue

        err = 0.0
        for i in range(n):
            e = h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i]
                     + E7 * k7[i])
            sc = tol * max(1.0, abs(y[i]), abs(ynew[i]))
            r = abs(e) / sc
            if r > err:
                err = r
        if not math.isfinite(err):
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
            fac = 5.0 if err == 0.0 else min(5.0, max(0.2, 0.9 * err ** -0.2))
            h *= fac
            if math.sqrt(nrm) > BLOWUP_NORM:
                return rows, BLOWUP, h
            for i in range(n):
                if y[i] < lo[i] or y[i] > hi[i]:
                    return rows, BOUNDS, h
            if norm_floor > 0.0:
                # the size of the raw field decides, also on the unit-speed path
                src = k1
                if normalize:
                    eval_program(ops, args, consts, y, tmp, stack)
                    src = tmp
                fn = 0.0
                for i in range(n):
                    fn += src[i] * src[i]
                if math.sqrt(fn) < norm_floor:
                    return rows, STATIONARY, h
        else:
            h *= max(0.2, 0.9 * err ** -0.2)
    return rows, BUFFER_FULL, h
