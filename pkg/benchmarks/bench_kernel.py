"""Compare the compiled and pure-Python integrator kernels.

Run from the repository root after building the extension::

    python3 benchmarks/bench_kernel.py [--repeat N]

Each problem is integrated with both backends; the table lists the best
wall time of ``repeat`` runs, the number of accepted steps and the largest
state difference between the two backends.
"""
import argparse
import time

import numpy as np

from impasse import _kernel_py
from impasse.expr import parse
from impasse.kernel import compile_field, run

try:
    from impasse import _ckernel
except ImportError:
    _ckernel = None

PROBLEMS = [
    # name, components, names, start, tmax, normalize
    ("harmonic", ["1", "u1", "-u"], ("x", "u", "u1"), [0.0, 0.0, 1.0], 50.0, False),
    ("quadratic saddle", ["x", "x*u1", "u1^2+x-1/4"], ("x", "u", "u1"),
     [1e-6, 0.0, -0.5], 12.0, False),
    ("complex focus", ["u", "u-x"], ("x", "u"), [0.3, 0.1], 40.0, True),
    ("transcendental", ["1", "sin(x)*exp(-u^2) + ln(2+u1^2)", "cos(u)"], ("x", "u", "u1"),
     [0.0, 0.1, 0.2], 30.0, False),
]


def best_time(prog, y0, tmax, normalize, backend, repeat):
    best = np.inf
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = run(prog, y0, tmax, 1e-10, normalize=normalize, backend=backend)
        best = min(best, time.perf_counter() - t0)
    return best, out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)
    if _ckernel is None:
        print("compiled kernel not available; build it with pip install -e .")
        return 1
    print(f"{'problem':<16}{'steps':>8}{'python s':>12}{'cython s':>12}{'speed-up':>10}"
          f"{'max diff':>12}")
    for name, comps, names, y0, tmax, normalize in PROBLEMS:
        prog = compile_field([parse(c) for c in comps], names)
        tp, a = best_time(prog, y0, tmax, normalize, _kernel_py, args.repeat)
        tc, b = best_time(prog, y0, tmax, normalize, _ckernel, args.repeat)
        diff = float(np.max(np.abs(a[1] - b[1]))) if a[1].shape == b[1].shape else float("nan")
        print(f"{name:<16}{len(a[0]):>8}{tp:>12.4f}{tc:>12.5f}{tp / tc:>10.1f}{diff:>12.2e}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
