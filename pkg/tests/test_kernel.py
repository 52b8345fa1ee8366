import math

import numpy as np
import pytest

from impasse import _kernel_py, kernel
from impasse.expr import evaluate, parse
from impasse.kernel import BLOWUP, BOUNDS, DOMAIN, STATIONARY, TMAX, compile_field, evaluate_program, run

try:
    from impasse import _ckernel
except ImportError:     # pragma: no cover
    _ckernel = None

BACKENDS = [_kernel_py] + ([_ckernel] if _ckernel is not None else [])
needs_cython = pytest.mark.skipif(_ckernel is None, reason="compiled kernel not built")


@pytest.mark.parametrize("backend", BACKENDS)
@pytest.mark.parametrize("text", [
    "x*u1 - u^2 + 3", "sin(x)*exp(u) - ln(2 + u1^2)", "sqrt(1 + x^2)/u", "x^(1/3) - u^-2",
    "-(x - u)^5 + cos(u1)",
])
def test_program_matches_tree_evaluation(backend, text):
    e = parse(text)
    prog = compile_field([e, parse("1")], ("x", "u", "u1"))
    for y in ([0.3, 1.7, -0.4], [-0.9, -2.0, 1.1]):
        out, ok = evaluate_program(prog, y, backend)
        assert ok
        assert out[0] == pytest.approx(evaluate(e, dict(zip(("x", "u", "u1"), y))), rel=1e-13)
        assert out[1] == 1.0


@pytest.mark.parametrize("backend", BACKENDS)
def test_domain_error_is_reported(backend):
    prog = compile_field([parse("1"), parse("ln(x)")], ("x", "u"))
    assert not evaluate_program(prog, [-1.0, 0.0], backend)[1]
    ts, ys, ds, status = run(prog, [1.0, 0.0], 10.0, 1e-10, sign=-1.0, backend=backend)
    assert status == DOMAIN
    assert 0.0 < ys[-1, 0] < 1e-3


@pytest.mark.parametrize("backend", BACKENDS)
def test_exponential_decay_accuracy(backend):
    prog = compile_field([parse("1"), parse("-u")], ("x", "u"))
    ts, ys, ds, status = run(prog, [0.0, 1.0], 5.0, 1e-11, backend=backend)
    assert status == TMAX
    assert ts[-1] == pytest.approx(5.0)
    assert np.max(np.abs(ys[:, 1] - np.exp(-ys[:, 0]))) < 1e-9


@pytest.mark.parametrize("backend", BACKENDS)
def test_blowup_and_bounds(backend):
    prog = compile_field([parse("1"), parse("u^2")], ("x", "u"))
    _, ys, _, status = run(prog, [0.0, 1.0], 2.0, 1e-10, backend=backend)
    assert status == BLOWUP
    assert ys[-1, 0] < 1.0
    _, ys, _, status = run(prog, [0.0, 1.0], 2.0, 1e-10, hi=[np.inf, 10.0], backend=backend)
    # the first row outside the box ends the run
    assert status == BOUNDS
    assert ys[-1, 1] > 10.0
    assert np.all(ys[:-1, 1] <= 10.0)


@needs_cython
@pytest.mark.parametrize("fld, y0, tmax, normalize", [
    (["1", "x*u1", "u1^2+x-1/4"], [1e-6, 0.0, -0.5], 0.5, False),
    (["u", "u-x"], [0.3, 0.1], 20.0, True),
    (["x^2", "u^2+x"], [-0.5, 0.5], 1.0, True),
    (["-x", "u"], [1.0, 1e-3], 5.0, False),
])
def test_backends_agree(fld, y0, tmax, normalize):
    names = ("x", "u", "u1")[:len(fld)]
    prog = compile_field([parse(s) for s in fld], names)
    a = run(prog, y0, tmax, 1e-10, normalize=normalize, backend=_kernel_py)
    b = run(prog, y0, tmax, 1e-10, normalize=normalize, backend=_ckernel)
    assert a[3] == b[3]
    assert len(a[0]) == len(b[0])
    np.testing.assert_allclose(a[1], b[1], rtol=1e-9, atol=1e-12)


@pytest.mark.parametrize("backend", BACKENDS)
def test_normalized_run_stops_near_stationary_point(backend):
    # the attracting branch of the nilpotent point creeps in along x = -u^2
    prog = compile_field([parse("x^2"), parse("u^2+x")], ("x", "u"))
    ts, ys, _, status = run(prog, [-0.5, 0.5], 3.0, 1e-10, normalize=True, norm_floor=1e-14,
                            backend=backend)
    assert status == STATIONARY
    assert len(ts) < 50_000
    assert np.hypot(*ys[-1]) < 1e-3


def test_backend_selection_flag():
    assert kernel.BACKEND in ("python", "cython")


def test_chunked_output_is_continuous():
    prog = compile_field([parse("1"), parse("cos(x)")], ("x", "u"))
    ts, ys, _, _ = run(prog, [0.0, 0.0], 50.0, 1e-10, chunk=16)
    assert np.all(np.diff(ts) > 0)
    assert np.max(np.abs(ys[:, 1] - np.sin(ys[:, 0]))) < 1e-8
    assert math.isclose(ts[-1], 50.0)


@pytest.mark.parametrize("backend", BACKENDS)
def test_against_reference_integrator(backend):
    integ = pytest.importorskip("scipy.integrate")
    comps = [parse("x"), parse("x*u1"), parse("u1^2+x-1/4")]
    prog = compile_field(comps, ("x", "u", "u1"))
    y0 = [1e-3, -5e-4, -0.4995]
    ts, ys, _, status = run(prog, y0, 4.0, 1e-12, backend=backend)
    assert status == TMAX

    def rhs(t, y):
        return [evaluate(c, dict(zip(("x", "u", "u1"), y))) for c in comps]

    ref = integ.solve_ivp(rhs, (0.0, 4.0), y0, method="DOP853", rtol=1e-13, atol=1e-15)
    np.testing.assert_allclose(ys[-1], ref.y[:, -1], rtol=1e-9, atol=1e-12)
