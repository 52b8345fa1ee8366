"""Numerical side: trajectories of projected fields, invariant-manifold
shooting at proper impasse points, the behaviour at improper impasse points,
estimators for characterising limits and phase portraits of planar fields.
"""
from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from typing import Iterable, Optional, Sequence

import numpy as np

from .expr import Expr, ExprError, DomainError, evaluate
from .jet import JetPoint, QuasiLinearEq
from .classify import (TAU_ON, ImpasseClass, NonFiniteField, VectorFieldSpec, classify_impasse,
                       is_zero, jacobian_at, project_field)
from .ivp import SecondOrderIvp, extended_field, jacobian_spectrum
from . import kernel, linalg


class NotImproperImpasse(ExprError):
    pass


class NonTransversal(ArithmeticError):
    pass


class InsufficientApproach(ValueError):
    pass


# event kinds
G_SIGN_CHANGE = "GSignChange"
STATIONARY_APPROACH = "StationaryApproach"
BLOWUP = "Blowup"
LEFT_DOMAIN = "LeftDomain"

# raw field size below which a normalized run is treated as stopped at a stationary point
STATIONARY_FLOOR = 1e-14

_STATUS_EVENT = {kernel.BLOWUP: BLOWUP, kernel.STEP_COLLAPSE: STATIONARY_APPROACH,
                 kernel.STATIONARY: STATIONARY_APPROACH, kernel.DOMAIN: LEFT_DOMAIN}


@dataclass(frozen=True)
class Event:
    t: float
    kind: str
    row: int            # index of the state preceding (or at) the event


class Trajectory:
    """Accepted integrator states with their field values and events.

    ``ts`` is strictly monotone.  Arrays are read-only once constructed.
    """

    def __init__(self, names: Sequence[str], ts, states, derivs, events=(), meta=None):
        self.names = tuple(names)
        self.ts = np.asarray(ts, dtype=float)
        self.ys = np.asarray(states, dtype=float)
        self.ds = np.asarray(derivs, dtype=float)
        for a in (self.ts, self.ys, self.ds):
            a.setflags(write=False)
        self.events = tuple(events)
        self.meta = dict(meta or {})

    def __len__(self):
        return len(self.ts)

    @property
    def states(self) -> list[tuple[float, JetPoint]]:
        return [(float(t), JetPoint(list(map(float, y)))) for t, y in zip(self.ts, self.ys)]

    def index(self, name: str) -> int:
        return self.names.index(name)

    def column(self, name: str) -> np.ndarray:
        """State column, or a derivative column ``u(k)`` one order above the state.

        The first derivative beyond the state is recovered exactly from the
        field as ``d u(k-1)/dt / dx/dt``.
        """
        if name in self.names:
            return self.ys[:, self.index(name)]
        order = 0 if name == "u" else int(name[1:]) if name.startswith("u") else -2
        prev = "u" if order == 1 else f"u{order - 1}"
        if prev in self.names:
            with np.errstate(divide="ignore", invalid="ignore"):
                return self.ds[:, self.index(prev)] / self.ds[:, self.index("x")]
        raise KeyError(f"column {name!r} is not available")

    def column_slope(self, name: str) -> np.ndarray:
        """d(name)/dx along the trajectory from the field values."""
        with np.errstate(divide="ignore", invalid="ignore"):
            return self.ds[:, self.index(name)] / self.ds[:, self.index("x")]

    def graph(self, name: str, y: float = 0.0, side: int | None = None):
        """Samples ``(x, value)`` sorted by x, optionally restricted to one side of y."""
        x = self.column("x")
        v = self.column(name)
        mask = np.isfinite(v)
        if side is not None:
            mask &= (x - y) * side > 0
        order = np.argsort(x[mask])
        return x[mask][order], v[mask][order]

    def interpolate(self, name: str, xq):
        """Value of a state column at abscissae ``xq`` by cubic Hermite interpolation in x.

        Requires x to be monotone along the trajectory.
        """
        x = self.column("x")
        v = self.column(name)
        dv = self.column_slope(name) if name in self.names else None
        if not (np.all(np.diff(x) > 0) or np.all(np.diff(x) < 0)):
            raise ValueError("x is not monotone along the trajectory")
        if x[0] > x[-1]:
            x, v = x[::-1], v[::-1]
            dv = dv[::-1] if dv is not None else None
        xq = np.atleast_1d(np.asarray(xq, dtype=float))
        if np.any(xq < x[0]) or np.any(xq > x[-1]):
            raise ValueError("interpolation point outside the traced range")
        i = np.clip(np.searchsorted(x, xq) - 1, 0, len(x) - 2)
        x0, x1 = x[i], x[i + 1]
        hstep = x1 - x0
        s = (xq - x0) / hstep
        if dv is None or not np.all(np.isfinite(dv[i])) or not np.all(np.isfinite(dv[i + 1])):
            return v[i] + s * (v[i + 1] - v[i])
        h00 = 2 * s ** 3 - 3 * s ** 2 + 1
        h10 = s ** 3 - 2 * s ** 2 + s
        h01 = -2 * s ** 3 + 3 * s ** 2
        h11 = s ** 3 - s ** 2
        return h00 * v[i] + h10 * hstep * dv[i] + h01 * v[i + 1] + h11 * hstep * dv[i + 1]

    def to_csv(self, path) -> None:
        labels: dict[int, list[str]] = {}
        for ev in self.events:
            labels.setdefault(ev.row, []).append(ev.kind)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t", *self.names, "event"])
            for r in range(len(self.ts)):
                w.writerow([f"{self.ts[r]:.17g}", *(f"{v:.17g}" for v in self.ys[r]),
                            ";".join(labels.get(r, []))])

    def reversed(self) -> "Trajectory":
        """Same states with the time axis flipped (t -> -t), kept increasing."""
        n = len(self.ts)
        events = [Event(-e.t, e.kind, max(0, n - 2 - e.row) if e.kind == G_SIGN_CHANGE else n - 1 - e.row)
                  for e in self.events]
        return Trajectory(self.names, -self.ts[::-1], self.ys[::-1], -self.ds[::-1],
                          events, self.meta)

    def __repr__(self):
        return f"Trajectory({len(self)} states, names={self.names}, events={len(self.events)})"


# --------------------------------------------------------------------------
# integration

_program_cache: dict = {}


def _program(fld: VectorFieldSpec) -> kernel.Program:
    key = (fld.names, fld.components)
    prog = _program_cache.get(key)
    if prog is None:
        prog = kernel.compile_field(fld.components, fld.names)
        if len(_program_cache) > 256:
            _program_cache.clear()
        _program_cache[key] = prog
    return prog


def _hermite_state(y0, d0, y1, d1, h, s):
    h00 = 2 * s ** 3 - 3 * s ** 2 + 1
    h10 = s ** 3 - 2 * s ** 2 + s
    h01 = -2 * s ** 3 + 3 * s ** 2
    h11 = s ** 3 - s ** 2
    return h00 * y0 + h10 * h * d0 + h01 * y1 + h11 * h * d1


def _sign_events(names, ts, ys, ds, g: Expr, tol: float) -> list[Event]:
    events = []
    mapping = lambda y: dict(zip(names, map(float, y)))

    def gval(y):
        try:
            return float(evaluate(g, mapping(y)))
        except (DomainError, ZeroDivisionError):
            return math.nan

    vals = [gval(y) for y in ys]
    last = None     # index of the latest sample with a finite non-zero value
    for j, v in enumerate(vals):
        if not math.isfinite(v) or v == 0:
            continue
        if last is not None and (vals[last] > 0) != (v > 0):
            if j > last + 1:
                # g vanished exactly on an intermediate sample
                z = next(m for m in range(last + 1, j) if vals[m] == 0)
                events.append(Event(float(ts[z]), G_SIGN_CHANGE, z))
            else:
                events.append(Event(_bisect_crossing(ts, ys, ds, last, gval, tol),
                                    G_SIGN_CHANGE, last))
        last = j
    return events


def _bisect_crossing(ts, ys, ds, i, gval, tol):
    lo, hi = 0.0, 1.0
    h = ts[i + 1] - ts[i]
    fa = gval(ys[i])
    for _ in range(200):
        if (hi - lo) * abs(h) <= tol * max(1.0, abs(ts[i])):
            break
        mid = 0.5 * (lo + hi)
        fm = gval(_hermite_state(ys[i], ds[i], ys[i + 1], ds[i + 1], h, mid))
        if not math.isfinite(fm) or fm == 0:
            lo = hi = mid
            break
        if (fm > 0) == (fa > 0):
            lo, fa = mid, fm
        else:
            hi = mid
    return float(ts[i] + 0.5 * (lo + hi) * h)
    return events


def integrate(fld: VectorFieldSpec, start, tmax: float, tol: float = 1e-10, *,
              direction: int = 1, normalize: bool = False, bounds=None,
              sign_of: Expr | None = None, max_steps: int = 200_000,
              norm_floor: float = 0.0, backend=None) -> Trajectory:
    """Adaptive Dormand-Prince 5(4) integration of ``fld`` from ``start``.

    Parameters
    ----------
    direction : +1 or -1
        Integrate along the field or against it; t always increases.
    normalize : bool
        Divide the field by its Euclidean norm (arclength time).
    bounds : sequence of (lo, hi) or None
        Box leaving which ends the integration (no event is recorded).
    sign_of : Expr, optional
        Function whose sign changes are recorded as ``GSignChange`` events;
        defaults to the x-component for projected fields.
    """
    coords = start.coords if isinstance(start, JetPoint) else tuple(start)
    y0 = np.array([float(c) for c in coords])
    try:
        v0 = [float(c) for c in fld([float(c) for c in coords])]
    except (DomainError, ZeroDivisionError, OverflowError) as exc:
        raise NonFiniteField(f"field not evaluable at the start point: {exc}") from None
    if not all(math.isfinite(v) for v in v0):
        raise NonFiniteField("field is not finite at the start point")
    prog = _program(fld)
    lo = hi = None
    if bounds is not None:
        lo = np.array([b[0] for b in bounds], dtype=float)
        hi = np.array([b[1] for b in bounds], dtype=float)
    ts, ys, ds, status = kernel.run(prog, y0, float(tmax), float(tol), sign=float(direction),
                                    normalize=normalize, lo=lo, hi=hi, max_steps=max_steps,
                                    norm_floor=norm_floor, backend=backend)
    if sign_of is None and fld.label.startswith(("projected", "extended")):
        sign_of = fld.components[0]
    events = []
    if sign_of is not None and len(ts) > 1:
        events.extend(_sign_events(fld.names, ts, ys, ds, sign_of, tol))
    if status in _STATUS_EVENT:
        events.append(Event(float(ts[-1]) if len(ts) else 0.0, _STATUS_EVENT[status],
                            max(0, len(ts) - 1)))
    meta = {"field": fld.label or str(fld), "tol": tol, "direction": direction,
            "normalize": normalize, "status": kernel.STATUS_NAMES[status],
            "backend": kernel.BACKEND if backend is None else getattr(backend, "__name__", "")}
    return Trajectory(fld.names, ts, ys, ds, sorted(events, key=lambda e: e.t), meta)


def contact_residual(traj: Trajectory) -> float:
    """Largest violation of ``d u(i)/dt = u(i+1) dx/dt`` over states and contact pairs."""
    names = traj.names
    worst = 0.0
    xi = names.index("x")
    for i in range(len(names) - 2):
        a, b = names.index(names[1 + i]), names.index(names[2 + i])
        r = np.abs(traj.ds[:, a] - traj.ys[:, b] * traj.ds[:, xi])
        worst = max(worst, float(r.max()) if len(r) else 0.0)
    return worst


# --------------------------------------------------------------------------
# shooting

def shoot_manifold(ivp: SecondOrderIvp, q: int, side: int, eps: float = 1e-6, *,
                   x_extent: float = 0.1, tol: float = 1e-12, offset: float = 0.0,
                   check: bool = True, max_steps: int = 200_000) -> Trajectory:
    """Trace the invariant manifold leaving ``rho_(q-1)`` along the delta-eigenvector.

    The start point is ``rho_(q-1) + side * eps * v`` with v the normalised
    delta-eigenvector, shifted by ``offset`` along the last coordinate; that
    coordinate axis is the eigenvector of ``gamma - (q-2) delta``, so a
    non-zero offset selects a neighbouring member of a solution family.
    The integration runs in the direction in which the delta-mode grows and
    stops once ``|x - y| >= x_extent``.  With ``check`` the run is repeated
    at ``eps/2`` and ``meta['stable']`` records whether both agree.
    """
    if side not in (1, -1):
        raise ValueError("side must be +1 or -1")
    spec = jacobian_spectrum(ivp, q)
    delta = float(spec.relevant[0])
    v = np.array([float(c) for c in spec.delta_eigenvector])
    if v[0] == 0:
        raise NonTransversal("the delta-eigenvector has no x-component")
    vhat = v / np.linalg.norm(v)
    base = np.array([float(c) for c in spec.point.coords])
    fld = extended_field(ivp, q)
    y = float(ivp.y)

    def run(e):
        start = base + side * e * vhat
        start[-1] += offset
        bounds = [(-np.inf, np.inf)] * fld.dim
        bounds[0] = (y - x_extent, y + x_extent)
        tmax = 60.0 / abs(delta) + 10.0
        tr = integrate(fld, start, tmax, tol, direction=1 if delta > 0 else -1, bounds=bounds,
                       max_steps=max_steps)
        return tr

    traj = run(eps)
    meta = dict(traj.meta)
    meta.update({"q": q, "side": side, "eps": eps, "offset": offset, "y": y,
                 "start": [float(c) for c in traj.ys[0]] if len(traj) else None})
    if check:
        other = run(eps / 2)
        diff = _trace_difference(traj, other, y, side, x_extent)
        meta.update({"eps_half_difference": diff,
                     "stable": bool(diff <= 1e-6 * max(1.0, _trace_scale(traj)))})
    return Trajectory(traj.names, traj.ts, traj.ys, traj.ds, traj.events, meta)


def _trace_scale(tr: Trajectory) -> float:
    return float(np.abs(tr.ys).max()) if len(tr) else 1.0


def _trace_difference(a: Trajectory, b: Trajectory, y: float, side: int, extent: float) -> float:
    xs_a = a.column("x")
    xs_b = b.column("x")
    lo = max(np.abs(xs_a - y).min(), np.abs(xs_b - y).min())
    hi = min(np.abs(xs_a - y).max(), np.abs(xs_b - y).max(), extent)
    if hi <= lo:
        return math.inf
    probe = y + side * np.geomspace(max(lo, 1e-12), hi, 12)[1:-1]
    worst = 0.0
    for name in a.names[1:]:
        try:
            va = a.interpolate(name, probe)
            vb = b.interpolate(name, probe)
        except ValueError:
            return math.inf
        worst = max(worst, float(np.abs(va - vb).max()))
    return worst


def trace_resonant_member(ivp: SecondOrderIvp, k: int, eta: float, *, x_start: float = 1e-9,
                          x_extent: float = 0.02, tol: float = 1e-12,
                          max_steps: int = 200_000) -> Trajectory:
    """Trace the member of a critically resonant family with characterising limit ``eta``.

    The start point at ``x = y + x_start * sign(eta)`` carries the Taylor
    polynomial through ``c_k`` in the lower coordinates and
    ``c_k + (r / delta) ln(r / eta)`` in ``u(k)``, r = x - y; the trajectory is
    then integrated outward on J_k until ``|x - y| >= x_extent``.
    """
    from .ivp import taylor_chain
    if eta == 0:
        raise ValueError("eta must be non-zero")
    side = 1 if eta > 0 else -1
    chain = [float(c) for c in taylor_chain(ivp, k).coeffs]
    delta = float(jacobian_delta(ivp))
    y = float(ivp.y)
    r = side * x_start
    start = [y + r]
    for j in range(k):
        start.append(sum(chain[i] * r ** (i - j) / math.factorial(i - j) for i in range(j, k + 1)))
    start.append(chain[k] + (r / delta) * math.log(r / eta))
    fld = extended_field(ivp, k + 1)
    bounds = [(-np.inf, np.inf)] * fld.dim
    bounds[0] = (y - x_extent, y + x_extent)
    tr = integrate(fld, start, 60.0 / abs(delta) + 10.0, tol, direction=1 if delta > 0 else -1,
                   bounds=bounds, max_steps=max_steps)
    tr.meta.update({"k": k, "eta": eta, "side": side, "y": y, "x_start": x_start})
    return tr


def jacobian_delta(ivp: SecondOrderIvp):
    from .ivp import impasse_parameters
    return impasse_parameters(ivp).delta


# --------------------------------------------------------------------------
# improper impasse points

class ImproperBehavior(str, Enum):
    VERTICAL_LINE = "VerticalLine"
    NO_SIGN_CHANGE = "NoSignChange"
    SIGN_CHANGE_PLUS = "SignChangePlus"
    SIGN_CHANGE_MINUS = "SignChangeMinus"


@dataclass
class ImproperAnalysis:
    behavior: ImproperBehavior
    g_before: float
    g_after: float
    x_drift: float
    derivative_blowup: bool
    forward: Trajectory
    backward: Trajectory
    events: tuple = ()


VERTICAL_WINDOW = 1e-10
BLOWUP_RATIO = 1e6


def analyze_improper(eq: QuasiLinearEq, rho, *, window: float = 1.0, tol: float = 1e-11,
                     tau_on: float = TAU_ON) -> ImproperAnalysis:
    """Integrate the trajectory of Y through an improper impasse point both ways."""
    rho = rho if isinstance(rho, JetPoint) else JetPoint(rho)
    if classify_impasse(eq, rho, tau_on) is not ImpasseClass.IMPROPER:
        raise NotImproperImpasse(f"{rho} is not an improper impasse point")
    fld = project_field(eq)
    fwd = integrate(fld, rho, window, tol, normalize=True, norm_floor=STATIONARY_FLOOR)
    bwd = integrate(fld, rho, window, tol, direction=-1, normalize=True,
                    norm_floor=STATIONARY_FLOOR)
    x0 = float(rho.coords[0])
    drift = max(float(np.abs(fwd.column("x") - x0).max()), float(np.abs(bwd.column("x") - x0).max()))

    def g_along(tr):
        out = []
        for y in tr.ys:
            m = dict(zip(tr.names, map(float, y)))
            out.append((float(evaluate(eq.g, m)), max(1.0, _scale_at(eq.g, m))))
        return out

    gf, gb = g_along(fwd), g_along(bwd)
    g_small = all(abs(v) <= tau_on * s for v, s in gf + gb)
    if drift <= VERTICAL_WINDOW and g_small:
        behavior = ImproperBehavior.VERTICAL_LINE
        before = after = 0.0
    else:
        after = next((v for v, s in gf[1:] if abs(v) > tau_on * s), 0.0)
        before = next((v for v, s in gb[1:] if abs(v) > tau_on * s), 0.0)
        if before < 0 < after:
            behavior = ImproperBehavior.SIGN_CHANGE_PLUS
        elif after < 0 < before:
            behavior = ImproperBehavior.SIGN_CHANGE_MINUS
        else:
            behavior = ImproperBehavior.NO_SIGN_CHANGE
    blowup = _derivative_blowup(fwd, bwd, eq.order)
    joined = _join(bwd, fwd)
    events = _sign_events(joined.names, joined.ts, joined.ys, joined.ds, eq.g, tol) \
        if len(joined) > 1 else []
    return ImproperAnalysis(behavior, before, after, drift, blowup, fwd, bwd, tuple(events))


def _scale_at(e, m):
    from .expr import term_scale
    return term_scale(e, m)


def _join(bwd: Trajectory, fwd: Trajectory) -> Trajectory:
    """Backward branch (time-reversed) followed by the forward branch."""
    rb = bwd.reversed()
    ts = np.concatenate([rb.ts[:-1], fwd.ts])
    ys = np.concatenate([rb.ys[:-1], fwd.ys])
    ds = np.concatenate([rb.ds[:-1], fwd.ds])
    return Trajectory(fwd.names, ts, ys, ds)


def _derivative_blowup(fwd: Trajectory, bwd: Trajectory, q: int) -> bool:
    """Heuristic: the slope d u(q-1)/dx grows beyond 1e6 times its far value near rho."""
    name = fwd.names[-1]
    slopes = []
    for tr in (fwd, bwd):
        s = np.abs(tr.column_slope(name))
        slopes.append(s)
    s = np.concatenate(slopes)
    if not np.any(np.isfinite(s)):
        return True
    near = max(float(np.nan_to_num(slopes[0][:3], nan=np.inf, posinf=np.inf).max()),
               float(np.nan_to_num(slopes[1][:3], nan=np.inf, posinf=np.inf).max()))
    far = min(float(slopes[0][-1]), float(slopes[1][-1]))
    return near > BLOWUP_RATIO * max(far, 1e-300) or math.isinf(near)


def improper_impasse_behavior(eq: QuasiLinearEq, rho, **kw) -> ImproperBehavior:
    """Classify how trajectories pass an improper impasse point by the sign of g along them."""
    return analyze_improper(eq, rho, **kw).behavior


# --------------------------------------------------------------------------
# characterising limits

class LimitEstimate(float):
    """A float carrying the diagnostics of the ladder estimate."""

    def __new__(cls, value, **info):
        obj = super().__new__(cls, value)
        obj.info = info
        return obj

    def __getattr__(self, name):
        try:
            return self.__dict__["info"][name]
        except KeyError:
            raise AttributeError(name) from None

    @property
    def value(self) -> float:
        return float(self)


LADDER_X1 = 1e-2
LADDER_J = 10
NOISE_FLOOR = 1e-10


def _side_of(traj: Trajectory, y: float) -> int:
    d = traj.column("x") - y
    return 1 if np.nanmedian(d) >= 0 else -1


def _ladder(traj: Trajectory, name: str, y: float, side, x1: float, J: int):
    """Values of column ``name`` on the rungs ``y + side 2^-j x1`` covered by the trace."""
    side = side if side is not None else _side_of(traj, y)
    xs, vs = traj.graph(name, y, side)
    if len(xs) < 2:
        raise InsufficientApproach("no samples on the requested side")
    r = np.abs(xs - y)
    order = np.argsort(r)
    r, vs = r[order], vs[order]
    rungs = []
    for j in range(J + 1):
        rj = x1 * 2.0 ** (-j)
        if r[0] <= rj <= r[-1]:
            i = min(max(np.searchsorted(r, rj) - 1, 0), len(r) - 2)
            w = (rj - r[i]) / (r[i + 1] - r[i]) if r[i + 1] > r[i] else 0.0
            rungs.append((rj, float(vs[i] + w * (vs[i + 1] - vs[i]))))
    if len(rungs) < 4:
        raise InsufficientApproach(f"only {len(rungs)} ladder rungs are covered by the trace")
    return side, rungs


def _ladder_from_column(traj, k, y, side, x1, J):
    name = "u" if k == 0 else f"u{k}"
    try:
        return _ladder_interp(traj, name, y, side, x1, J)
    except KeyError:
        raise InsufficientApproach(f"trajectory carries no u{k} samples") from None


def _ladder_interp(traj, name, y, side, x1, J):
    side = side if side is not None else _side_of(traj, y)
    xs = traj.column("x")
    mask = (xs - y) * side > 0
    if mask.sum() < 2:
        raise InsufficientApproach("no samples on the requested side")
    if name in traj.names:
        sub = Trajectory(traj.names, traj.ts[mask], traj.ys[mask], traj.ds[mask])
        xr = sub.column("x")
        lo, hi = np.abs(xr - y).min(), np.abs(xr - y).max()
        rungs = []
        for j in range(J + 1):
            rj = x1 * 2.0 ** (-j)
            if lo <= rj <= hi:
                try:
                    val = float(sub.interpolate(name, [y + side * rj])[0])
                except ValueError:
                    continue
                rungs.append((rj, val))
        if len(rungs) < 4:
            raise InsufficientApproach(f"only {len(rungs)} ladder rungs are covered by the trace")
        return side, rungs
    return _ladder(traj, name, y, side, x1, J)


def _fit_with_correction(r, L, p, log_term=False):
    """Least squares ``L = beta + a r^p (+ b r^p ln r)``; returns beta and the Richardson indicator."""
    r = np.asarray(r)
    L = np.asarray(L)
    cols = [np.ones_like(r), r ** p]
    if log_term:
        cols.append(r ** p * np.log(r))
    A = np.vstack(cols).T
    coef, *_ = np.linalg.lstsq(A, L, rcond=None)
    beta = float(coef[0])
    # rungs are ordered from far to near with ratio 1/2
    rich = [(2 ** p * L[j + 1] - L[j]) / (2 ** p - 1) for j in range(len(L) - 1)]
    indicator = abs(rich[-1] - rich[-2]) if len(rich) >= 2 else math.inf
    return beta, indicator, rich


def estimate_limit_powerlaw(traj: Trajectory, k: int, c_k: float, exponent: float, y: float, *,
                            side: int | None = None, x1: float = LADDER_X1,
                            J: int = LADDER_J) -> LimitEstimate:
    """Limit of ``(u(k)(x) - c_k) / |x - y|^exponent`` as x approaches y.

    The quotient is sampled on a geometric ladder and extrapolated with the
    first correction term ``|x - y|^(1 - exponent)``.
    """
    if not 0 < exponent < 1:
        raise ValueError("exponent must lie in (0, 1)")
    side, rungs = _ladder_from_column(traj, k, y, side, x1, J)
    r = np.array([a for a, _ in rungs])
    L = np.array([(v - c_k) / a ** exponent for a, v in rungs])
    beta, ind, rich = _fit_with_correction(r, L, 1.0 - exponent)
    converged = ind <= 1e-3 * max(1.0, abs(beta))
    return LimitEstimate(beta, indicator=ind, converged=converged, rungs=len(rungs), side=side,
                         richardson=rich[-1], samples=L.tolist())


def estimate_limit_resonant(traj: Trajectory, k: int, c_k: float, delta: float, y: float, *,
                            A: float = 1.0, side: int | None = None, x1: float = LADDER_X1,
                            J: int = LADDER_J) -> LimitEstimate:
    """Limit of ``(x - y) exp(-delta (u(k)(x) - c_k) / (A (x - y)))`` as x approaches y.

    ``A`` is the resonance parameter; the characterising limit of the
    resonance theorem corresponds to ``A = 1``.  A vanishing extrapolated
    value, or rung values shrinking like ``|x - y|``, mean the trace has no
    log-exponential structure; ``converged`` is then False.
    """
    side, rungs = _ladder_from_column(traj, k, y, side, x1, J)
    r = np.array([a for a, _ in rungs])
    with np.errstate(over="ignore", invalid="ignore"):
        L = np.array([side * a * math.exp(min(700.0, -delta * (v - c_k) / (A * side * a)))
                      for a, v in rungs])
    if not np.all(np.isfinite(L)):
        return LimitEstimate(math.nan, indicator=math.inf, converged=False, rungs=len(rungs),
                             side=side, richardson=math.nan, samples=L.tolist(), degenerate=True)
    beta, ind, rich = _fit_with_correction(r, L, 1.0, log_term=True)
    scale = float(np.abs(L).max())
    ratios = np.abs(L[1:] / L[:-1])
    vanishing = bool(np.all(np.abs(ratios - 0.5) < 0.05)) or abs(beta) <= 1e-3 * scale
    converged = (ind <= 1e-3 * max(abs(beta), 1e-300)) and not vanishing
    return LimitEstimate(beta, indicator=ind, converged=converged, rungs=len(rungs), side=side,
                         richardson=rich[-1], samples=L.tolist(), degenerate=vanishing)


def fit_holder_exponent(traj: Trajectory, k: int, c_k: float, y: float, *,
                        side: int | None = None, x1: float = LADDER_X1,
                        J: int = LADDER_J) -> float:
    """Log-log slope of ``|u(k)(x) - c_k|`` against ``|x - y|`` on the ladder."""
    side, rungs = _ladder_from_column(traj, k, y, side, x1, J)
    floor = NOISE_FLOOR * max(1.0, abs(c_k))
    pts = [(a, abs(v - c_k)) for a, v in rungs if abs(v - c_k) > floor]
    if len(pts) < 4:
        raise InsufficientApproach("the deviation from c_k is at rounding level on the ladder")
    lr = np.log([a for a, _ in pts])
    lv = np.log([b for _, b in pts])
    slope, _ = np.polyfit(lr, lv, 1)
    return float(slope)


# --------------------------------------------------------------------------
# phase portraits

@dataclass(frozen=True)
class StationaryPoint:
    point: tuple
    exact: bool
    eigenvalues: tuple
    kind: str
    eigenvectors: tuple = ()


@dataclass
class Portrait:
    trajectories: list
    stationary: list
    window: tuple

    def __iter__(self):
        return iter(self.trajectories)

    def __len__(self):
        return len(self.trajectories)


def classify_planar(J, tol: float = 1e-9) -> str:
    """Linear type of a planar stationary point from its Jacobian."""
    vals = linalg.eigenvalues(J)
    l1, l2 = complex(vals[0]), complex(vals[1])
    scale = max(1.0, max(abs(float(v)) for row in J for v in row))
    zero = lambda z: abs(z) <= tol * scale
    if abs(l1.imag) > tol * scale:
        return "centre" if zero(l1.real) else "focus"
    a, b = l1.real, l2.real
    if zero(a) and zero(b):
        return "degenerate" if all(zero(complex(v)) for row in J for v in row) else "nilpotent"
    if zero(a) or zero(b):
        return "semi-hyperbolic"
    if a * b < 0:
        return "saddle"
    if abs(a - b) <= tol * scale:
        offdiag = abs(float(J[0][1])) + abs(float(J[1][0]))
        return "star node" if offdiag <= tol * scale else "one-tangent node"
    return "node"


def _newton(fld: VectorFieldSpec, p0, iters: int = 50):
    p = np.array(p0, dtype=float)
    for _ in range(iters):
        try:
            F = np.array([float(v) for v in fld(list(p))])
            J = np.array([[float(v) for v in row] for row in fld.jacobian(list(p))])
        except (DomainError, ZeroDivisionError, OverflowError):
            return None
        if np.linalg.norm(F) < 1e-14:
            return p
        try:
            step = np.linalg.lstsq(J, -F, rcond=None)[0]
        except np.linalg.LinAlgError:
            return None
        p = p + step
        if not np.all(np.isfinite(p)):
            return None
        if np.linalg.norm(step) < 1e-15 * max(1.0, np.linalg.norm(p)):
            break
    F = np.array([float(v) for v in fld(list(p))])
    return p if np.linalg.norm(F) < 1e-9 else None


def find_stationary(fld: VectorFieldSpec, window, grid: int = 12) -> list[StationaryPoint]:
    """Stationary points in the window by Newton from a grid, snapped to rationals when exact."""
    (x0, x1), (y0, y1) = window
    found: list[np.ndarray] = []
    scale = max(1.0, x1 - x0, y1 - y0)
    for a in np.linspace(x0, x1, grid):
        for b in np.linspace(y0, y1, grid):
            p = _newton(fld, (a, b))
            if p is None or not (x0 <= p[0] <= x1 and y0 <= p[1] <= y1):
                continue
            if any(np.linalg.norm(p - q) < 1e-5 * scale for q in found):
                continue
            found.append(p)
    out = []
    seen = set()
    for p in found:
        snapped = tuple(Fraction(float(c)).limit_denominator(1000) for c in p)
        try:
            exact = all(v == 0 for v in fld(list(snapped)))
        except (DomainError, ZeroDivisionError):
            exact = False
        pt = snapped if exact else tuple(float(c) for c in p)
        if pt in seen:
            continue
        seen.add(pt)
        jr = jacobian_at(fld, list(pt))
        J = [list(r) for r in jr.matrix]
        out.append(StationaryPoint(pt, exact, jr.eigenvalues, classify_planar(J),
                                   tuple((e.value, e.vectors) for e in jr.eigen)))
    out.sort(key=lambda s: tuple(float(c) for c in s.point))
    return out


def portrait(fld: VectorFieldSpec, window, seeds: int = 16, *, tmax: float | None = None,
             tol: float = 1e-9, separatrix_eps: float = 1e-6, workers: int = 1) -> Portrait:
    """Sample the phase portrait of a planar field in an affine window.

    Seeds on a regular grid are integrated both ways in arclength time until
    they leave the window; saddle-type and other real eigen-directions at
    each stationary point are shot as separatrix approximations.
    """
    if fld.dim != 2:
        raise ValueError("portraits need a planar field")
    (x0, x1), (y0, y1) = window
    bounds = [(x0, x1), (y0, y1)]
    diam = math.hypot(x1 - x0, y1 - y0)
    tmax = tmax if tmax is not None else 4.0 * diam
    n = max(1, math.ceil(math.sqrt(seeds)))
    xs = np.linspace(x0, x1, n + 2)[1:-1]
    ys = np.linspace(y0, y1, n + 2)[1:-1]
    starts = [(float(a), float(b)) for a in xs for b in ys][:seeds]
    stationary = find_stationary(fld, window)

    jobs = []
    for s in starts:
        for d in (1, -1):
            jobs.append((s, d, {"seed": s, "direction": d}))
    for sp in stationary:
        p = np.array([float(c) for c in sp.point])
        for value, vecs in sp.eigenvectors:
            if isinstance(value, complex):
                continue
            lv = float(value)
            for vec in vecs:
                v = np.array([float(c) for c in vec])
                v /= np.linalg.norm(v)
                d = 1 if lv > 0 else -1
                for sgn in (1, -1):
                    jobs.append((tuple(p + sgn * separatrix_eps * v), d,
                                 {"separatrix": True, "stationary": tuple(map(float, sp.point)),
                                  "eigenvalue": lv, "direction": d, "branch": sgn}))

    def run(job):
        start, d, meta = job
        try:
            tr = integrate(fld, start, tmax, tol, direction=d, normalize=True, bounds=bounds,
                           norm_floor=STATIONARY_FLOOR)
        except NonFiniteField as exc:
            tr = Trajectory(fld.names, [0.0], [start], [[0.0, 0.0]],
                            [Event(0.0, LEFT_DOMAIN, 0)], {"error": str(exc)})
        tr.meta.update(meta)
        return tr

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            trajs = list(pool.map(run, jobs))
    else:
        trajs = [run(j) for j in jobs]
    return Portrait(trajs, stationary, ((x0, x1), (y0, y1)))
