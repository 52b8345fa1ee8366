"""Batch front end: job files in, reports and trajectory CSVs out.

A job file has the sections ``[equation]`` (``g``, ``f``, ``order`` or
``F``, ``order``), ``[point]`` (coordinate map), ``[tasks]`` and the optional
``[tolerances]`` (``tau_on``, ``tau_res``, ``tol``, ``kmax``).  Integers and
strings such as ``"1/2"`` in ``[point]`` are exact; TOML floats select the
floating-point path.
"""
from __future__ import annotations

import argparse
import sys
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Any

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from . import dynamics
from .classify import (TAU_ON, ImpasseClass, classify_impasse, classify_point, fiber_case,
                       first_order_discriminant, jacobian_at, project_field, reduced_form_warning,
                       vessiot_generator, VectorFieldSpec, PointClass)
from .expr import ExprError, ParseError, parse, variables, jet_names
from .ivp import (KMAX, TAU_RES, Case, ResonanceEncountered, SecondOrderIvp, diagnose,
                  jacobian_spectrum, taylor_chain)
from .jet import ImplicitEq, JetPoint, QuasiLinearEq
from .report import Report, normalize

GALLERY = Path(__file__).with_name("gallery")
TASK_ORDER = ("classify", "fiber", "diagnose", "taylor", "spectra", "trace", "improper",
              "portrait", "limits")
IVP_TASKS = {"diagnose", "taylor", "spectra", "trace", "limits"}
QL_TASKS = IVP_TASKS | {"fiber", "improper", "portrait"}
DEFAULT_TOL = 1e-12


class ValidationError(ValueError):
    """Invalid job specification; ``path`` locates the offending field."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path
        self.message = message


@dataclass
class JobSpec:
    equation: Any                      # QuasiLinearEq or ImplicitEq
    point: JetPoint
    tasks: dict
    tolerances: dict
    raw: dict = field(default_factory=dict)

    @property
    def quasi_linear(self) -> bool:
        return isinstance(self.equation, QuasiLinearEq)

    def ivp(self) -> SecondOrderIvp:
        p = self.point
        return SecondOrderIvp(self.equation.g, self.equation.f, p.coords[0], p.coords[1],
                              p.coords[2])


# --------------------------------------------------------------------------
# validation

def _number(v, path):
    if isinstance(v, bool):
        raise ValidationError(path, "expected a number")
    if isinstance(v, int):
        return Fraction(v)
    if isinstance(v, float):
        return v
    if isinstance(v, str):
        try:
            return Fraction(v.strip())
        except (ValueError, ZeroDivisionError):
            raise ValidationError(path, f"not a rational number: {v!r}") from None
    raise ValidationError(path, "expected a number or a rational string")


def _real(v, path):
    return float(_number(v, path))


def _expr(src, path):
    if not isinstance(src, str):
        raise ValidationError(path, "expected an expression string")
    try:
        return parse(src)
    except ParseError as exc:
        raise ValidationError(path, str(exc)) from None


def _is_ivp_shape(eq) -> bool:
    return (isinstance(eq, QuasiLinearEq) and eq.order == 2 and variables(eq.g) <= {"x"}
            and variables(eq.f) <= {"x", "u", "u1"})


def _task_options(name: str, value, path: str) -> dict:
    if value is True:
        return {}
    if value is False:
        return None
    if name in ("taylor", "diagnose") and isinstance(value, int) and not isinstance(value, bool):
        return {"n": value}
    if name == "spectra" and isinstance(value, (int, list)):
        return {"q": value}
    if isinstance(value, dict):
        return dict(value)
    raise ValidationError(path, "expected true, false or a table of options")


def _check_options(name: str, opts: dict, path: str) -> dict:
    allowed = {
        "classify": {}, "fiber": {}, "improper": {"window"},
        "diagnose": {"n"}, "taylor": {"n"}, "spectra": {"q"},
        "trace": {"q", "sides", "eps", "offset", "x_extent"},
        "portrait": {"window", "seeds"},
        "limits": {"eta", "offset", "q"},
    }[name]
    extra = set(opts) - set(allowed)
    if extra:
        raise ValidationError(f"{path}.{sorted(extra)[0]}", "unknown option")
    out = dict(opts)
    for key in ("n", "seeds"):
        if key in out and (not isinstance(out[key], int) or isinstance(out[key], bool)
                           or out[key] < (0 if key == "n" else 1)):
            raise ValidationError(f"{path}.{key}", "expected a non-negative integer")
    if "q" in out:
        qs = out["q"] if isinstance(out["q"], list) else [out["q"]]
        if not qs or not all(isinstance(q, int) and not isinstance(q, bool) and q >= 2 for q in qs):
            raise ValidationError(f"{path}.q", "expected integers >= 2")
        out["q"] = qs
    if "sides" in out:
        if not isinstance(out["sides"], list) or not out["sides"] or \
                not all(s in (1, -1) for s in out["sides"]):
            raise ValidationError(f"{path}.sides", "expected a list drawn from {1, -1}")
    for key in ("eps", "x_extent"):
        if key in out:
            out[key] = _real(out[key], f"{path}.{key}")
            if out[key] <= 0:
                raise ValidationError(f"{path}.{key}", "must be positive")
    if "offset" in out:
        vals = out["offset"] if isinstance(out["offset"], list) else [out["offset"]]
        out["offset"] = [_real(v, f"{path}.offset") for v in vals]
    if "eta" in out:
        vals = out["eta"] if isinstance(out["eta"], list) else [out["eta"]]
        out["eta"] = [_real(v, f"{path}.eta") for v in vals]
        if any(v == 0 for v in out["eta"]):
            raise ValidationError(f"{path}.eta", "must be non-zero")
    if "window" in out:
        w = out["window"]
        if name == "improper":
            out["window"] = _real(w, f"{path}.window")
        else:
            try:
                (a, b), (c, d) = w
                out["window"] = ((_real(a, path), _real(b, path)), (_real(c, path), _real(d, path)))
            except (TypeError, ValueError):
                raise ValidationError(f"{path}.window", "expected [[x0, x1], [y0, y1]]") from None
            if not (out["window"][0][0] < out["window"][0][1]
                    and out["window"][1][0] < out["window"][1][1]):
                raise ValidationError(f"{path}.window", "empty rectangle")
    return out


def parse_job(data: dict) -> JobSpec:
    """Validate a decoded job document."""
    if not isinstance(data, dict):
        raise ValidationError("<root>", "expected a table")
    unknown = set(data) - {"equation", "point", "tasks", "tolerances", "meta"}
    if unknown:
        raise ValidationError(sorted(unknown)[0], "unknown section")
    eqd = data.get("equation")
    if not isinstance(eqd, dict):
        raise ValidationError("equation", "missing section")
    has_gf = "g" in eqd or "f" in eqd
    if has_gf == ("F" in eqd):
        raise ValidationError("equation", "give exactly one of (g, f) or F")
    order = eqd.get("order")
    if not isinstance(order, int) or isinstance(order, bool) or order < 1:
        raise ValidationError("equation.order", "expected a positive integer")
    extra = set(eqd) - {"g", "f", "F", "order"}
    if extra:
        raise ValidationError(f"equation.{sorted(extra)[0]}", "unknown key")
    try:
        if has_gf:
            for key in ("g", "f"):
                if key not in eqd:
                    raise ValidationError(f"equation.{key}", "missing")
            eq = QuasiLinearEq(_expr(eqd["g"], "equation.g"), _expr(eqd["f"], "equation.f"),
                               order)
        else:
            eq = ImplicitEq(_expr(eqd["F"], "equation.F"), order)
    except ValidationError:
        raise
    except (ExprError, ValueError) as exc:
        raise ValidationError("equation", str(exc)) from None

    pd = data.get("point", {})
    if not isinstance(pd, dict):
        raise ValidationError("point", "expected a table")
    pd = {("u" if k == "u0" else k): v for k, v in pd.items()}
    names = jet_names(order - 1 if has_gf else order)
    for k in pd:
        if k not in names:
            raise ValidationError(f"point.{k}", f"not a coordinate of {', '.join(names)}")
    for n in names:
        if n not in pd:
            raise ValidationError(f"point.{n}", "missing coordinate")
    point = JetPoint([_number(pd[n], f"point.{n}") for n in names])

    td = data.get("tasks", {})
    if isinstance(td, list):
        td = {name: True for name in td}
    if not isinstance(td, dict):
        raise ValidationError("tasks", "expected a table or a list of task names")
    tasks = {}
    for name, value in td.items():
        path = f"tasks.{name}"
        if name not in TASK_ORDER:
            raise ValidationError(path, "unknown task")
        opts = _task_options(name, value, path)
        if opts is None:
            continue
        if name in QL_TASKS and not has_gf:
            raise ValidationError(path, "requires an equation given by (g, f)")
        if name in IVP_TASKS and not _is_ivp_shape(eq):
            raise ValidationError(path, "requires order 2 with g = g(x) and f = f(x, u, u1)")
        if name == "portrait" and not (eq.order == 1 or (_is_ivp_shape(eq)
                                                        and "u" not in variables(eq.f))):
            raise ValidationError(path, "needs a planar field: order 1, or order 2 with f free of u")
        tasks[name] = _check_options(name, opts, path)

    tol = data.get("tolerances", {})
    if not isinstance(tol, dict):
        raise ValidationError("tolerances", "expected a table")
    tolerances = {"tau_on": TAU_ON, "tau_res": TAU_RES, "tol": DEFAULT_TOL, "kmax": KMAX}
    for k, v in tol.items():
        if k not in tolerances:
            raise ValidationError(f"tolerances.{k}", "unknown tolerance")
        if k == "kmax":
            if not isinstance(v, int) or isinstance(v, bool) or v < 1:
                raise ValidationError("tolerances.kmax", "expected a positive integer")
            tolerances[k] = v
        else:
            tolerances[k] = _real(v, f"tolerances.{k}")
            if tolerances[k] <= 0:
                raise ValidationError(f"tolerances.{k}", "must be positive")
    return JobSpec(eq, point, tasks, tolerances, data)


def load_job(path) -> JobSpec:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ValidationError(str(path), f"cannot read job file: {exc.strerror}") from None
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ValidationError(str(path), f"TOML syntax error: {exc}") from None
    return parse_job(data)


# --------------------------------------------------------------------------
# orchestration

def _error(exc: Exception) -> dict:
    out = {"error": type(exc).__name__, "message": str(exc)}
    if isinstance(exc, ResonanceEncountered):
        out["partial"] = normalize(exc.partial)
        out["k"] = exc.k
    return out


def _eigen_entries(jr) -> list:
    return [{"value": normalize(e.value), "multiplicity": e.multiplicity,
             "vectors": normalize(e.vectors), "tangent": list(e.tangent),
             "transversal": list(e.transversal)} for e in jr.eigen]


def _trajectory_summary(tr, y=None) -> dict:
    xs = tr.column("x") if len(tr) else []
    out = {"states": len(tr), "status": tr.meta.get("status"),
           "events": [e.kind for e in tr.events]}
    if len(tr):
        out["start"] = normalize(tr.ys[0])
        out["end"] = normalize(tr.ys[-1])
        out["x_range"] = [float(min(xs)), float(max(xs))]
    return out


class _Runner:
    def __init__(self, job: JobSpec, out_dir: Path | None):
        self.job = job
        self.out_dir = out_dir
        self.tol = job.tolerances
        self.report = Report(normalize(job.raw))
        self.traces: dict = {}
        self._diag = None
        self._diag_error = None

    # helpers
    def _write_csv(self, tr, name: str) -> str:
        if self.out_dir is not None:
            tr.to_csv(self.out_dir / name)
        self.report.files.append(name)
        return name

    def diagnosis(self):
        if self._diag is None and self._diag_error is None:
            try:
                n = self.job.tasks.get("diagnose", {}).get("n", 4)
                self._diag = diagnose(self.job.ivp(), n=n, kmax=self.tol["kmax"],
                                      tau_on=self.tol["tau_on"], tau_res=self.tol["tau_res"])
            except Exception as exc:  # recorded, dependents are skipped
                self._diag_error = exc
        if self._diag_error is not None:
            raise self._diag_error
        return self._diag

    def _vacuous(self):
        """Reason why IVP tasks past the diagnosis are vacuous, or None."""
        try:
            d = self.diagnosis()
        except Exception as exc:
            return f"diagnosis failed: {type(exc).__name__}: {exc}"
        if d.case is Case.NO_STRONG_SOLUTION:
            return "skipped: the diagnosis is NoStrongSolution"
        return None

    # tasks
    def classify(self, opts):
        job, tau = self.job, self.tol["tau_on"]
        if not job.quasi_linear:
            pc = classify_point(job.equation, job.point, tau)
            out = {"point_class": pc.value}
            if pc is not PointClass.REGULAR:
                jr = jacobian_at(vessiot_generator(job.equation), job.point)
                out["jacobian"] = normalize(jr.matrix)
                out["eigenvalues"] = normalize(jr.eigenvalues)
                out["eigen"] = _eigen_entries(jr)
            return out
        ic = classify_impasse(job.equation, job.point, tau)
        out = {"impasse_class": ic.value}
        if ic is ImpasseClass.PROPER:
            jr = jacobian_at(project_field(job.equation), job.point)
            out["jacobian"] = normalize(jr.matrix)
            out["eigenvalues"] = normalize(jr.eigenvalues)
            out["eigen"] = _eigen_entries(jr)
        return out

    def fiber(self, opts):
        fc = fiber_case(self.job.equation, self.job.point, self.tol["tau_on"])
        out = normalize(fc)
        if self.job.equation.order == 1:
            out["first_order_discriminant"] = normalize(
                first_order_discriminant(self.job.equation, self.job.point))
        return out

    def diagnose(self, opts):
        d = self.diagnosis()
        out = normalize(d)
        out["verdict"] = d.verdict
        self.report.warnings.extend(w for w in d.warnings if w not in self.report.warnings)
        return out

    def taylor(self, opts):
        reason = self._vacuous()
        if reason:
            return {"skipped": reason}
        chain = taylor_chain(self.job.ivp(), opts.get("n", 6), self.tol["tau_on"],
                             self.tol["tau_res"])
        return {"coefficients": normalize(chain.coeffs),
                "divisors": {str(k): normalize(v) for k, v in chain.divisors.items()},
                "exact": chain.exact}

    def spectra(self, opts):
        reason = self._vacuous()
        if reason:
            return {"skipped": reason}
        out = {}
        for q in opts.get("q", [2]):
            try:
                s = jacobian_spectrum(self.job.ivp(), q, self.tol["tau_on"], self.tol["tau_res"])
                out[f"q{q}"] = {"full": normalize(s.full), "relevant": normalize(s.relevant),
                                "delta_eigenvector": normalize(s.delta_eigenvector),
                                "point": normalize(s.point)}
            except Exception as exc:
                out[f"q{q}"] = _error(exc)
        return out

    def _shoot(self, q, side, opts, offset=0.0):
        key = (q, side, offset)
        if key not in self.traces:
            self.traces[key] = dynamics.shoot_manifold(
                self.job.ivp(), q, side, opts.get("eps", 1e-6), tol=self.tol["tol"],
                offset=offset, x_extent=opts.get("x_extent", 0.1))
        return self.traces[key]

    def trace(self, opts):
        reason = self._vacuous()
        if reason:
            return {"skipped": reason}
        out = {}
        offset = opts.get("offset", [0.0])[0]
        for q in opts.get("q", [2]):
            for side in opts.get("sides", [1, -1]):
                label = f"q{q}_side{'+' if side > 0 else '-'}"
                try:
                    tr = self._shoot(q, side, opts, offset)
                except Exception as exc:
                    out[label] = _error(exc)
                    continue
                entry = _trajectory_summary(tr)
                entry.update({"stable": tr.meta.get("stable"),
                              "eps_half_difference": tr.meta.get("eps_half_difference"),
                              "eps": tr.meta["eps"], "offset": offset,
                              "file": self._write_csv(tr, f"trace_{label}.csv")})
                out[label] = entry
        return out

    def improper(self, opts):
        a = dynamics.analyze_improper(self.job.equation, self.job.point,
                                      window=opts.get("window", 1.0), tau_on=self.tol["tau_on"])
        return {"behavior": a.behavior.value, "g_before": a.g_before, "g_after": a.g_after,
                "x_drift": a.x_drift, "derivative_blowup": a.derivative_blowup,
                "sign_change_times": [e.t for e in a.events]}

    def portrait(self, opts):
        eq = self.job.equation
        if eq.order == 1:
            fld = project_field(eq)
        else:
            fld = VectorFieldSpec(("x", "u1"), (eq.g, eq.f), label="subsystem")
        window = opts.get("window", ((-1.0, 1.0), (-1.0, 1.0)))
        p = dynamics.portrait(fld, window, opts.get("seeds", 16), tol=max(self.tol["tol"], 1e-10))
        files = [self._write_csv(tr, f"portrait_{i}.csv") for i, tr in enumerate(p.trajectories)]
        return {"field": [str(c) for c in fld.names],
                "stationary": [{"point": normalize(s.point), "exact": s.exact,
                                "eigenvalues": normalize(s.eigenvalues), "kind": s.kind}
                               for s in p.stationary],
                "trajectories": len(p.trajectories),
                "separatrices": sum(1 for t in p.trajectories if t.meta.get("separatrix")),
                "files": files}

    def limits(self, opts):
        reason = self._vacuous()
        if reason:
            return {"skipped": reason}
        d = self.diagnosis()
        ivp = self.job.ivp()
        y = float(ivp.y)
        out = {"case": d.case.value}
        if d.case is Case.POSITIVE_PRODUCT:
            k = d.limit_descriptor.k
            c_k = float(d.taylor[k])
            exponent = float(d.limit_descriptor.exponent)
            q = max(2, k)
            topts = self.job.tasks.get("trace", {})
            members = []
            for off in opts.get("offset", [0.0]):
                for side in topts.get("sides", [1, -1]):
                    entry = {"side": side, "offset": off}
                    try:
                        tr = self._shoot(q, side, topts, off)
                        est = dynamics.estimate_limit_powerlaw(tr, k, c_k, exponent, y)
                        entry.update({"estimate": float(est), "converged": est.converged,
                                      "indicator": est.indicator})
                        try:
                            entry["holder_exponent"] = dynamics.fit_holder_exponent(tr, k, c_k, y)
                        except dynamics.InsufficientApproach as exc:
                            entry["holder_exponent"] = None
                            entry["holder_note"] = str(exc)
                    except Exception as exc:
                        entry.update(_error(exc))
                    members.append(entry)
            out.update({"functional": "powerlaw", "k": k, "exponent": exponent, "members": members})
        elif d.case is Case.CRITICAL_RESONANCE:
            k = d.k
            c_k = float(d.taylor[k])
            delta = float(d.delta)
            A = float(d.resonance_parameter)
            members = []
            for eta in opts.get("eta", [1.0, -1.0]):
                entry = {"eta": eta}
                try:
                    tr = dynamics.trace_resonant_member(ivp, k, eta, tol=self.tol["tol"])
                    est = dynamics.estimate_limit_resonant(tr, k, c_k, delta, y, A=A)
                    entry.update({"estimate": float(est), "converged": est.converged,
                                  "indicator": est.indicator})
                except Exception as exc:
                    entry.update(_error(exc))
                members.append(entry)
            out.update({"functional": "logexp", "k": k, "A": A, "members": members})
        else:
            out["skipped"] = f"no characterising limit for the case {d.case.value}"
        return out


def run(job: JobSpec, out_dir=None) -> Report:
    """Execute the job's tasks in dependency order; task failures become report entries."""
    out_dir = Path(out_dir) if out_dir is not None else None
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
    r = _Runner(job, out_dir)
    if job.quasi_linear:
        w = reduced_form_warning(job.equation)
        if w:
            r.report.warnings.append(w)
    for name in TASK_ORDER:
        if name not in job.tasks:
            continue
        try:
            r.report.results[name] = normalize(getattr(r, name)(job.tasks[name]))
        except Exception as exc:
            r.report.results[name] = _error(exc)
    return r.report


def emit(report: Report, fmt: str = "json", out_dir=None) -> str:
    """Serialise the report; written to ``out_dir/report.<ext>`` when given."""
    text = report.to_json() if fmt == "json" else report.to_text()
    if out_dir is not None:
        path = Path(out_dir) / ("report.json" if fmt == "json" else "report.txt")
        path.write_text(text)
    return text


# --------------------------------------------------------------------------
# command line

def gallery_jobs() -> list[Path]:
    return sorted(GALLERY.glob("*.toml"))


def _title(path: Path) -> str:
    try:
        data = tomllib.loads(path.read_text())
    except (OSError, tomllib.TOMLDecodeError):
        return ""
    return str(data.get("meta", {}).get("title", ""))


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="impasse",
                                 description="Impasse points of quasi-linear differential equations")
    sub = ap.add_subparsers(dest="command", required=True)
    pr = sub.add_parser("run", help="run a job file")
    pr.add_argument("job")
    pr.add_argument("--out", default=None, help="directory for the report and CSV files")
    pr.add_argument("--format", choices=("json", "text"), default="json")
    pe = sub.add_parser("examples", help="list the bundled example jobs")
    pe.add_argument("--show", metavar="NAME", help="print one job file")
    args = ap.parse_args(argv)

    if args.command == "examples":
        if args.show:
            path = GALLERY / (args.show if args.show.endswith(".toml") else args.show + ".toml")
            if not path.exists():
                print(f"no bundled example named {args.show!r}", file=sys.stderr)
                return 2
            sys.stdout.write(path.read_text())
            return 0
        for path in gallery_jobs():
            print(f"{path.stem:<28} {_title(path)}")
        print(f"(job files in {GALLERY})")
        return 0

    try:
        job = load_job(args.job)
    except ValidationError as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return 2
    report = run(job, args.out)
    text = emit(report, args.format, args.out)
    if args.out is None:
        sys.stdout.write(text)
    else:
        print(str(Path(args.out) / ("report.json" if args.format == "json" else "report.txt")))
    return 0


if __name__ == "__main__":
    sys.exit(main())
