"""Command line driver: build, verify, direct, report.

Every command writes ``manifest.json`` into the output directory and exits
with the code attached to the failure class (0 on success).
"""

from __future__ import annotations

import argparse
import json
import logging
import platform
import sys
import time
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .assemble import build_solution
from .errors import BBMError, ConfigError, GradientCatastrophe
from .phase import write_csv
from .scenario import load_scenario_file
from .verify import compare, direct_solve, residual_report

log = logging.getLogger("bbmsoliton")

EXIT_GENERIC = 1
EXIT_SLOPE = 5


def _eps_list(text):
    try:
        vals = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma-separated list of numbers: {text!r}")
    if not vals:
        raise argparse.ArgumentTypeError("empty eps list")
    return vals


def build_parser():
    p = argparse.ArgumentParser(prog="bbmsoliton",
                                description="Asymptotic soliton-like solutions of the variable-"
                                            "coefficient BBM equation and their verification.")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, scenario_required=True):
        sp.add_argument("--scenario", type=Path, required=scenario_required, help="scenario file (TOML)")
        sp.add_argument("--order", type=int, choices=(0, 1), default=1, help="truncation order N")
        sp.add_argument("--form", choices=("theorem1", "theorem2", "auto"), default=None,
                        help="assembly form (default: the scenario's 'form')")
        sp.add_argument("--out", type=Path, default=Path("out"), help="output directory")
        sp.add_argument("--jobs", type=int, default=1, help="worker threads for per-t slices")
        sp.add_argument("--eps", type=_eps_list, default=None, help="comma-separated eps override")
        sp.add_argument("--debug-phase-scale", type=float, default=1.0, help=argparse.SUPPRESS)
        sp.add_argument("-v", "--verbose", action="store_true")

    common(sub.add_parser("build", help="construct Y_N and write grids"))
    common(sub.add_parser("verify", help="residual order sweeps"))
    d = sub.add_parser("direct", help="compare with a finite-difference integration")
    common(d)
    d.add_argument("--t-run", type=float, default=0.5, help="integration time")
    d.add_argument("--dx", type=float, default=0.0025)
    d.add_argument("--dt", type=float, default=5e-4)
    d.add_argument("--scheme", choices=("rk4", "euler"), default="rk4")
    d.add_argument("--bc", choices=("periodic", "dirichlet"), default="periodic")
    d.add_argument("--init", choices=("asymptotic", "zero"), default="asymptotic")
    r = sub.add_parser("report", help="build, verify and render figures")
    common(r, scenario_required=False)
    return p


class Run:
    """Collects manifest entries and writes them exactly once."""

    def __init__(self, args):
        self.args = args
        self.out = args.out
        self.out.mkdir(parents=True, exist_ok=True)
        self.manifest = {
            "command": args.command,
            "scenario": str(args.scenario) if args.scenario else None,
            "out": str(self.out),
            "order": args.order,
            "versions": {"bbmsoliton": __version__, "python": platform.python_version(),
                         "numpy": np.__version__, "scipy": scipy.__version__},
            "timings": {},
            "files": [],
        }
        self._t0 = time.perf_counter()

    def file(self, name):
        self.manifest["files"].append(name)
        return self.out / name

    def finish(self, code, error=None):
        m = self.manifest
        m["exit_code"] = code
        m["status"] = "ok" if code == 0 else "failed"
        if error is not None:
            m["error"] = {"type": type(error).__name__, "message": str(error)}
            if isinstance(error, GradientCatastrophe):
                m["t_break"] = error.t_break
        m["timings"]["total"] = time.perf_counter() - self._t0
        (self.out / "manifest.json").write_text(json.dumps(m, indent=2, default=_json_default))
        return code


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    return str(o)


def _scenario(args):
    s = load_scenario_file(args.scenario)
    if args.eps:
        s = s.replace(eps=tuple(args.eps))
    return s


def _build(run, s):
    a = run.args
    form = a.form or s.form
    sol = build_solution(s, a.order, form, jobs=a.jobs, debug_phase_scale=a.debug_phase_scale)
    m = run.manifest
    m.update(form_requested=form, form=sol.form, t_eff=sol.t_eff, stop_reason=sol.curve.stop_reason,
             tau_max=sol.tau_max, eps=list(s.eps))
    m["tolerances"] = {"phase_rtol": 1e-9, "phase_atol": 1e-10, "quadrature_tol": 1e-11,
                       "orthogonality_tol": 1e-5, "decay_tol": 1e-8, "tau_step": 0.05,
                       "t_samples": 65, "debug_phase_scale": a.debug_phase_scale}
    m["timings"].update({f"build_{k}": v for k, v in sol.timings.items()})
    if sol.singular is not None:
        m["decay_class"] = sol.singular.decay
    return sol


def _write_build(run, sol, s):
    t0 = time.perf_counter()
    sol.curve.to_csv(run.file("phase.csv"))
    sol.regular_to_csv(run.file("regular.csv"))
    if sol.singular is not None:
        sol.singular.to_csv(run.file("singular.csv"))
        sol.singular.scalars_to_csv(run.file("singular_scalars.csv"))
    for e in s.eps:
        sol.to_csv(run.file(f"solution_eps{e:g}.csv"), e)
    run.manifest["jumps"] = {f"{e:g}": sol.boundary_jump(e) for e in s.eps}
    run.manifest["timings"]["write"] = time.perf_counter() - t0


def _verify(run, sol, s):
    t0 = time.perf_counter()
    rep = residual_report(sol, s.eps)
    run.file("residual_report.json").write_text(rep.to_json())
    run.manifest["timings"]["verify"] = time.perf_counter() - t0
    run.manifest["verify"] = {"near_slope": rep.near_slope, "far_slope": rep.far_slope,
                              "floor_flag": rep.floor_flag, "passed": rep.passed}
    return rep


def cmd_build(run):
    s = _scenario(run.args)
    sol = _build(run, s)
    _write_build(run, sol, s)
    return 0


def cmd_verify(run):
    s = _scenario(run.args)
    sol = _build(run, s)
    rep = _verify(run, sol, s)
    print(f"near slope {_f(rep.near_slope)} (>= {rep.near_threshold:g}), "
          f"far slope {_f(rep.far_slope)} (>= {rep.far_threshold:g}), floor {rep.floor_flag}")
    return 0 if rep.passed else EXIT_SLOPE


def cmd_direct(run):
    a = run.args
    s = _scenario(a)
    sol = _build(run, s)
    eps = s.eps[0]
    if a.t_run > sol.t_eff:
        raise ConfigError(f"--t-run {a.t_run} exceeds the curve interval {sol.t_eff:.6g}")
    if a.init == "zero":
        init = lambda x: np.zeros_like(x)  # noqa: E731
    else:
        init = lambda x: sol.value(x, np.zeros_like(x), eps)  # noqa: E731
    boundary = None
    if a.bc == "dirichlet" and a.init == "asymptotic":
        xb = np.array([s.x_min, s.x_max])
        boundary = lambda t: sol.value(xb, np.full(2, t), eps)  # noqa: E731
    t0 = time.perf_counter()
    d = direct_solve(s, eps, init, a.t_run, dx=a.dx, dt=a.dt, scheme=a.scheme, bc=a.bc,
                     snapshots=np.linspace(0.0, a.t_run, 6), boundary=boundary)
    run.manifest["timings"]["direct"] = time.perf_counter() - t0
    if a.init == "zero":
        rows = [(float(tk), eps, float(np.max(np.abs(d.u[k])))) for k, tk in enumerate(d.times)]
    else:
        rows = compare(sol, d)
    write_csv(run.file("direct_compare.csv"), ["t", "eps", "sup_error"], rows,
              [f"scheme={d.scheme}", f"bc={d.bc}", f"dx={d.dx!r}", f"dt={d.dt!r}",
               f"init={a.init}"])
    run.manifest["direct"] = {"eps": eps, "dx": d.dx, "dt": d.dt, "scheme": d.scheme, "bc": d.bc,
                              "invariant_drift": d.invariant_drift(),
                              "max_sup_error": max(r[2] for r in rows)}
    for r in rows:
        print(f"t={r[0]:.6g} eps={r[1]:g} sup_error={r[2]:.3e}")
    return 0


def cmd_report(run):
    from .plotting import render_report

    a = run.args
    code = 0
    if a.scenario is not None:
        s = _scenario(a)
        sol = _build(run, s)
        _write_build(run, sol, s)
        rep = _verify(run, sol, s)
        code = 0 if rep.passed else EXIT_SLOPE
    figs = render_report(run.out)
    run.manifest["files"] += [p.name for p in figs]
    return code


COMMANDS = {"build": cmd_build, "verify": cmd_verify, "direct": cmd_direct, "report": cmd_report}


def _f(v):
    return "n/a" if v is None or not np.isfinite(v) else f"{v:.3f}"


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 7 if exc.code not in (0, None) else 0
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    run = Run(args)
    try:
        return run.finish(COMMANDS[args.command](run))
    except BBMError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return run.finish(exc.exit_code, exc)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return run.finish(ConfigError.exit_code, exc)
    except Exception as exc:  # noqa: BLE001
        print(f"error: unexpected {type(exc).__name__}: {exc}", file=sys.stderr)
        return run.finish(EXIT_GENERIC, exc)


if __name__ == "__main__":
    sys.exit(main())
