"""Piecewise assembly of the asymptotic solution Y_N, N in {0, 1}.

Regions at time t, with tau = (x - phi(t)) / eps and window half-width
w = eps * tau_max:

* Omega:   |tau| <= tau_max, regular part plus singular part;
* Dminus:  x < phi - w, regular part (plus eps * u1^- in the second form);
* Dplus:   x > phi + w, regular part.

First form (every Phi1(t, -inf) vanishes): V1 = nu1 eta + psi.
Second form: V1 = u1^-(x, t) eta + psi, and eps * u1^- is kept on Dminus.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import scenario as scen
from .errors import ConfigError, FormUnavailable, InadmissibleStart, OutOfDomain
from .jet import Jet
from .phase import solve_phase, write_csv
from .regular import solve_extension, solve_u0, solve_u1
from .singular import DEFAULT_H, DEFAULT_SAMPLES, SolitonCore, build_singular, eta_tau_jet

log = logging.getLogger(__name__)

DMINUS, OMEGA, DPLUS = 0, 1, 2
REGION_NAMES = ("Dminus", "Omega", "Dplus")


@dataclass
class AsymptoticSolution:
    scenario: object
    tab: object
    curve: object
    u0: object
    u1: Optional[object]
    core: SolitonCore
    singular: Optional[object]
    extension: Optional[object]
    order: int
    form: str
    tau_max: float
    timings: dict = field(default_factory=dict)

    @property
    def t_eff(self):
        return self.curve.t_eff

    def half_width(self, eps):
        return eps * self.tau_max

    def regions(self, x, t, eps):
        x, t = np.broadcast_arrays(np.asarray(x, float), np.asarray(t, float))
        tau = (x - self.curve.phi(t)) / eps
        return np.where(np.abs(tau) <= self.tau_max, OMEGA, np.where(tau < 0, DMINUS, DPLUS))

    def jet(self, x, t, eps, *, soliton=True):
        """Jet of Y_N at (x, t) and the region code of every point."""
        x, t = np.broadcast_arrays(np.asarray(x, float), np.asarray(t, float))
        shape = x.shape
        x, t = x.ravel(), t.ravel()
        if np.any(t < 0) or np.any(t > self.t_eff * (1 + 1e-12)):
            raise OutOfDomain(f"t outside [0, {self.t_eff:.6g}]")
        phi = self.curve.phi(t)
        tau = (x - phi) / eps
        region = np.where(np.abs(tau) <= self.tau_max, OMEGA, np.where(tau < 0, DMINUS, DPLUS))

        Y = self.u0.jet(x, t)
        if self.order >= 1:
            Y = Y + self.u1.jet(x, t).scale(eps)

        if self.order >= 1 and self.form == "theorem2":
            left = region == DMINUS
            if np.any(left):
                add = Jet.zeros(x.shape)
                jl = self.extension.jet(x[left], t[left])
                for f in ("v", "x", "t", "xx", "xt", "xxt"):
                    getattr(add, f)[left] = eps * getattr(jl, f)
                Y = Y + add

        inner = region == OMEGA
        if soliton and np.any(inner):
            ti, xi, ta = t[inner], x[inner], tau[inner]
            st = self.core.state(ti)
            S = Jet.from_tau(self.core.tau_jet(st, ta), eps, st["dphi"])
            if self.order >= 1:
                S = S + self._V1(st, xi, ti, ta, eps).scale(eps)
            add = Jet.zeros(x.shape)
            for f in ("v", "x", "t", "xx", "xt", "xxt"):
                getattr(add, f)[inner] = getattr(S, f)
            Y = Y + add
        return Jet(*(np.reshape(getattr(Y, f), shape) for f in ("v", "x", "t", "xx", "xt", "xxt"))), \
            region.reshape(shape)

    def _V1(self, st, x, t, tau, eps):
        sc = self.singular
        dphi = st["dphi"]
        if self.form == "theorem1":
            return Jet.from_tau(sc.v1_jet(st, t, tau), eps, dphi)
        eta = Jet.from_tau(eta_tau_jet(st, tau), eps, dphi)
        psi = Jet.from_tau(sc.psi_jet(t, tau), eps, dphi)
        return self.extension.jet(x, t) * eta + psi

    def value(self, x, t, eps, **kw):
        return self.jet(x, t, eps, **kw)[0].v

    def boundary_jump(self, eps, n_t=33):
        """Largest jump of Y_N across x = phi(t) +- eps * tau_max."""
        t = np.linspace(0.0, self.t_eff, n_t)
        w = self.half_width(eps)
        out = 0.0
        s = self.scenario
        for side in (-1.0, 1.0):
            xb = self.curve.phi(t) + side * w
            keep = (xb >= s.x_min) & (xb <= s.x_max)
            if not np.any(keep):
                continue
            xb, tb = xb[keep], t[keep]
            inside = self.jet(xb, tb, eps)[0].v
            outside = self.u0.value(xb, tb)
            if self.order >= 1:
                outside = outside + eps * self.u1.value(xb, tb)
                if self.form == "theorem2" and side < 0:
                    outside = outside + eps * self.extension.value(xb, tb)
            out = max(out, float(np.max(np.abs(inside - outside))))
        return out

    def jump_bound(self, eps):
        """Expected size of the boundary jump from the discarded tails."""
        st = self.core.state(np.linspace(0.0, self.t_eff, 33))
        tail = np.max(np.abs(st["amp"]) * 4 * np.exp(-2 * st["kappa"] * self.tau_max))
        nu = 0.0 if self.singular is None else np.max(np.abs(self.singular.nu1_values))
        return float(tail + nu * eps * 1e-6)

    def grid_rows(self, eps, grid=None):
        grid = grid or self.scenario.grid()
        t = grid.t[grid.t <= self.t_eff]
        X, T = np.meshgrid(grid.x, t)
        j, reg = self.jet(X, T, eps)
        return [(x_, t_, eps, y_, REGION_NAMES[r]) for x_, t_, y_, r in
                zip(X.ravel(), T.ravel(), j.v.ravel(), reg.ravel())]

    def to_csv(self, path, eps, grid=None):
        write_csv(path, ["x", "t", "eps", "Y", "region"], self.grid_rows(eps, grid),
                  [f"order={self.order}", f"form={self.form}", f"tau_max={self.tau_max!r}"])

    def regular_rows(self, grid=None):
        grid = grid or self.scenario.grid()
        t = grid.t[grid.t <= self.t_eff]
        X, T = np.meshgrid(grid.x, t)
        X, T = X.ravel(), T.ravel()
        u0 = self.u0.value(X, T)
        u1 = self.u1.value(X, T) if self.u1 is not None else np.zeros_like(X)
        um = np.full_like(X, np.nan)
        if self.extension is not None:
            left = X <= self.curve.phi(T)
            um[left] = self.extension.value(X[left], T[left])
        return [(a, b, c, d, "" if np.isnan(e) else e) for a, b, c, d, e in zip(X, T, u0, u1, um)]

    def regular_to_csv(self, path, grid=None):
        write_csv(path, ["x", "t", "u0", "u1", "u1_minus"], self.regular_rows(grid))


def eval_solution(sol, x, t, eps, dx=0, dt=0, dxxt=False):
    """Value or partial of Y_N at (x, t)."""
    return sol.jet(x, t, eps)[0].pick(dx, dt, dxxt)


def build_solution(s, N=1, form="auto", *, jobs=1, n_samples=DEFAULT_SAMPLES, h=DEFAULT_H,
                   debug_phase_scale=1.0, check_validity=True) -> AsymptoticSolution:
    """Run every upstream solve and assemble Y_N in the requested form."""
    if N not in (0, 1):
        raise ConfigError("order must be 0 or 1")
    if form not in scen.FORMS:
        raise ConfigError(f"form must be one of {scen.FORMS}")
    timings = {}
    clock = time.perf_counter()

    def lap(name):
        nonlocal clock
        now = time.perf_counter()
        timings[name] = now - clock
        clock = now

    if check_validity:
        report = scen.validate(s)
        if not report.ok:
            raise ConfigError(f"scenario violates the standing hypotheses: {report}")
    tab = s.coefficients.table()
    u0 = solve_u0(s, tab=tab)
    lap("u0")
    curve = solve_phase(s, u0, tab=tab)
    if not curve.admissible:
        raise InadmissibleStart(f"admissibility lost at t = {curve.t_eff:.6g} ({curve.stop_reason})")
    if debug_phase_scale != 1.0:
        curve = curve.perturbed(debug_phase_scale)
    lap("phase")
    core = SolitonCore(curve, u0, tab, s.C0)
    strict = debug_phase_scale == 1.0

    u1 = sc = ext = None
    if N == 0:
        from .singular import chebyshev_times, resolve_tau_max, snap_tau_max
        tau_max = snap_tau_max(resolve_tau_max(s, core, chebyshev_times(curve.t_eff, n_samples)), h)
        used = "theorem1" if form == "auto" else form
    else:
        u1 = solve_u1(s, u0, tab=tab)
        lap("u1")
        sc = build_singular(s, core, u1, n_samples=n_samples, h=h, jobs=jobs, check=strict)
        tau_max = sc.tau_max
        lap("singular")
        if form == "theorem1" and not sc.decaying:
            raise FormUnavailable("the first form needs Phi1(t, -inf) = 0 at every t; "
                                  "this scenario has a plateau (nonzero nu1)")
        used = form if form != "auto" else ("theorem1" if sc.decaying else "theorem2")
        if used == "theorem2":
            ext = solve_extension(s, u0, u1, curve, (sc.t, sc.nu1_values), tab=tab)
            lap("extension")
    return AsymptoticSolution(scenario=s, tab=tab, curve=curve, u0=u0, u1=u1, core=core,
                              singular=sc, extension=ext, order=N, form=used, tau_max=tau_max,
                              timings=timings)
