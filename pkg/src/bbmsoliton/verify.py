"""Accuracy certification: pointwise residual, eps sweeps and a direct solver.

Residual of  a u_t + b u_x + c u u_x - eps^2 u_xxt = 0  with the truncated
coefficients a = a0 + eps a1 (likewise b, c).
"""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import exprdsl
from .assemble import DMINUS, DPLUS, OMEGA
from .errors import CFLViolation, DegenerateFit, GridMismatch, LinearSolveFailure

log = logging.getLogger(__name__)

FLOOR = 1e-8
NEAR_TAU_POINTS = 1601


def residual_from_jet(s, jet, x, t, eps):
    cm = s.coefficients
    a, b, c = cm.full("a", x, t, eps), cm.full("b", x, t, eps), cm.full("c", x, t, eps)
    return a * jet.t + b * jet.x + c * jet.v * jet.x - eps**2 * jet.xxt


def residual(sol, x, t, eps, *, soliton=True):
    """Pointwise residual of the equation for Y_N at (x, t)."""
    x, t = np.broadcast_arrays(np.asarray(x, float), np.asarray(t, float))
    jet, _ = sol.jet(x, t, eps, soliton=soliton)
    return residual_from_jet(sol.scenario, jet, x, t, eps)


def sample_points(sol, eps, region, n_t=None, n_tau=NEAR_TAU_POINTS):
    """Evaluation points of a region.

    far:  the scenario (x, t) grid outside Omega;
    near: a uniform tau grid on [-tau_max, tau_max] at every grid time, so
          the soliton core is resolved for every eps.
    """
    s = sol.scenario
    grid = s.grid(n_t=n_t)
    t = grid.t[grid.t <= sol.t_eff]
    if region == "far":
        X, T = np.meshgrid(grid.x, t)
        keep = sol.regions(X, T, eps) != OMEGA
        return X[keep], T[keep]
    if region == "near":
        tau = np.linspace(-sol.tau_max, sol.tau_max, n_tau)
        TT, TA = np.meshgrid(t, tau, indexing="ij")
        X = sol.curve.phi(TT) + eps * TA
        keep = (X >= s.x_min) & (X <= s.x_max)
        return X[keep], TT[keep]
    raise ValueError("region must be 'near' or 'far'")


@dataclass
class SweepResult:
    region: str
    eps: list
    norms: list
    l2: list
    slope: float
    fit_residual: float
    floor: bool


def fit_slope(eps, norms):
    le, ln = np.log(np.asarray(eps)), np.log(np.asarray(norms))
    coef, res, *_ = np.polyfit(le, ln, 1, full=True)
    rms = float(np.sqrt(res[0] / len(eps))) if len(res) else 0.0
    return float(coef[0]), rms


def order_sweep(sol, eps_list, region, *, soliton=True, floor=FLOOR, n_t=None):
    """Sup-norm of the residual over a region for each eps and the log-log slope."""
    eps_list = [float(e) for e in eps_list]
    if len(eps_list) < 3:
        raise DegenerateFit("an order sweep needs at least three eps values")
    norms, l2 = [], []
    for e in eps_list:
        x, t = sample_points(sol, e, region, n_t=n_t)
        if x.size == 0:
            # the window swallowed the whole grid; nothing to measure at this eps
            norms.append(float("nan"))
            l2.append(float("nan"))
            continue
        r = residual(sol, x, t, e, soliton=soliton)
        norms.append(float(np.max(np.abs(r))))
        l2.append(float(np.sqrt(np.mean(r**2))))
    arr = np.asarray(norms)
    used = np.isfinite(arr)
    if used.sum() < 3:
        raise DegenerateFit(f"{region} region is empty for too many eps values: {norms}")
    if np.max(arr[used]) <= floor:
        return SweepResult(region, eps_list, norms, l2, float("nan"), 0.0, True)
    if np.min(arr[used]) <= 0.0 or np.ptp(np.log(arr[used])) == 0.0:
        raise DegenerateFit(f"{region} residual norms do not vary with eps: {norms}")
    slope, rms = fit_slope(np.asarray(eps_list)[used], arr[used])
    return SweepResult(region, eps_list, norms, l2, slope, rms, False)


@dataclass
class ResidualReport:
    eps: list
    near_norms: list
    far_norms: list
    near_slope: float
    far_slope: float
    boundary_jump_max: float
    floor_flag: bool
    order: int
    form: str
    near_fit_residual: float = 0.0
    far_fit_residual: float = 0.0
    near_l2: list = field(default_factory=list)
    far_l2: list = field(default_factory=list)
    near_floor: bool = False
    far_floor: bool = False
    near_threshold: float = 0.0
    far_threshold: float = 0.0
    passed: bool = False

    def to_json(self):
        def clean(v):
            if isinstance(v, list):
                return [clean(u) for u in v]
            return None if isinstance(v, float) and not np.isfinite(v) else v

        d = {k: clean(v) for k, v in asdict(self).items()}
        return json.dumps(d, indent=2)


def residual_report(sol, eps_list=None, **kw) -> ResidualReport:
    """Near and far sweeps with the acceptance thresholds near >= N - 0.3, far >= N + 0.7."""
    eps_list = list(eps_list or sol.scenario.eps)
    near = order_sweep(sol, eps_list, "near", **kw)
    far = order_sweep(sol, eps_list, "far", **kw)
    N = sol.order
    jump = max(sol.boundary_jump(e) for e in eps_list)
    near_ok = near.floor or near.slope >= N - 0.3
    far_ok = far.floor or far.slope >= N + 0.7
    return ResidualReport(
        eps=eps_list, near_norms=near.norms, far_norms=far.norms, near_slope=near.slope,
        far_slope=far.slope, boundary_jump_max=jump, floor_flag=near.floor and far.floor,
        order=N, form=sol.form, near_fit_residual=near.fit_residual,
        far_fit_residual=far.fit_residual, near_l2=near.l2, far_l2=far.l2,
        near_floor=near.floor, far_floor=far.floor, near_threshold=N - 0.3,
        far_threshold=N + 0.7, passed=bool(near_ok and far_ok))


# ---------------------------------------------------------------------------
# direct finite-difference integration


@dataclass
class DirectSolution:
    x: np.ndarray
    times: np.ndarray
    u: np.ndarray
    eps: float
    dx: float
    dt: float
    scheme: str
    bc: str
    invariant: np.ndarray = None

    def invariant_drift(self):
        I = self.invariant
        return float(np.max(np.abs(I - I[0])) / max(abs(I[0]), 1e-300))


def _operators(n, dx, periodic):
    e = np.ones(n)
    D1 = sp.diags([-e[:-1], e[:-1]], [-1, 1], shape=(n, n), format="lil") / (2 * dx)
    D2 = sp.diags([e[:-1], -2 * e, e[:-1]], [-1, 0, 1], shape=(n, n), format="lil") / dx**2
    if periodic:
        D1[0, n - 1] = -1 / (2 * dx)
        D1[n - 1, 0] = 1 / (2 * dx)
        D2[0, n - 1] = 1 / dx**2
        D2[n - 1, 0] = 1 / dx**2
    return D1.tocsr(), D2.tocsr()


def direct_solve(s, eps, init, T_run, *, dx=0.0025, dt=5e-4, scheme="rk4", bc="periodic",
                 snapshots=None, boundary=None) -> DirectSolution:
    """Integrate the full equation on [x_min, x_max] from ``init``.

    Each stage solves (a I - eps^2 D_xx) u_t = -(b + c u) D_x u with
    three-point differences.  ``scheme`` is ``"euler"`` (one stage per step)
    or ``"rk4"``.  ``bc`` is ``"periodic"`` or ``"dirichlet"``; Dirichlet
    values come from ``boundary(t) -> (left, right)`` or stay at their
    initial values.
    """
    if scheme not in ("euler", "rk4"):
        raise ValueError("scheme must be 'euler' or 'rk4'")
    periodic = bc == "periodic"
    L = s.x_max - s.x_min
    n_cells = int(round(L / dx))
    dx = L / n_cells
    x = s.x_min + dx * np.arange(n_cells if periodic else n_cells + 1)
    n = x.size
    u = np.asarray(init(x) if callable(init) else init, dtype=float).copy()
    if u.shape != x.shape:
        raise GridMismatch(f"initial data has {u.size} samples, grid has {n}")
    n_steps = int(np.ceil(T_run / dt - 1e-9))
    dt = T_run / n_steps
    snaps = np.unique(np.concatenate([[0.0, T_run], [] if snapshots is None else snapshots]))
    snap_steps = np.rint(snaps / dt).astype(int)

    cm = s.coefficients
    D1, D2 = _operators(n, dx, periodic)
    a_static = _t_free(cm.a0) and _t_free(cm.a1)

    def coeff(name, t):
        return np.broadcast_to(cm.full(name, x, t, eps), x.shape)

    def factor(t):
        M = sp.diags(coeff("a", t)) - eps**2 * D2
        M = M.tolil()
        if not periodic:
            for i in (0, n - 1):
                M.rows[i], M.data[i] = [i], [1.0]
        try:
            return spla.factorized(M.tocsc())
        except RuntimeError as exc:
            raise LinearSolveFailure(str(exc)) from exc

    solver = factor(0.0) if a_static else None

    def rate(v, t):
        f = -(coeff("b", t) + coeff("c", t) * v) * (D1 @ v)
        if not periodic:
            if boundary is None:
                f[0] = f[-1] = 0.0
            else:
                h = 1e-6
                lo, hi = np.asarray(boundary(t + h)), np.asarray(boundary(t - h))
                f[0], f[-1] = (lo - hi) / (2 * h)
        slv = solver or factor(t)
        out = slv(f)
        if not np.all(np.isfinite(out)):
            raise LinearSolveFailure("direct solver produced non-finite values")
        return out

    def cfl(v, t):
        speed = np.max(np.abs((coeff("b", t) + coeff("c", t) * v) / coeff("a", t)))
        if speed > 0 and dt > dx / speed:
            raise CFLViolation(f"dt = {dt:.3g} exceeds dx / max speed = {dx / speed:.3g}")

    def invariant(v, t):
        lap = D2 @ v
        if not periodic:
            lap[0] = lap[-1] = 0.0
        return float(np.sum(coeff("a", t) * v - eps**2 * lap) * dx)

    out = [u.copy()] if snap_steps[0] == 0 else []
    inv = [invariant(u, 0.0)]
    t = 0.0
    for m in range(1, n_steps + 1):
        cfl(u, t)
        if scheme == "euler":
            u = u + dt * rate(u, t)
        else:
            k1 = rate(u, t)
            k2 = rate(u + 0.5 * dt * k1, t + 0.5 * dt)
            k3 = rate(u + 0.5 * dt * k2, t + 0.5 * dt)
            k4 = rate(u + dt * k3, t + dt)
            u = u + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        t = m * dt
        if not periodic and boundary is not None:
            u[0], u[-1] = boundary(t)
        if m in snap_steps:
            out.append(u.copy())
            inv.append(invariant(u, t))
    return DirectSolution(x=x, times=snap_steps * dt, u=np.array(out), eps=float(eps), dx=dx, dt=dt,
                          scheme=scheme, bc=bc, invariant=np.array(inv))


def _t_free(node):
    d = exprdsl.diff(node, "t")
    return isinstance(d, exprdsl.Const) and d.value == 0.0


def sample_solution(sol, eps, x, times) -> DirectSolution:
    """Y_N sampled on a grid, packaged like a direct run (for self-comparison)."""
    x = np.asarray(x, float)
    u = np.array([sol.value(x, np.full_like(x, tk), eps) for tk in times])
    dx = float(x[1] - x[0]) if x.size > 1 else 0.0
    return DirectSolution(x=x, times=np.asarray(times, float), u=u, eps=float(eps), dx=dx, dt=0.0,
                          scheme="sampled", bc="none", invariant=np.zeros(len(times)))


def compare(sol, direct: DirectSolution, *, window=None):
    """Sup-norm discrepancy between a direct run and Y_N at every snapshot."""
    s = sol.scenario
    if direct.times.max() > sol.t_eff * (1 + 1e-12):
        raise GridMismatch("direct run extends beyond the time range of the asymptotic solution")
    x = direct.x
    keep = (x >= s.x_min) & (x <= s.x_max)
    if window is not None:
        keep &= (x >= window[0]) & (x <= window[1])
    if not np.any(keep):
        raise GridMismatch("no direct grid point lies in the asymptotic solution's window")
    rows = []
    for k, tk in enumerate(direct.times):
        y = sol.value(x[keep], np.full(keep.sum(), tk), direct.eps)
        rows.append((float(tk), direct.eps, float(np.max(np.abs(direct.u[k, keep] - y)))))
    return rows


def peak(x, u):
    """Location and height of the maximum by parabolic refinement."""
    i = int(np.argmax(u))
    i = min(max(i, 1), u.size - 2)
    y0, y1, y2 = u[i - 1], u[i], u[i + 1]
    den = y0 - 2 * y1 + y2
    d = 0.0 if den == 0 else 0.5 * (y0 - y2) / den
    h = x[1] - x[0]
    return float(x[i] + d * h), float(y1 - 0.25 * (y0 - y2) * d)
