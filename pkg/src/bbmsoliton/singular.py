"""Quantities on the discontinuity curve in the stretched variable tau.

v0(t, tau) = amp(t) sech^2(kappa(t) (tau + C0)), amp = 3A/c0, kappa = sqrt(A/phi')/2.
The first correction solves  L v1 = Phi1,  L = phi' d^2/dtau^2 - A + c0 v0,
with Phi1 the antiderivative of F1 normalized to vanish at +infinity.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.linalg import solve_banded
from scipy.interpolate import CubicSpline, RectBivariateSpline

from . import quadrature
from .errors import LinearSolveFailure, OutOfDomain, SolvabilityError
from .phase import local_values, write_csv

log = logging.getLogger(__name__)

ORTH_TOL = 1e-5
DECAY_TOL = 1e-8
DEFAULT_H = 0.05
DEFAULT_SAMPLES = 65


def sech2_derivs(z, upto=4):
    """S = sech^2 z and its z-derivatives S', S'', S''', S''''."""
    T = np.tanh(z)
    S = 1.0 / np.cosh(z) ** 2
    out = [S, -2 * S * T, 4 * S - 6 * S**2, -8 * S * T + 24 * S**2 * T,
           16 * S - 120 * S**2 + 120 * S**3]
    return out[: upto + 1]


def default_tau_max(kappa_min):
    return max(40.0, 60.0 / kappa_min)


def chebyshev_times(t_end, n=DEFAULT_SAMPLES):
    k = np.arange(n)
    t = 0.5 * t_end * (1.0 - np.cos(np.pi * k / (n - 1)))
    t[0], t[-1] = 0.0, t_end
    return t


class SolitonCore:
    """Closed-form leading singular term along a phase curve."""

    def __init__(self, curve, u0, tab, C0=0.0):
        self.curve = curve
        self.u0 = u0
        self.tab = tab
        self.C0 = float(C0)

    def state(self, t):
        """Every curve-dependent scalar needed downstream, vectorized over t."""
        t = np.asarray(t, float)
        c = self.curve
        phi, dp, ddp = c.phi(t), c.dphi(t), c.ddphi(t)
        v = local_values(self.tab, self.u0, phi, t)
        a0, b0, c0 = v["a0"], v["b0"], v["c0"]
        u0, u0x, u0t = v["u0"], v["u0x"], v["u0t"]
        alpha = b0 + c0 * u0
        A = dp * a0 - alpha
        dA = (ddp * a0 + dp * (v["a0x"] * dp + v["a0t"]) - (v["b0x"] * dp + v["b0t"])
              - (v["c0x"] * dp + v["c0t"]) * u0 - c0 * (u0x * dp + u0t))
        dc0 = v["c0x"] * dp + v["c0t"]
        r = A / dp
        if np.any(r <= 0):
            raise OutOfDomain("soliton width undefined: phi' * A is not positive")
        kappa = 0.5 * np.sqrt(r)
        dr = dA / dp - A * ddp / dp**2
        v.update(t=t, phi=phi, dphi=dp, ddphi=ddp, alpha=alpha, A=A, dA=dA, dc0=dc0,
                 amp=3 * A / c0, damp=3 * dA / c0 - 3 * A * dc0 / c0**2,
                 kappa=kappa, dkappa=dr / (8 * kappa))
        return v

    def tau_jet(self, st, tau):
        """v0 and its partials: keys v, T, TT, TTT, TTTT, t, Tt, TTt (T = d/dtau)."""
        amp, damp, k, dk = st["amp"], st["damp"], st["kappa"], st["dkappa"]
        sh = tau + self.C0
        S = sech2_derivs(k * sh)
        out = {}
        keys = ("v", "T", "TT", "TTT", "TTTT")
        for n, key in enumerate(keys):
            out[key] = amp * k**n * S[n]
        for n, key in enumerate(("t", "Tt", "TTt")):
            out[key] = (damp * k**n * S[n] + (amp * n * k ** (n - 1) * dk * S[n] if n else 0.0)
                        + amp * k**n * S[n + 1] * dk * sh)
        return out

    def eval_v0(self, t, tau, dtau=0, dt=0):
        t = np.asarray(t, float)
        tau = np.asarray(tau, float)
        t, tau = np.broadcast_arrays(t, tau)
        if dtau not in (0, 1, 2, 3) or dt not in (0, 1):
            raise ValueError("dtau must be 0..3 and dt 0 or 1")
        if dt and dtau == 3:
            raise ValueError("d^4/dtau^3 dt is not provided")
        key = {0: "v", 1: "T", 2: "TT", 3: "TTT"}[dtau]
        if dt:
            key = {"v": "t", "T": "Tt", "TT": "TTt"}[key]
        return self.tau_jet(self.state(t), tau)[key]


def eval_v0(core, t, tau, dtau=0, dt=0):
    return core.eval_v0(t, tau, dtau, dt)


def assemble_F1(core: SolitonCore, u1, st, tau):
    """First-order source on the curve at the state ``st`` (scalars) and tau (array)."""
    g = core.tau_jet(st, tau)
    u0, u0x = st["u0"], st["u0x"]
    u1v = 0.0 if u1 is None else u1.value(st["phi"], st["t"])
    dp = st["dphi"]
    w_tau = st["c0x"] * u0 + st["c0"] * u0x - dp * st["a0x"] + st["b0x"]
    w_lin = st["c0"] * u1v + st["c1"] * u0 - dp * st["a1"] + st["b1"]
    return (-st["a0"] * g["t"] - st["c0"] * u0x * g["v"] - w_tau * tau * g["T"]
            - (st["c0x"] * tau + st["c1"]) * g["v"] * g["T"] - w_lin * g["T"] + g["TTt"])


def closed_form_limit(st):
    """Phi1(t, -infinity) = -(integral of F1) in closed form."""
    I = 2 * st["amp"] / st["kappa"]
    dI = 2 * st["damp"] / st["kappa"] - 2 * st["amp"] * st["dkappa"] / st["kappa"] ** 2
    br = (st["dphi"] * st["a0x"] - st["b0x"] - st["c0x"] * st["u0"]
          - st["c0x"] * st["A"] / st["c0"])
    return st["a0"] * dI + I * br


def eta_ref(kappa, tau):
    return 0.5 * (1.0 - np.tanh(kappa * tau))


def eta_tau_jet(st, tau):
    """eta_ref(kappa(t) tau) and its partials (same keys as SolitonCore.tau_jet)."""
    k, dk = st["kappa"], st["dkappa"]
    z = k * tau
    T = np.tanh(z)
    S = 1.0 / np.cosh(z) ** 2
    return {
        "v": 0.5 * (1.0 - T),
        "T": -0.5 * k * S,
        "TT": k**2 * S * T,
        "TTT": k**3 * (3 * S**2 - 2 * S),
        "t": -0.5 * S * dk * tau,
        "Tt": -0.5 * dk * S + k * dk * tau * S * T,
        "TTt": 2 * k * dk * S * T + k**2 * dk * tau * (3 * S**2 - 2 * S),
    }


# ---------------------------------------------------------------------------
# the bordered two-point problem


def solve_bordered(dphi, A, c0v0, rhs, left, right, h, kernel, target, weight=None):
    """Solve  dphi v'' + (c0 v0 - A) v + mu p = rhs  with  <v, p> = target.

    All arrays live on the full node grid (endpoints included); ``left`` and
    ``right`` are Dirichlet values.  Second-order central differences; the
    inner product is the trapezoid rule.  Returns the nodal solution.
    """
    n = rhs.size
    m = n - 2
    main = -2.0 * dphi / h**2 + (c0v0[1:-1] - A)
    off = np.full(m - 1, dphi / h**2)
    p = kernel[1:-1]
    w = h * (np.ones(m) if weight is None else weight[1:-1])
    b = rhs[1:-1].astype(float).copy()
    b[0] -= dphi / h**2 * left
    b[-1] -= dphi / h**2 * right
    tgt = target - 0.5 * h * (kernel[0] * left + kernel[-1] * right)
    # block elimination of the border; the near-kernel component of the two
    # banded solves cancels in y - mu z
    ab = np.zeros((3, m))
    ab[0, 1:] = off
    ab[1] = main
    ab[2, :-1] = off
    try:
        yz = solve_banded((1, 1), ab, np.column_stack([b, p]), check_finite=True)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise LinearSolveFailure(str(exc)) from exc
    y, z = yz[:, 0], yz[:, 1]
    den = float(np.dot(w * p, z))
    if not np.isfinite(den) or den == 0.0:
        raise LinearSolveFailure("bordered system is singular")
    mu = (float(np.dot(w * p, y)) - tgt) / den
    sol = np.append(y - mu * z, mu)
    if not np.all(np.isfinite(sol)):
        raise LinearSolveFailure("bordered system is singular")
    v = np.empty(n)
    v[0], v[-1] = left, right
    v[1:-1] = sol[:-1]
    return v, float(sol[-1])


def solve_bordered_extrapolated(dphi, A, c0v0, rhs, left, right, h, kernel, target):
    """Richardson-extrapolated bordered solve.

    Inputs are sampled on a grid of spacing ``h / 2`` (2m + 1 nodes); the
    problem is solved there and on every other node, and the combination
    (4 v_fine - v_coarse) / 3 is returned on the spacing-``h`` nodes.
    """
    v_f, mu_f = solve_bordered(dphi, A, c0v0, rhs, left, right, 0.5 * h, kernel, target)
    v_c, mu_c = solve_bordered(dphi, A, c0v0[::2], rhs[::2], left, right, h, kernel[::2], target)
    return (4.0 * v_f[::2] - v_c) / 3.0, (4.0 * mu_f - mu_c) / 3.0


def apply_L(dphi, A, c0v0, v, h):
    """Discrete L v on interior nodes."""
    return dphi * (v[2:] - 2 * v[1:-1] + v[:-2]) / h**2 + (c0v0[1:-1] - A) * v[1:-1]


@dataclass
class Slice:
    t: float
    tau: np.ndarray
    v0: np.ndarray
    F1: np.ndarray
    Phi1: np.ndarray
    v1: np.ndarray
    psi: np.ndarray
    E1: float
    nu1: float
    orth: float
    closed_E1: float
    mu: float
    quad_err: float
    state: dict = field(repr=False, default_factory=dict)


def _node_grid(tau_max, h):
    n = int(round(tau_max / h))
    return h * np.arange(-n, n + 1, dtype=float)


def snap_tau_max(tau_max, h=DEFAULT_H):
    """Smallest multiple of ``h`` not below ``tau_max``."""
    return float(np.ceil(tau_max / h - 1e-9) * h)


def build_Phi1(core, u1, t, tau_max, h=DEFAULT_H, tol=1e-11):
    """Phi1 on the node grid, E1, nu1 and the orthogonality residual at time t."""
    st = {k: float(np.ravel(v)[0]) for k, v in core.state(np.array([t])).items()}
    tau = _node_grid(tau_max, h)
    cum, err = quadrature.cumulative(lambda x: assemble_F1(core, u1, st, x), tau, tol=tol)
    total = cum[-1]
    E1 = -total
    Phi = cum + E1
    nu1 = total / st["A"]
    pts, half = quadrature.panel_points(tau)
    prod = assemble_F1(core, u1, st, pts) * core.tau_jet(st, pts)["v"]
    num = float(np.sum(quadrature.panel_integrals(prod, half)[0]))
    den = float(np.sum(quadrature.panel_integrals(np.abs(prod), half)[0]))
    orth = 0.0 if den == 0.0 else num / den
    return st, tau, Phi, E1, nu1, orth, err


def orthogonality_residual(core, u1, t, tau_max, h=DEFAULT_H):
    return build_Phi1(core, u1, t, tau_max, h)[5]


def solve_v1(core, u1, t, tau_max, h=DEFAULT_H, C4=0.0, check=True, extrapolate=True) -> Slice:
    """v1(t, .) on the spacing-``h`` grid over [-tau_max, tau_max].

    Second-order bordered difference problem; with ``extrapolate`` the
    solve is repeated at spacing h/2 and Richardson-combined.
    """
    tau_max = snap_tau_max(tau_max, h)
    hq = 0.5 * h if extrapolate else h
    st, tau_q, Phi_q, E1, nu1, orth, err = build_Phi1(core, u1, t, tau_max, hq)
    if check and abs(orth) > ORTH_TOL:
        raise SolvabilityError(f"orthogonality residual {orth:.3g} at t = {t:.6g} exceeds {ORTH_TOL}")
    g = core.tau_jet(st, tau_q)
    eta_q = eta_ref(st["kappa"], tau_q)
    p = g["T"]
    target = nu1 * np.trapezoid(eta_q * p, dx=hq) + C4 * np.trapezoid(p * p, dx=hq)
    args = (st["dphi"], st["A"], st["c0"] * g["v"], Phi_q, nu1, 0.0, h, p, target)
    if extrapolate:
        v1, mu = solve_bordered_extrapolated(*args)
        sl = slice(None, None, 2)
    else:
        v1, mu = solve_bordered(*args)
        sl = slice(None)
    tau = tau_q[sl]
    F1 = assemble_F1(core, u1, st, tau)
    return Slice(t=float(t), tau=tau, v0=g["v"][sl], F1=F1, Phi1=Phi_q[sl], v1=v1,
                 psi=v1 - nu1 * eta_q[sl], E1=E1, nu1=nu1, orth=orth,
                 closed_E1=float(closed_form_limit(st)), mu=mu, quad_err=err, state=st)


def decay_class(slices, tol=DECAY_TOL):
    """'decaying' when Phi1(t, -inf) vanishes at every sampled t, else 'plateau'."""
    ok = all(abs(s.E1) <= tol * (1.0 + np.max(np.abs(s.Phi1))) for s in slices)
    return "decaying" if ok else "plateau"


def dual_criterion(slices, small=1e-6, large=1e-3):
    """Cross-check the quadrature limit against the closed form at each t.

    Each criterion is banded into small / large / between; a sample where
    one is small and the other large is a mismatch.
    """
    rows = []
    for s in slices:
        scale = 1.0 + np.max(np.abs(s.Phi1))

        def band(v):
            r = abs(v) / scale
            return "small" if r <= small else ("large" if r > large else "between")

        b_q, b_c = band(s.E1), band(s.closed_E1)
        mismatch = {b_q, b_c} == {"small", "large"}
        rows.append({"t": s.t, "quadrature": s.E1, "closed_form": s.closed_E1,
                     "band_quadrature": b_q, "band_closed_form": b_c, "mismatch": mismatch})
    return rows


class SingularCorrection:
    """v1 slices on clustered t samples with smooth interpolation in (t, tau).

    psi = v1 - nu1 eta_ref decays at both ends of the tau window and is
    represented by a cubic-in-t, quintic-in-tau spline; nu1(t) by a cubic spline.
    """

    def __init__(self, core, slices, tau_max, h):
        self.core = core
        self.slices = slices
        self.tau_max = tau_max
        self.h = h
        self.t = np.array([s.t for s in slices])
        self.tau = slices[0].tau
        self.nu1_values = np.array([s.nu1 for s in slices])
        self.nu1 = CubicSpline(self.t, self.nu1_values)
        psi = np.vstack([s.psi for s in slices])
        self._psi = RectBivariateSpline(self.t, self.tau, psi, kx=3, ky=5, s=0)
        self.decay = decay_class(slices)

    @property
    def decaying(self):
        return self.decay == "decaying"

    def psi_jet(self, t, tau):
        P = self._psi
        ev = lambda i, j: P.ev(t, tau, dx=i, dy=j)
        return {"v": ev(0, 0), "T": ev(0, 1), "TT": ev(0, 2), "TTT": ev(0, 3),
                "t": ev(1, 0), "Tt": ev(1, 1), "TTt": ev(1, 2)}

    def v1_jet(self, st, t, tau):
        """v1 = nu1 eta + psi in tau coordinates."""
        e = eta_tau_jet(st, tau)
        ps = self.psi_jet(t, tau)
        n, dn = self.nu1(t), self.nu1(t, 1)
        out = {k: n * e[k] + ps[k] for k in ("v", "T", "TT", "TTT")}
        for k, base in (("t", "v"), ("Tt", "T"), ("TTt", "TT")):
            out[k] = n * e[k] + dn * e[base] + ps[k]
        return out

    def scalar_rows(self):
        return [(s.t, s.E1, s.nu1, s.orth, s.closed_E1, "decaying" if abs(s.E1) <= DECAY_TOL *
                 (1 + np.max(np.abs(s.Phi1))) else "plateau") for s in self.slices]

    def to_csv(self, path, stride=None):
        stride = stride or max(1, int(round(0.5 / self.h)))
        rows = []
        for s in self.slices:
            for i in range(0, s.tau.size, stride):
                rows.append((s.t, s.tau[i], s.v0[i], s.v1[i], s.F1[i], s.Phi1[i]))
        write_csv(path, ["t", "tau", "v0", "v1", "F1", "Phi1"], rows,
                  [f"tau_max={self.tau_max!r}", f"h={self.h!r}", f"decay_class={self.decay}"])

    def scalars_to_csv(self, path):
        write_csv(path, ["t", "E1", "nu1", "orth_residual", "closed_form_E1", "decay_class"],
                  self.scalar_rows())


def resolve_tau_max(s, core, t_samples):
    if s.tau_max is not None:
        return float(s.tau_max)
    return default_tau_max(float(np.min(core.state(t_samples)["kappa"])))


def build_singular(s, core, u1, *, n_samples=DEFAULT_SAMPLES, h=DEFAULT_H, tau_max=None,
                   jobs=1, check=True) -> SingularCorrection:
    t_samples = chebyshev_times(core.curve.t_eff, n_samples)
    tau_max = snap_tau_max(tau_max or resolve_tau_max(s, core, t_samples), h)
    if s.C3 != 0.0:
        log.warning("C3 is ignored: the tail normalization fixes the limit of v1")

    def one(t):
        return solve_v1(core, u1, t, tau_max, h, C4=s.C4, check=check)

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as ex:
            slices = list(ex.map(one, t_samples))
    else:
        slices = [one(t) for t in t_samples]
    return SingularCorrection(core, slices, tau_max, h)
