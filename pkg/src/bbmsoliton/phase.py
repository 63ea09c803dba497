"""Discontinuity curve x = phi(t): second-order ODE and admissibility.

The curve obeys

    [A1 phi'^2 + A2 phi' + A3] phi'' + A4 phi'^4 + A5 phi'^3 + A6 phi'^2 + A7 phi' = 0,

with A1..A7 evaluated at (phi(t), t), and the soliton exists while
phi'(t) * A(phi(t), t) > 0, A = phi' a0 - b0 - c0 u0.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp

from .errors import InadmissibleStart, OutOfDomain, PhaseBlowup

RTOL = 1e-9
ATOL = 1e-10
SING_TOL = 1e-10

# Weight of the c0t * alpha^2 term in A7.  Re-deriving A7 from the
# orthogonality integral gives -4; see the project notes.
A7_C0T_WEIGHT = -4.0


@dataclass(frozen=True)
class PhaseCoeffs:
    A1: np.ndarray
    A2: np.ndarray
    A3: np.ndarray
    A4: np.ndarray
    A5: np.ndarray
    A6: np.ndarray
    A7: np.ndarray
    alpha: np.ndarray

    def bracket(self, dphi):
        return self.A1 * dphi**2 + self.A2 * dphi + self.A3

    def numerator(self, dphi):
        return self.A4 * dphi**4 + self.A5 * dphi**3 + self.A6 * dphi**2 + self.A7 * dphi

    def ddphi(self, dphi):
        return -self.numerator(dphi) / self.bracket(dphi)


def local_values(tab, u0, phi, t):
    """Coefficients, their first partials and the u0 jet at (phi, t)."""
    phi = np.asarray(phi, float)
    t = np.asarray(t, float)
    names = ("a0", "a0x", "a0t", "b0", "b0x", "b0t", "c0", "c0x", "c0t",
             "a1", "b1", "c1")
    vals = {n: np.broadcast_to(tab(n, phi, t), np.broadcast(phi, t).shape).astype(float) for n in names}
    j = u0.jet(phi, t)
    vals.update(u0=j.v, u0x=j.x, u0t=j.t, u0xx=j.xx, u0xt=j.xt)
    return vals


def coeffs_from_values(v, a7_c0t_weight=A7_C0T_WEIGHT) -> PhaseCoeffs:
    a0, a0x, a0t = v["a0"], v["a0x"], v["a0t"]
    b0x, b0t = v["b0x"], v["b0t"]
    c0, c0x, c0t = v["c0"], v["c0x"], v["c0t"]
    u0, u0x, u0t = v["u0"], v["u0x"], v["u0t"]
    alpha = v["b0"] + c0 * u0
    alpha_x = b0x + c0x * u0 + c0 * u0x
    alpha_t = b0t + c0t * u0 + c0 * u0t
    A1 = 24 * a0**2 * c0
    A2 = -8 * a0 * c0 * alpha
    A3 = -c0 * alpha**2
    A4 = -40 * c0x * a0**2 + 30 * a0 * a0x * c0
    A5 = (60 * a0 * c0x * alpha + 20 * a0 * a0t * c0 - 24 * a0**2 * c0t
          - 30 * a0 * c0 * alpha_x - 15 * a0x * c0 * alpha + 20 * a0 * c0**2 * u0x)
    A6 = (-20 * a0 * c0 * alpha_t - 5 * a0t * c0 * alpha + 15 * c0 * alpha * alpha_x
          + 28 * a0 * c0t * alpha - 20 * c0**2 * u0x * alpha - 20 * c0x * alpha**2)
    A7 = 5 * c0 * alpha * alpha_t + a7_c0t_weight * c0t * alpha**2
    return PhaseCoeffs(A1, A2, A3, A4, A5, A6, A7, alpha)


def phase_coeffs(s, u0, phi, t, *, tab=None, a7_c0t_weight=A7_C0T_WEIGHT) -> PhaseCoeffs:
    """A1..A7 and alpha = b0 + c0 u0 at (phi, t)."""
    tab = tab or s.coefficients.table()
    return coeffs_from_values(local_values(tab, u0, phi, t), a7_c0t_weight)


def amplitude_factor(tab, u0, phi, dphi, t):
    """A(phi, t) = phi' a0 - b0 - c0 u0."""
    return dphi * tab("a0", phi, t) - tab("b0", phi, t) - tab("c0", phi, t) * u0.value(phi, t)


@dataclass
class PhaseCurve:
    """Dense solution of the curve ODE on [0, t_eff]."""

    sol: object
    t_eff: float
    T: float
    stop_reason: str
    admissible: bool
    tab: object
    u0: object
    a7_c0t_weight: float = A7_C0T_WEIGHT
    dphi_scale: float = 1.0
    samples: dict = field(default_factory=dict)

    def _check(self, t):
        t = np.asarray(t, float)
        if np.any(t < -1e-12) or np.any(t > self.t_eff * (1 + 1e-12) + 1e-14):
            raise OutOfDomain(f"t outside the curve interval [0, {self.t_eff:.6g}]")
        return np.clip(t, 0.0, self.t_eff)

    def _state(self, t):
        t = self._check(t)
        y = self.sol(t.ravel())
        return t, y[0].reshape(t.shape), y[1].reshape(t.shape)

    def phi(self, t):
        return self._state(t)[1]

    def dphi(self, t):
        return self.dphi_scale * self._state(t)[2]

    def ddphi(self, t):
        t, p, dp = self._state(t)
        c = phase_coeffs(None, self.u0, p, t, tab=self.tab, a7_c0t_weight=self.a7_c0t_weight)
        return self.dphi_scale * c.ddphi(dp)

    def margin(self, t):
        t, p, _ = self._state(t)
        dp = self.dphi(t)
        return dp * amplitude_factor(self.tab, self.u0, p, dp, t)

    def perturbed(self, dphi_scale):
        """Copy whose phi' and phi'' are multiplied by ``dphi_scale`` (sensitivity controls)."""
        from dataclasses import replace
        return replace(self, dphi_scale=self.dphi_scale * dphi_scale)

    def table(self, n=129):
        t = np.linspace(0.0, self.t_eff, n)
        return np.column_stack([t, self.phi(t), self.dphi(t), self.ddphi(t), self.margin(t)])

    def to_csv(self, path, n=129):
        write_csv(path, ["t", "phi", "dphi", "ddphi", "margin"], self.table(n),
                  [f"stop_reason={self.stop_reason}", f"t_eff={self.t_eff!r}",
                   f"admissible={self.admissible}"])


def write_csv(path, header, rows, comments=()):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        for c in comments:
            fh.write(f"# {c}\n")
        fh.write("# " + ",".join(header) + "\n")
        w = csv.writer(fh)
        for r in rows:
            w.writerow([_fmt(v) for v in r])


def _fmt(v):
    if isinstance(v, (str, bool)):
        return str(v)
    return f"{float(v):.17g}"


def admissibility_margin(curve: PhaseCurve, u0, t):
    """phi'(t) * A(phi(t), t)."""
    return curve.margin(t)


def solve_phase(s, u0, *, tab=None, a7_c0t_weight=A7_C0T_WEIGHT, rtol=RTOL, atol=ATOL,
                max_step=np.inf) -> PhaseCurve:
    """Integrate the curve ODE from (phi0, dphi0) with Dormand-Prince 5(4).

    Stops early (t_eff < T) when the leading bracket becomes singular, the
    admissibility margin reaches zero, or the curve leaves the space window.
    """
    tab = tab or s.coefficients.table()
    t_end = s.T
    if u0.t_break is not None:
        t_end = min(t_end, u0.t_break)
    m0 = s.dphi0 * amplitude_factor(tab, u0, np.array(s.phi0), s.dphi0, np.array(0.0))
    if not float(m0) > 0.0:
        raise InadmissibleStart(f"phi'(0) * A(phi(0), 0) = {float(m0):.6g} is not positive")

    def coeffs(t, y):
        return phase_coeffs(s, u0, np.array(y[0]), np.array(t), tab=tab, a7_c0t_weight=a7_c0t_weight)

    def rhs(t, y):
        if not (s.x_min <= y[0] <= s.x_max):
            return [y[1], 0.0]
        c = coeffs(t, y)
        return [y[1], float(c.ddphi(y[1]))]

    def ev_bracket(t, y):
        if not (s.x_min <= y[0] <= s.x_max):
            return 1.0
        c = coeffs(t, y)
        return float(abs(c.bracket(y[1])) - SING_TOL * max(1.0, abs(float(c.A1)) * y[1]**2))
    ev_bracket.terminal = True

    def ev_margin(t, y):
        if not (s.x_min <= y[0] <= s.x_max):
            return 1.0
        return float(y[1] * amplitude_factor(tab, u0, np.array(y[0]), y[1], np.array(t)))
    ev_margin.terminal = True
    ev_margin.direction = -1

    def ev_left(t, y):
        return y[0] - s.x_min
    ev_left.terminal = True

    def ev_right(t, y):
        return s.x_max - y[0]
    ev_right.terminal = True

    events = [ev_bracket, ev_margin, ev_left, ev_right]
    sol = solve_ivp(rhs, (0.0, t_end), [s.phi0, s.dphi0], method="RK45", rtol=rtol, atol=atol,
                    dense_output=True, events=events, max_step=max_step)
    if sol.status == -1:
        raise PhaseBlowup(f"curve integration failed: {sol.message}")
    reasons = ["singular_bracket", "admissibility_lost", "left_window", "left_window"]
    stop = "horizon" if u0.t_break is None or t_end == s.T else "breaking"
    t_eff = float(sol.t[-1])
    if sol.status == 1:
        for k, te in enumerate(sol.t_events):
            if te.size:
                stop = reasons[k]
                t_eff = float(te[0])
                break
    curve = PhaseCurve(sol=sol.sol, t_eff=t_eff, T=s.T, stop_reason=stop, admissible=True,
                       tab=tab, u0=u0, a7_c0t_weight=a7_c0t_weight)
    ts = np.linspace(0.0, t_eff, 257)
    margins = curve.margin(ts)
    curve.admissible = bool(np.min(margins) > 0.0)
    curve.samples = {"t": ts, "margin": margins, "nfev": int(sol.nfev)}
    return curve
