"""Regular part of the expansion: u0, u1 and the extension u1^- on D^-.

All three fields live on families of characteristics of the transport
operator ``a0 d/dt + (b0 + c0 u0) d/dx``.  A field is stored in
characteristic coordinates: a launch label ``s`` and the time ``t``, with
the trajectory X(s, t) and the carried value W(s, t) on a tensor grid.
Quintic-in-s / cubic-in-t splines give spatial derivatives through the
chain rule ``d/dx = (1/X_s) d/ds``.  First time derivatives are taken from
the characteristic ODE itself, so applying the transport operator to an
evaluated field reproduces its source term to rounding error.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.integrate import solve_ivp
from scipy.interpolate import CubicSpline, RectBivariateSpline

from . import exprdsl
from .errors import FormUnavailable, GradientCatastrophe, OutOfDomain, TransversalityLoss
from .jet import Jet

log = logging.getLogger(__name__)

ODE_RTOL = 1e-11
ODE_ATOL = 1e-12
BREAK_THRESHOLD = 1e-10
SEAM_FIT_POINTS = 10
SEAM_FADE_LABELS = 8.0


class CharacteristicField:
    """A scalar field carried along a monotone family of characteristics.

    Parameters
    ----------
    labels, times : 1-D increasing arrays
    X, W : arrays of shape (len(labels), len(times))
    speed : callable (x, t, s, w) -> dX/dt along the characteristic
    rate : callable (x, t, s, w) -> dW/dt along the characteristic
    """

    def __init__(self, labels, times, X, W, speed: Callable, rate: Callable,
                 X_spline: Optional[RectBivariateSpline] = None, constant: Optional[float] = None):
        # ``constant``: the field is known to equal this value everywhere
        self.constant = constant
        self.labels = np.asarray(labels, dtype=float)
        self.times = np.asarray(times, dtype=float)
        self.X = np.asarray(X, dtype=float)
        self.W = np.asarray(W, dtype=float)
        self.speed = speed
        self.rate = rate
        self._Xs = X_spline or RectBivariateSpline(self.labels, self.times, self.X, kx=5, ky=3, s=0)
        self._Ws = RectBivariateSpline(self.labels, self.times, self.W, kx=5, ky=3, s=0)

    @property
    def t_range(self):
        return float(self.times[0]), float(self.times[-1])

    def _check_t(self, t):
        lo, hi = self.t_range
        span = hi - lo
        bad = (t < lo - 1e-12 * span) | (t > hi + 1e-12 * span)
        if np.any(bad):
            raise OutOfDomain(f"t = {float(t[bad][0]):.6g} outside [{lo:.6g}, {hi:.6g}]")

    def x_bounds(self, t):
        """Leftmost and rightmost covered x at time(s) ``t``."""
        t = np.asarray(t, dtype=float)
        return (self._Xs.ev(np.full(t.shape, self.labels[0]), t),
                self._Xs.ev(np.full(t.shape, self.labels[-1]), t))

    def covers(self, x, t):
        x, t = np.broadcast_arrays(np.asarray(x, float), np.asarray(t, float))
        lo, hi = self.x_bounds(t)
        tlo, thi = self.t_range
        return (x >= lo) & (x <= hi) & (t >= tlo) & (t <= thi)

    def locate(self, x, t):
        """Label of the characteristic through each (x, t) (Newton on X(s, t) = x)."""
        x, t = np.broadcast_arrays(np.asarray(x, float), np.asarray(t, float))
        x, t = x.ravel(), t.ravel()
        self._check_t(t)
        t = np.clip(t, *self.t_range)
        lo, hi = self.x_bounds(t)
        span = np.maximum(hi - lo, 1.0)
        bad = (x < lo - 1e-10 * span) | (x > hi + 1e-10 * span)
        if np.any(bad):
            k = int(np.argmax(bad))
            raise OutOfDomain(f"x = {x[k]:.6g} at t = {t[k]:.6g} is outside the characteristic fan "
                              f"[{lo[k]:.6g}, {hi[k]:.6g}]")
        # Newton start: inverse of the stored trajectory column at the nearest level
        near = np.clip(np.searchsorted(self.times, t), 0, self.times.size - 1)
        prev = np.clip(near - 1, 0, None)
        near = np.where(np.abs(self.times[prev] - t) < np.abs(self.times[near] - t), prev, near)
        s = np.empty_like(x)
        for k in np.unique(near):
            sel = near == k
            s[sel] = np.interp(x[sel], self.X[:, k], self.labels)
        tt = t
        for _ in range(40):
            f = self._Xs.ev(s, tt) - x
            d = self._Xs.ev(s, tt, dx=1)
            step = f / d
            s = np.clip(s - step, self.labels[0], self.labels[-1])
            if np.max(np.abs(step), initial=0.0) < 1e-14 * (1.0 + np.max(np.abs(s), initial=0.0)):
                break
        return s, x, tt

    def _check_cover(self, x, t):
        x, t = np.broadcast_arrays(np.asarray(x, float), np.asarray(t, float))
        self._check_t(t.ravel())
        if not np.all(self.covers(x, np.clip(t, *self.t_range))):
            self.locate(x, t)  # raises with the offending point

    def jet(self, x, t) -> Jet:
        x = np.asarray(x, float)
        t = np.asarray(t, float)
        shape = np.broadcast(x, t).shape
        if self.constant is not None:
            self._check_cover(x, t)
            j = Jet.zeros(shape)
            j.v[...] = self.constant
            return j
        s, xf, tf = self.locate(x, t)
        X, W = self._Xs, self._Ws
        Xs, Xss, Xsss = X.ev(s, tf, dx=1), X.ev(s, tf, dx=2), X.ev(s, tf, dx=3)
        Xst, Xsst = X.ev(s, tf, dx=1, dy=1), X.ev(s, tf, dx=2, dy=1)
        w = W.ev(s, tf)
        Ws, Wss, Wsss = W.ev(s, tf, dx=1), W.ev(s, tf, dx=2), W.ev(s, tf, dx=3)
        Wst, Wsst = W.ev(s, tf, dx=1, dy=1), W.ev(s, tf, dx=2, dy=1)
        lam = self.speed(xf, tf, s, w)
        wt = self.rate(xf, tf, s, w)
        p = Xs
        ux = Ws / p
        ut = wt - lam * ux
        uxx = Wss / p**2 - Ws * Xss / p**3
        r_s = Wss / p - Ws * Xss / p**2
        r_t = Wst / p - Ws * Xst / p**2
        uxt = r_t - lam * r_s / p
        q_s = Wsss / p**2 - 3 * Wss * Xss / p**3 - Ws * Xsss / p**3 + 3 * Ws * Xss**2 / p**4
        q_t = (Wsst / p**2 - 2 * Wss * Xst / p**3 - Wst * Xss / p**3 - Ws * Xsst / p**3
               + 3 * Ws * Xss * Xst / p**4)
        uxxt = q_t - lam * q_s / p
        parts = [w, ux, ut, uxx, uxt, uxxt]
        return Jet(*(np.reshape(a, shape) for a in parts))

    def value(self, x, t):
        x = np.asarray(x, float)
        t = np.asarray(t, float)
        shape = np.broadcast(x, t).shape
        if self.constant is not None:
            self._check_cover(x, t)
            return np.full(shape, self.constant)
        s, _, tf = self.locate(x, t)
        return np.reshape(self._Ws.ev(s, tf), shape)


@dataclass
class RegularTerm:
    """u_j on [x_min, x_max] x [0, t_end] (t_end < t_break when breaking occurred)."""

    order: int
    field: CharacteristicField
    t_break: Optional[float] = None
    stats: dict = None  # type: ignore[assignment]

    def __post_init__(self):
        if self.stats is None:
            self.stats = {}

    def jet(self, x, t) -> Jet:
        self._guard(t)
        return self.field.jet(x, t)

    def value(self, x, t):
        self._guard(t)
        return self.field.value(x, t)

    def _guard(self, t):
        if self.t_break is not None and np.any(np.asarray(t) >= self.t_break):
            raise OutOfDomain(f"regular part is undefined after the breaking time {self.t_break:.6g}")

    @property
    def labels(self):
        return self.field.labels

    @property
    def times(self):
        return self.field.times


def _taylor23(sig, vals):
    """Second and third Taylor coefficients at sigma = 0 of sampled values."""
    c = np.polynomial.polynomial.polyfit(sig, vals, min(5, sig.size - 1))
    c = np.concatenate([c, np.zeros(4)])
    return np.array([c[2], c[3]])


def eval_regular(term, x, t, dx=0, dt=0):
    """Value or mixed partial (dx in 0..2, dt in 0..1) of a regular/extension term."""
    return term.jet(x, t).pick(dx, dt)


# ---------------------------------------------------------------------------
# u0 by characteristics

def _levels(T, n_t, n_levels=None):
    m = n_levels or max(4 * (n_t - 1) + 1, 129)
    return np.linspace(0.0, T, m)


def _lambda_bound(s, tab, X, Tm, g):
    a0 = tab("a0", X, Tm)
    lam = (tab("b0", X, Tm) + tab("c0", X, Tm) * g) / a0
    return float(np.max(np.abs(lam)))


def _fan_labels(s, pad, spacing):
    lo, hi = s.x_min - pad, s.x_max + pad
    n = int(np.ceil((hi - lo) / spacing)) + 1
    n = min(max(n, 64), 6001)
    return np.linspace(lo, hi, n)


def _first_break(sol, labels, times, X):
    dd = np.diff(X, axis=0) / np.diff(labels)[:, None]
    bad_cols = np.where(np.any(dd <= BREAK_THRESHOLD, axis=0))[0]
    if bad_cols.size == 0:
        return None
    k = int(bad_cols[0])
    if k == 0:
        return 0.0
    lo, hi = times[k - 1], times[k]
    tol = 1e-3 * (times[-1] - times[0]) * 1e-2
    dl = np.diff(labels)
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        xm = sol.sol(mid)[: labels.size]
        if np.any(np.diff(xm) / dl <= BREAK_THRESHOLD):
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


def _u0_speed(tab, g_tree):
    def speed(x, t, s, w):
        return (tab("b0", x, t) + tab("c0", x, t) * exprdsl.evaluate(g_tree, s, 0.0)) / tab("a0", x, t)
    return speed


def _fan_system(s, tab, labels, T, levels, with_u1=False):
    """Integrate X, X_s (and u1 when requested) along every characteristic."""
    g = exprdsl.evaluate(s.u0_init, labels, 0.0)
    gx = exprdsl.evaluate(exprdsl.diff(s.u0_init, "x"), labels, 0.0)
    n = labels.size
    g = np.broadcast_to(g, labels.shape).astype(float)
    gx = np.broadcast_to(gx, labels.shape).astype(float)

    def rhs(t, y):
        X, P = y[:n], y[n:2 * n]
        a0, b0, c0 = tab("a0", X, t), tab("b0", X, t), tab("c0", X, t)
        a0x, b0x, c0x = tab("a0x", X, t), tab("b0x", X, t), tab("c0x", X, t)
        lam = (b0 + c0 * g) / a0
        lam_x = (b0x + c0x * g) / a0 - lam * a0x / a0
        out = [lam, lam_x * P + c0 * gx / a0]
        if with_u1:
            W1 = y[2 * n:]
            u0x = gx / P
            u0t = -lam * u0x
            f1 = -(tab("a1", X, t) * u0t + tab("b1", X, t) * u0x + tab("c1", X, t) * g * u0x)
            out.append((f1 - c0 * u0x * W1) / a0)
        return np.concatenate(out)

    y0 = [labels, np.ones(n)]
    if with_u1:
        y0.append(np.broadcast_to(exprdsl.evaluate(s.u1_init, labels, 0.0), labels.shape).astype(float))
    sol = solve_ivp(rhs, (0.0, T), np.concatenate(y0), method="DOP853", t_eval=levels,
                    rtol=ODE_RTOL, atol=ODE_ATOL, dense_output=True)
    if sol.status != 0:
        raise OutOfDomain(f"characteristic integration failed: {sol.message}")
    return sol, g, gx


def solve_u0(s, grid=None, *, n_levels=None, on_break="raise", tab=None) -> RegularTerm:
    """Leading regular term by the method of characteristics.

    Raises :class:`GradientCatastrophe` when neighbouring characteristics
    cross before ``T``; with ``on_break="truncate"`` the term is returned
    and only evaluable for t < t_break.
    """
    tab = tab or s.coefficients.table()
    grid = grid or s.grid()
    levels = _levels(s.T, grid.t.size, n_levels)
    X0, T0 = np.meshgrid(grid.x, grid.t)
    gw = exprdsl.evaluate(s.u0_init, grid.x, 0.0)
    lam_max = _lambda_bound(s, tab, X0, T0, np.broadcast_to(gw, grid.x.shape)[None, :])
    spacing = 0.5 * (s.x_max - s.x_min) / (grid.x.size - 1)
    pad = 1.0 + 1.5 * s.T * lam_max
    for _ in range(6):
        labels = _fan_labels(s, pad, spacing)
        sol, g, gx = _fan_system(s, tab, labels, s.T, levels)
        n = labels.size
        X = sol.y[:n]
        t_break = _first_break(sol, labels, levels, X)
        if t_break is not None:
            break
        if np.all(X[0] <= s.x_min) and np.all(X[-1] >= s.x_max):
            break
        pad *= 2.0
    else:
        raise OutOfDomain("could not cover the space window with characteristics")

    if t_break is not None:
        if on_break == "raise":
            raise GradientCatastrophe(t_break)
        keep = levels < t_break
        if keep.sum() < 8:
            raise GradientCatastrophe(t_break)
        levels, X = levels[keep], X[:, keep]

    W = np.repeat(g[:, None], levels.size, axis=1)
    const = float(g[0]) if exprdsl.is_constant(s.u0_init) else None
    fld = CharacteristicField(labels, levels, X, W, speed=_u0_speed(tab, s.u0_init),
                              rate=lambda x, t, s_, w: np.zeros_like(w), constant=const)
    return RegularTerm(0, fld, t_break=t_break,
                       stats={"labels": labels.size, "levels": levels.size, "pad": pad})


def solve_u1(s, u0: RegularTerm, grid=None, *, tab=None) -> RegularTerm:
    """First regular correction along the characteristics of u0.

    Source: f1 = -(a1 u0_t + b1 u0_x + c1 u0 u0_x).
    """
    tab = tab or s.coefficients.table()
    labels, levels = u0.labels, u0.times
    sol, g, gx = _fan_system(s, tab, labels, float(levels[-1]), levels, with_u1=True)
    n = labels.size
    W1 = sol.y[2 * n:]
    gx_tree = exprdsl.diff(s.u0_init, "x")
    xspl = u0.field._Xs

    def rate(x, t, s_, w):
        a0, c0 = tab("a0", x, t), tab("c0", x, t)
        gs = exprdsl.evaluate(s.u0_init, s_, 0.0)
        u0x = exprdsl.evaluate(gx_tree, s_, 0.0) / xspl.ev(s_, t, dx=1)
        lam = (tab("b0", x, t) + c0 * gs) / a0
        u0t = -lam * u0x
        f1 = -(tab("a1", x, t) * u0t + tab("b1", x, t) * u0x + tab("c1", x, t) * gs * u0x)
        return (f1 - c0 * u0x * w) / a0

    fld = CharacteristicField(labels, levels, u0.field.X, W1, speed=u0.field.speed, rate=rate,
                              X_spline=xspl)
    return RegularTerm(1, fld, t_break=u0.t_break, stats=dict(u0.stats))


# ---------------------------------------------------------------------------
# extension u1^- on D^- (homogeneous transport seeded on the curve)

@dataclass
class ExtensionTerm:
    """u1^- on {x <= phi(t)}, continued to x > phi(t) by its quadratic Taylor
    polynomial in x about the curve (only needed inside the inner window)."""

    field: CharacteristicField
    curve: object
    nu1: CubicSpline
    p1: CubicSpline
    p2: CubicSpline
    sigma_split: float = 0.0
    stats: dict = None  # type: ignore[assignment]

    def jet(self, x, t) -> Jet:
        x = np.asarray(x, float)
        t = np.asarray(t, float)
        x, t = np.broadcast_arrays(x, t)
        phi = self.curve.phi(t)
        left = x <= phi
        out = Jet.zeros(x.shape)
        if np.any(left):
            jl = self.field.jet(x[left], t[left])
            for f in ("v", "x", "t", "xx", "xt", "xxt"):
                getattr(out, f)[left] = getattr(jl, f)
        right = ~left
        if np.any(right):
            tr, xr = t[right], x[right]
            d = xr - phi[right]
            dphi = self.curve.dphi(tr)
            n, n1 = self.nu1(tr), self.nu1(tr, 1)
            p1, p1t = self.p1(tr), self.p1(tr, 1)
            p2, p2t = self.p2(tr), self.p2(tr, 1)
            out.v[right] = n + p1 * d + 0.5 * p2 * d**2
            out.x[right] = p1 + p2 * d
            out.xx[right] = p2
            out.t[right] = n1 + p1t * d - p1 * dphi + 0.5 * p2t * d**2 - p2 * d * dphi
            out.xt[right] = p1t + p2t * d - p2 * dphi
            out.xxt[right] = p2t
        return out

    def value(self, x, t):
        return self.jet(x, t).v


def solve_extension(s, u0: RegularTerm, u1: Optional[RegularTerm], curve, nu1, *,
                    tab=None, n_curve=129, taper=None) -> ExtensionTerm:
    """Solve Lambda u1^- = 0 with u1^- = nu1 on the curve.

    ``nu1`` is a pair ``(t_samples, values)`` or a callable of t.  Left of the
    characteristic through (phi(0), 0) the data are continued onto t = 0 with a
    C^1-compatible, tanh-saturated profile.
    """
    tab = tab or s.coefficients.table()
    t_end = curve.t_eff
    if callable(nu1):
        ts = np.linspace(0.0, t_end, n_curve)
        nu_spl = CubicSpline(ts, nu1(ts))
    else:
        ts, vals = (np.asarray(a, float) for a in nu1)
        nu_spl = CubicSpline(ts, vals)

    def u0jet(x, t):
        return u0.jet(x, t)

    def speed(x, t, s_=None, w=None):
        return (tab("b0", x, t) + tab("c0", x, t) * u0.value(x, t)) / tab("a0", x, t)

    def decay(x, t):
        j = u0jet(x, t)
        return tab("c0", x, t) * j.x / tab("a0", x, t)

    def rate(x, t, s_, w):
        return -decay(x, t) * w

    # transversality along the curve
    tg = np.linspace(0.0, t_end, n_curve)
    rel = curve.dphi(tg) - speed(curve.phi(tg), tg)
    scale = np.maximum(1.0, np.abs(curve.dphi(tg)))
    bad = np.abs(rel) <= 1e-8 * scale
    if np.any(bad):
        raise TransversalityLoss(float(tg[bad][0]))

    levels = np.linspace(0.0, t_end, max(n_curve, 65))
    sig_gamma = np.linspace(0.0, t_end, n_curve)
    d_sigma = sig_gamma[1] - sig_gamma[0]

    # Gamma-launched characteristics: backward to t=0 and forward to t_end,
    # in a per-label rescaled time so one vector ODE serves every label.
    X_g = np.empty((n_curve, levels.size))
    W_g = np.empty_like(X_g)
    x_launch = curve.phi(sig_gamma)
    w_launch = nu_spl(sig_gamma)
    for direction in (-1, 1):
        span = (sig_gamma - 0.0) if direction < 0 else (t_end - sig_gamma)
        span = np.where(span == 0.0, 0.0, span)

        def rhs(theta, y, span=span, direction=direction):
            X, W = y[:n_curve], y[n_curve:]
            tt = sig_gamma + direction * theta * span
            return np.concatenate([direction * span * speed(X, tt), -direction * span * decay(X, tt) * W])

        sol = solve_ivp(rhs, (0.0, 1.0), np.concatenate([x_launch, w_launch]), method="DOP853",
                        rtol=ODE_RTOL, atol=ODE_ATOL, dense_output=True)
        if sol.status != 0:
            raise OutOfDomain(f"extension characteristics failed: {sol.message}")
        # (label, level) pairs reached in this direction and their rescaled times
        I, K = np.meshgrid(np.arange(n_curve), np.arange(levels.size), indexing="ij")
        sg, tk = sig_gamma[I], levels[K]
        if direction < 0:
            mask = tk <= sg
            theta = np.divide(sg - tk, sg, out=np.zeros_like(sg), where=sg > 0)
        else:
            mask = tk > sg
            rest = t_end - sg
            theta = np.divide(tk - sg, rest, out=np.zeros_like(sg), where=rest > 0)
        I, K, theta = I[mask], K[mask], np.clip(theta[mask], 0.0, 1.0)
        uniq, inv = np.unique(theta, return_inverse=True)
        Y = sol.sol(uniq)
        X_g[I, K] = Y[I, inv]
        W_g[I, K] = Y[n_curve + I, inv]

    # left part: launched on t = 0 from xi < phi(0)
    phi0, dphi0 = float(curve.phi(0.0)), float(curve.dphi(0.0))
    lam0 = float(speed(np.array(phi0), np.array(0.0)))
    c_rel = dphi0 - lam0
    mu0 = float(decay(np.array(phi0), np.array(0.0)))
    slope = (float(nu_spl(0.0, 1)) + mu0 * float(nu_spl(0.0))) / c_rel
    nu0 = float(nu_spl(0.0))
    if c_rel <= 0:
        raise FormUnavailable("the extension needs phi'(0) to exceed the characteristic speed "
                              "on the curve; here characteristics overtake the curve")
    # left labels ride u0's own characteristics, so its launch range bounds them;
    # one label of slack keeps the outermost trajectory inside the fan
    xi_min = float(u0.labels[1])
    taper = taper or (s.x_max - s.x_min)
    n_left = max(int(np.ceil((phi0 - xi_min) / (c_rel * d_sigma))), 1)
    sig_left = -d_sigma * np.arange(n_left, 0, -1)
    # Continue the t = 0 trace of the Gamma labels to sigma < 0 so that launch
    # point and data agree with it to third order in sigma; the fan interpolant
    # is then smooth across the seam.  The corrections fade over a few labels.
    k = min(SEAM_FIT_POINTS, n_curve)
    xi_c = _taylor23(sig_gamma[:k], X_g[:k, 0])
    h_c = _taylor23(sig_gamma[:k], W_g[:k, 0])
    taper_s = taper / c_rel
    h_c[1] += slope * c_rel / (3.0 * taper_s**2)  # cancel the cubic term of the tanh
    fade = np.exp(-(sig_left / (SEAM_FADE_LABELS * d_sigma)) ** 2)
    xi = phi0 + c_rel * sig_left + (xi_c[0] * sig_left**2 + xi_c[1] * sig_left**3) * fade
    xi = np.maximum(xi, xi_min)
    h = (nu0 + slope * c_rel * taper_s * np.tanh(sig_left / taper_s)
         + (h_c[0] * sig_left**2 + h_c[1] * sig_left**3) * fade)

    def rhs_left(t, y, m=sig_left.size):
        X, W = y[:m], y[m:]
        return np.concatenate([speed(X, t), -decay(X, t) * W])

    sol = solve_ivp(rhs_left, (0.0, t_end), np.concatenate([xi, h]), method="DOP853",
                    t_eval=levels, rtol=ODE_RTOL, atol=ODE_ATOL)
    if sol.status != 0:
        raise OutOfDomain(f"extension characteristics failed: {sol.message}")
    X_l, W_l = sol.y[: sig_left.size], sol.y[sig_left.size:]
    if np.any(X_l[0] > s.x_min):
        raise OutOfDomain("extension characteristics do not cover the left end of the window")
    labels = np.concatenate([sig_left, sig_gamma])
    X = np.vstack([X_l, X_g])
    W = np.vstack([W_l, W_g])
    if np.any(np.diff(X, axis=0) <= 0):
        raise TransversalityLoss(float(levels[np.where(np.any(np.diff(X, axis=0) <= 0, axis=0))[0][0]]))

    fld = CharacteristicField(labels, levels, X, W, speed=lambda x, t, s_, w: speed(x, t), rate=rate)

    # quadratic continuation across the curve
    tc = levels
    xc = curve.phi(tc)
    jc = fld.jet(xc, tc)
    ext = ExtensionTerm(fld, curve, nu_spl, CubicSpline(tc, jc.x), CubicSpline(tc, jc.xx),
                        stats={"labels": labels.size, "levels": levels.size, "left_labels": sig_left.size})
    return ext
