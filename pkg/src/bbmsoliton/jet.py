"""Truncated derivative bundles for fields of (x, t).

The residual of the equation needs u, u_x, u_t and u_xxt; u_xx and u_xt are
carried because products need them.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

FIELDS = ("v", "x", "t", "xx", "xt", "xxt")


@dataclass
class Jet:
    v: np.ndarray
    x: np.ndarray
    t: np.ndarray
    xx: np.ndarray
    xt: np.ndarray
    xxt: np.ndarray

    @classmethod
    def zeros(cls, shape):
        return cls(*(np.zeros(shape) for _ in FIELDS))

    @classmethod
    def from_tau(cls, g, eps, dphi):
        """Jet of G(t, (x - phi(t))/eps) given its (t, tau) partials.

        ``g`` maps keys ``v, T, TT, TTT, t, Tt, TTt`` (T = d/dtau) to arrays.
        """
        return cls(
            v=g["v"],
            x=g["T"] / eps,
            t=g["t"] - dphi * g["T"] / eps,
            xx=g["TT"] / eps**2,
            xt=(g["Tt"] - dphi * g["TT"] / eps) / eps,
            xxt=(g["TTt"] - dphi * g["TTT"] / eps) / eps**2,
        )

    def __add__(self, other):
        return Jet(*(getattr(self, f) + getattr(other, f) for f in FIELDS))

    def __sub__(self, other):
        return Jet(*(getattr(self, f) - getattr(other, f) for f in FIELDS))

    def scale(self, c):
        return Jet(*(c * getattr(self, f) for f in FIELDS))

    def __mul__(self, o):
        f = self
        return Jet(
            v=f.v * o.v,
            x=f.x * o.v + f.v * o.x,
            t=f.t * o.v + f.v * o.t,
            xx=f.xx * o.v + 2 * f.x * o.x + f.v * o.xx,
            xt=f.xt * o.v + f.x * o.t + f.t * o.x + f.v * o.xt,
            xxt=(f.xxt * o.v + f.xx * o.t + 2 * (f.xt * o.x + f.x * o.xt)
                 + f.t * o.xx + f.v * o.xxt),
        )

    def where(self, mask, other):
        return Jet(*(np.where(mask, getattr(self, f), getattr(other, f)) for f in FIELDS))

    def pick(self, dx=0, dt=0, dxxt=False):
        if dxxt:
            return self.xxt
        key = {(0, 0): "v", (1, 0): "x", (0, 1): "t", (2, 0): "xx", (1, 1): "xt", (2, 1): "xxt"}
        try:
            return getattr(self, key[(dx, dt)])
        except KeyError:
            raise ValueError(f"derivative order (dx={dx}, dt={dt}) not available") from None
