"""Panel-wise Gauss-Kronrod (G7/K15) quadrature, vectorized over panels.

Cumulative integrals on a fixed node grid are needed for the singular
correction; panels are the grid cells, each integrated by K15 with the
embedded G7 rule as error estimate.
"""

from __future__ import annotations

import numpy as np

from .errors import QuadratureFailure

_XGK = np.array([
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
])
_WGK = np.array([
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
])
_WG = np.array([
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
])

NODES = np.concatenate([-_XGK[:-1], _XGK[::-1]])
K_WEIGHTS = np.concatenate([_WGK[:-1], _WGK[::-1]])
G_WEIGHTS = np.zeros(15)
_g_idx = [1, 3, 5, 7, 9, 11, 13]
G_WEIGHTS[_g_idx] = np.concatenate([_WG[:-1], _WG[::-1]])


def panel_points(edges):
    """Quadrature abscissae for every panel, shape (n_panels, 15)."""
    edges = np.asarray(edges, float)
    mid = 0.5 * (edges[1:] + edges[:-1])
    half = 0.5 * (edges[1:] - edges[:-1])
    return mid[:, None] + half[:, None] * NODES[None, :], half


def panel_integrals(values, half):
    """K15 integral and |K15 - G7| estimate for each panel from sampled values."""
    k = half * (values @ K_WEIGHTS)
    g = half * (values @ G_WEIGHTS)
    return k, np.abs(k - g)


def cumulative(f, edges, tol=1e-11):
    """Running integral of ``f`` from ``edges[0]`` to each edge.

    ``f`` maps an array of abscissae to values (any shape).  Raises
    :class:`QuadratureFailure` when the summed error estimate exceeds
    ``tol * max(1, integral of |f|)``.
    """
    pts, half = panel_points(edges)
    vals = f(pts)
    k, err = panel_integrals(vals, half)
    scale = max(1.0, float(np.sum(panel_integrals(np.abs(vals), half)[0])))
    total_err = float(np.sum(err))
    if not np.isfinite(total_err) or total_err > tol * scale:
        raise QuadratureFailure(f"panel quadrature error estimate {total_err:.3g} exceeds "
                                f"{tol * scale:.3g}; refine the tau grid")
    return np.concatenate([[0.0], np.cumsum(k)]), total_err
