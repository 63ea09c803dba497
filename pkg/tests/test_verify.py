import numpy as np
import pytest

from bbmsoliton.assemble import OMEGA, build_solution
from bbmsoliton.errors import CFLViolation, DegenerateFit, GridMismatch, QuadratureFailure
from bbmsoliton.jet import Jet
from bbmsoliton.quadrature import cumulative
from bbmsoliton.verify import (compare, direct_solve, fit_slope, order_sweep, peak, residual,
                               residual_report, sample_points, sample_solution)

from conftest import constant_scenario


@pytest.fixture(scope="module")
def const0(constant):
    return build_solution(constant, 0)


def soliton(x, t, eps):
    return 3.0 / np.cosh(0.5 * np.sqrt(0.5) * (x - 2 * t) / eps) ** 2


def test_constant_residual_is_roundoff(const0):
    for eps in (0.1, 0.0125):
        for region in ("near", "far"):
            x, t = sample_points(const0, eps, region)
            if x.size:
                assert np.max(np.abs(residual(const0, x, t, eps))) <= 1e-7


def test_constant_report_floor(const0):
    rep = residual_report(const0)
    assert rep.near_floor
    assert rep.passed
    assert '"near_slope": null' in rep.to_json()


def test_regular_part_alone_is_exact_for_zero_data(const0):
    X, T = np.meshgrid(np.linspace(-10, 10, 41), np.linspace(0, 1, 11))
    assert np.all(residual(const0, X, T, 0.05, soliton=False) == 0.0)


def test_analytic_residual_matches_differences(bench_solution):
    sol, eps = bench_solution, 0.1
    t0 = 0.5
    x = sol.curve.phi(t0) + eps * np.linspace(-8, 8, 17)
    t = np.full_like(x, t0)
    r = residual(sol, x, t, eps)
    cm = sol.scenario.coefficients
    a, b, c = (cm.full(k, x, t, eps) for k in "abc")
    errs = []
    hs = np.array([4e-3, 2e-3, 1e-3])
    for h in hs:
        def Y(dx, dt):
            return sol.value(x + dx, t + dt, eps)
        ux = (Y(h, 0) - Y(-h, 0)) / (2 * h)
        ut = (Y(0, h) - Y(0, -h)) / (2 * h)
        uxx_p = (Y(h, h) - 2 * Y(0, h) + Y(-h, h)) / h**2
        uxx_m = (Y(h, -h) - 2 * Y(0, -h) + Y(-h, -h)) / h**2
        uxxt = (uxx_p - uxx_m) / (2 * h)
        fd = a * ut + b * ux + c * Y(0, 0) * ux - eps**2 * uxxt
        errs.append(np.max(np.abs(fd - r)))
    assert fit_slope(hs, errs)[0] >= 1.7


def test_far_bounded_by_near_plus_jump(bench_solution):
    rep = residual_report(bench_solution, n_t=9)
    for n, f in zip(rep.near_norms, rep.far_norms):
        assert f <= n + rep.boundary_jump_max
    assert rep.passed
    assert rep.far_slope >= 1.7 and rep.near_slope >= 0.7


def test_sweep_guards(const0):
    with pytest.raises(DegenerateFit):
        order_sweep(const0, [0.1, 0.05], "near")
    with pytest.raises(ValueError):
        sample_points(const0, 0.1, "middle")


def test_far_points_exclude_window(bench_solution):
    x, t = sample_points(bench_solution, 0.05, "far")
    assert np.all(bench_solution.regions(x, t, 0.05) != OMEGA)


def test_direct_zero_stays_zero():
    s = constant_scenario()
    d = direct_solve(s, 0.1, np.zeros_like, 0.05, dx=0.02, dt=4e-3)
    assert np.all(d.u == 0.0)


def test_direct_cfl():
    s = constant_scenario()
    with pytest.raises(CFLViolation):
        direct_solve(s, 0.1, lambda x: soliton(x, 0, 0.1), 0.5, dx=0.02, dt=0.1)


def test_direct_grid_mismatch():
    with pytest.raises(GridMismatch):
        direct_solve(constant_scenario(), 0.1, np.zeros(7), 0.1)


def test_direct_soliton_and_invariant():
    s = constant_scenario()
    eps = 0.1
    d = direct_solve(s, eps, lambda x: soliton(x, 0, eps), 0.2, dx=0.01, dt=2e-3, snapshots=[0.1])
    assert d.invariant_drift() <= 5e-3
    assert np.max(np.abs(d.u[-1] - soliton(d.x, 0.2, eps))) <= 1e-2
    loc, h = peak(d.x, d.u[-1])
    assert loc == pytest.approx(0.4, abs=2e-3)
    assert h == pytest.approx(3.0, rel=1e-2)


def test_direct_refinement():
    s = constant_scenario()
    eps = 0.1
    runs = [direct_solve(s, eps, lambda x: soliton(x, 0, eps), 0.2, dx=dx, dt=dt)
            for dx, dt in ((0.02, 4e-3), (0.01, 2e-3), (0.005, 1e-3))]
    coarse = runs[0].x
    u = [r.u[-1][np.searchsorted(r.x, coarse - 1e-12)] for r in runs]
    d1 = np.max(np.abs(u[1] - u[0]))
    d2 = np.max(np.abs(u[2] - u[1]))
    assert np.log2(d1 / d2) >= 1.5


def test_compare_against_itself(const0):
    x = np.linspace(-5, 5, 101)
    samp = sample_solution(const0, 0.1, x, [0.0, 0.5, 1.0])
    rows = compare(const0, samp)
    assert [r[0] for r in rows] == [0.0, 0.5, 1.0]
    assert max(r[2] for r in rows) == 0.0
    with pytest.raises(GridMismatch):
        compare(const0, samp, window=(20.0, 30.0))
    late = sample_solution(const0, 0.1, x, [0.0])
    late.times = np.array([2.0])
    with pytest.raises(GridMismatch):
        compare(const0, late)


def test_peak_parabolic():
    x = np.linspace(-1, 1, 21)
    loc, h = peak(x, 2.0 - (x - 0.0137) ** 2)
    assert loc == pytest.approx(0.0137, abs=1e-12)
    assert h == pytest.approx(2.0, abs=1e-12)


def test_cumulative_quadrature():
    edges = np.linspace(0.0, 3.0, 7)
    run, err = cumulative(np.cos, edges)
    assert np.max(np.abs(run - np.sin(edges))) <= 1e-13
    assert err <= 1e-11
    with pytest.raises(QuadratureFailure):
        cumulative(lambda s: np.exp(20 * s), np.array([0.0, 3.0]))


def test_jet_product_rule():
    x, t = np.array([0.3, -0.7]), np.array([0.2, 0.9])
    f = Jet(v=x * t, x=t, t=x, xx=0 * x, xt=1 + 0 * x, xxt=0 * x)
    g = Jet(v=x**2 * t, x=2 * x * t, t=x**2, xx=2 * t, xt=2 * x, xxt=2 + 0 * x)
    p = f * g
    # f g = x^3 t^2
    assert np.allclose(p.v, x**3 * t**2)
    assert np.allclose(p.x, 3 * x**2 * t**2)
    assert np.allclose(p.t, 2 * x**3 * t)
    assert np.allclose(p.xx, 6 * x * t**2)
    assert np.allclose(p.xt, 6 * x**2 * t)
    assert np.allclose(p.xxt, 12 * x * t)
    assert p.pick(2, 1) is p.xxt
    with pytest.raises(ValueError):
        p.pick(3, 0)
