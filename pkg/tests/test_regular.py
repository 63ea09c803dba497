import numpy as np
import pytest

from bbmsoliton.errors import FormUnavailable, GradientCatastrophe, OutOfDomain
from bbmsoliton.regular import eval_regular, solve_extension, solve_u0, solve_u1

from conftest import constant_scenario


@pytest.fixture(scope="module")
def linear():
    """a0=b0=c0=1, a1=1, g(x)=x: u0 = (x-t)/(1+t), u1 = (1+x) t / (1+t)^2."""
    s = constant_scenario(u0_init="x", a1="1")
    u0 = solve_u0(s)
    return s, u0, solve_u1(s, u0)


def grid(s, nx=81, nt=21, t_hi=None):
    return np.meshgrid(np.linspace(s.x_min, s.x_max, nx), np.linspace(0.0, t_hi or s.T, nt))


def test_zero_data(constant_stages):
    X, T = grid(constant_stages.s)
    assert np.all(constant_stages.u0.value(X, T) == 0.0)
    assert np.all(eval_regular(constant_stages.u0, X, T, dx=1) == 0.0)
    assert np.all(constant_stages.u1.value(X, T) == 0.0)


def test_linear_data_closed_form(linear):
    s, u0, _ = linear
    X, T = grid(s)
    j = u0.jet(X, T)
    assert np.max(np.abs(j.v - (X - T) / (1 + T))) <= 1e-9
    assert np.max(np.abs(j.x - 1 / (1 + T))) <= 1e-9
    assert np.max(np.abs(j.t + (1 + X) / (1 + T) ** 2)) <= 1e-8
    assert np.max(np.abs(j.xx)) <= 1e-8
    assert np.max(np.abs(j.xt + 1 / (1 + T) ** 2)) <= 1e-8
    assert eval_regular(u0, 3.0, 1.0, dx=1) == pytest.approx(0.5, abs=1e-10)


def test_u1_closed_form(linear):
    s, _, u1 = linear
    X, T = grid(s)
    assert np.max(np.abs(u1.value(X, T) - (1 + X) * T / (1 + T) ** 2)) <= 1e-8


def test_u1_refinement_oracle(linear):
    s, _, u1 = linear
    fine = s.replace(n_x=4 * (s.n_x - 1) + 1, n_t=4 * (s.n_t - 1) + 1)
    u0f = solve_u0(fine)
    u1f = solve_u1(fine, u0f)
    X, T = grid(s)
    assert np.max(np.abs(u1.value(X, T) - u1f.value(X, T))) <= 1e-6


def test_u1_vanishes_without_sources():
    s = constant_scenario(c1="0.7 + x")
    u0 = solve_u0(s)
    X, T = grid(s)
    assert np.max(np.abs(solve_u1(s, u0).value(X, T))) == 0.0


def test_gradient_catastrophe():
    s = constant_scenario(u0_init="-x", T=2.0)
    with pytest.raises(GradientCatastrophe) as info:
        solve_u0(s)
    assert info.value.t_break == pytest.approx(1.0, abs=0.02)
    u0 = solve_u0(s, on_break="truncate")
    assert u0.value(0.3, 0.5) == pytest.approx(-(0.3 - 0.5) / (1 - 0.5), abs=1e-8)
    with pytest.raises(OutOfDomain):
        u0.value(0.0, 1.2)


def test_outside_fan():
    s = constant_scenario()
    u0 = solve_u0(s)
    with pytest.raises(OutOfDomain):
        u0.value(1e4, 0.5)
    with pytest.raises(OutOfDomain):
        u0.value(0.0, 5.0)


@pytest.fixture(scope="module")
def wavy():
    s = constant_scenario(c0="1+0.1*sin(0.2*x)", u0_init="0.3*sin(0.5*x)")
    return s, solve_u0(s)


def test_constant_along_characteristics(wavy):
    _, u0 = wavy
    f = u0.field
    inner = slice(5, -5)
    xs = f.X[inner, :].T
    ts = np.broadcast_to(f.times[:, None], xs.shape)
    assert np.max(np.abs(f.value(xs, ts) - f.W[inner, :].T)) <= 1e-8
    assert np.all(np.diff(f.X, axis=0) > 0)


def test_transport_residual_second_order(wavy):
    s, u0 = wavy
    tab = s.coefficients.table()
    X, T = np.meshgrid(np.linspace(-8, 8, 41), np.linspace(0.1, 0.9, 9))
    hs = np.array([0.1, 0.05, 0.025, 0.0125])
    norms = []
    for h in hs:
        ut = (u0.value(X, T + h) - u0.value(X, T - h)) / (2 * h)
        ux = (u0.value(X + h, T) - u0.value(X - h, T)) / (2 * h)
        r = tab("a0", X, T) * ut + (tab("b0", X, T) + tab("c0", X, T) * u0.value(X, T)) * ux
        norms.append(np.max(np.abs(r)))
    slope = np.polyfit(np.log(hs), np.log(norms), 1)[0]
    assert slope >= 1.7


def nu_fun(t):
    return 0.3 + 0.1 * t + 0.05 * np.sin(3 * t)


def test_extension_constant_coefficients(constant_stages):
    st = constant_stages
    ext = solve_extension(st.s, st.u0, st.u1, st.curve, nu_fun, tab=st.tab)
    X, T = grid(st.s, 201)
    # straight characteristics x = 2 t* + (t - t*) from the curve phi = 2t
    m = (X < 2 * T) & (X >= T)
    assert np.max(np.abs(ext.value(X[m], T[m]) - nu_fun(X[m] - T[m]))) <= 1e-8
    t = np.linspace(0, 1, 21)
    assert np.max(np.abs(ext.value(2 * t, t) - nu_fun(t))) <= 1e-8


def test_extension_zero_data(constant_stages):
    st = constant_stages
    ext = solve_extension(st.s, st.u0, st.u1, st.curve, lambda t: 0.0 * t, tab=st.tab)
    X, T = grid(st.s)
    m = X < 2 * T
    assert np.max(np.abs(ext.value(X[m], T[m]))) == 0.0


def test_extension_needs_supersonic_curve():
    s = constant_scenario(dphi0=-1.0)
    from bbmsoliton.phase import solve_phase

    u0 = solve_u0(s)
    curve = solve_phase(s, u0)
    with pytest.raises(FormUnavailable):
        solve_extension(s, u0, solve_u1(s, u0), curve, nu_fun)


def test_extension_benchmark_trace_and_transport(bench_solution):
    sol = bench_solution
    ext = sol.extension
    t = sol.singular.t
    assert np.max(np.abs(ext.value(sol.curve.phi(t), t) - sol.singular.nu1_values)) <= 1e-8
    # Lambda u1^- = 0 by finite differences, second order
    s, tab = sol.scenario, sol.tab
    X, T = np.meshgrid(np.linspace(-15, -1, 29), np.linspace(0.1, 0.9, 9))
    hs = np.array([0.04, 0.02, 0.01])
    norms = []
    for h in hs:
        ut = (ext.value(X, T + h) - ext.value(X, T - h)) / (2 * h)
        ux = (ext.value(X + h, T) - ext.value(X - h, T)) / (2 * h)
        r = (tab("a0", X, T) * ut + (tab("b0", X, T) + tab("c0", X, T) * sol.u0.value(X, T)) * ux
             + tab("c0", X, T) * sol.u0.jet(X, T).x * ext.value(X, T))
        norms.append(np.max(np.abs(r)))
    slope = np.polyfit(np.log(hs), np.log(norms), 1)[0]
    assert slope >= 1.7 or max(norms) <= 1e-9
