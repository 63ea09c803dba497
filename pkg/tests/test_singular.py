import numpy as np
import pytest
import sympy as sp
from scipy.integrate import simpson

from bbmsoliton.errors import SolvabilityError
from bbmsoliton.singular import (SolitonCore, apply_L, assemble_F1, build_Phi1, chebyshev_times,
                                 decay_class, default_tau_max, dual_criterion, eta_ref, eval_v0,
                                 orthogonality_residual, resolve_tau_max, sech2_derivs, snap_tau_max,
                                 solve_bordered, solve_bordered_extrapolated, solve_v1)

from test_phase import BENCH_DDPHI_0

BENCH_TAU_MAX = 169.75
# frozen from the default build (h = 0.05, Richardson-extrapolated): t -> (E1, nu1, v1(t, 1), F1(t, 1))
BENCH_SLICES = {
    0.0: (-0.24489166497802434, 0.24489166497802434, -0.19314171561303772, -0.025787331578313907),
    0.5: (-0.23949909615515158, 0.23239094299946306, -0.18227727372012703, -0.024609826738005353),
    1.0: (-0.22425152078605365, 0.21141587026110076, -0.1649542921149532, -0.022480298462932473),
}


def state(core, t):
    return {k: float(np.ravel(v)[0]) for k, v in core.state(np.array([t])).items()}


@pytest.fixture(scope="module")
def bench_slices(bench_stages):
    b = bench_stages
    return {t: solve_v1(b.core, b.u1, t, BENCH_TAU_MAX) for t in BENCH_SLICES}


# ---------------------------------------------------------------------------
# v0


def test_v0_constant_coefficients(constant_stages):
    core = constant_stages.core
    assert eval_v0(core, 0.3, 0.0) == pytest.approx(3.0, abs=1e-14)
    st = state(core, 0.3)
    assert st["kappa"] == pytest.approx(0.5 * np.sqrt(0.5), rel=1e-15)
    # travelling soliton 3 (a - 1) sech^2(sqrt((a-1)/a) (x - a t) / (2 eps)) with a = 2
    eps = 0.05
    x = np.linspace(-2, 3, 101)
    t = 0.4
    tau = (x - 2 * t) / eps
    exact = 3.0 / np.cosh(0.5 * np.sqrt(0.5) * (x - 2 * t) / eps) ** 2
    assert np.max(np.abs(eval_v0(core, t, tau) - exact)) <= 1e-10
    tm = 60.0 / st["kappa"]
    assert abs(eval_v0(core, t, tm)) <= 1e-12 and abs(eval_v0(core, t, -tm)) <= 1e-12
    assert np.all(eval_v0(core, np.linspace(0, 1, 5), 0.0, dt=1) == 0.0)


def test_v0_symmetry_and_decay(bench_stages):
    core = SolitonCore(bench_stages.curve, bench_stages.u0, bench_stages.tab, C0=1.5)
    t = np.linspace(0, 1, 7)[:, None]
    s = np.linspace(0, 50, 201)[None, :]
    left, right = eval_v0(core, t, -1.5 - s), eval_v0(core, t, -1.5 + s)
    st = core.state(t.ravel())
    amp = np.abs(st["amp"])[:, None]
    assert np.max(np.abs(left - right)) <= 1e-12 * amp.max()
    assert np.all(np.abs(right) <= amp * 4 * np.exp(-2 * st["kappa"][:, None] * s) * (1 + 1e-12))


def test_v0_derivatives_match_differences(bench_stages):
    core = bench_stages.core
    tau = np.linspace(-6, 6, 25)
    t, h = 0.4, 1e-5
    for dtau in (0, 1, 2):
        fd = (eval_v0(core, t + h, tau, dtau) - eval_v0(core, t - h, tau, dtau)) / (2 * h)
        # phi'' comes from the ODE right side, phi' from the dense interpolant
        assert np.max(np.abs(eval_v0(core, t, tau, dtau, dt=1) - fd)) <= 1e-7
    for dtau in (0, 1, 2):
        fd = (eval_v0(core, t, tau + h, dtau) - eval_v0(core, t, tau - h, dtau)) / (2 * h)
        assert np.max(np.abs(eval_v0(core, t, tau, dtau + 1) - fd)) <= 1e-8


def test_sech2_derivs():
    z = np.linspace(-3, 3, 61)
    S = sech2_derivs(z)
    h = 1e-5
    for n in range(4):
        fd = (sech2_derivs(z + h)[n] - sech2_derivs(z - h)[n]) / (2 * h)
        assert np.max(np.abs(S[n + 1] - fd)) <= 1e-8


def test_energy_and_kernel_identities(bench_stages):
    core = bench_stages.core
    tau = np.linspace(-40, 40, 1601)
    for t in (0.0, 0.37, 1.0):
        st = state(core, t)
        g = core.tau_jet(st, tau)
        energy = 0.5 * st["dphi"] * g["T"] ** 2 - (0.5 * st["A"] * g["v"] ** 2 - st["c0"] / 6 * g["v"] ** 3)
        assert np.max(np.abs(energy)) <= 1e-10
        kernel = st["dphi"] * g["TTT"] + (st["c0"] * g["v"] - st["A"]) * g["T"]
        assert np.max(np.abs(kernel)) <= 1e-8 * np.max(np.abs(g["T"]))


# ---------------------------------------------------------------------------
# F1, Phi1, nu1


def test_F1_vanishes_for_constant_coefficients(constant_stages):
    st = constant_stages
    for t in (0.0, 0.5, 1.0):
        assert np.max(np.abs(assemble_F1(st.core, st.u1, state(st.core, t), np.linspace(-50, 50, 101)))) == 0.0
    _, _, Phi, E1, nu1, orth, _ = build_Phi1(st.core, st.u1, 0.5, 60.0)
    assert np.max(np.abs(Phi)) == 0.0 and E1 == 0.0 and nu1 == 0.0 and orth == 0.0


def test_F1_dual_assembly(bench_stages):
    """Symbolic re-derivation of F1 at t = 0, tau = 1 on the benchmark.

    With u0 = u1 = 0, a0 = b0 = 1 and first-order coefficients zero the source
    reduces to -v0_t - c0x tau v0 v0_tau + v0_{tau tau t}.
    """
    t, tau = sp.symbols("t tau")
    phi = 2 * t + sp.Rational(1, 2) * sp.Float(BENCH_DDPHI_0, 30) * t**2
    dphi = sp.diff(phi, t)
    c0 = 1 + sp.Float("0.1") * sp.sin(sp.Float("0.2") * phi)
    c0x = sp.Float("0.02") * sp.cos(sp.Float("0.2") * phi)
    A = dphi - 1
    v0 = 3 * A / c0 * sp.sech(sp.sqrt(A / dphi) / 2 * tau) ** 2
    F1 = -sp.diff(v0, t) - c0x * tau * v0 * sp.diff(v0, tau) + sp.diff(v0, tau, 2, t)
    oracle = float(F1.subs({t: 0, tau: 1}).evalf(30))
    core = bench_stages.core
    got = float(assemble_F1(core, bench_stages.u1, state(core, 0.0), np.array([1.0]))[0])
    assert got == pytest.approx(oracle, rel=1e-10)
    assert got == pytest.approx(BENCH_SLICES[0.0][3], rel=1e-12)


def test_F1_tails(bench_stages):
    core = bench_stages.core
    for t in (0.0, 0.5, 1.0):
        F = assemble_F1(core, bench_stages.u1, state(core, t), np.array([-BENCH_TAU_MAX, BENCH_TAU_MAX]))
        assert np.max(np.abs(F)) <= 1e-10


def test_Phi1_and_nu1(bench_stages, bench_slices):
    core, u1 = bench_stages.core, bench_stages.u1
    for t, sl in bench_slices.items():
        assert abs(sl.Phi1[-1]) <= 1e-9
        assert sl.E1 == pytest.approx(sl.closed_E1, abs=1e-10)
        tau = np.linspace(-BENCH_TAU_MAX, BENCH_TAU_MAX, 40001)
        st = state(core, t)
        nu = simpson(assemble_F1(core, u1, st, tau), x=tau) / st["A"]
        assert sl.nu1 == pytest.approx(nu, abs=1e-8)


def test_frozen_slices(bench_slices):
    for t, (E1, nu1, v1_at_1, _) in BENCH_SLICES.items():
        sl = bench_slices[t]
        i = int(np.argmin(np.abs(sl.tau - 1.0)))
        assert sl.tau[i] == 1.0
        assert sl.E1 == pytest.approx(E1, abs=1e-12)
        assert sl.nu1 == pytest.approx(nu1, abs=1e-12)
        assert sl.v1[i] == pytest.approx(v1_at_1, abs=1e-10)


def test_orthogonality(bench_stages):
    b = bench_stages
    ts = chebyshev_times(1.0, 9)
    assert max(abs(orthogonality_residual(b.core, b.u1, t, BENCH_TAU_MAX)) for t in ts) <= 1e-6
    wrong = SolitonCore(b.curve.perturbed(1.05), b.u0, b.tab)
    assert max(abs(orthogonality_residual(wrong, b.u1, t, BENCH_TAU_MAX)) for t in ts) > 1e-3
    with pytest.raises(SolvabilityError):
        solve_v1(wrong, b.u1, 1.0, BENCH_TAU_MAX)


# ---------------------------------------------------------------------------
# v1


def test_v1_zero_source(constant_stages):
    st = constant_stages
    sl = solve_v1(st.core, st.u1, 0.5, 60.0)
    assert np.max(np.abs(sl.v1)) <= 1e-14


def manufactured(h, kw, extrapolate, tau_max=40.0):
    dphi, A, c0 = 2.0, 1.0, 1.0
    k = 0.5 * np.sqrt(A / dphi)
    hq = h / 2 if extrapolate else h
    tau = hq * np.arange(-round(tau_max / hq), round(tau_max / hq) + 1)
    S = sech2_derivs(k * tau)
    v0, p = 3 * A / c0 * S[0], 3 * A / c0 * k * S[1]
    z = kw * tau
    T, Sw = np.tanh(z), 1 / np.cosh(z) ** 2
    w = Sw * T
    wpp = kw**2 * (-2 * Sw * T) * (6 * Sw - 2)
    Phi = dphi * wpp + (c0 * v0 - A) * w
    target = np.trapezoid(w * p, dx=hq)
    solve = solve_bordered_extrapolated if extrapolate else solve_bordered
    v, _ = solve(dphi, A, c0 * v0, Phi, w[0], w[-1], h, p, target)
    return np.max(np.abs(v - w[:: 2 if extrapolate else 1]))


@pytest.mark.parametrize("kw", [0.5 * np.sqrt(0.5), 0.5])
def test_manufactured_solution(kw):
    hs = [0.1, 0.05, 0.025]
    raw = [manufactured(h, kw, False) for h in hs]
    assert np.log2(raw[1] / raw[2]) >= 1.7
    ext = [manufactured(h, kw, True) for h in hs]
    assert ext[1] <= 1e-6
    assert np.log2(ext[0] / ext[1]) >= 1.7


def test_v1_tails_and_representation(bench_slices):
    for sl in bench_slices.values():
        assert abs(sl.v1[0] - sl.nu1) <= 1e-6 * (1 + abs(sl.nu1))
        assert abs(sl.v1[-1]) <= 1e-6
        assert abs(sl.psi[0]) <= 1e-6 and abs(sl.psi[-1]) <= 1e-6
        assert np.max(np.abs(sl.psi - (sl.v1 - sl.nu1 * eta_ref(sl.state["kappa"], sl.tau)))) == 0.0


def test_v1_equation_residual(bench_stages, bench_slices):
    # raw second-order solve: the discrete equation holds up to the border term mu * v0_tau,
    # and mu is the discrete solvability defect, vanishing at second order
    b = bench_stages
    mus = []
    for h in (0.1, 0.05, 0.025):
        sl = solve_v1(b.core, b.u1, 0.5, BENCH_TAU_MAX, h=h, extrapolate=False)
        st = sl.state
        r = apply_L(st["dphi"], st["A"], st["c0"] * sl.v0, sl.v1, h) - sl.Phi1[1:-1]
        p = b.core.tau_jet(st, sl.tau)["T"][1:-1]
        assert np.max(np.abs(r + sl.mu * p)) <= 1e-10 * np.max(np.abs(sl.Phi1))
        mus.append(abs(sl.mu))
    assert np.log2(mus[0] / mus[1]) >= 1.9 and np.log2(mus[1] / mus[2]) >= 1.9
    # extrapolated profile: fourth-order stencil, matching its accuracy
    for sl in bench_slices.values():
        st, v = sl.state, sl.v1
        h = sl.tau[1] - sl.tau[0]
        d2 = (-v[4:] + 16 * v[3:-1] - 30 * v[2:-2] + 16 * v[1:-3] - v[:-4]) / (12 * h * h)
        r = st["dphi"] * d2 + (st["c0"] * sl.v0[2:-2] - st["A"]) * v[2:-2] - sl.Phi1[2:-2]
        assert np.max(np.abs(r)) <= 1e-6 * np.max(np.abs(sl.Phi1))


def test_tail_insensitivity(bench_stages, bench_slices):
    b = bench_stages
    wide = solve_v1(b.core, b.u1, 0.5, 2 * BENCH_TAU_MAX)
    sl = bench_slices[0.5]
    off = (wide.tau.size - sl.tau.size) // 2
    assert np.array_equal(wide.tau[off:off + sl.tau.size], sl.tau)
    assert np.max(np.abs(wide.v1[off:off + sl.tau.size] - sl.v1)) <= 1e-7


def test_tau_max_defaults(bench_stages):
    b = bench_stages
    assert default_tau_max(10.0) == 40.0
    assert snap_tau_max(169.7056, 0.05) == pytest.approx(169.75, abs=1e-12)
    assert snap_tau_max(resolve_tau_max(b.s, b.core, chebyshev_times(1.0)), 0.05) == BENCH_TAU_MAX


def test_chebyshev_times():
    t = chebyshev_times(2.0, 65)
    assert t[0] == 0.0 and t[-1] == 2.0 and t.size == 65
    assert np.all(np.diff(t) > 0)
    assert t[1] - t[0] < t[33] - t[32]


# ---------------------------------------------------------------------------
# classification


def test_decay_classes(constant_stages, bench_solution):
    st = constant_stages
    flat = [solve_v1(st.core, st.u1, t, 60.0) for t in (0.0, 0.5, 1.0)]
    assert decay_class(flat) == "decaying"
    assert not any(r["mismatch"] for r in dual_criterion(flat))
    sc = bench_solution.singular
    assert sc.decay == "plateau"
    rows = dual_criterion(sc.slices)
    assert not any(r["mismatch"] for r in rows)
    assert all(r["band_quadrature"] == "large" for r in rows)


def test_plateau_scenario():
    from bbmsoliton.assemble import build_solution
    from bbmsoliton.scenario import load_scenario_file

    from conftest import SCENARIOS

    sol = build_solution(load_scenario_file(SCENARIOS / "plateau.toml"), 1, n_samples=17)
    assert sol.singular.decay == "plateau"
    assert sol.form == "theorem2"
    assert np.min(np.abs(sol.singular.nu1_values)) > 1e-3
