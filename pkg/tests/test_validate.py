import numpy as np
import pytest
from scipy.integrate import trapezoid

from shockforge import system as S
from shockforge import validate as V
from shockforge.errors import CFLViolation, IncompletePipeline


def step_data():
    """u = 1 on [-1, 0], zero elsewhere: a shock at x = t/2 and a fan at x = -1."""
    return S.InitialData(1.0, lambda x: np.where((x >= -1.0) & (x <= 0.0), 1.0, 0.0)[..., None],
                         (-1.0, 0.0))


def bump_profile(x):
    x = np.asarray(x, dtype=float)
    return np.where(np.abs(x) < 1.0, (1.0 - x ** 2) ** 3 * (0.3 + 0.2 * x), 0.0)


def bump_slope(x):
    x = np.asarray(x, dtype=float)
    inner = (1.0 - x ** 2) ** 2 * (-6.0 * x * (0.3 + 0.2 * x) + 0.2 * (1.0 - x ** 2))
    return np.where(np.abs(x) < 1.0, inner, 0.0)


def test_burgers_riemann_shock_speed():
    fv = V.fv_reference(S.burgers(), step_data(), 1.0, resolution=2048, x_range=(-2.0, 2.0),
                        record=[0.5, 1.0])
    pos = V.locate_shock(fv, np.array([1.0]), window=lambda t: (-0.5, 2.0))
    assert np.abs(pos[1:] - 0.5 * fv.times[1:]).max() < 2.0 * fv.dx
    assert fv.mass_defect < 1e-10


def test_hll_conserves_mass_for_systems():
    model = S.p_system()
    data = S.default_data(model, 0.1)
    fv = V.fv_reference(model, data, 2.0, resolution=512)
    assert fv.scheme == "hll"
    assert fv.mass_defect < 1e-10


def test_fv_input_checks():
    with pytest.raises(CFLViolation):
        V.fv_reference(S.burgers(), step_data(), 0.1, cfl=1.5)
    with pytest.raises(ValueError):
        V.fv_reference(S.burgers(), step_data(), 0.1, resolution=128)


def test_equal_area_path_against_finite_volumes():
    data = S.InitialData(1.0, lambda x: bump_profile(x)[..., None], (-1.0, 1.0))
    T, x0, _, _ = V.burgers_shock_path(bump_profile, bump_slope, [0.0], foot_range=(-1.0, 1.0))
    times = T + np.array([0.5, 1.0, 2.0])
    _, _, exact, _ = V.burgers_shock_path(bump_profile, bump_slope, times, foot_range=(-1.0, 1.0))
    fv = V.fv_reference(S.burgers(), data, float(times[-1]), resolution=4096, x_range=(-1.5, 3.5),
                        record=times)
    found = V.locate_shock(fv, np.array([1.0]), window=lambda t: (x0 - 0.5, x0 + 1.5))
    assert np.abs(found[1:] - exact).max() < 3.0 * fv.dx


def test_equal_area_path_before_breaking_follows_the_characteristic():
    T, x0, pos, feet = V.burgers_shock_path(bump_profile, bump_slope, [0.1, 0.2],
                                            foot_range=(-1.0, 1.0))
    assert T == pytest.approx(-1.0 / bump_slope(feet[0][0]), rel=1e-9)
    xi = feet[0][0]
    assert pos == pytest.approx(xi + np.array([0.1, 0.2]) * bump_profile(xi), abs=1e-14)


def test_hugoniot_locus_satisfies_jump_conditions():
    model = S.euler3()
    u_ref = np.array([0.02, -0.01, 0.03])
    loc = V.hugoniot_locus(model, u_ref, 2, np.linspace(-0.05, 0.05, 11))
    for u, sigma in zip(loc.states, loc.speeds):
        res = sigma * (u - u_ref) - (model.f(u) - model.f(u_ref))
        assert np.abs(res).max() < 1e-13
    lam = S.eigen_batch(model, u_ref[None])[0][0]
    assert loc.speeds[5] == pytest.approx(lam[2])


def test_weak_residual_small_on_fitted_solution_and_grows_with_shift(burgers_case):
    sol = V.PiecewiseSolution(burgers_case.ns, burgers_case.curve, burgers_case.frame)
    T = burgers_case.curve.T_eps
    # the shock-frame domain only reaches lambda* (t_final - t) from the shock
    psi = V.Bump(0.01, T + 0.3, 0.06, 0.05)
    base = V.weak_residual(burgers_case.ns.model, sol, psi).relative
    assert base < 1e-7
    smooth = V.Bump(0.08, T + 0.3, 0.03, 0.05)
    assert V.weak_residual(burgers_case.ns.model, sol, smooth).relative < 1e-7
    shifted = []
    for delta in (1e-4, 2e-4, 4e-4):
        moved = V.PiecewiseSolution(burgers_case.ns, burgers_case.curve, burgers_case.frame,
                                    phi_shift=lambda t, d=delta: d * (t - T))
        shifted.append(V.weak_residual(burgers_case.ns.model, moved, psi).relative)
    shifted = np.array(shifted)
    assert np.all(shifted > 100 * base)
    assert shifted[1] / shifted[0] == pytest.approx(2.0, rel=0.05)
    assert shifted[2] / shifted[1] == pytest.approx(2.0, rel=0.05)


def test_bump_norm_matches_quadrature():
    psi = V.Bump(0.0, 0.0, 0.5, 0.25)
    x = np.linspace(-0.5, 0.5, 4001)
    t = np.linspace(-0.25, 0.25, 2001)
    X, Tt = np.meshgrid(x, t, indexing="ij")
    gx, gt = psi.grad(X, Tt)
    dens = np.abs(psi.values(X, Tt)) + np.abs(gx) + np.abs(gt)
    brute = trapezoid(trapezoid(dens, t, axis=1), x)
    assert psi.norm() == pytest.approx(brute, rel=1e-5)


def test_richardson_recovers_intercept():
    eps = np.array([0.2, 0.1, 0.05, 0.025])
    assert V.richardson(eps, 0.75 + 0.3 * eps - 2.0 * eps ** 2) == pytest.approx(0.75, abs=1e-12)
    assert V.richardson(eps[:2], 0.75 + 0.3 * eps[:2]) == pytest.approx(0.75, abs=1e-12)


def test_scaling_report_modes():
    rep = V.ScalingReport()
    rep.add("abs", 1, 1.0, 1.04, 0.05)
    rep.add("rel", 1, 2.0, 2.3, 0.1, mode="rel")
    rep.add("below", 7, 0.0, 1e-13, 1e-12, mode="below")
    rep.add("above", 7, 0.0, -1e-3, 0.0, mode="above")
    rep.add("nan", 2, 0.0, float("nan"), 1.0)
    assert [r.passed for r in rep.rows] == [True, False, True, False, False]
    assert not rep.passed
    assert sorted(rep.by_criterion()) == [1, 2, 7]
    with pytest.raises(ValueError):
        rep.add("abs", 1, 0.0, 0.0, 1.0)


def test_incomplete_pipeline_is_reported(burgers_case):
    with pytest.raises(IncompletePipeline):
        V.require({"curve": None, "grid": 1}, "curve", "grid")
    with pytest.raises(IncompletePipeline):
        V.scaling_suite([burgers_case])


def test_burgers_sine_cusp_formula():
    got = V.burgers_sine_cusp(0.1, 5.0)
    assert got["phi_yyy"] == pytest.approx(8.0)
    assert got["phi_yt"] == pytest.approx(-0.2)


def test_burgers_measurements_pass_every_row(burgers_case, burgers_case_small):
    rep = V.scaling_suite([burgers_case, burgers_case_small])
    failed = [r.name for r in rep.rows if not r.passed]
    assert not failed, failed
