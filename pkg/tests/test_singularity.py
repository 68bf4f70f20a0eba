import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from shockforge import singularity as SG
from shockforge.errors import DegenerateCusp, NoCrossing
from shockforge.fits import loglog_fit


class CubicSurface:
    """phi(y, t) = a y^3 - b (t - 1) y + x0 + c (t - 1) with closed-form derivatives."""

    def __init__(self, a=1.0, b=1.0, x0=5.0, c=0.0, quintic=0.0):
        self.a, self.b, self.x0, self.c, self.e = a, b, x0, c, quintic
        self.y = np.linspace(-1.0, 1.0, 401)
        self.t = np.linspace(0.5, 1.5, 201)
        tt, yy = np.meshgrid(self.t, self.y, indexing="ij")
        self.K = self.phi_at(yy.ravel(), tt.ravel(), dy=1).reshape(tt.shape)

    def phi_at(self, y, t, dy=0, dt=0):
        y = np.asarray(y, dtype=float)
        s = np.asarray(t, dtype=float) - 1.0
        a, b, e = self.a, self.b, self.e
        if dt == 0:
            return [a * y ** 3 + e * y ** 5 - b * s * y + self.x0 + self.c * s,
                    3 * a * y ** 2 + 5 * e * y ** 4 - b * s,
                    6 * a * y + 20 * e * y ** 3,
                    6 * a + 60 * e * y ** 2][dy]
        if dt == 1:
            return [-b * y + self.c, -b + 0 * y, 0 * y, 0 * y][dy]
        return 0 * y


@pytest.fixture(scope="module")
def cubic():
    surf = CubicSurface(c=0.3)
    bp = SG.detect_blowup(surf)
    return surf, bp


def test_manufactured_blowup_point(cubic):
    _, bp = cubic
    assert bp.y_eps == pytest.approx(0.0, abs=1e-10)
    assert bp.T_eps == pytest.approx(1.0, abs=1e-10)
    assert bp.x_eps == pytest.approx(5.0, abs=1e-10)
    assert bp.lambda_at_bp == pytest.approx(0.3, abs=1e-10)
    assert bp.phi_yyy == pytest.approx(6.0) and bp.phi_yt == pytest.approx(-1.0)


def test_manufactured_cusp_chart_recovers_A_and_B(cubic):
    surf, bp = cubic
    br = SG.envelope_branches(surf, bp, 1.4, count=30)
    chart = SG.cusp_chart(br, bp)
    assert chart.orientation_ok
    assert chart.A == pytest.approx(br.tau, rel=1e-10)
    assert chart.B == pytest.approx(5.0 + 0.3 * br.tau, rel=1e-12)
    assert chart.A_fit == pytest.approx([1.0, 0.0], abs=1e-8)
    assert chart.B_fit == pytest.approx([5.0, 0.3, 0.0], abs=1e-8)
    assert chart.envelope_fit.slope == pytest.approx(1.5, abs=1e-6)
    assert chart.normalized_coefficient == pytest.approx(SG.CUSP_CONSTANT, rel=1e-6)


def test_cardano_double_root():
    # (h + 1)^2 (h - 2) = h^3 - 3h - 2
    assert SG.cardano(-3.0, -2.0) == pytest.approx([-1.0, -1.0, 2.0], abs=1e-12)


def test_cardano_pure_cube():
    assert SG.cardano(0.0, -8.0) == pytest.approx([2.0], abs=1e-14)
    assert SG.cardano(0.0, 0.0) == pytest.approx([0.0, 0.0, 0.0])


def test_cardano_single_real_root():
    roots = SG.cardano(1.0, 1.0)
    assert roots.size == 1
    assert roots[0] ** 3 + roots[0] + 1.0 == pytest.approx(0.0, abs=1e-13)


@settings(max_examples=200, deadline=None)
@given(st.floats(-3, 3), st.floats(-3, 3))
def test_cardano_three_roots(r1, r2):
    r3 = -r1 - r2
    rs = np.sort([r1, r2, r3])
    if np.min(np.diff(rs)) < 1e-3:
        return
    p = r1 * r2 + r1 * r3 + r2 * r3
    q = -r1 * r2 * r3
    assert SG.cardano(p, q) == pytest.approx(rs, abs=1e-9)


def test_inside_cusp_roots(cubic):
    surf, bp = cubic
    rng = np.random.default_rng(7)
    for _ in range(1000):
        tau = rng.uniform(1e-4, 0.3)
        half = 2.0 * (tau / 3.0) ** 1.5
        x = 5.0 + 0.3 * tau + rng.uniform(-0.98, 0.98) * half
        t = 1.0 + tau
        ms = SG.classify_and_roots(surf, bp, x, t)
        assert ms.region == "inside_cusp"
        ys = ms.ys
        assert np.all(np.diff(ys) > 0)
        assert np.abs(surf.phi_at(ys, np.full(3, t)) - x).max() < 1e-12


def test_regions_around_the_cusp(cubic):
    surf, bp = cubic
    assert SG.classify_and_roots(surf, bp, 5.0, 0.9).region == "before_blowup"
    t, tau = 1.1, 0.1
    half = 2.0 * (tau / 3.0) ** 1.5
    centre = 5.0 + 0.3 * tau
    assert SG.classify_and_roots(surf, bp, centre + 2 * half, t).region == "outside_minus"
    assert SG.classify_and_roots(surf, bp, centre - 2 * half, t).region == "outside_plus"
    edge = SG.classify_and_roots(surf, bp, centre + half, t, edge_tol=1e-6)
    assert edge.region == "on_envelope" and len(edge.roots) == 2


def test_degenerate_cusp_is_reported():
    flat = CubicSurface(a=0.0, quintic=1.0)
    with pytest.raises(DegenerateCusp):
        SG.detect_blowup(flat)


def test_no_crossing_is_reported():
    surf = CubicSurface()
    surf.K = np.ones_like(surf.K)
    with pytest.raises(NoCrossing):
        SG.detect_blowup(surf)


def test_anisotropic_distance(cubic):
    _, bp = cubic
    assert SG.anisotropic_distance(bp, 5.0 + 0.3 * 0.2, 1.2) == pytest.approx(0.008)
    assert SG.anisotropic_distance(bp, 5.1, 1.0) == pytest.approx(0.01)


def test_burgers_cusp_is_symmetric(burgers_case):
    bp, br = burgers_case.blowup, burgers_case.branches
    assert bp.x_eps == pytest.approx(0.0, abs=1e-10)
    assert bp.y_eps == pytest.approx(0.0, abs=1e-10)
    assert bp.lambda_at_bp == pytest.approx(0.0, abs=1e-12)
    assert br.x_minus == pytest.approx(-br.x_plus, abs=1e-10)
    assert br.eta_minus == pytest.approx(-br.eta_plus, abs=1e-10)


def test_preshock_stays_inside_cusp_and_leaves_tangentially(euler3_case):
    g, bp, br = euler3_case.grid, euler3_case.blowup, euler3_case.branches
    pre = SG.preshock_curve(g, bp, br, bp.T_eps + 0.5, count=30)
    inner = slice(1, None)
    assert np.all(pre.x_plus[inner] < pre.phi[inner])
    assert np.all(pre.phi[inner] < pre.x_minus[inner])
    # the leading linear coefficient is the characteristic speed at the blowup point
    tau = pre.tau[inner]
    slope = (pre.phi[inner] - bp.x_eps) / tau
    assert slope[:5] == pytest.approx(bp.lambda_at_bp, abs=1e-4)
    # and the distance to the blowup point along it scales like tau^3
    d = SG.anisotropic_distance(bp, pre.phi[inner], pre.t[inner])
    small = tau < 1e-2
    assert loglog_fit(tau[small], d[small]).slope == pytest.approx(3.0, abs=0.05)


def test_burgers_holder_exponents(burgers_case):
    rep = burgers_case.holder
    for q in ("dy", "dydx", "w_i"):
        fit, _ = rep.worst(q)
        assert fit.slope == pytest.approx(SG.HOLDER_TARGETS[q], abs=0.02)
    assert "w_j" not in rep.targets
