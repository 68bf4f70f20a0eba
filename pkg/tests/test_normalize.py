import dataclasses

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from shockforge import normalize as N
from shockforge import system as S
from shockforge.errors import DegenerateMinimum, NoBlowup


def decoupled(n=3):
    """f_k = d_k u_k + u_k^2 / 2: already in normal form, constant eigenvectors."""
    Q = np.zeros((n, n, n))
    for k in range(n):
        Q[k, k, k] = 1.0
    return S.quadratic_flux(np.linspace(-1, 1, n), Q)


@pytest.fixture(scope="module")
def euler_ns():
    return N.build_transform(S.euler3(), 2, box=0.1)


@pytest.fixture(scope="module")
def p_ns():
    return N.build_transform(S.p_system(), 0, box=0.1)


def test_constant_eigenvector_gives_linear_invariants():
    ri = N.riemann_invariants(decoupled(), 1)
    assert ri.chart is None and ri.fit_error == 0.0
    u = np.random.default_rng(0).uniform(-0.1, 0.1, (20, 3))
    assert ri.values(u) == pytest.approx(u @ ri.zeta.T, abs=1e-15)


def test_p_system_invariant_matches_classical_level_sets(p_ns):
    # for the slow field r_1 is along (1, c(v)) with c = sqrt(2) v^{-3/2},
    # so m + 2 sqrt(2) v^{-1/2} is constant along its integral curves
    for level in (2 * np.sqrt(2) - 0.05, 2 * np.sqrt(2), 2 * np.sqrt(2) + 0.04):
        v = np.linspace(0.95, 1.05, 21)
        m = level - 2 * np.sqrt(2) / np.sqrt(v)
        q = p_ns.invariants.values(np.stack([v - 1.0, m], axis=-1))
        assert np.ptp(q) < 1e-6


def test_invariants_annihilate_r_i(euler_ns):
    rng = np.random.default_rng(1)
    U = rng.uniform(-0.08, 0.08, (200, 3))
    _, grad = euler_ns.invariants.values_and_gradient(U)
    _, _, R = S.eigen_batch(euler_ns.model, U)
    r_i = R[:, :, euler_ns.i]
    # independent finite-difference gradient as a cross-check on the chart gradient
    h = 1e-6
    fd = np.stack([(euler_ns.invariants.values(U + h * e) - euler_ns.invariants.values(U - h * e)) / (2 * h)
                   for e in np.eye(3)], axis=-1)
    assert np.abs(fd - grad).max() < 1e-6
    assert np.abs(np.einsum("sjk,sk->sj", fd, r_i)).max() < 1e-7


def test_normal_form_is_a_fixed_point():
    ns = N.build_transform(decoupled(), 1)
    U = np.random.default_rng(2).uniform(-0.1, 0.1, (50, 3))
    assert ns.to_w(U) == pytest.approx(U, abs=1e-9)


def test_synthetic_three_passes_verification():
    ns = N.build_transform(S.synthetic_n(3), 1, box=0.1)
    W = np.random.default_rng(3).uniform(-0.05, 0.05, (100, 3))
    rep = N.verify_normal_form(ns, W)
    assert rep.passed, rep.failed


def test_p_system_origin_is_diagonal(p_ns):
    A0 = p_ns.A(np.zeros((1, 2)))[0]
    assert A0 == pytest.approx(np.diag([-np.sqrt(2), np.sqrt(2)]), abs=1e-8)


def test_euler_verification_and_injected_fault(euler_ns):
    W = np.random.default_rng(4).uniform(-0.05, 0.05, (60, 3))
    assert N.verify_normal_form(euler_ns, W).passed

    class Perturbed(N.NormalizedSystem):
        def A(self, W):
            out = super().A(W)
            out[..., 0, self.i] += 1e-3
            return out

    fields = {f.name: getattr(euler_ns, f.name) for f in dataclasses.fields(euler_ns) if f.init}
    bad = Perturbed(**fields)
    rep = N.verify_normal_form(bad, W)
    assert not rep.passed and "column_i" in rep.failed


@settings(max_examples=25, deadline=None)
@given(st.lists(st.floats(-0.08, 0.08), min_size=3, max_size=3))
def test_round_trip(euler_ns, u):
    u = np.array(u)
    back = euler_ns.to_u(euler_ns.to_w(u))
    assert np.abs(back - u).max() < 1e-9 * (1 + np.abs(u).max())


def test_round_trip_bulk(euler_ns):
    U = np.random.default_rng(5).uniform(-0.08, 0.08, (500, 3))
    err = np.abs(euler_ns.to_u(euler_ns.to_w(U)) - U).max(axis=1)
    assert np.all(err < 1e-9 * (1 + np.abs(U).max(axis=1)))


def test_burgers_lifespan():
    ns = N.build_transform(S.burgers(), 0)
    T, seed = N.lifespan_estimate(ns, S.sine_data(0.1))
    assert T == pytest.approx(10.0, rel=1e-9)
    assert seed.x0 == pytest.approx(0.0, abs=1e-9)
    assert seed.N[0] == pytest.approx(-1.0, rel=1e-9)
    assert seed.Hpp > 0


def test_linear_system_never_blows_up():
    ns = N.build_transform(S.linear([[-1.0, 0.0], [0.0, 1.0]]), 0)
    data = S.eigen_pulse_data(ns.model, 0.1, [1.0, 1.0])
    with pytest.raises(NoBlowup):
        N.lifespan_estimate(ns, data)


def test_two_equal_minima_are_degenerate():
    ns = N.build_transform(S.burgers(), 0)
    twin = S.InitialData(0.1, lambda x: np.where(np.abs(x) <= np.pi, -np.sin(2 * x), 0.0)[..., None],
                         (-np.pi, np.pi))
    with pytest.raises(DegenerateMinimum):
        N.lifespan_estimate(ns, twin)


def test_flat_minimum_is_degenerate():
    ns = N.build_transform(S.burgers(), 0)
    # u0' = -1 + x^4 near the origin: H'' vanishes at the minimum
    flat = S.InitialData(0.1, lambda x: np.where(np.abs(x) <= 1, -x + x ** 5 / 5, 0.0)[..., None],
                         (-1.0, 1.0))
    with pytest.raises(DegenerateMinimum):
        N.lifespan_estimate(ns, flat)


@pytest.mark.parametrize("scale", [0.5, 2.0, 3.7])
def test_amplitude_scaling(euler_ns, scale):
    base = S.default_data(euler_ns.model, 0.1, 2)
    scaled = S.InitialData(0.1, lambda x: scale * base.profile(x), base.support)
    T0, s0 = N.lifespan_estimate(euler_ns, base)
    T1, s1 = N.lifespan_estimate(euler_ns, scaled)
    assert s1.N == pytest.approx(scale * s0.N, rel=1e-9)
    assert s1.x0 == pytest.approx(s0.x0, abs=1e-9)
    assert T1 == pytest.approx(T0 / scale, rel=1e-9)


def test_eps_times_lifespan_is_constant(euler_ns):
    vals = [eps * N.lifespan_estimate(euler_ns, S.default_data(euler_ns.model, eps, 2))[0]
            for eps in (0.2, 0.05, 0.01)]
    assert np.ptp(vals) < 1e-12
