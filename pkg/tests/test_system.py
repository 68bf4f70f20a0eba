import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from shockforge import system as S
from shockforge.errors import InvalidInitialData, NonStrictHyperbolicity

small = st.floats(-0.15, 0.15, allow_nan=False)


def test_burgers_scalar_eigenstructure():
    es = S.eigen_decompose(S.burgers(), [0.3])
    assert es.lambdas[0] == pytest.approx(0.3)
    assert es.left[0, 0] == 1.0 and es.right[0, 0] == 1.0


def test_p_system_eigenvalues_match_characteristic_polynomial():
    model = S.p_system(2.0)
    es = S.eigen_decompose(model, [0.0, 0.0])
    # lambda^2 = -p'(1) with p(v) = v^-2
    assert es.lambdas == pytest.approx([-np.sqrt(2.0), np.sqrt(2.0)], abs=1e-12)
    poly = np.poly(model.jac(np.zeros(2)))
    assert np.sort(np.roots(poly).real) == pytest.approx(es.lambdas, abs=1e-12)


def test_diagonal_synthetic_at_origin():
    model = S.synthetic_n(3)
    es = S.eigen_decompose(model, np.zeros(3))
    assert es.lambdas == pytest.approx([-1.0, 0.0, 1.0], abs=1e-14)
    assert np.abs(es.left) == pytest.approx(np.eye(3), abs=1e-14)
    assert np.abs(es.right) == pytest.approx(np.eye(3), abs=1e-14)


def test_non_strict_hyperbolicity_is_reported():
    with pytest.raises(NonStrictHyperbolicity):
        S.eigen_decompose(S.linear(np.eye(2)), np.zeros(2))
    with pytest.raises(NonStrictHyperbolicity):
        S.eigen_decompose(S.linear([[0.0, -1.0], [1.0, 0.0]]), np.zeros(2))


@settings(max_examples=40, deadline=None)
@given(arrays(float, 3, elements=small))
def test_euler_eigen_invariants(u):
    model = S.euler3()
    es = S.eigen_decompose(model, u)
    F = model.jac(u)
    assert es.left @ es.right == pytest.approx(np.eye(3), abs=1e-10)
    scale = 1.0 + np.abs(es.lambdas).max()
    assert np.abs(es.left @ F - es.lambdas[:, None] * es.left).max() < 1e-8 * scale
    assert np.abs(F @ es.right - es.right * es.lambdas).max() < 1e-8 * scale
    assert es.lambdas.sum() == pytest.approx(np.trace(F), rel=1e-8, abs=1e-12)
    assert np.all(np.diff(es.lambdas) > 0)


def test_orientation_is_stable_along_a_path():
    model = S.euler3()
    path = np.linspace(-0.2, 0.2, 101)[:, None] * np.array([1.0, -0.5, 0.7])
    prev = None
    for u in path:
        R = S.eigen_decompose(model, u).right
        if prev is not None:
            assert np.all(np.sum(R * prev, axis=0) > 0)
        prev = R


def test_genuine_nonlinearity_values():
    assert S.genuine_nonlinearity(S.burgers(), 0, [0.0]) == pytest.approx(1.0, abs=1e-9)
    lin = S.linear([[1.0, 2.0], [0.0, -1.0]])
    for j in range(2):
        assert S.genuine_nonlinearity(lin, j, [0.05, -0.02]) == pytest.approx(0.0, abs=1e-9)


def test_genuine_nonlinearity_p_system_closed_form():
    # lambda_2 = sqrt(gamma) v^{-(gamma+1)/2}; r_2 is the unit vector along (1, -lambda_2)
    gamma, v = 2.0, 1.0
    model = S.p_system(gamma)
    lam = np.sqrt(gamma) * v ** (-(gamma + 1) / 2)
    dlam_dv = -(gamma + 1) / 2 * np.sqrt(gamma) * v ** (-(gamma + 3) / 2)
    r = np.array([1.0, -lam]) / np.hypot(1.0, lam)
    es = S.eigen_decompose(model, [0.0, 0.0])
    r = r * np.sign(r @ es.right[:, 1])
    expected = dlam_dv * r[0]
    assert S.genuine_nonlinearity(model, 1, [0.0, 0.0]) == pytest.approx(expected, rel=1e-6)


def test_validate_jacobian_builtins_and_fault():
    rng = np.random.default_rng(3)
    assert S.validate_jacobian(S.burgers(), [[0.0], [0.5], [-0.5]]).passed
    assert S.validate_jacobian(S.euler3(), rng.uniform(-0.1, 0.1, (100, 3))).passed
    good = S.p_system()

    def broken(u):
        J = good.jacobian(u)
        J[..., 1, 1] += 1e-2
        return J

    bad = S.FluxModel(2, good.flux, broken, label="broken")
    rep = S.validate_jacobian(bad, rng.uniform(-0.1, 0.1, (10, 2)))
    assert not rep.passed and rep.worst_entry == (1, 1)


def test_initial_data_checks():
    data = S.sine_data(0.1)
    data.check()
    assert data.state(np.array([np.pi / 2]))[0, 0] == pytest.approx(-0.1)
    leaky = S.InitialData(0.1, lambda x: np.ones_like(x)[..., None], (-1.0, 1.0))
    with pytest.raises(InvalidInitialData):
        leaky.check()
    zero = S.InitialData(0.1, lambda x: np.zeros_like(x)[..., None], (-1.0, 1.0))
    with pytest.raises(InvalidInitialData):
        zero.check()
    with pytest.raises(InvalidInitialData):
        S.InitialData(0.0, lambda x: x, (-1.0, 1.0))


def test_default_data_is_compactly_supported():
    for name in S.BUILTINS:
        model = S.build_model(name)
        S.default_data(model, 0.1).check()


def test_polynomial_flux_reproduces_burgers():
    model = S.polynomial(1, [(0, (2,), 0.5)])
    u = np.linspace(-0.5, 0.5, 7)[:, None]
    assert model.f(u) == pytest.approx(S.burgers().f(u))
    assert S.validate_jacobian(model, u).passed
