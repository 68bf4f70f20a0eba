"""Hyperbolic systems: flux models, eigenstructure and initial data.

All built-in systems are written in deviation variables, so ``u = 0`` is the
reference state.  Fluxes are vectorised: they accept arrays of shape
``(..., n)`` and return the same shape; Jacobians return ``(..., n, n)``.
Field indices are 0-based in this API.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import InvalidInitialData, NonStrictHyperbolicity

HYPERBOLICITY_TOL = 1e-8
JACOBIAN_TOL = 1e-6

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(16)
GAUSS16_THETA = 0.5 * (_GL_NODES + 1.0)
GAUSS16_WEIGHT = 0.5 * _GL_WEIGHTS


def fd_step(u: np.ndarray) -> np.ndarray:
    """Finite-difference step 1e-5 * (1 + |u|), one value per state."""
    u = np.asarray(u, dtype=float)
    return 1e-5 * (1.0 + np.linalg.norm(u, axis=-1))


@dataclass(frozen=True)
class FluxModel:
    n: int
    flux: Callable[[np.ndarray], np.ndarray]
    jacobian: Optional[Callable[[np.ndarray], np.ndarray]] = None
    label: str = "custom"
    box: float = 0.3
    params: tuple = ()

    def f(self, u) -> np.ndarray:
        return self.flux(np.asarray(u, dtype=float))

    def jac(self, u) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        if self.jacobian is not None:
            return self.jacobian(u)
        return self.fd_jacobian(u)

    def fd_jacobian(self, u) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        h = fd_step(u)[..., None]
        cols = []
        for k in range(self.n):
            e = np.zeros(self.n)
            e[k] = 1.0
            cols.append((self.flux(u + h * e) - self.flux(u - h * e)) / (2.0 * h))
        return np.stack(cols, axis=-1)

    def key(self) -> str:
        return f"{self.label}:{self.n}:{self.params!r}"


@dataclass(frozen=True)
class EigenStructure:
    lambdas: np.ndarray
    left: np.ndarray  # rows l_j
    right: np.ndarray  # columns r_j
    gap: float

    def l(self, j: int) -> np.ndarray:
        return self.left[j]

    def r(self, j: int) -> np.ndarray:
        return self.right[:, j]


def eigen_batch(model: FluxModel, states, anchor: Optional[np.ndarray] = None,
                matrices: Optional[np.ndarray] = None):
    """Sorted eigenvalues and biorthonormal eigenvectors for many states.

    Returns ``(lam, L, R)`` with shapes ``(..., n)``, ``(..., n, n)``,
    ``(..., n, n)``; ``R`` holds unit right eigenvectors in its columns and
    ``L = R^{-1}`` holds left eigenvectors in its rows.  Orientation follows
    ``anchor`` (a matrix of reference columns) when given, otherwise the
    largest-magnitude component of each column is made positive.
    """
    F = model.jac(states) if matrices is None else np.asarray(matrices, dtype=float)
    return eigen_of_matrices(F, anchor=anchor)


def eigen_of_matrices(F: np.ndarray, anchor: Optional[np.ndarray] = None):
    F = np.asarray(F, dtype=float)
    n = F.shape[-1]
    if n == 1:
        lam = F[..., 0].copy()
        one = np.ones(F.shape)
        return lam, one, one.copy()
    vals, vecs = np.linalg.eig(F)
    scale = 1.0 + np.max(np.abs(vals), axis=-1)
    if np.any(np.abs(vals.imag) > HYPERBOLICITY_TOL * scale[..., None]):
        raise NonStrictHyperbolicity("complex eigenvalues: state left the hyperbolic region")
    vals = vals.real
    vecs = vecs.real
    order = np.argsort(vals, axis=-1)
    lam = np.take_along_axis(vals, order, axis=-1)
    R = np.take_along_axis(vecs, order[..., None, :], axis=-1)
    gaps = np.diff(lam, axis=-1)
    if np.any(gaps <= HYPERBOLICITY_TOL):
        raise NonStrictHyperbolicity(
            "eigenvalue gap below tolerance", gap=float(np.min(gaps)))
    R = R / np.linalg.norm(R, axis=-2, keepdims=True)
    if anchor is not None:
        sign = np.sign(np.sum(R * np.asarray(anchor), axis=-2))
    else:
        idx = np.argmax(np.abs(R), axis=-2)
        sign = np.sign(np.take_along_axis(R, idx[..., None, :], axis=-2)[..., 0, :])
    sign[sign == 0] = 1.0
    R = R * sign[..., None, :]
    L = np.linalg.inv(R)
    return lam, L, R


def eigen_decompose(model: FluxModel, u, anchor: Optional[np.ndarray] = None) -> EigenStructure:
    u = np.asarray(u, dtype=float).reshape(model.n)
    lam, L, R = eigen_batch(model, u, anchor=anchor)
    gap = float(np.min(np.diff(lam))) if model.n > 1 else np.inf
    return EigenStructure(lambdas=lam, left=L, right=R, gap=gap)


def genuine_nonlinearity(model: FluxModel, j: int, u) -> float:
    """grad(lambda_j) . r_j at ``u``, gradient by central differences."""
    if not 0 <= j < model.n:
        raise IndexError(f"field index {j} outside 0..{model.n - 1}")
    u = np.asarray(u, dtype=float).reshape(model.n)
    es = eigen_decompose(model, u)
    h = float(fd_step(u))
    shifts = h * np.eye(model.n)
    lam_p, _, _ = eigen_batch(model, u + shifts)
    lam_m, _, _ = eigen_batch(model, u - shifts)
    grad = (lam_p[:, j] - lam_m[:, j]) / (2.0 * h)
    return float(grad @ es.right[:, j])


def averaged_speed(model: FluxModel, u_plus, u_minus, i: int) -> np.ndarray:
    """lambda_i of the theta-averaged Jacobian between two states (16-point Gauss)."""
    u_plus = np.asarray(u_plus, dtype=float)
    u_minus = np.asarray(u_minus, dtype=float)
    theta = GAUSS16_THETA.reshape((-1,) + (1,) * u_plus.ndim)
    states = theta * u_plus + (1.0 - theta) * u_minus
    avg = np.tensordot(GAUSS16_WEIGHT, model.jac(states), axes=(0, 0))
    lam, _, _ = eigen_of_matrices(avg)
    return lam[..., i]


@dataclass(frozen=True)
class JacobianReport:
    max_deviation: float
    passed: bool
    worst_sample: int
    worst_entry: tuple


def validate_jacobian(model: FluxModel, samples) -> JacobianReport:
    samples = np.atleast_2d(np.asarray(samples, dtype=float)).reshape(-1, model.n)
    if model.jacobian is None:
        return JacobianReport(0.0, True, 0, (0, 0))
    analytic = model.jacobian(samples)
    numeric = model.fd_jacobian(samples)
    scale = np.maximum(1.0, np.max(np.abs(analytic), axis=(-2, -1)))
    dev = np.abs(analytic - numeric) / scale[:, None, None]
    flat = int(np.argmax(dev))
    s, a, b = np.unravel_index(flat, dev.shape)
    worst = float(dev[s, a, b])
    return JacobianReport(worst, worst < JACOBIAN_TOL, int(s), (int(a), int(b)))


# ---------------------------------------------------------------- built-ins

def burgers() -> FluxModel:
    return FluxModel(
        n=1,
        flux=lambda u: 0.5 * u * u,
        jacobian=lambda u: u[..., None],
        label="burgers",
        box=1.0,
    )


def p_system(gamma: float = 2.0) -> FluxModel:
    """f(v, m) = (-m, v^-gamma) around v = 1, m = 0; state is (v - 1, m)."""

    def flux(u):
        v = 1.0 + u[..., 0]
        return np.stack([-u[..., 1], v ** (-gamma) - 1.0], axis=-1)

    def jac(u):
        v = 1.0 + u[..., 0]
        out = np.zeros(u.shape + (2,))
        out[..., 0, 1] = -1.0
        out[..., 1, 0] = -gamma * v ** (-gamma - 1.0)
        return out

    return FluxModel(n=2, flux=flux, jacobian=jac, label="p_system", box=0.5,
                     params=(("gamma", gamma),))


def euler3(gamma: float = 1.4, density: float = 1.0, velocity: float = 0.0,
           pressure: Optional[float] = None) -> FluxModel:
    """Full Euler equations in (rho, m, E) around a uniform state.

    The default pressure gives unit sound speed.
    """
    if pressure is None:
        pressure = density / gamma
    base = np.array([density, density * velocity,
                     pressure / (gamma - 1.0) + 0.5 * density * velocity ** 2])

    def physical_flux(U):
        rho, m, E = U[..., 0], U[..., 1], U[..., 2]
        vel = m / rho
        p = (gamma - 1.0) * (E - 0.5 * m * vel)
        return np.stack([m, m * vel + p, (E + p) * vel], axis=-1)

    f0 = physical_flux(base)

    def flux(u):
        return physical_flux(base + u) - f0

    def jac(u):
        U = base + u
        rho, m, E = U[..., 0], U[..., 1], U[..., 2]
        vel = m / rho
        g1 = gamma - 1.0
        H = gamma * E / rho - 0.5 * g1 * vel ** 2
        out = np.zeros(u.shape + (3,))
        out[..., 0, 1] = 1.0
        out[..., 1, 0] = 0.5 * (gamma - 3.0) * vel ** 2
        out[..., 1, 1] = (3.0 - gamma) * vel
        out[..., 1, 2] = g1
        out[..., 2, 0] = vel * (g1 * vel ** 2 - gamma * E / rho)
        out[..., 2, 1] = H - g1 * vel ** 2
        out[..., 2, 2] = gamma * vel
        return out

    return FluxModel(n=3, flux=flux, jacobian=jac, label="euler3", box=0.3,
                     params=(("gamma", gamma), ("density", density),
                             ("velocity", velocity), ("pressure", pressure)))


def linear(matrix) -> FluxModel:
    C = np.atleast_2d(np.asarray(matrix, dtype=float))
    n = C.shape[0]
    return FluxModel(
        n=n,
        flux=lambda u: u @ C.T,
        jacobian=lambda u: np.broadcast_to(C, np.shape(u)[:-1] + (n, n)).copy(),
        label="linear",
        box=1.0,
        params=(("matrix", tuple(map(tuple, C))),),
    )


def quadratic_flux(speeds: Sequence[float], tensor) -> FluxModel:
    """f_k(u) = d_k u_k + 0.5 * sum_ab Q_kab u_a u_b with symmetric Q."""
    d = np.asarray(speeds, dtype=float)
    Q = np.asarray(tensor, dtype=float)
    Q = 0.5 * (Q + np.swapaxes(Q, 1, 2))
    n = d.size

    def flux(u):
        return u * d + 0.5 * np.einsum("kab,...a,...b->...k", Q, u, u)

    def jac(u):
        return np.diag(d) + np.einsum("kab,...b->...ka", Q, u)

    return FluxModel(n=n, flux=flux, jacobian=jac, label="quadratic", box=0.3,
                     params=(("speeds", tuple(d)), ("tensor", tuple(Q.ravel()))))


def synthetic_n(n: int = 3, seed: int = 0, strength: float = 0.3,
                speeds: Optional[Sequence[float]] = None) -> FluxModel:
    """Random smooth quadratic perturbation of a fixed diagonal F(0).

    Default speeds are evenly spaced in [-1, 1]; every field is genuinely
    nonlinear at the origin.
    """
    rng = np.random.default_rng(seed)
    d = np.linspace(-1.0, 1.0, n) if speeds is None else np.asarray(speeds, dtype=float)
    Q = strength * rng.uniform(-1.0, 1.0, size=(n, n, n))
    Q = 0.5 * (Q + np.swapaxes(Q, 1, 2))
    for j in range(n):
        Q[j, j, j] = 1.0 + 0.2 * rng.uniform()
    model = quadratic_flux(d, Q)
    return FluxModel(n=n, flux=model.flux, jacobian=model.jacobian,
                     label="synthetic_n", box=0.2,
                     params=(("n", n), ("seed", seed), ("strength", strength)))


def polynomial(n: int, terms: Sequence[tuple]) -> FluxModel:
    """Flux from monomials: each term is (component, exponents, coefficient)."""
    comps = np.array([t[0] for t in terms], dtype=int)
    exps = np.array([t[1] for t in terms], dtype=int).reshape(len(terms), n)
    coef = np.array([t[2] for t in terms], dtype=float)
    if np.any(exps < 0) or np.any(exps.sum(axis=1) > 4):
        raise ValueError("monomials must have non-negative exponents and degree <= 4")

    def monomials(u, e):
        return np.prod(u[..., None, :] ** e, axis=-1)

    def flux(u):
        vals = coef * monomials(u, exps)
        out = np.zeros(u.shape)
        for k in range(n):
            out[..., k] = np.sum(vals[..., comps == k], axis=-1)
        return out

    def jac(u):
        out = np.zeros(u.shape + (n,))
        for a in range(n):
            e = exps.copy()
            factor = coef * e[:, a]
            e[:, a] = np.maximum(e[:, a] - 1, 0)
            vals = factor * monomials(u, e)
            for k in range(n):
                out[..., k, a] = np.sum(vals[..., comps == k], axis=-1)
        return out

    return FluxModel(n=n, flux=flux, jacobian=jac, label="polynomial", box=0.3,
                     params=(("terms", tuple((int(c), tuple(map(int, e)), float(v))
                                             for c, e, v in zip(comps, exps, coef))),))


BUILTINS = {
    "burgers": burgers,
    "p_system": p_system,
    "euler3": euler3,
    "synthetic_n": synthetic_n,
}


def build_model(name: str, **params) -> FluxModel:
    if name == "synthetic_3":
        return synthetic_n(n=3, **params)
    if name not in BUILTINS:
        raise KeyError(f"unknown system '{name}'")
    return BUILTINS[name](**params)


# ------------------------------------------------------------- initial data

@dataclass(frozen=True)
class InitialData:
    epsilon: float
    profile: Callable[[np.ndarray], np.ndarray]
    support: tuple
    label: str = "custom"

    def __post_init__(self):
        if not self.epsilon > 0:
            raise InvalidInitialData("epsilon must be positive")
        a, b = self.support
        if not b > a:
            raise InvalidInitialData("support must be a nonempty interval")

    def u0(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return np.asarray(self.profile(x), dtype=float).reshape(x.shape + (-1,))

    def state(self, x) -> np.ndarray:
        """The scaled initial state epsilon * u0(x)."""
        return self.epsilon * self.u0(x)

    def check(self, samples: int = 2001) -> None:
        a, b = self.support
        width = b - a
        outside = np.concatenate([np.linspace(a - width, a, samples // 2, endpoint=False),
                                  np.linspace(b, b + width, samples // 2)[1:]])
        if np.max(np.abs(self.u0(outside)), initial=0.0) > 0.0:
            raise InvalidInitialData("profile does not vanish outside its support")
        inside = np.linspace(a, b, samples)
        if np.max(np.abs(self.u0(inside))) == 0.0:
            raise InvalidInitialData("profile is identically zero")

    def with_epsilon(self, epsilon: float) -> "InitialData":
        return InitialData(epsilon, self.profile, self.support, self.label)


def sine_data(epsilon: float, n: int = 1) -> InitialData:
    """u0(x) = -sin(x) on [-pi, pi] in the first component."""

    def profile(x):
        out = np.zeros(np.shape(x) + (n,))
        out[..., 0] = np.where(np.abs(x) <= np.pi, -np.sin(x), 0.0)
        return out

    return InitialData(epsilon, profile, (-np.pi, np.pi), label="sine")


def wave_shape(s: np.ndarray, skew: float = 0.5) -> np.ndarray:
    """Smooth compressive pulse on [-1, 1], vanishing with three derivatives."""
    s = np.asarray(s, dtype=float)
    inside = np.abs(s) < 1.0
    t = np.where(inside, s, 0.0)
    return np.where(inside, -np.sin(np.pi * t) * (1.0 - t * t) ** 3 * (1.0 + skew * t), 0.0)


def eigen_pulse_data(model: FluxModel, epsilon: float, weights: Sequence[float],
                     support=(-1.0, 1.0), skew: float = 0.5) -> InitialData:
    """u0 = sum_k weights[k] * g(x) * r_k(0) with the smooth pulse g."""
    R = eigen_decompose(model, np.zeros(model.n)).right.copy()
    wts = np.asarray(weights, dtype=float)
    a, b = support
    mid, half = 0.5 * (a + b), 0.5 * (b - a)

    def profile(x):
        g = wave_shape((np.asarray(x, dtype=float) - mid) / half, skew)
        return g[..., None] * (R @ wts)

    return InitialData(epsilon, profile, (float(a), float(b)), label="eigen_pulse")


def default_data(model: FluxModel, epsilon: float, i: Optional[int] = None) -> InitialData:
    """Default profile per built-in: sine for scalar models, eigen pulses otherwise."""
    if model.n == 1:
        return sine_data(epsilon)
    if i is None:
        i = model.n - 1
    weights = np.full(model.n, 0.35)
    weights[i] = 1.0
    zero = np.zeros(model.n)
    for j in range(model.n):
        if genuine_nonlinearity(model, j, zero) < 0.0:
            weights[j] = -weights[j]
    return eigen_pulse_data(model, epsilon, weights)
