"""Normalizing coordinates u -> w for a distinguished genuinely nonlinear field.

In the w coordinates the matrix A(w) = (dw/du) F (dw/du)^{-1} has the
distinguished right eigenvector along e_i, a vanishing i-th column away from
the diagonal, and a diagonal value at the origin.  The components w_j, j != i,
are Riemann invariants of field i, built by flowing along integral curves of
r_i back to the hyperplane r_i(0).u = 0.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from itertools import combinations_with_replacement
from typing import Optional

import numpy as np
from scipy.stats import qmc

from .errors import DegenerateMinimum, NoBlowup, OutOfBox, SingularConstruction
from .system import (FluxModel, InitialData, eigen_batch, eigen_decompose, eigen_of_matrices,
                     eigen_pulse_data, genuine_nonlinearity, wave_shape)

CHUNK = 8192
ORIGIN_TOL = 1e-15


class NondegeneracyWarning(UserWarning):
    """Another family reaches the same minimal slope as the distinguished one."""


def _exponent_table(n: int, deg_min: int, deg_max: int) -> np.ndarray:
    rows = []
    for d in range(deg_min, deg_max + 1):
        for combo in combinations_with_replacement(range(n), d):
            e = np.zeros(n, dtype=int)
            for a in combo:
                e[a] += 1
            rows.append(e)
    return np.array(rows, dtype=int).reshape(-1, n)


class PolyChart:
    """Least-squares polynomial in scaled variables u / scale (degrees >= 2)."""

    def __init__(self, n: int, degree: int, scale: float, coef: np.ndarray):
        self.n = n
        self.degree = degree
        self.scale = float(scale)
        self.exps = _exponent_table(n, 2, degree)
        self.coef = np.asarray(coef, dtype=float)  # (terms, outputs)
        self._prepare()

    def _prepare(self):
        # one table of all monomials up to the degree, with value and
        # gradient coefficients stacked so evaluation is a single product
        full = _exponent_table(self.n, 0, self.degree)
        index = {tuple(e): k for k, e in enumerate(full)}
        m = self.coef.shape[1]
        big = np.zeros((len(full), m * (1 + self.n)))
        for t, e in enumerate(self.exps):
            big[index[tuple(e)], :m] = self.coef[t]
            for a in range(self.n):
                if e[a] > 0:
                    low = e.copy()
                    low[a] -= 1
                    big[index[tuple(low)], m * (1 + a):m * (2 + a)] += e[a] * self.coef[t] / self.scale
        self._full = full
        self._big = big

    @classmethod
    def fit(cls, samples: np.ndarray, values: np.ndarray, degree: int, scale: float):
        n = samples.shape[-1]
        chart = cls(n, degree, scale, np.zeros((len(_exponent_table(n, 2, degree)), values.shape[-1])))
        basis = chart._monomials(samples / scale, chart.exps).T
        coef, *_ = np.linalg.lstsq(basis, values, rcond=None)
        chart.coef = coef
        chart._prepare()
        return chart

    def _monomials(self, s: np.ndarray, exps: np.ndarray) -> np.ndarray:
        """Monomials as rows: shape (terms, points)."""
        out = None
        for a in range(self.n):
            p = np.ones((self.degree + 1, s.shape[0]))
            for d in range(1, self.degree + 1):
                p[d] = p[d - 1] * s[:, a]
            out = p[exps[:, a]] if out is None else out * p[exps[:, a]]
        return out

    def _evaluate(self, U: np.ndarray, cols: int) -> np.ndarray:
        flat = np.asarray(U, dtype=float).reshape(-1, self.n)
        out = np.empty((flat.shape[0], cols))
        coef = np.ascontiguousarray(self._big[:, :cols].T)
        for lo in range(0, flat.shape[0], CHUNK):
            s = flat[lo:lo + CHUNK] / self.scale
            out[lo:lo + CHUNK] = (coef @ self._monomials(s, self._full)).T
        return out

    def values(self, U: np.ndarray) -> np.ndarray:
        U = np.asarray(U, dtype=float)
        m = self.coef.shape[1]
        return self._evaluate(U, m).reshape(U.shape[:-1] + (m,))

    def values_and_gradient(self, U: np.ndarray):
        U = np.asarray(U, dtype=float)
        m = self.coef.shape[1]
        out = self._evaluate(U, m * (1 + self.n))
        vals = out[:, :m]
        grads = out[:, m:].reshape(-1, self.n, m).transpose(0, 2, 1)
        return (vals.reshape(U.shape[:-1] + (m,)),
                grads.reshape(U.shape[:-1] + (m, self.n)))


# ------------------------------------------------------- Riemann invariants

@dataclass
class RiemannInvariants:
    """q_j(u) = zeta_j . u + qt_j(u) for the n-1 fields j != i."""

    model: FluxModel
    i: int
    r0: np.ndarray
    zeta: np.ndarray  # (n-1, n)
    box: float
    steps: int = 32
    chart: Optional[PolyChart] = None
    fit_error: float = float("nan")

    def foot(self, U: np.ndarray) -> np.ndarray:
        """Point where the r_i integral curve through U meets r0 . u = 0."""
        U = np.atleast_2d(np.asarray(U, dtype=float))
        tau0 = U @ self.r0
        h = (-tau0 / self.steps)[:, None]
        u = U.copy()

        def rhs(v):
            _, _, R = eigen_batch(self.model, v)
            r = R[:, :, self.i]
            return r / (r @ self.r0)[:, None]

        for _ in range(self.steps):
            k1 = rhs(u)
            k2 = rhs(u + 0.5 * h * k1)
            k3 = rhs(u + 0.5 * h * k2)
            k4 = rhs(u + h * k3)
            u = u + h * (k1 + 2.0 * k2 + 2.0 * k3 + k4) / 6.0
            if np.max(np.abs(u)) > 2.0 * self.box:
                raise OutOfBox("integral curve left the validity box", box=self.box)
        return u

    def exact(self, U: np.ndarray) -> np.ndarray:
        """Invariants by direct integration (no chart)."""
        U = np.asarray(U, dtype=float)
        flat = U.reshape(-1, self.model.n)
        q = self.foot(flat) @ self.zeta.T
        return q.reshape(U.shape[:-1] + (len(self.zeta),))

    def correction_exact(self, U: np.ndarray) -> np.ndarray:
        U = np.asarray(U, dtype=float)
        return self.exact(U) - U @ self.zeta.T

    def values(self, U: np.ndarray) -> np.ndarray:
        U = np.asarray(U, dtype=float)
        base = U @ self.zeta.T
        if self.chart is None:
            return base
        return base + self.chart.values(U)

    def values_and_gradient(self, U: np.ndarray):
        U = np.asarray(U, dtype=float)
        base = U @ self.zeta.T
        grad = np.broadcast_to(self.zeta, U.shape[:-1] + self.zeta.shape)
        if self.chart is None:
            return base, np.array(grad)
        v, g = self.chart.values_and_gradient(U)
        return base + v, grad + g


def _sample_box(n: int, box: float, degree: int) -> np.ndarray:
    per_dim = degree + 3
    if per_dim ** n <= 20000:
        nodes = box * np.cos(np.pi * np.arange(per_dim) / (per_dim - 1))
        mesh = np.meshgrid(*([nodes] * n), indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)
    sampler = qmc.Sobol(d=n, scramble=True, seed=12345)
    return box * (2.0 * sampler.random_base2(13) - 1.0)


def gram_schmidt_complement(r0: np.ndarray, i: int) -> np.ndarray:
    n = r0.size
    basis = [r0 / np.linalg.norm(r0)]
    out = []
    for k in range(n):
        if k == i:
            continue
        v = np.eye(n)[k]
        for b in basis:
            v = v - (v @ b) * b
        norm = np.linalg.norm(v)
        if norm < 1e-8:
            raise SingularConstruction("standard basis vector parallel to r_i(0)", index=k)
        v = v / norm
        basis.append(v)
        out.append(v)
    return np.array(out).reshape(n - 1, n)


DEFAULT_CHART_BOX = 0.15


def chart_box_for(model: FluxModel, amplitude: float) -> float:
    """Chart half-width covering states of the given sup-norm with margin."""
    return float(min(model.box, max(0.05, 1.5 * amplitude)))


def riemann_invariants(model: FluxModel, i: int, box: Optional[float] = None,
                       degree: int = 8, steps: int = 32) -> RiemannInvariants:
    """The n-1 invariants of field i, with a polynomial chart of the correction."""
    box = min(model.box, DEFAULT_CHART_BOX) if box is None else float(box)
    es0 = eigen_decompose(model, np.zeros(model.n))
    r0 = es0.right[:, i].copy()
    zeta = gram_schmidt_complement(r0, i)
    ri = RiemannInvariants(model, i, r0, zeta, box, steps)
    if model.n == 1:
        ri.fit_error = 0.0
        return ri
    samples = _sample_box(model.n, box, degree)
    corr = ri.correction_exact(samples)
    if np.max(np.abs(corr)) < 1e-15:
        ri.fit_error = 0.0
        return ri
    ri.chart = PolyChart.fit(samples, corr, degree, box)
    check = np.random.default_rng(7).uniform(-box, box, size=(256, model.n))
    ri.fit_error = float(np.max(np.abs(ri.chart.values(check) - ri.correction_exact(check))))
    return ri


# ---------------------------------------------------------- normalization

@dataclass
class NormalizedSystem:
    model: FluxModel
    i: int
    invariants: RiemannInvariants
    zeta: np.ndarray
    k_consts: np.ndarray
    Bn1: np.ndarray
    M: np.ndarray  # w = M @ u_tilde
    dw_du0: np.ndarray
    newton_tol: float = 1e-14
    _Minv: np.ndarray = field(init=False, repr=False)
    _du_dw0: np.ndarray = field(init=False, repr=False)
    _origin: Optional[tuple] = field(default=None, init=False, repr=False)

    def __post_init__(self):
        self._Minv = np.linalg.inv(self.M)
        self._du_dw0 = np.linalg.inv(self.dw_du0)

    @property
    def n(self) -> int:
        return self.model.n

    @property
    def others(self) -> list:
        return [k for k in range(self.n) if k != self.i]

    # u -> u_tilde -> w
    def _tilde(self, U):
        U = np.asarray(U, dtype=float)
        out = np.empty(U.shape)
        out[..., self.others] = self.invariants.values(U)
        out[..., self.i] = U @ self.invariants.r0
        return out

    def _tilde_and_jac(self, U):
        U = np.asarray(U, dtype=float)
        q, dq = self.invariants.values_and_gradient(U)
        out = np.empty(U.shape)
        jac = np.empty(U.shape + (self.n,))
        out[..., self.others] = q
        jac[..., self.others, :] = dq
        out[..., self.i] = U @ self.invariants.r0
        jac[..., self.i, :] = self.invariants.r0
        return out, jac

    def to_w(self, U) -> np.ndarray:
        return self._tilde(U) @ self.M.T

    def jac_w(self, U) -> np.ndarray:
        """dw/du at the states U."""
        _, jt = self._tilde_and_jac(U)
        return self.M @ jt

    def to_u(self, W, guess=None, max_iter: int = 40) -> np.ndarray:
        W = np.asarray(W, dtype=float)
        u = W @ self._du_dw0.T if guess is None else np.array(guess, dtype=float)
        if self.invariants.chart is None:
            return W @ np.linalg.inv(self.M @ self._tilde_jac0()).T
        for _ in range(max_iter):
            t, jt = self._tilde_and_jac(u)
            res = t @ self.M.T - W
            step = np.linalg.solve(self.M @ jt, res[..., None])[..., 0]
            u = u - step
            if np.max(np.abs(step), initial=0.0) < self.newton_tol * (1.0 + np.max(np.abs(u), initial=0.0)):
                break
        return u

    def _tilde_jac0(self):
        _, jt = self._tilde_and_jac(np.zeros(self.n))
        return jt

    def A(self, W) -> np.ndarray:
        U = self.to_u(W)
        J = self.jac_w(U)
        F = self.model.jac(U)
        return J @ F @ np.linalg.inv(J)

    def eigen(self, W, U=None):
        """Eigenvalues with left/right eigenvectors of A(w).

        Right eigenvectors are scaled to unit j-th component, left ones are
        biorthonormal to them.  Returns ``(lam, L, R, U)``.
        """
        U = self.to_u(W) if U is None else U
        lam, Lu, Ru = eigen_batch(self.model, U)
        J = self.jac_w(U)
        Rw = J @ Ru
        diag = np.diagonal(Rw, axis1=-2, axis2=-1)
        Rw = Rw / diag[..., None, :]
        Lw = np.linalg.inv(Rw)
        return lam, Lw, Rw, U

    def speeds_and_coupling(self, W, guess=None):
        """lambda_k(w) and p_jk(w) = l_jk / l_jj (unit diagonal), plus the states u.

        `guess` seeds the Newton inversion w -> u.  Nodes within ORIGIN_TOL of
        w = 0 reuse the values at the origin; the difference is below roundoff.
        """
        W = np.asarray(W, dtype=float)
        n = self.n
        flat = W.reshape(-1, n)
        live = np.any(np.abs(flat) > ORIGIN_TOL, axis=1)
        if self._origin is None:
            lam0, L0, _, _ = self.eigen(np.zeros((1, n)), np.zeros((1, n)))
            self._origin = (lam0[0], L0[0] / np.diagonal(L0[0])[:, None])
        lam = np.empty((flat.shape[0], n))
        P = np.empty((flat.shape[0], n, n))
        Uo = np.zeros((flat.shape[0], n))
        lam[~live] = self._origin[0]
        P[~live] = self._origin[1]
        if live.any():
            seed = None if guess is None else np.asarray(guess, dtype=float).reshape(-1, n)[live]
            l, Lw, _, Ul = self.eigen(flat[live], self.to_u(flat[live], guess=seed))
            lam[live] = l
            P[live] = Lw / np.diagonal(Lw, axis1=-2, axis2=-1)[..., :, None]
            Uo[live] = Ul
        shape = W.shape[:-1]
        return lam.reshape(shape + (n,)), P.reshape(shape + (n, n)), Uo.reshape(shape + (n,))

    def p_coeffs(self, W) -> np.ndarray:
        return self.speeds_and_coupling(W)[1]

    def gn_coefficients(self, h: float = 1e-5) -> np.ndarray:
        """d lambda_j / d w_j at the origin, by central differences."""
        n = self.n
        Wp = h * np.eye(n)
        lam_p, _, _ = eigen_batch(self.model, self.to_u(Wp))
        lam_m, _, _ = eigen_batch(self.model, self.to_u(-Wp))
        return np.diagonal(lam_p - lam_m) / (2.0 * h)

    def leading_order(self, U0) -> np.ndarray:
        """(dw/du)(0) applied to states: the small-amplitude limit of to_w."""
        return np.asarray(U0, dtype=float) @ self.dw_du0.T


def build_transform(model: FluxModel, i: int, box: Optional[float] = None,
                    degree: int = 8, steps: int = 32) -> NormalizedSystem:
    n = model.n
    if not 0 <= i < n:
        raise IndexError(f"field index {i} outside 0..{n - 1}")
    inv = riemann_invariants(model, i, box=box, degree=degree, steps=steps)
    others = [k for k in range(n) if k != i]
    F0 = model.jac(np.zeros(n))
    lam0 = eigen_decompose(model, np.zeros(n)).lambdas

    Jt0 = np.empty((n, n))
    Jt0[others] = inv.zeta
    Jt0[i] = inv.r0
    At0 = Jt0 @ F0 @ np.linalg.inv(Jt0)

    # diagonalize the block without row/column i
    T = np.eye(n)
    Bn1 = np.eye(max(n - 1, 0))
    if n > 1:
        sub = At0[np.ix_(others, others)]
        _, Lsub, _ = eigen_of_matrices(sub)
        Bn1 = Lsub
        T[np.ix_(others, others)] = Bn1
    Av0 = T @ At0 @ np.linalg.inv(T)

    # k_j(lambda_i - a_jj) - sum_{l != i,j} k_l a_lj = -a_ij
    k = np.zeros(n)
    if n > 1:
        m = len(others)
        mat = np.empty((m, m))
        for r, j in enumerate(others):
            for c, l in enumerate(others):
                mat[r, c] = lam0[i] - Av0[j, j] if l == j else -Av0[l, j]
        rhs = -Av0[i, others]
        cond = np.linalg.cond(mat)
        if not np.isfinite(cond) or cond > 1e12:
            raise SingularConstruction("k_j system is numerically singular", cond=float(cond))
        k[others] = np.linalg.solve(mat, rhs)
    S = np.eye(n)
    S[i, :] -= k
    M = S @ T
    dw_du0 = M @ Jt0
    return NormalizedSystem(model=model, i=i, invariants=inv, zeta=inv.zeta,
                            k_consts=k, Bn1=Bn1, M=M, dw_du0=dw_du0)


# ------------------------------------------------------------ verification

@dataclass(frozen=True)
class NormalFormReport:
    eigenvalues: float
    column_i: float
    diagonal_i: float
    angle_i: float
    origin_offdiag: float
    origin_order: bool
    roundtrip: float
    passed: bool
    failed: tuple


def verify_normal_form(ns: NormalizedSystem, samples) -> NormalFormReport:
    W = np.atleast_2d(np.asarray(samples, dtype=float))
    n, i = ns.n, ns.i
    A = ns.A(W)
    U = ns.to_u(W)
    lam_u, _, _ = eigen_batch(ns.model, U)
    lam_a = np.sort(np.linalg.eigvals(A).real, axis=-1)
    p1 = float(np.max(np.abs(lam_a - lam_u)))
    mask = np.ones(n, dtype=bool)
    mask[i] = False
    p2_col = float(np.max(np.abs(A[:, mask, i]), initial=0.0))
    p2_diag = float(np.max(np.abs(A[:, i, i] - lam_u[:, i])))
    vals, vecs = np.linalg.eig(A)
    idx = np.argmin(np.abs(vals.real - lam_u[:, i][:, None]), axis=-1)
    r = np.take_along_axis(vecs.real, idx[:, None, None], axis=-1)[..., 0]
    cosang = np.abs(r[:, i]) / np.linalg.norm(r, axis=-1)
    p3 = float(np.max(np.arccos(np.clip(cosang, -1.0, 1.0))))
    A0 = ns.A(np.zeros((1, n)))[0]
    off = A0 - np.diag(np.diag(A0))
    p4 = float(np.max(np.abs(off)))
    order = bool(np.all(np.diff(np.diag(A0)) > 0))
    back = ns.to_w(U)
    rt = float(np.max(np.abs(ns.to_u(back) - U) / (1.0 + np.abs(U))))
    checks = {
        "eigenvalues": p1 < 1e-7,
        "column_i": p2_col < 1e-7,
        "diagonal_i": p2_diag < 1e-7,
        "angle_i": p3 < 1e-6,
        "origin_diagonal": p4 < 1e-8 and order,
        "roundtrip": rt < 1e-9,
    }
    failed = tuple(k for k, ok in checks.items() if not ok)
    return NormalFormReport(p1, p2_col, p2_diag, p3, p4, order, rt, not failed, failed)


# ---------------------------------------------------------------- lifespan

@dataclass(frozen=True)
class BlowupSeed:
    x0: float
    N: np.ndarray
    Hpp: float
    margin: float
    gn: np.ndarray


def _parabolic_min(x: np.ndarray, y: np.ndarray, k: int):
    k = min(max(k, 1), len(x) - 2)
    h = x[k + 1] - x[k]
    y0, y1, y2 = y[k - 1], y[k], y[k + 1]
    curv = (y0 - 2.0 * y1 + y2) / h ** 2
    slope = (y2 - y0) / (2.0 * h)
    if curv <= 0:
        return x[k], y1, curv
    dx = -slope / curv
    return x[k] + dx, y1 - 0.5 * slope ** 2 / curv, curv


def slope_fields(ns: NormalizedSystem, data: InitialData, points: int = 4096):
    """x grid and H_j(x) = (d lambda_j / d w_j)(0) * (w0_j)'(x)."""
    a, b = data.support
    x = np.linspace(a, b, points)
    h = 1e-6 * (b - a)
    dw0 = ns.leading_order((data.u0(x + h) - data.u0(x - h)) / (2.0 * h))
    gn = ns.gn_coefficients()
    return x, dw0 * gn, gn


def lifespan_estimate(ns: NormalizedSystem, data: InitialData, points: int = 4096):
    """Leading-order lifespan T_hat and the nondegeneracy seed."""
    x, H, gn = slope_fields(ns, data, points)
    N = np.array([_parabolic_min(x, H[:, j], int(np.argmin(H[:, j])))[1] for j in range(ns.n)])
    N = np.minimum(N, H.min(axis=0))
    scale = np.max(np.abs(H))
    if N.min() >= -1e-12 * max(scale, 1e-300):
        raise NoBlowup("no family has a negative minimal slope", N=N.tolist())
    T_hat = -1.0 / (data.epsilon * N.min())
    Hi = H[:, ns.i]
    interior = np.where((Hi[1:-1] <= Hi[:-2]) & (Hi[1:-1] <= Hi[2:]))[0] + 1
    candidates = [_parabolic_min(x, Hi, k) for k in interior]
    if Hi[0] < Hi[1]:
        candidates.append((x[0], Hi[0], 0.0))
    if Hi[-1] < Hi[-2]:
        candidates.append((x[-1], Hi[-1], 0.0))
    candidates.sort(key=lambda c: c[1])
    x0, hmin, hpp = candidates[0]
    tol = 1e-6 * abs(hmin)
    for cx, cy, _ in candidates[1:]:
        if cy - hmin < tol and abs(cx - x0) > 4 * (x[1] - x[0]):
            raise DegenerateMinimum("H_i attains its minimum at more than one point",
                                    locations=(float(x0), float(cx)))
    if not hpp > 1e-4 * abs(hmin) / (x[-1] - x[0]) ** 2:
        raise DegenerateMinimum("H_i'' at the minimum is not positive", Hpp=float(hpp))
    others = [k for k in range(ns.n) if k != ns.i]
    margin = float(np.min(N[others]) - N[ns.i]) if others else float("inf")
    if margin <= 0:
        warnings.warn(f"family {ns.i} is not the unique fastest-steepening family "
                      f"(margin {margin:.3g})", NondegeneracyWarning)
    return float(T_hat), BlowupSeed(float(x0), N, float(hpp), margin, gn)


def collision_data(ns: NormalizedSystem, epsilon: float, weight: float = 0.35,
                   width: float = 4.0, arrival: float = 1.0, skew: float = 0.5) -> InitialData:
    """A pure i-pulse on [-1, 1] plus pulses of the other families placed so
    that, at leading order, they cross the blowup location at arrival * T_hat.

    Small data separates into simple waves long before the gradient blows
    up, which freezes every w_j near the cusp.  Timing the other families to
    arrive late keeps them interacting with the i-wave at the blowup point.
    """
    model, i, n = ns.model, ns.i, ns.n
    weights = np.zeros(n)
    weights[i] = 1.0
    core = eigen_pulse_data(model, epsilon, weights, skew=skew)
    T_hat, seed = lifespan_estimate(ns, core)
    lam0 = eigen_decompose(model, np.zeros(n)).lambdas
    R = eigen_decompose(model, np.zeros(n)).right
    hit = seed.x0 + lam0[i] * T_hat
    half = 0.5 * width
    centers = {j: hit - lam0[j] * arrival * T_hat for j in range(n) if j != i}
    zero = np.zeros(n)
    signs = {j: -1.0 if genuine_nonlinearity(model, j, zero) < 0.0 else 1.0 for j in centers}

    def profile(x):
        x = np.asarray(x, dtype=float)
        out = wave_shape(x, skew)[..., None] * R[:, i]
        for j, c in centers.items():
            out = out + (weight * signs[j] * wave_shape((x - c) / half, skew))[..., None] * R[:, j]
        return out

    lo = min([-1.0] + [c - half for c in centers.values()])
    hi = max([1.0] + [c + half for c in centers.values()])
    return InitialData(epsilon, profile, (float(lo), float(hi)), label="collision")
