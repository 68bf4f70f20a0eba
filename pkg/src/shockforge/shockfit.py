"""Shock fitting in the frame moving with the shock.

The shock is tracked as a fixed boundary z = x - phi(t) = 0.  Both sides are
advanced level by level with a semi-Lagrangian transport of the normalized
fields, and the Rankine-Hugoniot equations close the traces that leave the
shock.  An outer Picard loop updates the speeds, couplings and shock speed.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.interpolate import CubicSpline

from .errors import (EntropyViolation, FootOutOfDomain, InsufficientJump, NewtonDivergence,
                     NoContraction, OutOfDomain)
from .fits import loglog_fit
from .singularity import envelope_at, preshock_curve
from .system import averaged_speed, eigen_batch


@dataclass
class ShockControls:
    delta_start: float = 1e-3
    duration: float = 1.0
    level_ratio: float = 1.05
    dt_max: float = 0.005
    z_first: float = 1e-7
    z_ratio: float = 1.05
    dz_max: float = 1.0 / 128.0
    lambda_star: Optional[float] = None
    conv_tol: Optional[float] = None
    max_iters: int = 60
    rh_tol: float = 1e-12
    entropy_slack: float = 0.0
    weight: float = 1.0
    foot_passes: int = 2


def graded_mesh(length: float, first: float, ratio: float, dz_max: float) -> np.ndarray:
    """Nodes on [0, length], geometric from `first` until the spacing reaches dz_max."""
    nodes = [0.0]
    h = first
    while nodes[-1] + h < length:
        nodes.append(nodes[-1] + h)
        h = min(h * ratio, dz_max)
    if length - nodes[-1] < 0.3 * h and len(nodes) > 1:
        nodes[-1] = length
    else:
        nodes.append(length)
    return np.asarray(nodes)


def shock_levels(T_eps: float, delta_start: float, duration: float, ratio: float,
                 dt_max: float = np.inf) -> np.ndarray:
    """Levels T_eps + tau, geometric from delta_start until the step reaches dt_max."""
    tau = [delta_start]
    step = tau[0] * (ratio - 1.0)
    while tau[-1] + step < duration * (1.0 - 1e-9):
        tau.append(tau[-1] + step)
        step = min(tau[-1] * (ratio - 1.0), dt_max)
    if duration - tau[-1] < 0.3 * step:
        tau[-1] = duration
    else:
        tau.append(duration)
    return T_eps + np.asarray(tau)


@dataclass
class ShockFrameField:
    t: np.ndarray
    z_minus: np.ndarray  # ascending, ends at 0
    z_plus: np.ndarray  # ascending, starts at 0
    w_minus: np.ndarray  # (Nt, Nm, n)
    w_plus: np.ndarray  # (Nt, Np, n)
    lambda_star: float
    t_final: float

    @property
    def n(self) -> int:
        return self.w_plus.shape[-1]

    def half_width(self, t):
        return self.lambda_star * (self.t_final - np.asarray(t, dtype=float))

    def valid_minus(self) -> np.ndarray:
        return -self.z_minus[None, :] <= self.half_width(self.t)[:, None] * (1 + 1e-12)

    def valid_plus(self) -> np.ndarray:
        return self.z_plus[None, :] <= self.half_width(self.t)[:, None] * (1 + 1e-12)

    def traces(self):
        return self.w_minus[:, -1, :], self.w_plus[:, 0, :]

    def copy_with(self, w_minus, w_plus) -> "ShockFrameField":
        return ShockFrameField(self.t, self.z_minus, self.z_plus, w_minus, w_plus,
                               self.lambda_star, self.t_final)


@dataclass
class ShockCurve:
    t: np.ndarray
    phi: np.ndarray
    sigma: np.ndarray
    jumps: np.ndarray  # (Nt, n), right trace minus left trace
    margins: np.ndarray  # (Nt, 4), NaN where the neighbouring family is absent
    rh_residual: np.ndarray  # (Nt,)
    T_eps: float
    x_eps: float
    i: int

    @property
    def tau(self) -> np.ndarray:
        return self.t - self.T_eps

    @property
    def entropy_margins(self) -> float:
        return float(np.nanmin(self.margins))

    def csv_rows(self):
        n = self.jumps.shape[1]
        header = (["t", "phi", "sigma"] + [f"jump_{k}" for k in range(n)]
                  + ["margin_i_minus", "margin_i_plus", "margin_lower", "margin_upper", "rh_residual"])
        yield header
        for a in range(self.t.size):
            yield [self.t[a], self.phi[a], self.sigma[a], *self.jumps[a], *self.margins[a],
                   self.rh_residual[a]]


@dataclass
class IterateDiag:
    sup_diffs: list = field(default_factory=list)  # (i part, others part, weighted)
    contraction_ratios: list = field(default_factory=list)
    rh_residuals: list = field(default_factory=list)
    cubic_ratio: float = float("nan")
    iterations: int = 0
    converged: bool = False
    geometry_ok: bool = True

    def as_dict(self) -> dict:
        return {
            "sup_diffs": [list(map(float, d)) for d in self.sup_diffs],
            "contraction_ratios": [float(r) for r in self.contraction_ratios],
            "rh_residuals": [float(r) for r in self.rh_residuals],
            "cubic_ratio": float(self.cubic_ratio),
            "iterations": self.iterations,
            "converged": self.converged,
            "geometry_ok": self.geometry_ok,
        }


# ------------------------------------------------------------ jump closure

def sigma_average(ns, w_plus, w_minus) -> float:
    """Shock speed from the Gauss-averaged Jacobian between the two traces."""
    u_plus = ns.to_u(np.asarray(w_plus, dtype=float))
    u_minus = ns.to_u(np.asarray(w_minus, dtype=float))
    return float(averaged_speed(ns.model, u_plus, u_minus, ns.i))


def interior_fed(n: int, i: int):
    """Families carried into the shock: (plus side, minus side)."""
    return list(range(0, i + 1)), list(range(i, n))


def boundary_fed(n: int, i: int):
    """Families leaving the shock: (plus side, minus side)."""
    return list(range(i + 1, n)), list(range(0, i))


def lax_margins(lam_minus, lam_plus, sigma: float, i: int) -> np.ndarray:
    n = lam_minus.size
    lower = sigma - lam_minus[i - 1] if i > 0 else np.nan
    upper = lam_plus[i + 1] - sigma if i < n - 1 else np.nan
    return np.array([lam_minus[i] - sigma, sigma - lam_plus[i], lower, upper])


@dataclass(frozen=True)
class RHResult:
    w_plus: np.ndarray
    w_minus: np.ndarray
    sigma: float
    residual: float
    margins: np.ndarray
    iterations: int


def rh_residual(ns, w_plus, w_minus, sigma) -> np.ndarray:
    u_p, u_m = ns.to_u(w_plus), ns.to_u(w_minus)
    f = ns.model.f
    return sigma * (u_p - u_m) - (f(u_p) - f(u_m))


def rh_closure(ns, w_plus, w_minus, sigma_seed=None, rh_tol: float = 1e-12,
               entropy_slack: float = 0.0, check_entropy: bool = True,
               max_iter: int = 40) -> RHResult:
    """Solve the jump conditions for the traces leaving the shock and for sigma.

    Entries of `w_plus` for families j <= i and of `w_minus` for j >= i are
    taken as given; the remaining entries only seed the Newton solve.
    """
    n, i = ns.n, ns.i
    model = ns.model
    wp = np.array(w_plus, dtype=float)
    wm = np.array(w_minus, dtype=float)
    out_p, out_m = boundary_fed(n, i)
    if wp[i] == wm[i]:
        wp[out_p] = wm[out_p]
        wm[out_m] = wp[out_m]
        u = ns.to_u(wp)
        lam = eigen_batch(model, u[None])[0][0]
        return RHResult(wp, wm, float(lam[i]), 0.0, lax_margins(lam, lam, lam[i], i), 0)
    # seed with the upstream copies
    seed_p = np.array(wp)
    seed_m = np.array(wm)
    seed_p[out_p] = wm[out_p]
    seed_m[out_m] = wp[out_m]
    wp, wm = seed_p, seed_m
    sigma = sigma_average(ns, wp, wm) if sigma_seed is None else float(sigma_seed)
    u_p, u_m = ns.to_u(wp), ns.to_u(wm)
    residual = np.inf
    it = 0
    for it in range(1, max_iter + 1):
        F = sigma * (u_p - u_m) - (model.f(u_p) - model.f(u_m))
        residual = float(np.max(np.abs(F)))
        if residual < 0.01 * rh_tol:
            break
        J = np.empty((n, n))
        col = 0
        if out_p:
            du_dw = np.linalg.inv(ns.jac_w(u_p))
            block = (sigma * np.eye(n) - model.jac(u_p)) @ du_dw
            J[:, col:col + len(out_p)] = block[:, out_p]
            col += len(out_p)
        if out_m:
            du_dw = np.linalg.inv(ns.jac_w(u_m))
            block = -(sigma * np.eye(n) - model.jac(u_m)) @ du_dw
            J[:, col:col + len(out_m)] = block[:, out_m]
            col += len(out_m)
        J[:, col] = u_p - u_m
        try:
            step = np.linalg.solve(J, F)
        except np.linalg.LinAlgError:
            raise NewtonDivergence("singular Rankine-Hugoniot Jacobian", residual=residual)
        wp[out_p] -= step[:len(out_p)]
        wm[out_m] -= step[len(out_p):len(out_p) + len(out_m)]
        sigma -= step[-1]
        u_p, u_m = ns.to_u(wp, guess=u_p), ns.to_u(wm, guess=u_m)
        if np.max(np.abs(step)) < 1e-17:
            F = sigma * (u_p - u_m) - (model.f(u_p) - model.f(u_m))
            residual = float(np.max(np.abs(F)))
            break
    if not residual < rh_tol:
        raise NewtonDivergence("Rankine-Hugoniot Newton did not converge",
                               residual=residual, iterations=it)
    lam = eigen_batch(model, np.stack([u_m, u_p]))[0]
    margins = lax_margins(lam[0], lam[1], sigma, i)
    if check_entropy and np.nanmin(margins) < -entropy_slack:
        raise EntropyViolation("Lax inequalities fail at the solved shock speed",
                               margins=margins.tolist(), sigma=sigma)
    return RHResult(wp, wm, float(sigma), residual, margins, it)


# ------------------------------------------------------------ initial data

def _branch_inverse(grid, xs: np.ndarray, t: float, lo: float, hi: float,
                    samples: int = 2049, tol: float = 1e-14) -> np.ndarray:
    """Preimages of xs under the increasing piece y in [lo, hi] of phi(., t)."""
    ys = np.linspace(lo, hi, samples)
    row = np.maximum.accumulate(grid.phi_at(ys, t))
    xs = np.asarray(xs, dtype=float)
    if xs.size and (xs.min() < row[0] - 1e-12 or xs.max() > row[-1] + 1e-12):
        raise OutOfDomain("branch data requested outside the characteristic grid",
                          t=t, x_range=(float(xs.min()), float(xs.max())),
                          covered=(float(row[0]), float(row[-1])))
    k = np.clip(np.searchsorted(row, xs) - 1, 0, samples - 2)
    a, b = ys[k], ys[k + 1]
    span = np.where(row[k + 1] > row[k], row[k + 1] - row[k], 1.0)
    y = np.clip(a + (xs - row[k]) / span * (b - a), a, b)
    floor = 16.0 * np.finfo(float).eps * (1.0 + np.abs(xs))
    for _ in range(60):
        g = grid.phi_at(y, t) - xs
        live = np.abs(g) > floor
        if not live.any():
            break
        a = np.where(live & (g < 0), y, a)
        b = np.where(live & (g > 0), y, b)
        dg = grid.phi_at(y, t, dy=1)
        with np.errstate(divide="ignore", invalid="ignore"):
            y_new = y - g / dg
        bad = ~np.isfinite(y_new) | (y_new < a) | (y_new > b)
        y_new = np.where(bad, 0.5 * (a + b), y_new)
        step = np.abs(y_new - y)
        y = np.where(live, y_new, y)
        if np.max(step[live]) < tol * (1.0 + np.max(np.abs(y))):
            break
    return y


def default_lambda_star(grid) -> float:
    lam0 = eigen_batch(grid.ns.model, np.zeros((1, grid.n)))[0][0]
    return 2.0 * max(float(np.max(np.abs(lam0))), float(np.max(np.abs(grid.lam))))


def init_first_approximation(grid, bp, branches, preshock=None,
                             controls: Optional[ShockControls] = None):
    """Outer multivalued branches on both sides of the pre-shock curve."""
    c = controls or ShockControls()
    t_final = bp.T_eps + c.duration
    if t_final > grid.trusted_t_max:
        raise OutOfDomain("shock fitting interval exceeds the trusted characteristic grid",
                          t_final=t_final, trusted=grid.trusted_t_max)
    t = shock_levels(bp.T_eps, c.delta_start, c.duration, c.level_ratio, c.dt_max)
    lam_star = c.lambda_star if c.lambda_star is not None else default_lambda_star(grid)
    if preshock is None:
        preshock = preshock_curve(grid, bp, branches, t_final, t_samples=t)
        phi0, sig0 = preshock.phi[1:], preshock.speed[1:]
    else:
        phi0 = np.interp(t, preshock.t, preshock.phi)
        sig0 = np.interp(t, preshock.t, preshock.speed)
    # padding cells keep the one-sided interpolation stencils outside the domain
    mesh = graded_mesh(lam_star * (t_final - t[0]) + 4.0 * c.dz_max, c.z_first, c.z_ratio, c.dz_max)
    z_minus, z_plus = -mesh[::-1], mesh
    n = grid.n
    w_minus = np.empty((t.size, mesh.size, n))
    w_plus = np.empty((t.size, mesh.size, n))
    guess = None
    for a, ta in enumerate(t):
        e1, e2 = envelope_at(grid, bp, ta, guess)
        guess = (e1, e2)
        left_end, right_start = min(e1, e2), max(e1, e2)
        xm = z_minus + phi0[a]
        xp = z_plus + phi0[a]
        ym = _branch_inverse(grid, xm, ta, grid.y[0], left_end)
        yp = _branch_inverse(grid, xp, ta, right_start, grid.y[-1])
        w_minus[a] = grid.v_at(ym, ta)
        w_plus[a] = grid.v_at(yp, ta)
    fld = ShockFrameField(t, z_minus, z_plus, w_minus, w_plus, lam_star, t_final)
    jumps = w_plus[:, 0] - w_minus[:, -1]
    curve = ShockCurve(t, phi0, sig0, jumps, np.full((t.size, 4), np.nan),
                       np.full(t.size, np.nan), bp.T_eps, bp.x_eps, grid.i)
    return fld, curve


# ------------------------------------------------------------ transport

def _linear(z: np.ndarray, table: np.ndarray, q: np.ndarray) -> np.ndarray:
    q = np.clip(q, z[0], z[-1])
    k = np.clip(np.searchsorted(z, q) - 1, 0, z.size - 2)
    f = (q - z[k]) / (z[k + 1] - z[k])
    f = f.reshape(f.shape + (1,) * (table.ndim - 1))
    return table[k] * (1.0 - f) + table[k + 1] * f


@dataclass
class LevelState:
    """Previous-iterate data on one side at one level."""
    t: float
    w: np.ndarray  # (Nz, n)
    lam: np.ndarray  # (Nz, n)
    P: np.ndarray  # (Nz, n, n)
    sigma: float


def transport_step(z: np.ndarray, side: int, families, prev: LevelState, cur: LevelState,
                   new_prev: np.ndarray, trace_new=None, passes: int = 2,
                   half_widths=None) -> tuple:
    """Advance the listed families one level on one side of the shock.

    `new_prev` holds the current iterate at the previous level.  For families
    leaving the shock, `trace_new` = (trace at prev level, trace at cur level)
    supplies values where the backward characteristic meets z = 0.
    Returns (values (Nz, len(families)), feet (Nz, len(families))).
    """
    dt = cur.t - prev.t
    trace_slot = 0 if side > 0 else -1
    # each side is smooth in z, and a monotone interpolant's O(h^3) error piles up over the levels
    interp_new = CubicSpline(z, new_prev, axis=0)
    interp_old = CubicSpline(z, prev.w, axis=0)
    out = np.empty((z.size, len(families)))
    feet = np.empty((z.size, len(families)))
    for col, j in enumerate(families):
        c_cur = cur.lam[:, j] - cur.sigma
        zf = z - dt * c_cur
        for _ in range(passes):
            c_prev = _linear(z, prev.lam[:, j], zf) - prev.sigma
            zf = z - 0.5 * dt * (c_cur + c_prev)
        if half_widths is not None:
            h_cur, h_prev = half_widths
            valid = np.abs(z) <= h_cur * (1 + 1e-12)
            if np.any(valid & (np.abs(zf) > h_prev * (1 + 1e-9))):
                raise FootOutOfDomain("backward characteristic left the determinacy domain",
                                      family=j, side=side, t=cur.t)
        crossed = side * zf < 0
        zc = np.where(crossed, 0.0, np.clip(zf, z[0], z[-1]))
        base = interp_new(zc)[:, j]
        w_foot = interp_old(zc)
        P_foot = _linear(z, prev.P[:, j, :], zc)
        if trace_new is not None and np.any(crossed):
            theta = np.where(crossed, z / np.where(crossed, z - zf, 1.0), 0.0)
            a = 1.0 - theta  # fraction of the step from prev to the crossing
            tn_prev, tn_cur = trace_new
            base = np.where(crossed, (1 - a) * tn_prev[j] + a * tn_cur[j], base)
            w_cross = (1 - a)[:, None] * prev.w[trace_slot] + a[:, None] * cur.w[trace_slot]
            P_cross = (1 - a)[:, None] * prev.P[trace_slot, j] + a[:, None] * cur.P[trace_slot, j]
            w_foot = np.where(crossed[:, None], w_cross, w_foot)
            P_foot = np.where(crossed[:, None], P_cross, P_foot)
        p_bar = 0.5 * (cur.P[:, j, :] + P_foot)
        incr = cur.w - w_foot
        incr[:, j] = 0.0
        out[:, col] = base - np.sum(p_bar * incr, axis=1)
        feet[:, col] = zf
    return out, feet


def _side_states(ns, fld_w):
    lam, P, _ = ns.speeds_and_coupling(fld_w)
    return lam, P


def _sweep(ns, fld: ShockFrameField, old_minus, old_plus, sigma_old, c: ShockControls):
    n, i = ns.n, ns.i
    t = fld.t
    in_p, in_m = interior_fed(n, i)
    out_p, out_m = boundary_fed(n, i)
    lam_m, P_m = _side_states(ns, old_minus)
    lam_p, P_p = _side_states(ns, old_plus)
    new_minus = np.empty_like(old_minus)
    new_plus = np.empty_like(old_plus)
    new_minus[0] = fld.w_minus[0]
    new_plus[0] = fld.w_plus[0]
    sigma = np.empty_like(t)
    margins = np.empty((t.size, 4))
    residual = np.empty_like(t)
    geometry_ok = True

    rh = rh_closure(ns, new_plus[0, 0], new_minus[0, -1], None, c.rh_tol, c.entropy_slack)
    new_plus[0, 0], new_minus[0, -1] = rh.w_plus, rh.w_minus
    sigma[0], margins[0], residual[0] = rh.sigma, rh.margins, rh.residual
    half = fld.half_width(t)
    valid_p, valid_m = fld.valid_plus(), fld.valid_minus()

    def state(side, a):
        if side > 0:
            return LevelState(t[a], old_plus[a], lam_p[a], P_p[a], sigma_old[a])
        return LevelState(t[a], old_minus[a], lam_m[a], P_m[a], sigma_old[a])

    for a in range(1, t.size):
        hw = (half[a], half[a - 1])
        vals, feet = transport_step(fld.z_plus, +1, in_p, state(+1, a - 1), state(+1, a),
                                    new_plus[a - 1], passes=c.foot_passes, half_widths=hw)
        new_plus[a][:, in_p] = vals
        if feet[0, in_p.index(i)] < 0:
            geometry_ok = False
        vals, feet = transport_step(fld.z_minus, -1, in_m, state(-1, a - 1), state(-1, a),
                                    new_minus[a - 1], passes=c.foot_passes, half_widths=hw)
        new_minus[a][:, in_m] = vals
        if feet[-1, in_m.index(i)] > 0:
            geometry_ok = False
        rh = rh_closure(ns, new_plus[a, 0], new_minus[a, -1], sigma_old[a], c.rh_tol,
                        c.entropy_slack)
        sigma[a], margins[a], residual[a] = rh.sigma, rh.margins, rh.residual
        if out_p:
            vals, _ = transport_step(fld.z_plus, +1, out_p, state(+1, a - 1), state(+1, a),
                                     new_plus[a - 1], (new_plus[a - 1, 0], rh.w_plus),
                                     c.foot_passes, hw)
            new_plus[a][:, out_p] = vals
        if out_m:
            vals, _ = transport_step(fld.z_minus, -1, out_m, state(-1, a - 1), state(-1, a),
                                     new_minus[a - 1], (new_minus[a - 1, -1], rh.w_minus),
                                     c.foot_passes, hw)
            new_minus[a][:, out_m] = vals
        new_plus[a, 0] = rh.w_plus
        new_minus[a, -1] = rh.w_minus
        # outside the determinacy domain the outer branches are exact
        new_plus[a][~valid_p[a]] = fld.w_plus[a][~valid_p[a]]
        new_minus[a][~valid_m[a]] = fld.w_minus[a][~valid_m[a]]
    return new_minus, new_plus, sigma, margins, residual, geometry_ok


def integrate_phi(t: np.ndarray, sigma: np.ndarray, phi_start: float) -> np.ndarray:
    steps = 0.5 * (sigma[1:] + sigma[:-1]) * np.diff(t)
    return phi_start + np.concatenate([[0.0], np.cumsum(steps)])


def iterate_to_convergence(ns, init, controls: Optional[ShockControls] = None,
                           epsilon: float = float("nan"), callback=None):
    """Picard loop; returns (ShockCurve, ShockFrameField, IterateDiag)."""
    c = controls or ShockControls()
    fld, seed = init
    scale = epsilon if np.isfinite(epsilon) else max(np.max(np.abs(fld.w_plus)),
                                                       np.max(np.abs(fld.w_minus)), 1e-300)
    conv_tol = c.conv_tol if c.conv_tol is not None else 1e-10 * scale
    i = ns.i
    others = ns.others
    old_minus, old_plus, sigma_old = fld.w_minus, fld.w_plus, seed.sigma
    vm, vp = fld.valid_minus(), fld.valid_plus()
    diag = IterateDiag()
    rising = 0
    result = None
    for it in range(1, c.max_iters + 1):
        new_minus, new_plus, sigma, margins, residual, geometry_ok = _sweep(
            ns, fld, old_minus, old_plus, sigma_old, c)
        dm = np.abs(new_minus - old_minus)[vm]
        dp = np.abs(new_plus - old_plus)[vp]
        d_i = float(max(dm[:, i].max(initial=0.0), dp[:, i].max(initial=0.0)))
        d_j = float(sum(max(dm[:, k].max(initial=0.0), dp[:, k].max(initial=0.0)) for k in others))
        weighted = d_i + (c.weight + 1.0) * d_j
        if diag.sup_diffs and diag.sup_diffs[-1][2] > 0:
            ratio = weighted / diag.sup_diffs[-1][2]
            diag.contraction_ratios.append(ratio)
            rising = rising + 1 if ratio > 1.0 else 0
        diag.sup_diffs.append((d_i, d_j, weighted))
        diag.rh_residuals.append(float(np.max(residual)))
        diag.iterations = it
        diag.geometry_ok = geometry_ok
        result = (new_minus, new_plus, sigma, margins, residual)
        if callback is not None:
            callback(it, diag)
        if weighted < conv_tol:
            diag.converged = True
            break
        if rising >= 3:
            raise NoContraction("Picard differences grew for three consecutive iterates",
                                epsilon=epsilon, levels=int(fld.t.size),
                                nodes=int(fld.z_plus.size), ratios=diag.contraction_ratios[-3:])
        old_minus, old_plus, sigma_old = new_minus, new_plus, sigma
    new_minus, new_plus, sigma, margins, residual = result
    out = fld.copy_with(new_minus, new_plus)
    phi = integrate_phi(fld.t, sigma, seed.phi[0])
    jumps = new_plus[:, 0] - new_minus[:, -1]
    curve = ShockCurve(fld.t, phi, sigma, jumps, margins, residual, seed.T_eps, seed.x_eps, i)
    try:
        diag.cubic_ratio = cubic_jump_diagnostic(curve).max_ratio
    except InsufficientJump:
        diag.cubic_ratio = float("nan")
    return curve, out, diag


# ------------------------------------------------------------ diagnostics

@dataclass(frozen=True)
class CubicJumpReport:
    ratios: np.ndarray  # (Nt, n-1)
    limits: np.ndarray
    spreads: np.ndarray
    slopes: np.ndarray
    max_ratio: float


def cubic_jump_diagnostic(curve: ShockCurve, near_fraction: float = 0.3) -> CubicJumpReport:
    i = curve.i
    n = curve.jumps.shape[1]
    others = [k for k in range(n) if k != i]
    ji = curve.jumps[:, i]
    floor = 10.0 * np.finfo(float).eps * max(1.0, float(np.max(np.abs(curve.jumps))))
    if np.max(np.abs(ji)) < floor:
        raise InsufficientJump("i-jump below the noise floor everywhere", floor=floor)
    keep = np.abs(ji) > floor
    ratios = np.full((ji.size, len(others)), np.nan)
    limits = np.zeros(len(others))
    spreads = np.zeros(len(others))
    slopes = np.full(len(others), np.nan)
    near = keep & (curve.tau <= curve.tau[0] + near_fraction * (curve.tau[-1] - curve.tau[0]))
    for col, k in enumerate(others):
        r = curve.jumps[keep, k] / ji[keep] ** 3
        ratios[keep, col] = r
        x = ji[near]
        y = curve.jumps[near, k] / x ** 3
        if x.size >= 2:
            limits[col] = np.polyfit(x, y, 1)[1]
        spreads[col] = float(np.ptp(r))
        slopes[col] = loglog_fit(np.abs(ji[keep]), curve.jumps[keep, k]).slope
    max_ratio = float(np.nanmax(np.abs(ratios))) if others else 0.0
    return CubicJumpReport(ratios, limits, spreads, slopes, max_ratio)


@dataclass(frozen=True)
class SeparationReport:
    separation: float  # c in (s-T)^3 + xi^2 >= c ((t-T)^3 + z^2)
    integral_max: float
    C_hat: float
    samples: int


def separation_diagnostic(ns, fld: ShockFrameField, curve: ShockCurve, epsilon: float,
                          level_stride: int = 6, nodes_per_side: int = 12) -> SeparationReport:
    """Trace i-characteristics backward through the converged fields."""
    i = ns.i
    T = curve.T_eps
    t = fld.t
    sides = []
    for z, w, valid in ((fld.z_plus, fld.w_plus, fld.valid_plus()),
                        (fld.z_minus, fld.w_minus, fld.valid_minus())):
        lam = ns.speeds_and_coupling(w)[0][..., i]
        dlam = np.stack([np.gradient(lam[a], z) for a in range(t.size)])
        sides.append((z, lam, dlam, valid))
    worst_c = np.inf
    worst_I = 0.0
    C_hat = -np.inf
    count = 0
    for a in range(level_stride, t.size, level_stride):
        for z, lam, dlam, valid in sides:
            idx = np.flatnonzero(valid[a])
            pick = np.unique(np.round(np.geomspace(1, max(idx.size - 1, 1), nodes_per_side)).astype(int))
            start = idx[np.clip(pick, 0, idx.size - 1)] if idx.size else idx
            xi = z[start].astype(float)
            target = (t[a] - T) ** 3 + xi ** 2
            ratio = np.ones_like(xi)
            integral = np.zeros_like(xi)
            d_prev = np.abs(_linear(z, dlam[a], xi))
            for b in range(a, 0, -1):
                dt = t[b] - t[b - 1]
                s_cur = _linear(z, lam[b], xi) - curve.sigma[b]
                foot = xi - dt * s_cur
                s_prev = _linear(z, lam[b - 1], foot) - curve.sigma[b - 1]
                foot = xi - 0.5 * dt * (s_cur + s_prev)
                d_new = np.abs(_linear(z, dlam[b - 1], foot))
                integral += 0.5 * dt * (d_prev + d_new)
                d_prev = d_new
                xi = foot
                ratio = np.minimum(ratio, ((t[b - 1] - T) ** 3 + xi ** 2) / target)
            worst_c = min(worst_c, float(ratio.min(initial=np.inf)))
            worst_I = max(worst_I, float(integral.max(initial=0.0)))
            if integral.size:
                C_hat = max(C_hat, float(np.max((integral - np.log(1.5))
                                                 / (epsilon * np.sqrt(t[a] - T)))))
            count += xi.size
    return SeparationReport(worst_c, worst_I, max(C_hat, 0.0), count)
