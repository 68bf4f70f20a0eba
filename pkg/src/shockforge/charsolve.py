"""Blowup system in characteristic coordinates (y, t).

``phi(y, t)`` is the position at time t of the i-characteristic labelled y,
``v(y, t)`` the normalized state carried along it and ``K = d phi / dy``.
The system stays smooth through K = 0, which is where the physical solution
develops an infinite gradient.  Field j != i is advanced by marching in y
along the curves dt/dy = K / (lambda_j - lambda_i).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional

import numpy as np
from scipy.interpolate import CubicSpline, RectBivariateSpline

from .errors import EarlyCrossing, OutOfDomain, StepFailure
from .normalize import NormalizedSystem
from .system import InitialData


# ----------------------------------------------------------------- helpers

def fd4(f: np.ndarray, h: float, axis: int = -1) -> np.ndarray:
    """First derivative, fourth-order central with one-sided edges."""
    f = np.moveaxis(np.asarray(f, dtype=float), axis, 0)
    out = np.empty_like(f)
    out[2:-2] = (f[:-4] - 8.0 * f[1:-3] + 8.0 * f[3:-1] - f[4:]) / (12.0 * h)
    out[0] = (-25.0 * f[0] + 48.0 * f[1] - 36.0 * f[2] + 16.0 * f[3] - 3.0 * f[4]) / (12.0 * h)
    out[1] = (-3.0 * f[0] - 10.0 * f[1] + 18.0 * f[2] - 6.0 * f[3] + f[4]) / (12.0 * h)
    out[-1] = (25.0 * f[-1] - 48.0 * f[-2] + 36.0 * f[-3] - 16.0 * f[-4] + 3.0 * f[-5]) / (12.0 * h)
    out[-2] = (3.0 * f[-1] + 10.0 * f[-2] - 18.0 * f[-3] + 6.0 * f[-4] - f[-5]) / (12.0 * h)
    return np.moveaxis(out, 0, axis)


def lagrange4(grid: np.ndarray, values: np.ndarray, q: np.ndarray) -> np.ndarray:
    """Cubic Lagrange interpolation along axis 0 of ``values`` at points q.

    ``values`` has shape (N, ...) and ``q`` shape (M,); returns (M, ...).
    Points outside the grid are extrapolated from the end stencil.
    """
    N = grid.size
    k = np.clip(np.searchsorted(grid, q) - 2, 0, N - 4)
    nodes = grid[k[:, None] + np.arange(4)]
    w = np.ones((q.size, 4))
    for a in range(4):
        for b in range(4):
            if a != b:
                w[:, a] *= (q - nodes[:, b]) / (nodes[:, a] - nodes[:, b])
    gathered = values[k[:, None] + np.arange(4)]
    return np.einsum("ma,ma...->m...", w, gathered)


def lagrange4_rows(grid: np.ndarray, table: np.ndarray, q: np.ndarray) -> np.ndarray:
    """Interpolate column c of ``table`` (N, M) at q[c] for every c."""
    N = grid.size
    cols = np.arange(q.size)
    k = np.clip(np.searchsorted(grid, q) - 2, 0, N - 4)
    out = np.zeros(q.size)
    idx = k[:, None] + np.arange(4)
    nodes = grid[idx]
    for a in range(4):
        wa = np.ones(q.size)
        for b in range(4):
            if a != b:
                wa *= (q - nodes[:, b]) / (nodes[:, a] - nodes[:, b])
        out += wa * table[idx[:, a], cols]
    return out


def graded_levels(t0: float, t_fine: float, t_end: float, dt_fine: float,
                  ratio: float = 0.9) -> np.ndarray:
    """Steps growing by 1/ratio backwards from t_fine to t0, uniform after."""
    t_fine = min(max(t_fine, t0), t_end)
    back = [t_fine]
    step = dt_fine
    while back[-1] - t0 > 1e-12:
        step = step / ratio
        nxt = back[-1] - step
        if nxt - t0 < 0.5 * step:
            nxt = t0
        back.append(nxt)
    n_fine = max(1, int(np.ceil((t_end - t_fine) / dt_fine - 1e-9)))
    fine = np.linspace(t_fine, t_end, n_fine + 1)
    levels = np.concatenate([np.array(back[::-1]), fine[1:]])
    return np.unique(levels)


# ------------------------------------------------------------ smooth phase

@dataclass
class SmoothPhase:
    x: np.ndarray
    w: np.ndarray  # state at t0 on x, shape (Nx, n)
    t0: float
    min_K: float
    times: np.ndarray
    i_band: tuple  # positions at t0 of the i-characteristics from a and b
    tracked: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def handoff(self, y: np.ndarray) -> np.ndarray:
        return CubicSpline(self.x, self.w, axis=0)(y)

    def exterior(self, x: np.ndarray, j: int) -> np.ndarray:
        xq = np.asarray(x, dtype=float)
        vals = np.interp(xq, self.x, self.w[:, j])
        return np.where((xq < self.x[0]) | (xq > self.x[-1]), 0.0, vals)


def _overlap(W: np.ndarray, rel: float) -> bool:
    """True when two families carry non-negligible amplitude at one node."""
    scale = np.max(np.abs(W), initial=0.0)
    if scale == 0.0 or W.shape[1] < 2:
        return False
    active = np.abs(W) > rel * scale
    return bool(np.any(active.sum(axis=1) >= 2))


def _spline0(xs, ys, q):
    """Cubic spline through (xs, ys) evaluated at q; zero state outside."""
    out = CubicSpline(xs, ys, axis=0, extrapolate=False)(q)
    return np.nan_to_num(out, nan=0.0)


def _regrid_from_initial(ns, initial, x, dt, j, lam_o, lam_s, carried, W0, X):
    """Values of family j on the grid after the first step, with exact feet.

    Only the coupling corrections (arrival speed minus departure speed and
    the carried value minus the initial value) go through splines, so kinks
    of the initial profile are tracked exactly.
    """
    def d_lam(q):
        return _spline0(x, lam_s - lam_o, q)

    def d_val(q):
        return _spline0(x, carried - W0, q)

    foot = CubicSpline(X, x)(x)
    h = 1e-7

    def residual(xi):
        lam_xi = ns.speeds_and_coupling(initial(xi))[0][:, j]
        return xi + 0.5 * dt * (2.0 * lam_xi + d_lam(xi)) - x

    for _ in range(20):
        g = residual(foot)
        dg = (residual(foot + h) - g) / h
        step = g / dg
        foot = foot - step
        if np.max(np.abs(step)) < 1e-15 * (1.0 + np.max(np.abs(x))):
            break
    return initial(foot)[:, j] + d_val(foot)


def smooth_evolve(ns: NormalizedSystem, data: InitialData, t0: float,
                  resolution: int = 256, x_range: Optional[tuple] = None,
                  coupling_step: float = 0.5, overlap_tol: float = 1e-3,
                  tol: float = 1e-14, max_passes: int = 30, track=()) -> SmoothPhase:
    """Evolve the classical solution to t0 by forward characteristic tracing.

    Each family is carried along its own characteristics from the grid nodes
    and put back on the grid by cubic splines; the coupling enters through
    increments of the other components along the path.
    """
    n, i = ns.n, ns.i
    a, b = data.support
    dx = 1.0 / resolution

    def initial(xq):
        return ns.to_w(data.state(xq))

    if x_range is None:
        probe = np.linspace(a, b, 1025)
        lam0, _, _ = ns.speeds_and_coupling(initial(probe))
        pad = 0.25 * (b - a) / max(1.0, (b - a) / 4.0) + 0.05 * t0 * np.ptp(lam0)
        lo = a + min(lam0.min(), 0.0) * t0 - pad
        hi = b + max(lam0.max(), 0.0) * t0 + pad
    else:
        lo, hi = x_range
    x = a + dx * np.arange(int(np.floor((lo - a) / dx)), int(np.ceil((hi - a) / dx)) + 1)

    W = initial(x)
    K = np.ones_like(x)
    band = np.concatenate([[a, b], np.asarray(track, dtype=float)])
    lam_ref = ns.speeds_and_coupling(np.zeros(n))[0]
    gaps = np.diff(lam_ref)
    dt_couple = coupling_step * (b - a) / 4.0 / max(
        float(np.max(np.abs(gaps))) if n > 1 else 1.0, 1e-12)
    t = 0.0
    times = [0.0]
    while t < t0 - 1e-12:
        lam_o, P_o, _ = ns.speeds_and_coupling(W)
        grad = float(np.max(np.abs(np.gradient(lam_o, dx, axis=0))))
        dt = min(t0 - t, 0.5 / max(grad, 1e-300))
        if _overlap(W, overlap_tol):
            dt = min(dt, dt_couple)
        if t0 - t - dt < 0.05 * dt:
            dt = t0 - t
        X = x[:, None] + dt * lam_o
        carried = W.copy()
        Wn = W.copy()
        lam_arrive = lam_o.copy()
        for _ in range(max_passes):
            new = Wn.copy()
            for j in range(n):
                S = _spline0(x, new, X[:, j])
                S[:, j] = carried[:, j]
                lam_s, P_s, _ = ns.speeds_and_coupling(S)
                pbar = 0.5 * (P_o[:, j, :] + P_s[:, j, :])
                pbar[:, j] = 0.0
                carried[:, j] = W[:, j] - np.sum(pbar * (S - W), axis=1)
                X[:, j] = x + 0.5 * dt * (lam_o[:, j] + lam_s[:, j])
                if np.any(np.diff(X[:, j]) <= 0.0):
                    raise EarlyCrossing("characteristics of one family crossed before t0",
                                        family=j, time=t + dt)
                new[:, j] = _spline0(X[:, j], carried[:, j], x)
                lam_arrive[:, j] = lam_s[:, j]
            change = float(np.max(np.abs(new - Wn)))
            Wn = new
            if change <= tol * max(1.0, float(np.max(np.abs(Wn)))):
                break
        if t == 0.0:
            for j in range(n):
                Wn[:, j] = _regrid_from_initial(ns, initial, x, dt, j, lam_o[:, j],
                                                lam_arrive[:, j], carried[:, j], W[:, j], X[:, j])
        stretch = np.gradient(X[:, i], dx)
        K = 1.0 + _spline0(X[:, i], K * stretch - 1.0, x)
        band = np.interp(band, x, X[:, i])
        W = Wn
        t += dt
        times.append(t)
    min_K = float(np.min(K))
    if not min_K > 0:
        raise EarlyCrossing("i-characteristics crossed before t0", min_K=min_K)
    return SmoothPhase(x=x, w=W, t0=float(t0), min_K=min_K, times=np.array(times),
                       i_band=(float(band[0]), float(band[1])), tracked=band[2:].copy())


def blowup_window(ns: NormalizedSystem, handoff: SmoothPhase, center: float,
                  half_width: float, t_end: float, rel_tol: float = 1e-10) -> tuple:
    """y range around ``center`` widened to hold incoming data of other families.

    Family j enters the window from the side it approaches from; anything it
    carries within reach before t_end is included so the boundary only ever
    feeds the undisturbed state.
    """
    lam0 = ns.speeds_and_coupling(np.zeros(ns.n))[0]
    i = ns.i
    lo, hi = center - half_width, center + half_width
    x, W = handoff.x, handoff.w
    scale = max(np.max(np.abs(W)), 1e-300)
    span = t_end - handoff.t0
    for j in range(ns.n):
        if j == i:
            continue
        rel = abs(lam0[j] - lam0[i]) * span * 1.1
        live = np.abs(W[:, j]) > rel_tol * scale
        if j < i:
            reach = live & (x > hi) & (x <= hi + rel)
            if reach.any():
                hi = max(hi, float(x[reach].max()) + 0.25)
        else:
            reach = live & (x < lo) & (x >= lo - rel)
            if reach.any():
                lo = min(lo, float(x[reach].min()) - 0.25)
    return max(lo, x[0]), min(hi, x[-1])


# ------------------------------------------------------------- blowup system

@dataclass
class CharGrid:
    y: np.ndarray
    t: np.ndarray
    phi: np.ndarray  # (Nt, Ny)
    v: np.ndarray  # (Nt, Ny, n) normalized state
    u: np.ndarray  # (Nt, Ny, n) original state
    K: np.ndarray  # (Nt, Ny)
    lam: np.ndarray  # (Nt, Ny, n)
    h: np.ndarray  # (Nt, Ny, n)
    t0: float
    i: int
    trusted_t_max: float
    picard_iterations: int
    picard_change: float
    deriv_order: int = 4
    epsilon: float = float("nan")
    ns: Optional[NormalizedSystem] = field(default=None, repr=False)

    @property
    def n(self) -> int:
        return self.v.shape[-1]

    @cached_property
    def phi_spline(self) -> RectBivariateSpline:
        return RectBivariateSpline(self.t, self.y, self.phi, kx=3, ky=5)

    @cached_property
    def v_splines(self) -> list:
        return [RectBivariateSpline(self.t, self.y, self.v[..., k], kx=3, ky=3)
                for k in range(self.n)]

    @cached_property
    def u_splines(self) -> list:
        return [RectBivariateSpline(self.t, self.y, self.u[..., k], kx=3, ky=3)
                for k in range(self.n)]

    @cached_property
    def _derived(self) -> dict:
        return {}

    def _spline(self, name: str, k: int, dt: int, dy: int):
        key = (name, k, dt, dy)
        if key not in self._derived:
            base = self.phi_spline if name == "phi" else self.v_splines[k]
            self._derived[key] = base if dt == dy == 0 else base.partial_derivative(dt, dy)
        return self._derived[key]

    def phi_at(self, y, t, dy: int = 0, dt: int = 0) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        t = np.broadcast_to(np.asarray(t, dtype=float), y.shape)
        return self._spline("phi", 0, dt, dy)(t, y, grid=False)

    def v_at(self, y, t, dy: int = 0, dt: int = 0) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        t = np.broadcast_to(np.asarray(t, dtype=float), y.shape)
        return np.stack([self._spline("v", k, dt, dy)(t, y, grid=False) for k in range(self.n)], axis=-1)

    def u_at(self, y, t) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        t = np.broadcast_to(np.asarray(t, dtype=float), y.shape)
        return np.stack([s.ev(t, y) for s in self.u_splines], axis=-1)

    def min_K_per_level(self) -> np.ndarray:
        return self.K.min(axis=1)

    def to_csv_rows(self):
        for a, tt in enumerate(self.t):
            for b, yy in enumerate(self.y):
                yield (yy, tt, self.phi[a, b], self.K[a, b], *self.v[a, b])


def _phi_from_speed(t: np.ndarray, y: np.ndarray, lam_i: np.ndarray) -> np.ndarray:
    anti = CubicSpline(t, lam_i, axis=0).antiderivative()
    return y[None, :] + anti(t) - anti(t[0])


def _weights4(grid: np.ndarray, q: np.ndarray):
    """Stencil start indices and cubic Lagrange weights for points q."""
    k = np.clip(np.searchsorted(grid, q) - 2, 0, grid.size - 4)
    nodes = grid[k[:, None] + np.arange(4)]
    w = np.ones((q.size, 4))
    for a in range(4):
        for b in range(4):
            if a != b:
                w[:, a] *= (q - nodes[:, b]) / (nodes[:, a] - nodes[:, b])
    return k, w


def _apply4(k, w, values):
    """Apply stencils to the columns of ``values`` with shape (N, m)."""
    idx = k[:, None] + np.arange(4)
    return np.einsum("qa,qam->qm", w, values[idx])


def _march_family(j: int, i: int, t: np.ndarray, y: np.ndarray, S: np.ndarray,
                  V_old: np.ndarray, P: np.ndarray, v0: np.ndarray,
                  inflow: np.ndarray, forward: bool):
    """Transport v_j along dt/dy = S by marching in y.

    Returns the new component and a mask of nodes whose curves entered
    through the top of the time range.
    """
    Nt, Ny = S.shape
    n = V_old.shape[-1]
    dy = y[1] - y[0]
    coupled = [k for k in range(n) if k not in (i, j)]
    nc = len(coupled)
    # per station: S, then v_old_k, then p_jk for the coupled k
    table = np.concatenate([S[..., None], V_old[..., coupled], P[:, :, j, coupled]], axis=-1)
    init = np.concatenate([v0[:, [j]], v0[:, coupled], P[0][:, j, coupled]], axis=-1)
    out = np.empty((Nt, Ny))
    gap = np.zeros((Nt, Ny), dtype=bool)
    out[0] = v0[:, j]
    order = range(Ny) if forward else range(Ny - 1, -1, -1)
    step = dy if forward else -dy
    tk = t[1:]
    t_lo, t_hi = t[0], t[-1]
    prev = None
    for m in order:
        if prev is None:
            out[1:, m] = inflow[1:]
            prev = m
            continue
        S_m = S[1:, m]
        t_star = tk - step * S_m
        for _ in range(2):
            k, w = _weights4(t, np.clip(t_star, t_lo, t_hi))
            S_p = _apply4(k, w, S[:, prev, None])[:, 0]
            t_star = tk - step * 0.5 * (S_m + S_p)
        below = t_star < t_lo
        above = t_star > t_hi
        k, w = _weights4(t, np.clip(t_star, t_lo, t_hi))
        cols = np.concatenate([out[:, prev, None], table[:, prev, 1:]], axis=-1)
        at = _apply4(k, w, cols)
        if np.any(below):
            theta = (tk[below] - t_lo) / (tk[below] - t_star[below])
            yc = y[m] - theta * step
            kb, wb = _weights4(y, yc)
            at[below] = _apply4(kb, wb, init)
        val = at[:, 0]
        for c, kk in enumerate(coupled):
            pbar = 0.5 * (table[1:, m, 1 + nc + c] + at[:, 1 + nc + c])
            val = val - pbar * (table[1:, m, 1 + c] - at[:, 1 + c])
        out[1:, m] = val
        g = np.zeros(tk.size, dtype=bool)
        g[above] = True
        inside = ~above & ~below
        if np.any(inside):
            kk = np.clip(np.searchsorted(t, t_star[inside]), 1, Nt - 1)
            g[inside] = gap[kk, prev] | gap[kk - 1, prev]
        gap[1:, m] = g
        if above.any():
            out[1:, m][above] = out[-1, prev]
        prev = m
    return out, gap


def solve_blowup_system(ns: NormalizedSystem, handoff: SmoothPhase, t_end: float,
                        t_focus: Optional[float] = None, dt_fine: float = 0.02,
                        y_range: Optional[tuple] = None, picard_tol: float = 1e-13,
                        max_picard: int = 20, epsilon: float = float("nan")) -> CharGrid:
    """Solve the blowup system from the handoff time t0 up to t_end."""
    n, i = ns.n, ns.i
    t0 = handoff.t0
    if handoff.min_K <= 0:
        raise EarlyCrossing("handoff already contains crossed characteristics")
    if y_range is None:
        lo, hi = handoff.i_band
        pad = 0.15 * (hi - lo)
        y_range = (lo - pad, hi + pad)
    sel = (handoff.x >= y_range[0]) & (handoff.x <= y_range[1])
    y = handoff.x[sel]
    if y.size < 16:
        raise StepFailure("too few nodes in the y range", nodes=int(y.size))
    v0 = handoff.w[sel]
    if t_focus is None:
        t_focus = t_end
    t = graded_levels(t0, t0 + 0.5 * (t_focus - t0), t_end, dt_fine)
    Nt, Ny = t.size, y.size
    dy = y[1] - y[0]

    V = np.broadcast_to(v0, (Nt, Ny, n)).copy()
    U = None
    change = np.inf
    it = 0
    gap_any = np.zeros((Nt, Ny), dtype=bool)
    lam0 = ns.speeds_and_coupling(np.zeros(n))[0]
    for it in range(1, max_picard + 1):
        lam, P, U = ns.speeds_and_coupling(V, U)
        phi = _phi_from_speed(t, y, lam[..., i])
        K = fd4(phi, dy, axis=1)
        if not np.all(np.isfinite(K)):
            raise StepFailure("non-finite characteristic derivative", iteration=it)
        Vn = V.copy()
        gap_any[:] = False
        for j in range(n):
            if j == i:
                continue
            S = K / (lam[..., j] - lam[..., i])
            forward = j > i
            edge = 0 if forward else Ny - 1
            x_edge = phi[:, edge] - lam0[j] * (t - t0)
            inflow = handoff.exterior(x_edge, j)
            Vn[..., j], gap = _march_family(j, i, t, y, S, V, P, v0, inflow, forward)
            gap_any |= gap
        # i-component: l_i dv/dt = 0 in increment form along each y
        dv = np.diff(Vn, axis=0)
        pbar = 0.5 * (P[1:, :, i, :] + P[:-1, :, i, :])
        pbar[..., i] = 0.0
        inc = -np.sum(pbar * dv, axis=-1)
        Vn[1:, :, i] = v0[None, :, i] + np.cumsum(inc, axis=0)
        change = float(np.max(np.abs(Vn - V)))
        V = Vn
        if change < picard_tol * max(1.0, float(np.max(np.abs(V)))):
            break
    lam, P, U = ns.speeds_and_coupling(V, U)
    phi = _phi_from_speed(t, y, lam[..., i])
    K = fd4(phi, dy, axis=1)
    Lw = P  # rows of P are left eigenvectors scaled to unit diagonal
    Vy = fd4(V, dy, axis=1)
    Vt = np.gradient(V, t, axis=0)
    h = np.einsum("abjk,abk->abj", Lw, Vt)
    h[..., i] = np.einsum("abk,abk->ab", Lw[..., i, :], Vy)
    rows = np.where(gap_any.any(axis=1))[0]
    trusted = float(t[rows[0] - 1]) if rows.size and rows[0] > 0 else float(t[-1])
    if rows.size and rows[0] == 0:
        trusted = float(t[0])
    return CharGrid(y=y, t=t, phi=phi, v=V, u=U, K=K, lam=lam, h=h, t0=t0, i=i,
                    trusted_t_max=trusted, picard_iterations=it, picard_change=change,
                    epsilon=epsilon, ns=ns)


# ---------------------------------------------------------- physical sampling

@dataclass(frozen=True)
class Branch:
    y: float
    v: np.ndarray


def roots_at(grid: CharGrid, x: float, t: float, y_lo: Optional[float] = None,
             y_hi: Optional[float] = None, tol: float = 1e-12) -> np.ndarray:
    """All y in the grid range with phi(y, t) = x, Newton-polished."""
    y = grid.y
    if y_lo is not None or y_hi is not None:
        lo = y[0] if y_lo is None else y_lo
        hi = y[-1] if y_hi is None else y_hi
        y = y[(y >= lo) & (y <= hi)]
        y = np.unique(np.concatenate([[lo], y, [hi]]))
    f = grid.phi_at(y, np.full(y.size, t)) - x
    roots = []
    zero = np.where(f == 0.0)[0]
    roots.extend(y[zero].tolist())
    cross = np.where(np.sign(f[:-1]) * np.sign(f[1:]) < 0)[0]
    for k in cross:
        a, b = y[k], y[k + 1]
        fa = f[k]
        r = a - fa * (b - a) / (f[k + 1] - fa)
        for _ in range(60):
            val = float(grid.phi_at(r, t)) - x
            der = float(grid.phi_at(r, t, dy=1))
            if val * fa > 0:
                a, fa = r, val
            else:
                b = r
            step = val / der if der != 0 else np.inf
            nxt = r - step
            if not (a < nxt < b):
                nxt = 0.5 * (a + b)
            if abs(nxt - r) < tol * (1.0 + abs(r)):
                r = nxt
                break
            r = nxt
        roots.append(r)
    return np.sort(np.array(roots))


def sample_physical(grid: CharGrid, x: float, t: float) -> list:
    """All branches (y, v) of the possibly multivalued solution at (x, t)."""
    if not grid.t[0] <= t <= grid.t[-1]:
        raise OutOfDomain("time outside the characteristic grid", t=float(t))
    row = grid.phi_at(grid.y, np.full(grid.y.size, t))
    if not row.min() <= x <= row.max():
        raise OutOfDomain("position outside the image of the y range", x=float(x))
    ys = roots_at(grid, x, t)
    return [Branch(float(r), grid.v_at(np.array([r]), t)[0]) for r in ys]
