"""Cusp geometry of the characteristic map past the gradient catastrophe.

Everything here works on a surface object exposing ``phi_at(y, t, dy, dt)``
and, where states are needed, ``v_at``/``u_at``; a ``CharGrid`` is the usual
one.  Near the blowup point the map behaves like the cubic
x = h^3 - A(t) h + B(t), and the local constants alpha = phi_yyy / 6 and
beta = -phi_yt fix its scale.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import (BranchLoss, DegenerateCusp, InsufficientRange, LeftCuspInterior,
                     NoCrossing, OnEnvelopeTolerance)
from .fits import LogLogFit, loglog_fit, power_fit
from .system import averaged_speed

CUSP_CONSTANT = 2.0 * np.sqrt(3.0) / 9.0


def _phi(surface, y, t, dy=0, dt=0) -> float:
    return float(np.asarray(surface.phi_at(np.atleast_1d(float(y)), np.atleast_1d(float(t)),
                                           dy=dy, dt=dt)).ravel()[0])


# ----------------------------------------------------------- blowup point

@dataclass(frozen=True)
class BlowupPoint:
    y_eps: float
    T_eps: float
    x_eps: float
    lambda_at_bp: float
    phi_y: float
    phi_yy: float
    phi_yyy: float
    phi_yt: float
    crossing_time: float
    v: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @property
    def alpha(self) -> float:
        return self.phi_yyy / 6.0

    @property
    def beta(self) -> float:
        return -self.phi_yt

    @property
    def derivs(self) -> tuple:
        return self.phi_yyy, self.phi_yt


def detect_blowup(grid, newton_tol: float = 1e-11, fd_floor: float = 1e-8,
                  max_iter: int = 60) -> BlowupPoint:
    """First point where phi_y and phi_yy vanish together, by 2-D Newton."""
    mins = grid.K.min(axis=1)
    below = np.where(mins <= 0.0)[0]
    if below.size == 0:
        raise NoCrossing("K stays positive over the whole grid", min_K=float(mins.min()))
    k = int(below[0])
    if k == 0:
        raise NoCrossing("K is already non-positive at the first level")
    frac = mins[k - 1] / (mins[k - 1] - mins[k])
    crossing = float(grid.t[k - 1] + frac * (grid.t[k] - grid.t[k - 1]))
    y = float(grid.y[np.argmin(grid.K[k])])
    t = crossing
    span = float(grid.y[-1] - grid.y[0])
    for _ in range(max_iter):
        f1 = _phi(grid, y, t, dy=1)
        f2 = _phi(grid, y, t, dy=2)
        if max(abs(f1), abs(f2)) < newton_tol:
            break
        J = np.array([[f2, _phi(grid, y, t, dy=1, dt=1)],
                      [_phi(grid, y, t, dy=3), _phi(grid, y, t, dy=2, dt=1)]])
        det = np.linalg.det(J)
        if not np.isfinite(det) or abs(det) < 1e-300:
            break
        step = np.linalg.solve(J, [f1, f2])
        scale = max(1.0, abs(step[0]) / (0.02 * span), abs(step[1]) / (0.1 * (grid.t[-1] - grid.t[0])))
        y -= step[0] / scale
        t -= step[1] / scale
    f1, f2 = _phi(grid, y, t, dy=1), _phi(grid, y, t, dy=2)
    f3, f_yt = _phi(grid, y, t, dy=3), _phi(grid, y, t, dy=1, dt=1)
    if not (f3 > fd_floor and f_yt < -fd_floor):
        raise DegenerateCusp("cusp nondegeneracy fails at the blowup point",
                             phi_yyy=f3, phi_yt=f_yt, y=y, t=t)
    if max(abs(f1), abs(f2)) >= max(newton_tol, 1e-8):
        raise DegenerateCusp("Newton did not converge to the blowup point",
                             phi_y=f1, phi_yy=f2)
    v = grid.v_at(np.array([y]), t)[0] if hasattr(grid, "v_at") else np.zeros(0)
    return BlowupPoint(y_eps=y, T_eps=t, x_eps=_phi(grid, y, t), lambda_at_bp=_phi(grid, y, t, dt=1),
                       phi_y=f1, phi_yy=f2, phi_yyy=f3, phi_yt=f_yt, crossing_time=crossing, v=v)


# -------------------------------------------------------------- envelope

@dataclass(frozen=True)
class EnvelopeBranches:
    t_samples: np.ndarray
    eta_minus: np.ndarray
    eta_plus: np.ndarray
    x_minus: np.ndarray
    x_plus: np.ndarray
    T_eps: float

    @property
    def tau(self) -> np.ndarray:
        return self.t_samples - self.T_eps

    def at(self, t: float) -> tuple:
        """Envelope (eta_minus, eta_plus) interpolated in sqrt(t - T)."""
        s = np.sqrt(max(t - self.T_eps, 0.0))
        ss = np.sqrt(self.tau)
        return (float(np.interp(s, ss, self.eta_minus)), float(np.interp(s, ss, self.eta_plus)))


def _newton_1d(fun, dfun, y, lo=-np.inf, hi=np.inf, tol=1e-13, max_iter=60):
    for _ in range(max_iter):
        f = fun(y)
        d = dfun(y)
        if d == 0 or not np.isfinite(d):
            return y, False
        step = f / d
        nxt = min(max(y - step, lo), hi)
        if abs(nxt - y) <= tol * (1.0 + abs(y)):
            return nxt, True
        y = nxt
    return y, abs(fun(y)) < 1e3 * tol


def envelope_at(surface, bp: BlowupPoint, t: float, guess: Optional[tuple] = None,
                tol: float = 1e-13) -> tuple:
    """Solve phi_y(eta, t) = 0 on both sides of the cusp."""
    tau = t - bp.T_eps
    if tau <= 0:
        return bp.y_eps, bp.y_eps
    if guess is None:
        s0 = np.sqrt(bp.beta * tau / (3.0 * bp.alpha))
        guess = (bp.y_eps - s0, bp.y_eps + s0)
    out = []
    for g in guess:
        eta, ok = _newton_1d(lambda y: _phi(surface, y, t, dy=1),
                             lambda y: _phi(surface, y, t, dy=2), g, tol=tol)
        if not ok:
            raise BranchLoss("envelope continuation stalled", t=t, guess=g)
        out.append(eta)
    lo, hi = out
    if not lo < hi or _phi(surface, lo, t, dy=2) >= 0 or _phi(surface, hi, t, dy=2) <= 0:
        raise BranchLoss("envelope branches merged or swapped", t=t, eta=(lo, hi))
    return lo, hi


def envelope_branches(surface, bp: BlowupPoint, t_max: float, count: int = 60,
                      tau_min: float = 1e-6, t_samples=None) -> EnvelopeBranches:
    """Natural-parameter continuation of K = 0 in t from the cusp point."""
    if t_samples is None:
        tau = np.geomspace(tau_min, t_max - bp.T_eps, count)
        t_samples = bp.T_eps + tau
    t_samples = np.asarray(t_samples, dtype=float)
    if np.any(t_samples <= bp.T_eps):
        raise ValueError("envelope samples must lie after the blowup time")
    etas = np.empty((t_samples.size, 2))
    prev = None
    prev_tau = None
    for k, t in enumerate(t_samples):
        tau = t - bp.T_eps
        guess = None
        if prev is not None:
            r = np.sqrt(tau / prev_tau)
            guess = (bp.y_eps + (prev[0] - bp.y_eps) * r, bp.y_eps + (prev[1] - bp.y_eps) * r)
        etas[k] = envelope_at(surface, bp, t, guess)
        prev, prev_tau = etas[k], tau
    xm = np.array([_phi(surface, e, t) for e, t in zip(etas[:, 0], t_samples)])
    xp = np.array([_phi(surface, e, t) for e, t in zip(etas[:, 1], t_samples)])
    return EnvelopeBranches(t_samples, etas[:, 0], etas[:, 1], xm, xp, bp.T_eps)


# ------------------------------------------------------------- cusp chart

@dataclass(frozen=True)
class CuspChart:
    tau: np.ndarray
    A: np.ndarray
    B: np.ndarray
    A_fit: np.ndarray  # coefficients of tau, tau^2
    B_fit: np.ndarray  # coefficients of 1, tau, tau^2
    envelope_fit: LogLogFit  # (x_minus - x_plus) / 2 against tau
    normalized_coefficient: float
    orientation_ok: bool


def cusp_chart(branches: EnvelopeBranches, bp: Optional[BlowupPoint] = None,
               fit_tau_max: Optional[float] = None) -> CuspChart:
    """A(t), B(t) from the envelope and the leading Taylor coefficients."""
    tau = branches.tau
    gap = branches.x_minus - branches.x_plus
    orientation_ok = bool(np.all(gap > 0))
    A = (9.0 / (4.0 * np.sqrt(3.0)) * np.abs(gap)) ** (2.0 / 3.0)
    B = 0.5 * (branches.x_plus + branches.x_minus)
    sel = tau <= (fit_tau_max if fit_tau_max is not None else tau.max())
    A_fit = power_fit(tau[sel], A[sel], [1, 2])
    B_fit = power_fit(tau[sel], B[sel], [0, 1, 2])
    env = loglog_fit(tau[sel], 0.5 * gap[sel])
    norm = float("nan")
    if bp is not None:
        norm = env.coefficient * np.sqrt(bp.alpha) / bp.beta ** 1.5
    return CuspChart(tau, A, B, A_fit, B_fit, env, float(norm), orientation_ok)


# ---------------------------------------------------------- cubic roots

def cardano(p: float, q: float, tol: float = 1e-12) -> np.ndarray:
    """Real roots of h^3 + p h + q = 0, repeated by multiplicity when double."""
    scale = max(abs(p) ** 1.5, abs(q), 1e-300)
    disc = -(4.0 * p ** 3 + 27.0 * q ** 2)
    if abs(p) <= tol and abs(q) <= tol:
        return np.zeros(3)
    if abs(disc) <= tol * scale ** 2:
        if p == 0.0:
            return np.array([np.cbrt(-q)])
        simple, double = 3.0 * q / p, -1.5 * q / p
        return np.sort([simple, double, double])
    if disc > 0:
        m = 2.0 * np.sqrt(-p / 3.0)
        arg = np.clip(3.0 * q / (p * m), -1.0, 1.0)
        theta = np.arccos(arg) / 3.0
        return np.sort(m * np.cos(theta - 2.0 * np.pi * np.arange(3) / 3.0))
    root = np.sqrt(q * q / 4.0 + p ** 3 / 27.0)
    a = np.cbrt(-q / 2.0 + root) if q < 0 else np.cbrt(-q / 2.0 - root)
    return np.array([a - p / (3.0 * a) if a != 0.0 else 0.0])


@dataclass(frozen=True)
class MultiState:
    region: str
    roots: list  # (tag, y, v)
    d_eps: float
    x: float
    t: float

    @property
    def ys(self) -> np.ndarray:
        return np.array([r[1] for r in self.roots])


def anisotropic_distance(bp: BlowupPoint, x, t):
    """|t - T|^3 + (x - x_eps - lambda (t - T))^2."""
    tau = np.asarray(t, dtype=float) - bp.T_eps
    return np.abs(tau) ** 3 + (np.asarray(x, dtype=float) - bp.x_eps - bp.lambda_at_bp * tau) ** 2


def _solve_piece(surface, x, t, lo, hi, seed, increasing, tol=1e-14):
    """Root of phi(., t) = x on [lo, hi] where phi is monotone."""
    f_lo = _phi(surface, lo, t) - x
    f_hi = _phi(surface, hi, t) - x
    if f_lo == 0.0:
        return lo
    if f_hi == 0.0:
        return hi
    if np.sign(f_lo) == np.sign(f_hi):
        return None
    y = min(max(seed, lo), hi) if seed is not None else 0.5 * (lo + hi)
    a, b = lo, hi
    for _ in range(200):
        f = _phi(surface, y, t) - x
        if abs(f) <= tol * (1.0 + abs(x)):
            return y
        if (f < 0) == increasing:
            a = y
        else:
            b = y
        d = _phi(surface, y, t, dy=1)
        nxt = y - f / d if d != 0 else 0.5 * (a + b)
        if not a < nxt < b:
            nxt = 0.5 * (a + b)
        if abs(nxt - y) <= 1e-16 * (1.0 + abs(y)):
            return nxt
        y = nxt
    return y


def classify_and_roots(surface, bp: BlowupPoint, x: float, t: float,
                       branches: Optional[EnvelopeBranches] = None, edge_tol: float = 1e-9,
                       y_range: Optional[tuple] = None, strict: bool = False) -> MultiState:
    """Region of (x, t) relative to the cusp and all preimages y."""
    if y_range is None:
        y_range = (float(surface.y[0]), float(surface.y[-1]))
    lo, hi = y_range
    d = float(anisotropic_distance(bp, x, t))
    has_v = hasattr(surface, "v_at")

    def state(y):
        return surface.v_at(np.array([y]), t)[0] if has_v else None

    if t <= bp.T_eps:
        seed = bp.y_eps + np.cbrt((x - bp.x_eps - bp.lambda_at_bp * (t - bp.T_eps)) / max(bp.alpha, 1e-300))
        y = _solve_piece(surface, x, t, lo, hi, seed, True)
        if y is None:
            raise ValueError("point outside the image of the y range")
        return MultiState("before_blowup", [("y", y, state(y))], d, x, t)

    guess = branches.at(t) if branches is not None else None
    em, ep = envelope_at(surface, bp, t, guess)
    xm, xp = _phi(surface, em, t), _phi(surface, ep, t)
    A = (9.0 / (4.0 * np.sqrt(3.0)) * abs(xm - xp)) ** (2.0 / 3.0)
    B = 0.5 * (xm + xp)
    hs = cardano(-A, B - x)
    scale = (ep - em) / (2.0 * np.sqrt(A / 3.0)) if A > 0 else 0.0
    seeds = 0.5 * (em + ep) + scale * hs

    def seed_in(a, b):
        inside = [s for s in seeds if a <= s <= b]
        return inside[0] if inside else None

    # the cusp is narrower than any fixed tolerance close to its tip
    tol = min(edge_tol, 1e-4 * (xm - xp))
    on_plus = abs(x - xp) < tol
    on_minus = abs(x - xm) < tol
    if on_plus or on_minus:
        if strict:
            raise OnEnvelopeTolerance("point lies on the envelope", x=x, t=t)
        if on_plus:
            y_out = _solve_piece(surface, x, t, lo, em, seed_in(lo, em), True)
            roots = [("y_minus", y_out, state(y_out)), ("y_0=y_plus", ep, state(ep))]
        else:
            y_out = _solve_piece(surface, x, t, ep, hi, seed_in(ep, hi), True)
            roots = [("y_minus=y_0", em, state(em)), ("y_plus", y_out, state(y_out))]
        return MultiState("on_envelope", roots, d, x, t)
    if x < xp:
        y = _solve_piece(surface, x, t, lo, em, seed_in(lo, em), True)
        return MultiState("outside_plus", [("y_minus", y, state(y))], d, x, t)
    if x > xm:
        y = _solve_piece(surface, x, t, ep, hi, seed_in(ep, hi), True)
        return MultiState("outside_minus", [("y_plus", y, state(y))], d, x, t)
    ym = _solve_piece(surface, x, t, lo, em, seed_in(lo, em), True)
    y0 = _solve_piece(surface, x, t, em, ep, seed_in(em, ep), False)
    yp = _solve_piece(surface, x, t, ep, hi, seed_in(ep, hi), True)
    if ym is None or y0 is None or yp is None:
        raise BranchLoss("a branch of the inverse left the y range", x=x, t=t)
    return MultiState("inside_cusp", [("y_minus", ym, state(ym)), ("y_0", y0, state(y0)),
                                      ("y_plus", yp, state(yp))], d, x, t)


# ------------------------------------------------------------ pre-shock

@dataclass(frozen=True)
class PreshockCurve:
    t: np.ndarray
    phi: np.ndarray
    speed: np.ndarray
    x_plus: np.ndarray
    x_minus: np.ndarray

    @property
    def tau(self) -> np.ndarray:
        return self.t - self.t[0]

    def at(self, t):
        return np.interp(t, self.t, self.phi)


def outer_states(grid, bp: BlowupPoint, x: float, t: float, branches=None):
    """(y_minus, y_plus) outermost preimages at (x, t) inside the cusp."""
    ms = classify_and_roots(grid, bp, x, t, branches)
    if t > bp.T_eps and ms.region != "inside_cusp":
        raise LeftCuspInterior("pre-shock iterate left the cusp", x=x, t=t, region=ms.region)
    ys = ms.ys
    return ys[0], ys[-1]


def preshock_speed(grid, bp: BlowupPoint, x: float, t: float, branches=None) -> float:
    if t <= bp.T_eps:
        return bp.lambda_at_bp
    ym, yp = outer_states(grid, bp, x, t, branches)
    u_minus = grid.u_at(np.array([ym]), t)[0]
    u_plus = grid.u_at(np.array([yp]), t)[0]
    return float(averaged_speed(grid.ns.model, u_plus, u_minus, grid.i))


def preshock_curve(grid, bp: BlowupPoint, branches: EnvelopeBranches, t_end: float,
                   count: int = 80, tau_min: float = 1e-6, t_samples=None) -> PreshockCurve:
    """RK4 on the averaged speed of the outer branches, from (x_eps, T_eps)."""
    if t_samples is None:
        t_samples = bp.T_eps + np.geomspace(tau_min, t_end - bp.T_eps, count)
    ts = np.concatenate([[bp.T_eps], np.asarray(t_samples, dtype=float)])
    phi = np.empty_like(ts)
    speed = np.empty_like(ts)
    phi[0] = bp.x_eps
    speed[0] = bp.lambda_at_bp

    def rhs(t, x):
        return preshock_speed(grid, bp, x, t, branches)

    for k in range(1, ts.size):
        t, x = ts[k - 1], phi[k - 1]
        target = ts[k]
        halvings = 0
        while t < target - 1e-15:
            h = target - t
            while True:
                try:
                    k1 = rhs(t, x)
                    k2 = rhs(t + 0.5 * h, x + 0.5 * h * k1)
                    k3 = rhs(t + 0.5 * h, x + 0.5 * h * k2)
                    k4 = rhs(t + h, x + h * k3)
                    break
                except LeftCuspInterior:
                    halvings += 1
                    h *= 0.5
                    if halvings > 30:
                        raise
            x = x + h * (k1 + 2.0 * k2 + 2.0 * k3 + k4) / 6.0
            t = t + h
        phi[k] = x
        speed[k] = rhs(ts[k], x)
    xp = np.full_like(ts, bp.x_eps)
    xm = np.full_like(ts, bp.x_eps)
    guess = None
    for k in range(1, ts.size):
        em, ep = envelope_at(grid, bp, ts[k], guess)
        guess = (em, ep)
        xm[k], xp[k] = _phi(grid, em, ts[k]), _phi(grid, ep, ts[k])
    return PreshockCurve(ts, phi, speed, xp, xm)


# ---------------------------------------------------------- Holder probe

@dataclass(frozen=True)
class HolderReport:
    d: dict  # ray -> d values
    quantities: dict  # (quantity, ray) -> values
    fits: dict  # (quantity, ray) -> LogLogFit
    targets: dict  # quantity -> target slope

    def worst(self, quantity: str) -> tuple:
        """(fit, ray) with the largest deviation from the target slope."""
        target = self.targets[quantity]
        cands = [(abs(f.slope - target), ray, f) for (q, ray), f in self.fits.items() if q == quantity]
        dev, ray, fit = max(cands, key=lambda c: c[0])
        return fit, ray


HOLDER_TARGETS = {"dy": 1.0 / 6.0, "dydx": -1.0 / 3.0, "w_i": 1.0 / 6.0, "w_j": 1.0 / 3.0}


def holder_probe(grid, bp: BlowupPoint, d_range=(1e-12, 1e-6), count: int = 25,
                 rays=("tangent_after", "left", "right"),
                 branches: Optional[EnvelopeBranches] = None) -> HolderReport:
    """Fit local exponents of the inverse map and of the state in d_eps."""
    d_lo, d_hi = d_range
    if np.log10(d_hi / d_lo) < 2.0:
        raise InsufficientRange("d range spans fewer than two decades", d_range=d_range)
    ds = np.geomspace(d_lo, d_hi, count)
    i = grid.i
    v_bp = bp.v
    others = [k for k in range(grid.n) if k != i]
    out_d, quants, fits = {}, {}, {}
    for ray in rays:
        pts = []
        for d in ds:
            if ray == "tangent_after":
                tau = d ** (1.0 / 3.0)
                pts.append((bp.x_eps + bp.lambda_at_bp * tau, bp.T_eps + tau))
            elif ray == "tangent_before":
                tau = d ** (1.0 / 3.0)
                pts.append((bp.x_eps - bp.lambda_at_bp * tau, bp.T_eps - tau))
            elif ray == "left":
                pts.append((bp.x_eps - np.sqrt(d), bp.T_eps))
            elif ray == "right":
                pts.append((bp.x_eps + np.sqrt(d), bp.T_eps))
            else:
                raise ValueError(f"unknown ray {ray}")
        rows = {"dy": [], "dydx": [], "w_i": [], "w_j": []}
        for x, t in pts:
            ms = classify_and_roots(grid, bp, x, t, branches)
            y = ms.ys[-1] if ray != "left" else ms.ys[0]
            v = grid.v_at(np.array([y]), t)[0]
            rows["dy"].append(abs(y - bp.y_eps))
            rows["dydx"].append(abs(1.0 / _phi(grid, y, t, dy=1)))
            rows["w_i"].append(abs(v[i] - v_bp[i]))
            rows["w_j"].append(max((abs(v[k] - v_bp[k]) for k in others), default=0.0))
        dd = np.array([float(anisotropic_distance(bp, x, t)) for x, t in pts])
        out_d[ray] = dd
        for q, vals in rows.items():
            quants[(q, ray)] = np.array(vals)
            if q == "w_j" and not others:
                continue
            fits[(q, ray)] = loglog_fit(dd, vals)
    targets = dict(HOLDER_TARGETS)
    if not others:
        targets.pop("w_j")
    return HolderReport(out_d, quants, fits, targets)
