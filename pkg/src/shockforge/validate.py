"""Independent cross-checks: finite volumes, exact scalar shocks, Hugoniot loci, weak form."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.integrate import quad
from scipy.interpolate import CubicSpline, PchipInterpolator
from scipy.optimize import brentq

from .errors import CFLViolation, IncompletePipeline
from .system import FluxModel, InitialData, eigen_batch

# ------------------------------------------------------------ finite volumes


@dataclass
class FVSolution:
    x: np.ndarray  # cell centres
    dx: float
    times: np.ndarray
    states: np.ndarray  # (len(times), Nx, n)
    scheme: str
    cfl: float
    steps: int
    mass_defect: float  # worst relative conservation defect over all steps


def speed_range(model: FluxModel, U: np.ndarray):
    """Smallest and largest characteristic speed at each state."""
    F = model.jac(U)
    if model.n == 1:
        s = F[..., 0, 0]
        return s, s
    if model.n == 2:
        tr = F[..., 0, 0] + F[..., 1, 1]
        det = F[..., 0, 0] * F[..., 1, 1] - F[..., 0, 1] * F[..., 1, 0]
        disc = np.sqrt(np.maximum(0.25 * tr * tr - det, 0.0))
        return 0.5 * tr - disc, 0.5 * tr + disc
    lam = np.linalg.eigvals(F).real
    return lam.min(axis=-1), lam.max(axis=-1)


def godunov_flux(model: FluxModel, uL: np.ndarray, uR: np.ndarray) -> np.ndarray:
    """Exact Riemann flux for a scalar law with at most one sonic point per interface."""
    f = model.f
    fL, fR = f(uL)[..., 0], f(uR)[..., 0]
    dL, dR = model.jac(uL)[..., 0, 0], model.jac(uR)[..., 0, 0]
    lo, hi = np.minimum(uL[..., 0], uR[..., 0]), np.maximum(uL[..., 0], uR[..., 0])
    sonic = (dL * dR < 0)
    a, b = lo.copy(), hi.copy()
    da = model.jac(a[..., None])[..., 0, 0]
    for _ in range(60):
        m = 0.5 * (a + b)
        dm = model.jac(m[..., None])[..., 0, 0]
        left = np.sign(dm) == np.sign(da)
        a = np.where(left, m, a)
        da = np.where(left, dm, da)
        b = np.where(left, b, m)
    fs = f((0.5 * (a + b))[..., None])[..., 0]
    rising = uL[..., 0] <= uR[..., 0]
    cand_min = np.minimum(fL, fR)
    cand_max = np.maximum(fL, fR)
    cand_min = np.where(sonic, np.minimum(cand_min, fs), cand_min)
    cand_max = np.where(sonic, np.maximum(cand_max, fs), cand_max)
    return np.where(rising, cand_min, cand_max)[..., None]


def hll_flux(model: FluxModel, uL: np.ndarray, uR: np.ndarray) -> np.ndarray:
    fL, fR = model.f(uL), model.f(uR)
    lminL, lmaxL = speed_range(model, uL)
    lminR, lmaxR = speed_range(model, uR)
    SL = np.minimum(lminL, lminR)[..., None]
    SR = np.maximum(lmaxL, lmaxR)[..., None]
    width = np.where(SR - SL > 0, SR - SL, 1.0)
    mid = (SR * fL - SL * fR + SL * SR * (uR - uL)) / width
    return np.where(SL >= 0, fL, np.where(SR <= 0, fR, mid))


def fv_reference(model: FluxModel, data: InitialData, t_end: float, resolution: int = 4096,
                 x_range: Optional[tuple] = None, cfl: float = 0.9, record=None,
                 scheme: Optional[str] = None) -> FVSolution:
    """First-order finite volumes with transmissive ends."""
    if resolution < 256:
        raise ValueError("resolution must be at least 256 cells")
    if not 0.0 < cfl <= 1.0:
        raise CFLViolation("Courant number outside (0, 1]", cfl=cfl)
    scheme = scheme or ("godunov" if model.n == 1 else "hll")
    flux = godunov_flux if scheme == "godunov" else hll_flux
    if x_range is None:
        probe = data.state(np.linspace(*data.support, 513))
        lo, hi = speed_range(model, probe)
        reach = max(np.max(np.abs(lo)), np.max(np.abs(hi))) * t_end + 1.0
        x_range = (data.support[0] - reach, data.support[1] + reach)
    edges = np.linspace(x_range[0], x_range[1], resolution + 1)
    dx = edges[1] - edges[0]
    x = 0.5 * (edges[1:] + edges[:-1])
    # cell averages by 4-point Gauss on each cell
    gx, gw = leggauss(4)
    pts = x[:, None] + 0.5 * dx * gx[None, :]
    U = np.einsum("q,cqk->ck", 0.5 * gw, data.state(pts))
    record = np.array(sorted(set([0.0, float(t_end)] + ([] if record is None else list(record)))))
    out = [U.copy()] if record[0] == 0.0 else []
    nxt = 1 if record[0] == 0.0 else 0
    t = 0.0
    steps = 0
    defect = 0.0
    while nxt < record.size:
        lo, hi = speed_range(model, U)
        smax = max(float(np.max(np.abs(lo))), float(np.max(np.abs(hi))), 1e-12)
        dt = cfl * dx / smax
        if t + dt >= record[nxt]:
            dt = record[nxt] - t
        padded = np.concatenate([U[:1], U, U[-1:]])
        F = flux(model, padded[:-1], padded[1:])
        change = -dt / dx * (F[1:] - F[:-1])
        mass_before = U.sum(axis=0) * dx
        U = U + change
        boundary = -dt * (F[-1] - F[0])
        scale = np.maximum(np.abs(mass_before), 1e-300) + np.abs(boundary) + dx * np.abs(U).sum(axis=0)
        defect = max(defect, float(np.max(np.abs(U.sum(axis=0) * dx - mass_before - boundary) / scale)))
        t += dt
        steps += 1
        if t >= record[nxt] - 1e-14:
            out.append(U.copy())
            nxt += 1
    return FVSolution(x, dx, record, np.stack(out), scheme, cfl, steps, defect)


def locate_shock(fv: FVSolution, direction: np.ndarray, window: Optional[Callable] = None) -> np.ndarray:
    """Steepest jump of the projected state per recorded time, refined on three cells."""
    q = fv.states @ np.asarray(direction, dtype=float)
    pos = np.full(fv.times.size, np.nan)
    for a in range(fv.times.size):
        d = np.abs(np.diff(q[a]))
        mid = 0.5 * (fv.x[1:] + fv.x[:-1])
        if window is not None:
            lo, hi = window(fv.times[a])
            d = np.where((mid >= lo) & (mid <= hi), d, -np.inf)
        k = int(np.argmax(d))
        shift = 0.0
        if 0 < k < d.size - 1 and np.all(np.isfinite(d[k - 1:k + 2])):
            den = d[k - 1] - 2.0 * d[k] + d[k + 1]
            if den != 0:
                shift = 0.5 * (d[k - 1] - d[k + 1]) / den
        pos[a] = mid[k] + shift * fv.dx
    return pos


# ------------------------------------------------------------ scalar oracle

def burgers_shock_path(u0: Callable, du0: Callable, times, foot_range=(-np.pi, np.pi),
                       tol: float = 1e-14):
    """Exact shock of u_t + (u^2/2)_x = 0 by the equal-area rule on the initial profile.

    Returns (T, x_start, positions, feet) with feet[k] = (xi_minus, xi_plus).
    """
    grid = np.linspace(*foot_range, 20001)
    k = int(np.argmin(du0(grid)))
    xi0 = brentq(lambda s: du0(s + 1e-7) - du0(s - 1e-7), grid[max(k - 1, 0)], grid[min(k + 1, grid.size - 1)]) \
        if 0 < k < grid.size - 1 else grid[k]
    slope = du0(xi0)
    if slope >= 0:
        raise ValueError("profile has no compressive part")
    T = -1.0 / slope
    h = 1e-4
    third = (du0(xi0 + h) - 2.0 * du0(xi0) + du0(xi0 - h)) / h ** 2

    def residual(xm, xp, t):
        um, up = u0(xm), u0(xp)
        g1 = (xp + t * up) - (xm + t * um)
        area = quad(u0, xm, xp, epsabs=1e-15, epsrel=1e-13, limit=200)[0]
        g2 = area - 0.5 * (xp - xm) * (up + um)
        return np.array([g1, g2]), um, up

    positions, feet = [], []
    xm = xp = xi0
    for t in np.asarray(times, dtype=float):
        if t <= T:
            positions.append(xi0 + t * u0(xi0))
            feet.append((xi0, xi0))
            continue
        if xm == xp:
            eta = np.sqrt(6.0 * (t - T) / (T * t * third))
            xm, xp = xi0 - eta, xi0 + eta
        for _ in range(60):
            G, um, up = residual(xm, xp, t)
            dum, dup = du0(xm), du0(xp)
            J = np.array([[-(1.0 + t * dum), 1.0 + t * dup],
                          [-um + 0.5 * (up + um) - 0.5 * (xp - xm) * dum,
                           up - 0.5 * (up + um) - 0.5 * (xp - xm) * dup]])
            step = np.linalg.solve(J, G)
            xm, xp = xm - step[0], xp - step[1]
            if np.max(np.abs(step)) < tol:
                break
        positions.append(xp + t * u0(xp))
        feet.append((xm, xp))
    return T, xi0 + T * u0(xi0), np.asarray(positions), feet


# ------------------------------------------------------------ Hugoniot oracle

def averaged_jacobian(model: FluxModel, u_ref, u, points: int = 24) -> np.ndarray:
    theta, wts = leggauss(points)
    theta = 0.5 * (theta + 1.0)
    states = u_ref + theta[:, None] * (u - u_ref)
    return np.tensordot(0.5 * wts, model.jac(states), axes=(0, 0))


@dataclass
class HugoniotLocus:
    s: np.ndarray
    states: np.ndarray
    speeds: np.ndarray


def hugoniot_locus(model: FluxModel, u_ref, i: int, s_values) -> HugoniotLocus:
    """States u = u_ref + s (r_i + sum_k d_k r_k) with sigma (u - u_ref) = f(u) - f(u_ref).

    The jump condition is divided by s, which removes the trivial branch, and
    the reduced system (sigma - A_avg(u)) (r_i + sum d_k r_k) = 0 is continued
    in s from s = 0 by Newton's method.
    """
    u_ref = np.asarray(u_ref, dtype=float)
    n = model.n
    lam, _, R = eigen_batch(model, u_ref[None])
    R = R[0]
    lam_i = lam[0, i]
    others = [k for k in range(n) if k != i]
    s_values = np.asarray(s_values, dtype=float)
    order = np.argsort(np.abs(s_values))
    states = np.empty((s_values.size, n))
    speeds = np.empty(s_values.size)
    cache = {}

    def solve(s, d, sigma):
        for _ in range(60):
            direction = R[:, i] + R[:, others] @ d
            u = u_ref + s * direction

            def G(dd, sg):
                dirn = R[:, i] + R[:, others] @ dd
                uu = u_ref + s * dirn
                return (sg * np.eye(n) - averaged_jacobian(model, u_ref, uu)) @ dirn

            g = G(d, sigma)
            J = np.empty((n, n))
            h = 1e-7
            for c, k in enumerate(others):
                e = np.zeros(len(others))
                e[c] = h
                J[:, c] = (G(d + e, sigma) - G(d - e, sigma)) / (2 * h)
            J[:, -1] = direction
            step = np.linalg.solve(J, g)
            d = d - step[:-1]
            sigma = sigma - step[-1]
            if np.max(np.abs(step)) < 1e-15:
                break
        return d, sigma, u_ref + s * (R[:, i] + R[:, others] @ d)

    for sign in (-1.0, 1.0):
        d, sigma = np.zeros(len(others)), lam_i
        for idx in order:
            s = s_values[idx]
            if np.sign(s) != sign and s != 0:
                continue
            if s == 0:
                states[idx], speeds[idx] = u_ref, lam_i
                continue
            d, sigma, u = solve(s, d, sigma)
            states[idx], speeds[idx] = u, sigma
    return HugoniotLocus(s_values, states, speeds)


def hugoniot_match(model: FluxModel, u_ref, i: int, target: Callable, bracket) -> tuple:
    """Point on the i-Hugoniot locus of u_ref where target(u) = 0, by Brent's method."""
    def f(s):
        loc = hugoniot_locus(model, u_ref, i, [0.0, 0.5 * s, s])
        return target(loc.states[-1])

    s = brentq(f, *bracket, xtol=1e-15, rtol=1e-15)
    loc = hugoniot_locus(model, u_ref, i, [0.0, 0.5 * s, s])
    return loc.states[-1], float(loc.speeds[-1])


# ------------------------------------------------------------ weak form

class PiecewiseSolution:
    """Physical state u(x, t) built from the shock-frame fields and the shock path."""

    def __init__(self, ns, curve, fld, phi_shift: Optional[Callable] = None):
        self.ns = ns
        self.curve = curve
        self.fld = fld
        self.phi_spline = CubicSpline(curve.t, curve.phi)
        self.phi_shift = phi_shift
        self._levels = {}

    def phi(self, t):
        base = self.phi_spline(t)
        return base if self.phi_shift is None else base + self.phi_shift(t)

    def _level(self, a: int):
        if a not in self._levels:
            f = self.fld
            with np.errstate(over="ignore", invalid="ignore"):
                self._levels[a] = (PchipInterpolator(f.z_minus, f.w_minus[a], axis=0),
                                   PchipInterpolator(f.z_plus, f.w_plus[a], axis=0))
        return self._levels[a]

    def w(self, x: np.ndarray, t: float) -> np.ndarray:
        """Normalized state at points x and a single time t (cubic in t across levels)."""
        tl = self.fld.t
        k = int(np.clip(np.searchsorted(tl, t) - 2, 0, tl.size - 4))
        stencil = range(k, k + 4)
        x = np.asarray(x, dtype=float)
        z_true = x - self.phi_spline(t)
        left = x < self.phi(t)
        out = np.zeros(x.shape + (self.fld.n,))
        for a in stencil:
            weight = 1.0
            for b in stencil:
                if b != a:
                    weight *= (t - tl[b]) / (tl[a] - tl[b])
            im, ip = self._level(a)
            vals = np.where(left[..., None], im(np.minimum(z_true, 0.0) if self.phi_shift is None else z_true),
                            ip(np.maximum(z_true, 0.0) if self.phi_shift is None else z_true))
            out += weight * vals
        return out

    def u(self, x, t) -> np.ndarray:
        return self.ns.to_u(self.w(x, t))


@dataclass(frozen=True)
class Bump:
    """psi(x, t) = c((x - xc)/rx) c((t - tc)/rt) with c(s) = cos(pi s / 2)^4 on |s| < 1."""
    xc: float
    tc: float
    rx: float
    rt: float

    @staticmethod
    def _c(s):
        inside = np.abs(s) < 1
        c = np.cos(0.5 * np.pi * np.where(inside, s, 1.0))
        return np.where(inside, c ** 4, 0.0)

    @staticmethod
    def _dc(s):
        inside = np.abs(s) < 1
        q = 0.5 * np.pi * np.where(inside, s, 1.0)
        return np.where(inside, -2.0 * np.pi * np.cos(q) ** 3 * np.sin(q), 0.0)

    def values(self, x, t):
        sx, st = (x - self.xc) / self.rx, (t - self.tc) / self.rt
        return self._c(sx) * self._c(st)

    def grad(self, x, t):
        sx, st = (x - self.xc) / self.rx, (t - self.tc) / self.rt
        return (self._dc(sx) / self.rx * self._c(st), self._c(sx) * self._dc(st) / self.rt)

    def norm(self) -> float:
        """W^{1,1} norm: integral of |psi| + |psi_x| + |psi_t|."""
        # integral of cos^4(pi s / 2) over [-1, 1], and of |c'| since c is monotone on each half
        ic, idc = 0.75, 2.0
        return ic * ic * self.rx * self.rt + idc * ic * self.rt + ic * idc * self.rx


@dataclass(frozen=True)
class WeakResidual:
    residual: float
    norm: float
    nodes: int

    @property
    def relative(self) -> float:
        return self.residual / self.norm


def weak_residual(model: FluxModel, solution, psi: Bump, start: int = 16, rtol: float = 1e-12,
                  max_nodes: int = 512) -> WeakResidual:
    """|integral of u psi_t + f(u) psi_x| for a test function supported inside the slab.

    The x-integral is split at the shock so each piece is smooth; Gauss rules
    are doubled until the value stops changing.
    """
    def evaluate(m):
        gt, wt = leggauss(m)
        gx, wx = leggauss(m)
        total = 0.0
        for tq, wq in zip(psi.tc + psi.rt * gt, psi.rt * wt):
            s = float(solution.phi(tq))
            a, b = psi.xc - psi.rx, psi.xc + psi.rx
            pieces = [(a, min(max(s, a), b)), (min(max(s, a), b), b)]
            for lo, hi in pieces:
                if hi - lo <= 0:
                    continue
                xs = 0.5 * (lo + hi) + 0.5 * (hi - lo) * gx
                u = solution.u(xs, tq)
                px, pt = psi.grad(xs, tq)
                integrand = u * pt[:, None] + model.f(u) * px[:, None]
                total = total + wq * 0.5 * (hi - lo) * (wx @ integrand)
        return np.atleast_1d(total)

    m = start
    prev = evaluate(m)
    while m < max_nodes:
        m *= 2
        cur = evaluate(m)
        done = np.max(np.abs(cur - prev)) <= rtol * psi.norm()
        prev = cur
        if done:
            break
    return WeakResidual(float(np.max(np.abs(prev))), psi.norm(), m)


def straddling_bumps(curve, fld, count: int = 20, t_range=None, duty: float = 0.5,
                     rt: float = 0.04) -> list:
    """Test functions centred near the shock with supports inside the shock-frame domain."""
    T = curve.T_eps
    lo, hi = t_range if t_range is not None else (T + 0.1, T + 0.8)
    phi = CubicSpline(curve.t, curve.phi)
    out = []
    centres = np.linspace(lo, hi, count)
    for k, tc in enumerate(centres):
        half = float(fld.half_width(tc + rt))
        rx = duty * half
        offset = (0.25 if k % 2 else -0.25) * rx
        out.append(Bump(float(phi(tc)) + offset, float(tc), rx, rt))
    return out


# ------------------------------------------------------------ scaling report

@dataclass
class ScalingRow:
    name: str
    criterion: int
    target: float
    value: float
    tolerance: float
    passed: bool
    stderr: float = float("nan")
    detail: str = ""

    def as_dict(self) -> dict:
        return {k: (float(v) if isinstance(v, (float, np.floating)) else v)
                for k, v in self.__dict__.items()}


@dataclass
class ScalingReport:
    rows: list = field(default_factory=list)

    def add(self, name, criterion, target, value, tolerance, passed=None, stderr=float("nan"),
            detail="", mode="abs"):
        value = float(value)
        if passed is None:
            if mode == "abs":
                passed = abs(value - target) <= tolerance
            elif mode == "rel":
                passed = abs(value - target) <= tolerance * abs(target)
            elif mode == "below":
                passed = value < tolerance
            elif mode == "above":
                passed = value > tolerance
            else:
                raise ValueError(mode)
        if any(r.name == name for r in self.rows):
            raise ValueError(f"duplicate row {name}")
        self.rows.append(ScalingRow(name, criterion, float(target), value, float(tolerance),
                                    bool(passed) and np.isfinite(value), float(stderr), detail))

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.rows)

    def by_criterion(self) -> dict:
        out = {}
        for r in self.rows:
            out.setdefault(r.criterion, []).append(r)
        return out

    def as_dict(self) -> dict:
        return {"passed": self.passed, "rows": [r.as_dict() for r in self.rows]}


def require(artifacts: dict, *keys):
    missing = [k for k in keys if artifacts.get(k) is None]
    if missing:
        raise IncompletePipeline("pipeline products missing", missing=missing)


# ------------------------------------------------------------ measurements

JUMP_FIT = (1e-3, 0.5)
PATH_FIT = (1e-3, 0.1)


def richardson(eps, values, degree: Optional[int] = None) -> float:
    """Value at eps -> 0 of a least-squares polynomial in eps."""
    eps = np.asarray(eps, dtype=float)
    values = np.asarray(values, dtype=float)
    degree = min(2, eps.size - 1) if degree is None else degree
    return float(np.polyfit(eps, values, degree)[-1])


def measure_case(case) -> dict:
    """Scalar diagnostics of one pipeline run (missing stages give no entries)."""
    from .fits import loglog_fit
    from .shockfit import cubic_jump_diagnostic, separation_diagnostic

    out = {"epsilon": case.epsilon, "T_hat": case.T_hat, "data": case.spec.data,
           "neg_inv_min_N": float(-1.0 / case.seed.N.min())}
    if case.smooth is not None:
        out["t0"] = case.smooth.t0
    bp = case.blowup
    if bp is not None:
        out.update(T_eps=bp.T_eps, eps_T=case.epsilon * bp.T_eps, phi_y=bp.phi_y,
                   phi_yy=bp.phi_yy, phi_yyy=bp.phi_yyy, phi_yt=bp.phi_yt, x_eps=bp.x_eps)
    if case.chart is not None:
        out.update(envelope_exponent=case.chart.envelope_fit.slope,
                   envelope_stderr=case.chart.envelope_fit.stderr,
                   envelope_coefficient=case.chart.normalized_coefficient)
    if case.holder is not None:
        for q in case.holder.targets:
            fit, ray = case.holder.worst(q)
            out[f"holder_{q}"] = fit.slope
            out[f"holder_{q}_decades"] = fit.decades
    curve, diag = case.curve, case.diag
    if curve is not None:
        i = curve.i
        tau = curve.tau
        sel = (tau >= JUMP_FIT[0] * 0.999) & (tau <= JUMP_FIT[1])
        out["jump_i_slope"] = loglog_fit(tau[sel], curve.jumps[sel, i]).slope
        others = [k for k in range(curve.jumps.shape[1]) if k != i]
        if others:
            slopes = [loglog_fit(tau[sel], curve.jumps[sel, k]).slope for k in others]
            out["jump_j_slope"] = max(slopes, key=lambda s: abs(s - 1.5))
            cj = cubic_jump_diagnostic(curve)
            out["cubic_slope"] = float(max(cj.slopes, key=lambda s: abs(s - 3.0)))
            out["cubic_ratio"] = cj.max_ratio
        path = (tau >= PATH_FIT[0] * 0.999) & (tau <= PATH_FIT[1])
        deviation = curve.phi - bp.x_eps - bp.lambda_at_bp * tau
        if np.max(np.abs(deviation[path])) > 1e-10 * (1 + abs(bp.x_eps)):
            out["path_exponent"] = loglog_fit(tau[path], deviation[path]).slope
        out["rh_max"] = float(np.max(curve.rh_residual))
        out["margin_min"] = curve.entropy_margins
    if curve is not None and case.frame is not None:
        sep = separation_diagnostic(case.ns, case.frame, curve, case.epsilon)
        out.update(separation=sep.separation, separation_integral=sep.integral_max,
                   separation_C_hat=sep.C_hat)
    if diag is not None:
        ratios = diag.contraction_ratios[1:]
        out["contraction_max"] = float(max(ratios)) if ratios else 0.0
        out["iterations"] = diag.iterations
        out["converged"] = diag.converged
    return out


def burgers_sine_cusp(epsilon: float, t0: float) -> dict:
    """Cusp derivatives of the map y -> y - eps (t - t0) sin(x0(y)) for u0 = -eps sin.

    y labels positions at the handoff time t0, x0(y) is the starting point.
    """
    a = epsilon * t0
    T = 1.0 / epsilon
    return {"phi_yyy": (T - t0) * epsilon / (1.0 - a) ** 4, "phi_yt": -epsilon / (1.0 - a)}


def measurement_rows(rep: ScalingReport, meas: list, label: str):
    """Report rows from `measure_case` dicts of one system."""
    if len(meas) >= 2 and all("eps_T" in m for m in meas):
        eps = [m["epsilon"] for m in meas]
        limit = richardson(eps, [m["eps_T"] for m in meas])
        target = meas[0]["neg_inv_min_N"]
        rep.add(f"{label}: lifespan limit eps*T", 1, target, limit, 0.05, mode="rel")
    for m in meas:
        tag = f"{label} eps={m['epsilon']:g}"
        if "eps_T" in m and label == "burgers" and m.get("data") == "sine":
            rep.add(f"{tag}: eps*T", 1, 1.0, m["eps_T"], 1e-3, mode="rel")
        if "phi_y" in m:
            rep.add(f"{tag}: |phi_y| at blowup", 2, 0.0, abs(m["phi_y"]), 1e-6, mode="below")
            rep.add(f"{tag}: |phi_yy| at blowup", 2, 0.0, abs(m["phi_yy"]), 1e-6, mode="below")
            rep.add(f"{tag}: phi_yyy > 0", 2, 0.0, m["phi_yyy"], 0.0, mode="above")
            rep.add(f"{tag}: -phi_yt > 0", 2, 0.0, -m["phi_yt"], 0.0, mode="above")
            if label == "burgers" and m.get("data") == "sine":
                exact = burgers_sine_cusp(m["epsilon"], m["t0"])
                for key in ("phi_yyy", "phi_yt"):
                    rep.add(f"{tag}: {key} vs characteristic map", 2, exact[key], m[key], 1e-3,
                            mode="rel")
        if "envelope_exponent" in m:
            rep.add(f"{tag}: envelope exponent", 3, 1.5, m["envelope_exponent"], 0.05,
                    stderr=m["envelope_stderr"])
            rep.add(f"{tag}: envelope coefficient", 3, 2 * np.sqrt(3) / 9,
                    m["envelope_coefficient"], 0.15, mode="rel")
        if "jump_i_slope" in m:
            rep.add(f"{tag}: i-jump exponent", 4, 0.5, m["jump_i_slope"], 0.05)
        if "jump_j_slope" in m:
            rep.add(f"{tag}: j-jump exponent", 4, 1.5, m["jump_j_slope"], 0.10)
        for q, target, tol in (("w_i", 1 / 6, 0.03), ("w_j", 1 / 3, 0.05)):
            if f"holder_{q}" in m:
                slope, decades = m[f"holder_{q}"], m[f"holder_{q}_decades"]
                rep.add(f"{tag}: Holder {q}", 5, target, slope, tol,
                        passed=abs(slope - target) <= tol and decades >= 3,
                        detail=f"{decades:.2f} decades")
        if "path_exponent" in m:
            rep.add(f"{tag}: shock path correction exponent", 5, 2.0, m["path_exponent"], 0.1)
        if "cubic_slope" in m:
            rep.add(f"{tag}: cubic jump slope", 6, 3.0, m["cubic_slope"], 0.2)
        if "rh_max" in m:
            rep.add(f"{tag}: max RH residual", 7, 0.0, m["rh_max"], 1e-12, mode="below")
            rep.add(f"{tag}: min Lax margin", 7, 0.0, m["margin_min"], 0.0, mode="above")
        if "iterations" in m:
            rep.add(f"{tag}: max contraction ratio", 8, 0.0, m["contraction_max"], 1.0, mode="below")
            rep.add(f"{tag}: Picard iterates", 8, 30, m["iterations"], 30,
                    passed=m["converged"] and m["iterations"] <= 30)
        if "separation" in m:
            rep.add(f"{tag}: separation constant", 10, 0.0, m["separation"], 0.0, mode="above")
            rep.add(f"{tag}: fitted C_hat finite", 10, 0.0, m["separation_C_hat"], 0.0,
                    passed=bool(np.isfinite(m["separation_C_hat"])))
    return rep


def scaling_suite(cases, extras=None, minimum: int = 2) -> ScalingReport:
    """Rows for a set of runs of one system at `minimum` or more epsilons.

    `extras` is a list of ready-made rows (oracle comparisons, refinement
    studies) appended as given.
    """
    cases = list(cases)
    if len(cases) < minimum:
        raise IncompletePipeline(f"the scaling suite needs runs at {minimum} or more epsilons",
                                 runs=len(cases))
    rep = ScalingReport()
    measurement_rows(rep, [measure_case(c) for c in cases], cases[0].spec.system)
    for row in extras or []:
        if any(r.name == row.name for r in rep.rows):
            raise ValueError(f"duplicate row {row.name}")
        rep.rows.append(row)
    return rep


# ------------------------------------------------------------ oracle checks

def fv_comparison(case, resolution: int = 4096, offsets=(0.05, 0.25, 0.5, 0.75, 1.0)) -> dict:
    """Shock positions from a first-order FV run against the fitted shock path."""
    from .system import eigen_decompose

    curve, fld = case.curve, case.frame
    T = curve.T_eps
    times = T + np.asarray(offsets, dtype=float)
    times = times[times <= curve.t[-1]]
    fv = fv_reference(case.ns.model, case.data, float(times[-1]), resolution, record=times)
    phi = CubicSpline(curve.t, curve.phi)
    direction = eigen_decompose(case.ns.model, np.zeros(case.ns.model.n)).left[curve.i]

    half = float(fld.half_width(curve.t[0]))

    def window(t):
        return float(phi(t)) - half, float(phi(t)) + half

    found = locate_shock(fv, direction, window)
    keep = np.isin(fv.times, times)
    fv_pos = found[keep]
    fit_pos = phi(fv.times[keep])
    return {"times": fv.times[keep], "fv": fv_pos, "shockfit": fit_pos, "dx": fv.dx,
            "offset_cells": np.abs(fv_pos - fit_pos) / fv.dx, "mass_defect": fv.mass_defect}


def weak_form_check(case, count: int = 20) -> np.ndarray:
    """Relative weak residuals for test functions straddling the fitted shock."""
    sol = PiecewiseSolution(case.ns, case.curve, case.frame)
    T = case.curve.T_eps
    hi = min(T + 0.8, case.curve.t[-1] - 0.1)
    bumps = straddling_bumps(case.curve, case.frame, count=count, t_range=(T + 0.1, hi))
    return np.array([weak_residual(case.ns.model, sol, b).relative for b in bumps])


def burgers_path_error(case, window=(0.05, 1.0)) -> float:
    """Largest distance between the fitted path and the equal-area shock of the same data."""
    curve = case.curve
    data = case.data
    u0 = lambda x: data.state(np.asarray(x, dtype=float))[..., 0]
    h = 1e-6

    def du0(x):
        x = np.asarray(x, dtype=float)
        return (u0(x + h) - u0(x - h)) / (2 * h)

    if data.label == "sine":
        du0 = lambda x: np.where(np.abs(x) <= np.pi, -data.epsilon * np.cos(x), 0.0)
    sel = (curve.tau >= window[0] - 1e-12) & (curve.tau <= window[1] + 1e-12)
    _, _, pos, _ = burgers_shock_path(u0, du0, curve.t[sel])
    return float(np.max(np.abs(pos - curve.phi[sel])))


def oracle_rows(rep: ScalingReport, case, fv_resolution: int = 4096, bumps: int = 20):
    """Oracle-equivalence rows for one run; FV only for systems with at most two fields."""
    tag = f"{case.spec.system} eps={case.epsilon:g}"
    model = case.ns.model
    out = {}
    if model.label == "burgers":
        err = burgers_path_error(case)
        rep.add(f"{tag}: path vs equal-area shock", 9, 0.0, err, 1e-4, mode="below")
        out["path_error"] = err
    if model.n <= 2:
        cmp = fv_comparison(case, fv_resolution)
        rep.add(f"{tag}: FV shock offset in cells", 9, 0.0, float(np.max(cmp["offset_cells"])), 3.0,
                mode="below", detail=f"dx={cmp['dx']:.6g}")
        out["fv"] = cmp
    rel = weak_form_check(case, bumps)
    rep.add(f"{tag}: weak residual / |psi| over {rel.size} bumps", 9, 0.0, float(rel.max()), 1e-7,
            mode="below")
    out["weak"] = rel
    return out
