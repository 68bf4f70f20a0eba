"""Stage orchestration: evolve, detect, cusp, shock fit, validate."""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .. import charsolve, normalize, shockfit, singularity, system
from ..errors import OutOfDomain


@dataclass
class CaseSpec:
    system: str = "burgers"
    params: dict = field(default_factory=dict)
    i: Optional[int] = None
    epsilon: float = 0.1
    data: str = "default"  # default | sine | collision
    resolution: int = 256
    t0_fraction: Optional[float] = None
    coupling_step: float = 0.5
    window: float = 3.0
    newton_tol: float = 1e-11
    edge_tol: float = 1e-9
    delta_ext: float = 1.0
    shock: shockfit.ShockControls = field(default_factory=shockfit.ShockControls)
    seed: int = 0
    holder_range: tuple = (1e-12, 1e-6)

    def model(self) -> system.FluxModel:
        params = dict(self.params)
        if self.system == "synthetic_n":
            params.setdefault("seed", self.seed)
        return system.build_model(self.system, **params)


@dataclass
class CaseResult:
    spec: CaseSpec
    ns: normalize.NormalizedSystem
    data: system.InitialData
    T_hat: float
    seed: normalize.BlowupSeed
    smooth: Optional[charsolve.SmoothPhase] = None
    grid: Optional[charsolve.CharGrid] = None
    blowup: Optional[singularity.BlowupPoint] = None
    branches: Optional[singularity.EnvelopeBranches] = None
    chart: Optional[singularity.CuspChart] = None
    holder: Optional[singularity.HolderReport] = None
    init: Optional[tuple] = None
    curve: Optional[shockfit.ShockCurve] = None
    frame: Optional[shockfit.ShockFrameField] = None
    diag: Optional[shockfit.IterateDiag] = None
    timings: dict = field(default_factory=dict)

    @property
    def epsilon(self) -> float:
        return self.spec.epsilon


def make_data(spec: CaseSpec, model, ns) -> system.InitialData:
    if spec.data == "sine":
        return system.sine_data(spec.epsilon, model.n)
    if spec.data == "collision":
        return normalize.collision_data(ns, spec.epsilon)
    if spec.data == "default":
        return system.default_data(model, spec.epsilon, ns.i)
    raise ValueError(f"unknown data kind {spec.data!r}")


STAGES = ("smooth", "blowup", "singularity", "shock")


def run_case(spec: CaseSpec, until: str = "shock", holder: bool = True) -> CaseResult:
    """Run the stages up to and including `until` ("lifespan" is the cheap blowup-only path)."""
    if until == "lifespan":
        return lifespan_case(spec)
    stop = STAGES.index(until)
    clock = time.perf_counter
    model = spec.model()
    i = model.n - 1 if spec.i is None else spec.i
    amplitude = spec.epsilon * (1.0 + (0.35 * (model.n - 1) if spec.data != "sine" else 0.0))
    ns = normalize.build_transform(model, i, box=normalize.chart_box_for(model, amplitude))
    data = make_data(spec, model, ns)
    T_hat, seed = normalize.lifespan_estimate(ns, data)
    res = CaseResult(spec, ns, data, T_hat, seed)
    frac = spec.t0_fraction
    if frac is None:
        frac = 0.85 if spec.data == "collision" else 0.5
    duration = spec.shock.duration
    t_end = T_hat * 1.02 + duration + spec.delta_ext

    # the shock-frame domain reaches lambda* * duration on each side of the shock
    lam0 = system.eigen_batch(model, np.zeros((1, model.n)))[0][0]
    half = max(spec.window, 2.0 * float(np.max(np.abs(lam0))) * duration + 0.75)
    t0 = frac * T_hat
    a, b = data.support
    x_range = (a + min(lam0.min(), 0.0) * t0 - half - 1.0, b + max(lam0.max(), 0.0) * t0 + half + 1.0)

    start = clock()
    res.smooth = charsolve.smooth_evolve(ns, data, t0, resolution=spec.resolution, x_range=x_range,
                                         coupling_step=spec.coupling_step, track=[seed.x0])
    res.timings["smooth"] = clock() - start
    if stop < 1:
        return res

    start = clock()
    y_range = charsolve.blowup_window(ns, res.smooth, res.smooth.tracked[0], half, t_end)
    res.grid = charsolve.solve_blowup_system(ns, res.smooth, t_end, t_focus=T_hat, y_range=y_range,
                                             epsilon=spec.epsilon)
    res.timings["blowup"] = clock() - start
    if stop < 2:
        return res

    start = clock()
    res.blowup = singularity.detect_blowup(res.grid, newton_tol=spec.newton_tol)
    horizon = res.blowup.T_eps + duration
    if horizon > res.grid.trusted_t_max:
        raise OutOfDomain("characteristic grid is not trusted up to the end of the shock interval",
                          needed=horizon, trusted=res.grid.trusted_t_max)
    res.branches = singularity.envelope_branches(res.grid, res.blowup, horizon)
    res.chart = singularity.cusp_chart(res.branches, res.blowup)
    if holder:
        res.holder = singularity.holder_probe(res.grid, res.blowup, d_range=spec.holder_range,
                                              branches=res.branches)
    res.timings["singularity"] = clock() - start
    if stop < 3:
        return res

    start = clock()
    res.init = shockfit.init_first_approximation(res.grid, res.blowup, res.branches,
                                                 controls=spec.shock)
    res.curve, res.frame, res.diag = shockfit.iterate_to_convergence(
        ns, res.init, spec.shock, epsilon=spec.epsilon)
    res.timings["shock"] = clock() - start
    return res


def refit_shock(res: CaseResult, controls: shockfit.ShockControls):
    """Shock fit on the same characteristic grid with other controls (mesh studies)."""
    init = shockfit.init_first_approximation(res.grid, res.blowup, res.branches, controls=controls)
    return shockfit.iterate_to_convergence(res.ns, init, controls, epsilon=res.epsilon)


def lifespan_case(spec: CaseSpec, overshoot: float = 0.1) -> CaseResult:
    """Blowup point only, from a characteristic grid that stops shortly after the estimate."""
    clock = time.perf_counter
    model = spec.model()
    i = model.n - 1 if spec.i is None else spec.i
    ns = normalize.build_transform(model, i, box=normalize.chart_box_for(model, 1.35 * spec.epsilon))
    data = make_data(spec, model, ns)
    T_hat, seed = normalize.lifespan_estimate(ns, data)
    res = CaseResult(spec, ns, data, T_hat, seed)
    frac = spec.t0_fraction if spec.t0_fraction is not None else 0.5
    start = clock()
    res.smooth = charsolve.smooth_evolve(ns, data, frac * T_hat, resolution=spec.resolution,
                                         coupling_step=spec.coupling_step, track=[seed.x0])
    res.timings["smooth"] = clock() - start
    start = clock()
    t_end = T_hat * (1.0 + overshoot)
    y_range = charsolve.blowup_window(ns, res.smooth, res.smooth.tracked[0], spec.window, t_end)
    res.grid = charsolve.solve_blowup_system(ns, res.smooth, t_end, t_focus=T_hat, y_range=y_range,
                                             epsilon=spec.epsilon)
    res.timings["blowup"] = clock() - start
    res.blowup = singularity.detect_blowup(res.grid, newton_tol=spec.newton_tol)
    return res
