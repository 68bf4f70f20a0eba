"""Deterministic artifact tree for one pipeline run.

Everything written here depends only on the config and the seed: no
timestamps, no wall-clock timings, floats printed with full precision.
"""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np

from . import svg

SUBDIRS = ("smooth", "chargrid", "singularity", "shock", "validate")


def _num(v):
    if isinstance(v, (bool, np.bool_)):
        return bool(v)
    if isinstance(v, (int, np.integer)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return v if math.isfinite(v) else repr(v)
    if isinstance(v, dict):
        return {str(k): _num(x) for k, x in v.items()}
    if isinstance(v, (list, tuple, np.ndarray)):
        return [_num(x) for x in v]
    return v


def write_json(path: Path, payload):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(_num(payload), indent=2, sort_keys=True) + "\n")


def write_csv(path: Path, rows):
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        out = csv.writer(fh, lineterminator="\n")
        for row in rows:
            out.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])


def write_svg(path: Path, text: str):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)


def write_case(case, root) -> Path:
    """Dump every completed stage of a CaseResult below `root`."""
    root = Path(root)
    for sub in SUBDIRS:
        (root / sub).mkdir(parents=True, exist_ok=True)
    spec = case.spec
    write_json(root / "case.json", {
        "system": spec.system, "params": spec.params, "i": case.ns.i, "epsilon": spec.epsilon,
        "data": spec.data, "resolution": spec.resolution, "seed": spec.seed,
        "T_hat": case.T_hat, "seed_point": case.seed.x0, "N": case.seed.N,
    })

    sp = case.smooth
    if sp is not None:
        n = sp.w.shape[1]
        write_csv(root / "smooth" / "state.csv",
                  [["x"] + [f"w_{k}" for k in range(n)]] + [[x, *w] for x, w in zip(sp.x, sp.w)])
        write_json(root / "smooth" / "summary.json",
                   {"t0": sp.t0, "min_K": sp.min_K, "steps": len(sp.times), "tracked": sp.tracked})

    g = case.grid
    if g is not None:
        minK = g.K.min(axis=1)
        write_csv(root / "chargrid" / "min_k.csv", [["t", "min_K"]] + [[t, k] for t, k in zip(g.t, minK)])
        write_json(root / "chargrid" / "summary.json", {
            "t0": g.t0, "t_range": [g.t[0], g.t[-1]], "y_range": [g.y[0], g.y[-1]],
            "shape": [g.t.size, g.y.size], "trusted_t_max": g.trusted_t_max,
            "picard_iterations": g.picard_iterations, "picard_change": g.picard_change,
        })
        write_svg(root / "chargrid" / "min_k.svg",
                  svg.line_plot([("min K", g.t, minK)], title="focusing factor", xlabel="t"))

    bp = case.blowup
    if bp is not None:
        write_json(root / "singularity" / "blowup.json", {
            "y_eps": bp.y_eps, "T_eps": bp.T_eps, "x_eps": bp.x_eps, "lambda": bp.lambda_at_bp,
            "phi_y": bp.phi_y, "phi_yy": bp.phi_yy, "phi_yyy": bp.phi_yyy, "phi_yt": bp.phi_yt,
            "eps_T": spec.epsilon * bp.T_eps,
        })
    br, chart = case.branches, case.chart
    if br is not None and chart is not None:
        rows = [["t", "tau", "x_minus", "x_plus", "A", "B"]]
        rows += [list(r) for r in zip(br.t_samples, br.tau, br.x_minus, br.x_plus, chart.A, chart.B)]
        write_csv(root / "singularity" / "envelope.csv", rows)
        write_json(root / "singularity" / "cusp.json", {
            "envelope_exponent": chart.envelope_fit.slope, "envelope_stderr": chart.envelope_fit.stderr,
            "normalized_coefficient": chart.normalized_coefficient, "A_fit": chart.A_fit,
            "B_fit": chart.B_fit, "orientation_ok": chart.orientation_ok,
        })
        write_svg(root / "singularity" / "envelope.svg",
                  svg.line_plot([("(x- - x+)/2", br.tau, 0.5 * (br.x_minus - br.x_plus))],
                                title="envelope half-width", xlabel="t - T", logx=True, logy=True))
    hr = case.holder
    if hr is not None:
        rows = [["quantity", "ray", "slope", "stderr", "decades"]]
        for (q, ray), fit in sorted(hr.fits.items()):
            rows.append([q, ray, fit.slope, fit.stderr, fit.decades])
        write_csv(root / "singularity" / "holder.csv", rows)
        series = [(f"{q} {ray}", hr.d[ray], np.abs(vals)) for (q, ray), vals in sorted(hr.quantities.items())
                  if q in ("w_i", "w_j")]
        write_svg(root / "singularity" / "holder.svg",
                  svg.line_plot(series, title="increments against d", xlabel="d", logx=True, logy=True))

    curve = case.curve
    if curve is not None:
        write_csv(root / "shock" / "curve.csv", curve.csv_rows())
        write_json(root / "shock" / "iterates.json", case.diag.as_dict())
        n = curve.jumps.shape[1]
        write_svg(root / "shock" / "jumps.svg",
                  svg.line_plot([(f"[w_{k}]", curve.tau, np.abs(curve.jumps[:, k])) for k in range(n)],
                                title="jumps", xlabel="t - T", logx=True, logy=True))
        write_svg(root / "shock" / "path.svg",
                  svg.line_plot([("shock", curve.t, curve.phi)], title="shock path", xlabel="t"))
    return root


def write_validation(root, report, oracles=None):
    root = Path(root) / "validate"
    write_json(root / "scaling_report.json", report.as_dict())
    if not oracles:
        return
    cmp = oracles.get("fv")
    if cmp is not None:
        rows = [["t", "fv", "shockfit", "offset_cells"]]
        rows += [list(r) for r in zip(cmp["times"], cmp["fv"], cmp["shockfit"], cmp["offset_cells"])]
        write_csv(root / "fv_comparison.csv", rows)
    weak = oracles.get("weak")
    if weak is not None:
        write_csv(root / "weak_residuals.csv", [["bump", "relative"]] + [[k, v] for k, v in enumerate(weak)])
    if "path_error" in oracles:
        write_json(root / "oracle.json", {"path_error": oracles["path_error"]})
