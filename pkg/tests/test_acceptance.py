"""The ten acceptance criteria, each at its stated tolerance.

Every test builds the rows for one criterion, prints a single PASS/FAIL
line (also repeated in the pytest terminal summary) and fails if any row
fails.  Run just this file with

    pytest tests/test_acceptance.py -v -s
"""

import time

import numpy as np
import pytest

from shockforge import validate as V
from shockforge.cli.pipeline import CaseSpec, run_case
from shockforge.shockfit import cubic_jump_diagnostic, separation_diagnostic

from conftest import ACCEPTANCE_LINES, LIFESPAN_EPS, timed

TITLES = {
    1: "lifespan limit",
    2: "cusp conditions at the blowup point",
    3: "envelope law",
    4: "jump scalings",
    5: "Holder exponents and shock path correction",
    6: "cubic jump relation",
    7: "Rankine-Hugoniot and entropy exactness",
    8: "contraction of the shock iteration",
    9: "oracle equivalence",
    10: "separation and integral diagnostics",
}


def conclude(criterion, rep):
    bad = [r for r in rep.rows if not r.passed]
    verdict = "PASS" if not bad and rep.rows else "FAIL"
    detail = f"{len(rep.rows) - len(bad)}/{len(rep.rows)} rows"
    if bad:
        detail += "; failing: " + "; ".join(f"{r.name} = {r.value:.6g}" for r in bad)
    line = f"{verdict} criterion {criterion:2d} ({TITLES[criterion]}): {detail}"
    ACCEPTANCE_LINES[criterion] = line
    print("\n" + line)
    for r in rep.rows:
        print(f"    {'ok  ' if r.passed else 'FAIL'} {r.name}: {r.value:.6g} "
              f"(target {r.target:.6g}, tol {r.tolerance:.3g}) {r.detail}")
    assert rep.rows, "no rows produced"
    assert not bad, line


def only(rep, criterion):
    out = V.ScalingReport()
    out.rows = [r for r in rep.rows if r.criterion == criterion]
    return out


@pytest.fixture(scope="module")
def burgers_meas(burgers_case, burgers_case_small):
    return [V.measure_case(burgers_case), V.measure_case(burgers_case_small)]


@pytest.fixture(scope="module")
def euler3_meas(euler3_case):
    return V.measure_case(euler3_case)


@pytest.fixture(scope="module")
def all_rows(burgers_meas, euler3_meas):
    rep = V.ScalingReport()
    V.measurement_rows(rep, burgers_meas, "burgers")
    V.measurement_rows(rep, [euler3_meas], "euler3")
    return rep


def test_criterion_01_lifespan(euler3_lifespans):
    rep = V.ScalingReport()
    start = time.perf_counter()
    for eps in (0.2, 0.1, 0.05, 0.025):
        case = run_case(CaseSpec("burgers", {}, 0, eps, data="sine"), until="lifespan")
        rep.add(f"burgers eps={eps:g}: eps*T", 1, 1.0, eps * case.blowup.T_eps, 1e-3, mode="rel")
    burgers_seconds = time.perf_counter() - start
    meas = [V.measure_case(euler3_lifespans[eps][0]) for eps in LIFESPAN_EPS]
    V.measurement_rows(rep, meas, "euler3")
    seconds = burgers_seconds + sum(euler3_lifespans[eps][1] for eps in LIFESPAN_EPS)
    rep.add("lifespan runs wall time [s]", 1, 120.0, seconds, 120.0, mode="below")
    conclude(1, only(rep, 1))


def test_criterion_02_cusp_conditions(all_rows, euler3_lifespans):
    rep = only(all_rows, 2)
    case, seconds = euler3_lifespans[0.05]
    V.measurement_rows(rep, [V.measure_case(case)], "euler3 default data")
    rep.rows = [r for r in rep.rows if r.criterion == 2]
    (_, elapsed) = timed(run_case, CaseSpec("burgers", {}, 0, 0.1, data="sine"), until="singularity",
                         holder=False)
    rep.add("burgers detection wall time [s]", 2, 60.0, elapsed, 60.0, mode="below")
    rep.add("euler3 eps=0.05 detection wall time [s]", 2, 60.0, seconds, 60.0, mode="below")
    conclude(2, rep)


def test_criterion_03_envelope_law(all_rows):
    conclude(3, only(all_rows, 3))


def test_criterion_04_jump_scalings(all_rows):
    rep = only(all_rows, 4)
    rep.rows = [r for r in rep.rows if r.name.startswith("euler3 eps=0.05")]
    conclude(4, rep)


def test_criterion_05_holder_and_path(all_rows):
    rep = only(all_rows, 5)
    names = [r.name for r in rep.rows]
    assert any("Holder w_j" in n for n in names) and any("path correction" in n for n in names)
    conclude(5, rep)


def test_criterion_06_cubic_relation(all_rows, euler3_case, euler3_refined):
    rep = only(all_rows, 6)
    base = cubic_jump_diagnostic(euler3_case.curve).max_ratio
    fine = cubic_jump_diagnostic(euler3_refined[0]).max_ratio
    rep.add("euler3 eps=0.05: cubic ratio change under mesh halving", 6, 0.0,
            abs(fine - base) / abs(base), 0.2, mode="below", detail=f"{base:.6g} -> {fine:.6g}")
    conclude(6, rep)


def test_criterion_07_rh_and_entropy(all_rows, p_system_case, synthetic_case):
    rep = only(all_rows, 7)
    for label, case in (("p_system", p_system_case), ("synthetic_n", synthetic_case)):
        sub = V.ScalingReport()
        V.measurement_rows(sub, [V.measure_case(case)], label)
        rep.rows += [r for r in sub.rows if r.criterion == 7]
    conclude(7, rep)


def test_criterion_08_contraction(all_rows, p_system_case, synthetic_case):
    rep = only(all_rows, 8)
    for label, case in (("p_system", p_system_case), ("synthetic_n", synthetic_case)):
        sub = V.ScalingReport()
        V.measurement_rows(sub, [V.measure_case(case)], label)
        rep.rows += [r for r in sub.rows if r.criterion == 8]
    systems = {r.name.split(" ")[0] for r in rep.rows}
    assert systems == {"burgers", "euler3", "p_system", "synthetic_n"}
    conclude(8, rep)


def test_criterion_09_oracles(burgers_case, p_system_case, euler3_case):
    rep = V.ScalingReport()
    for case in (burgers_case, p_system_case, euler3_case):
        V.oracle_rows(rep, case, fv_resolution=4096, bumps=20)
    conclude(9, rep)


def test_criterion_10_separation(all_rows, euler3_case, euler3_refined):
    rep = only(all_rows, 10)
    base = separation_diagnostic(euler3_case.ns, euler3_case.frame, euler3_case.curve, 0.05)
    curve, frame, _ = euler3_refined
    fine = separation_diagnostic(euler3_case.ns, frame, curve, 0.05)
    rep.add("euler3 eps=0.05: separation change under mesh halving", 10, 0.0,
            abs(fine.separation - base.separation) / base.separation, 0.2, mode="below",
            detail=f"{base.separation:.6g} -> {fine.separation:.6g}")
    rep.add("euler3 eps=0.05 refined: fitted C_hat finite", 10, 0.0, fine.C_hat, 0.0,
            passed=bool(np.isfinite(fine.C_hat)))
    rep.add("euler3 eps=0.05: max integral of |d_z lambda_i|", 10, np.log(1.5), base.integral_max,
            0.0, passed=bool(np.isfinite(base.integral_max)),
            detail=f"ln(3/2) = {np.log(1.5):.4f}")
    conclude(10, rep)
