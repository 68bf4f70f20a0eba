"""Command line entry point.

Exit codes: 0 all rows pass, 1 a stage failed, 2 bad configuration,
3 the pipeline ran but some acceptance row failed.
"""

from __future__ import annotations

import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import click

from ..errors import ConfigError, ShockforgeError
from ..validate import ScalingReport, measure_case, measurement_rows, oracle_rows
from . import artifacts
from .config import load_config
from .pipeline import run_case

EXIT_OK, EXIT_STAGE, EXIT_CONFIG, EXIT_ACCEPT = 0, 1, 2, 3


def thread_cap() -> int:
    raw = os.environ.get("SHOCKFORGE_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        raise ConfigError(f"SHOCKFORGE_THREADS must be an integer, got {raw!r}",
                          field="SHOCKFORGE_THREADS")


def _eps_dir(root: Path, eps: float) -> Path:
    return root / f"eps_{eps:.6g}"


def _run_one(cfg, eps, root, oracles, until="shock"):
    """Run and dump one epsilon. Returns (measurements, oracle rows, error dict or None)."""
    try:
        case = run_case(cfg.case(eps), until=until)
    except ShockforgeError as exc:
        artifacts.write_json(Path(root) / "error.json", exc.as_dict())
        return None, [], exc.as_dict()
    artifacts.write_case(case, root)
    meas = measure_case(case)
    rep = ScalingReport()
    extra = None
    if oracles and case.curve is not None:
        extra = oracle_rows(rep, case, fv_resolution=cfg.fv_resolution)
    single = ScalingReport()
    measurement_rows(single, [meas], cfg.system)
    single.rows.extend(rep.rows)
    artifacts.write_validation(root, single, extra)
    return meas, rep.rows, None


def run_pipeline(cfg, out=None, oracles=False, until="shock", epsilons=None) -> tuple:
    """Run every epsilon of `cfg`; returns (report, errors). Writes report.json."""
    root = Path(out or cfg.output)
    epsilons = list(epsilons or cfg.epsilons)
    jobs = [(cfg, e, _eps_dir(root, e) if len(epsilons) > 1 else root, oracles, until) for e in epsilons]
    workers = min(thread_cap(), len(jobs))
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            results = list(pool.map(_run_one, *zip(*jobs)))
    else:
        results = [_run_one(*job) for job in jobs]
    report = ScalingReport()
    meas = [m for m, _, _ in results if m is not None]
    measurement_rows(report, meas, cfg.system)
    for _, rows, _ in results:
        report.rows.extend(rows)
    errors = {f"{e:g}": err for e, (_, _, err) in zip(epsilons, results) if err is not None}
    summary = report.as_dict()
    summary.update(system=cfg.system, epsilons=epsilons, errors=errors)
    if len(meas) > 1:
        summary["lifespan"] = [[m["epsilon"], m.get("eps_T")] for m in meas]
    artifacts.write_json(root / "report.json", summary)
    return report, errors


def _finish(report, errors):
    for row in report.rows:
        click.echo(f"{'PASS' if row.passed else 'FAIL'}  [{row.criterion}] {row.name}: {row.value:.6g}")
    for eps, err in errors.items():
        click.echo(f"stage failure at eps={eps}: {err['stage']}: {err['error']}: {err['message']}", err=True)
    if errors:
        sys.exit(EXIT_STAGE)
    sys.exit(EXIT_OK if report.passed else EXIT_ACCEPT)


def _guarded(fn):
    """Map configuration problems to exit code 2 and stage failures to 1."""
    import functools

    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except ConfigError as exc:
            where = ""
            if exc.details.get("line") is not None:
                where = f" (line {exc.details['line']}, column {exc.details.get('column')})"
            field = exc.details.get("field")
            click.echo(f"config error{where}: {exc}" + (f" [{field}]" if field else ""), err=True)
            sys.exit(EXIT_CONFIG)
        except ShockforgeError as exc:
            click.echo(json.dumps(exc.as_dict(), sort_keys=True), err=True)
            sys.exit(EXIT_STAGE)

    return wrapper


config_option = click.option("--config", "config_path", required=True,
                             type=click.Path(dir_okay=False), help="Run configuration file.")
out_option = click.option("--out", default=None, help="Output directory (overrides the config).")


@click.group()
@click.version_option(package_name="artifact")
def main():
    """Shock formation pipeline for small-data hyperbolic systems."""


@main.command()
@config_option
@out_option
@_guarded
def run(config_path, out):
    """Run every stage for each epsilon in the config."""
    cfg = load_config(config_path)
    _finish(*run_pipeline(cfg, out))


@main.command()
@config_option
@click.option("--eps", "eps_list", required=True, help="Comma separated epsilons, e.g. 0.2,0.1,0.05")
@click.option("--until", type=click.Choice(["lifespan", "singularity", "shock"]), default="shock",
              show_default=True, help="Last stage to run for each epsilon.")
@out_option
@_guarded
def sweep(config_path, eps_list, until, out):
    """Run one subtree per epsilon and fit the lifespan limit."""
    cfg = load_config(config_path)
    try:
        epsilons = [float(e) for e in eps_list.split(",") if e.strip()]
    except ValueError:
        raise ConfigError(f"cannot read --eps {eps_list!r}", field="--eps")
    if not epsilons or any(e <= 0 for e in epsilons):
        raise ConfigError("--eps needs positive values", field="--eps")
    _finish(*run_pipeline(cfg, out, until=until, epsilons=epsilons))


@main.group()
def singularity():
    """Blowup point and cusp geometry."""


@singularity.command("classify")
@config_option
@click.option("--point", "points", multiple=True, required=True, help="x,t pair; repeatable.")
@click.option("--eps", type=float, default=None, help="Epsilon (defaults to the first in the config).")
@_guarded
def classify(config_path, points, eps):
    """Region (outside / envelope / multivalued) and preimages of (x, t)."""
    from ..singularity import classify_and_roots

    cfg = load_config(config_path)
    case = run_case(cfg.case(eps if eps is not None else cfg.epsilons[0]), until="singularity",
                    holder=False)
    out = []
    for raw in points:
        try:
            x, t = (float(p) for p in raw.split(","))
        except ValueError:
            raise ConfigError(f"--point expects x,t, got {raw!r}", field="--point")
        ms = classify_and_roots(case.grid, case.blowup, x, t, branches=case.branches,
                                edge_tol=cfg.edge_tol)
        out.append({"x": x, "t": t, "region": ms.region, "d_eps": ms.d_eps,
                    "y": [float(y) for y in ms.ys]})
    click.echo(json.dumps(out, indent=2, sort_keys=True))


@main.group()
def validate():
    """Independent checks against reference solvers."""


@validate.command("all")
@config_option
@out_option
@_guarded
def validate_all(config_path, out):
    """Full pipeline plus finite-volume, exact-path and weak-form comparisons."""
    cfg = load_config(config_path)
    _finish(*run_pipeline(cfg, out, oracles=True))


@main.command()
@click.argument("directory", type=click.Path(file_okay=False))
def report(directory):
    """Print the rows of an existing report.json."""
    path = Path(directory) / "report.json"
    if not path.exists():
        click.echo(f"no report.json in {directory}", err=True)
        sys.exit(EXIT_STAGE)
    data = json.loads(path.read_text())
    for row in data["rows"]:
        click.echo(f"{'PASS' if row['passed'] else 'FAIL'}  [{row['criterion']}] {row['name']}: "
                   f"value {row['value']} target {row['target']} tol {row['tolerance']}")
    if data.get("errors"):
        sys.exit(EXIT_STAGE)
    sys.exit(EXIT_OK if data["passed"] else EXIT_ACCEPT)
