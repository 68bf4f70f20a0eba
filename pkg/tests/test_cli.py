import filecmp
import json
from pathlib import Path

import pytest
from click.testing import CliRunner

from shockforge.cli import EXIT_ACCEPT, EXIT_CONFIG, EXIT_OK, EXIT_STAGE, main
from shockforge.cli.config import parse_config
from shockforge.errors import ConfigError

BURGERS = """\
[system]
name = burgers

[data]
kind = sine
epsilon = 0.1

[grid]
fv_resolution = 1024
"""


@pytest.fixture
def runner():
    return CliRunner()


def write(tmp_path, text, name="run.ini"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


def test_field_index_is_one_based_in_files():
    cfg = parse_config("[system]\nname = euler3\ni = 3\n[data]\nepsilon = 0.1\n")
    assert cfg.i == 2
    with pytest.raises(ConfigError) as err:
        parse_config("[system]\nname = euler3\ni = 4\n[data]\nepsilon = 0.1\n")
    assert err.value.details["field"] == "system.i"
    assert err.value.details["line"] == 3


@pytest.mark.parametrize("text, field", [
    ("[system]\nname = burgers\n[data]\nkind = sine\n", "data.epsilon"),
    ("[system]\nname = burgers\n[data]\nepsilon = 0.1\n[grid]\nresolution = 300\n", "grid.resolution"),
    ("[system]\nname = burgers\ncolour = red\n[data]\nepsilon = 0.1\n", "system.colour"),
    ("[system]\nname = nope\n[data]\nepsilon = 0.1\n", "system.name"),
    ("[system]\nname = burgers\n[data]\nepsilon = 0.1, -2\n", "data.epsilon"),
])
def test_config_errors_exit_2_with_field(runner, tmp_path, text, field):
    res = runner.invoke(main, ["run", "--config", write(tmp_path, text), "--out", str(tmp_path / "o")])
    assert res.exit_code == EXIT_CONFIG
    assert field in res.stderr


def test_error_message_points_at_line(runner, tmp_path):
    text = "[system]\nname = burgers\n\n[grid]\nfv_resolution = 1000\n[data]\nepsilon = 0.1\n"
    res = runner.invoke(main, ["run", "--config", write(tmp_path, text), "--out", str(tmp_path / "o")])
    assert res.exit_code == EXIT_CONFIG
    assert "line 5" in res.stderr


def test_missing_file_is_a_config_error(runner, tmp_path):
    res = runner.invoke(main, ["run", "--config", str(tmp_path / "absent.ini")])
    assert res.exit_code == EXIT_CONFIG


def test_run_is_deterministic_and_complete(runner, tmp_path):
    cfg = write(tmp_path, BURGERS)
    outs = [tmp_path / "a", tmp_path / "b"]
    for out in outs:
        res = runner.invoke(main, ["validate", "all", "--config", cfg, "--out", str(out)])
        assert res.exit_code == EXIT_OK, res.stdout + res.stderr
        assert "FAIL" not in res.stdout
    cmp = filecmp.dircmp(outs[0], outs[1])

    def same(c):
        return not (c.diff_files or c.left_only or c.right_only) and all(same(s) for s in c.subdirs.values())

    assert same(cmp)
    a = outs[0]
    for rel in ("report.json", "case.json", "smooth/state.csv", "chargrid/min_k.svg",
                "singularity/cusp.json", "singularity/envelope.svg", "shock/curve.csv",
                "shock/jumps.svg", "validate/fv_comparison.csv", "validate/weak_residuals.csv"):
        assert (a / rel).exists(), rel
    svg = (a / "shock/jumps.svg").read_text()
    assert svg.startswith("<svg") or svg.startswith("<?xml")
    report = json.loads((a / "report.json").read_text())
    assert report["passed"] and report["errors"] == {}


def test_report_command(runner, tmp_path):
    out = tmp_path / "r"
    out.mkdir()
    rows = [{"name": "x", "criterion": 1, "target": 1.0, "value": 1.0, "tolerance": 0.1,
             "passed": True}]
    (out / "report.json").write_text(json.dumps({"passed": True, "rows": rows, "errors": {}}))
    res = runner.invoke(main, ["report", str(out)])
    assert res.exit_code == EXIT_OK and "PASS" in res.stdout
    rows[0]["passed"] = False
    (out / "report.json").write_text(json.dumps({"passed": False, "rows": rows, "errors": {}}))
    assert runner.invoke(main, ["report", str(out)]).exit_code == EXIT_ACCEPT
    assert runner.invoke(main, ["report", str(tmp_path / "none")]).exit_code == EXIT_STAGE


def test_stage_failure_exits_1(runner, tmp_path):
    # handing off after the blowup time makes the smooth stage fail
    text = "[system]\nname = burgers\n[data]\nepsilon = 0.1\nkind = sine\n[grid]\nt0_fraction = 1.2\n"
    res = runner.invoke(main, ["run", "--config", write(tmp_path, text), "--out", str(tmp_path / "o")])
    assert res.exit_code == EXIT_STAGE
    err = json.loads((tmp_path / "o" / "error.json").read_text())
    assert err["error"] == "EarlyCrossing"


def test_classify_regions(runner, tmp_path):
    cfg = write(tmp_path, BURGERS)
    res = runner.invoke(main, ["singularity", "classify", "--config", cfg,
                               "--point", "0.0,10.5", "--point", "1.0,10.5", "--point", "0.0,9.0"])
    assert res.exit_code == EXIT_OK, res.stderr
    got = json.loads(res.stdout)
    assert [g["region"] for g in got] == ["inside_cusp", "outside_minus", "before_blowup"]
    assert len(got[0]["y"]) == 3


def test_sweep_lifespan(runner, tmp_path):
    cfg = write(tmp_path, BURGERS)
    out = tmp_path / "s"
    res = runner.invoke(main, ["sweep", "--config", cfg, "--eps", "0.2,0.1", "--until", "lifespan",
                               "--out", str(out)])
    assert res.exit_code == EXIT_OK, res.stdout + res.stderr
    report = json.loads((out / "report.json").read_text())
    assert [round(e, 6) for e, _ in report["lifespan"]] == [0.2, 0.1]
    assert all(abs(v - 1.0) < 1e-3 for _, v in report["lifespan"])
    assert (out / "eps_0.2").is_dir() and (out / "eps_0.1").is_dir()


def test_bad_eps_list(runner, tmp_path):
    res = runner.invoke(main, ["sweep", "--config", write(tmp_path, BURGERS), "--eps", "a,b"])
    assert res.exit_code == EXIT_CONFIG


def test_example_configs_parse():
    root = Path(__file__).resolve().parent.parent / "configs"
    for path in sorted(root.glob("*.ini")):
        cfg = parse_config(path.read_text(), source=str(path))
        assert cfg.epsilons
