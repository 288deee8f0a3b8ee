"""Command-line interface: exit codes, artifacts, config precedence."""

import json
import os

import numpy as np
import pytest
from click.testing import CliRunner

from ibstokes import cli

DATA = os.path.join(os.path.dirname(__file__), "data")
BUMP_TABLE = os.path.join(DATA, "bump_table.csv")


@pytest.fixture()
def runner():
    return CliRunner()


def read_manifest(out_dir):
    with open(os.path.join(out_dir, "manifest.json")) as fh:
        return json.load(fh)


def test_certify_bump(runner, tmp_path):
    out = str(tmp_path / "run")
    result = runner.invoke(cli.main, ["kernel", "certify", "--out", out])
    assert result.exit_code == 0, result.output
    manifest = read_manifest(out)
    assert manifest["passed"] is True
    assert manifest["results"]["m1"] == pytest.approx(0.6515888, abs=1e-5)
    with open(os.path.join(out, "certificate.json")) as fh:
        cert = json.load(fh)
    assert set(cert) >= {"m1", "m2", "m1_directional"}


def test_certify_two_scale(runner, tmp_path):
    out = str(tmp_path / "run")
    result = runner.invoke(cli.main, ["kernel", "certify", "--type",
                                      "two_scale", "--out", out])
    assert result.exit_code == 0, result.output
    manifest = read_manifest(out)
    assert abs(manifest["results"]["m1"]) < 1e-8
    with open(os.path.join(out, "certificate.json")) as fh:
        cert = json.load(fh)
    assert 0.0 < cert["c"] < 1.0


def test_certify_unattainable_tolerance(runner, tmp_path):
    result = runner.invoke(cli.main, ["kernel", "certify", "--type",
                                      "two_scale", "--tolerance", "1e-15",
                                      "--out", str(tmp_path / "run")])
    assert result.exit_code == 2


def test_certify_peskin(runner, tmp_path):
    out = str(tmp_path / "run")
    result = runner.invoke(cli.main, ["kernel", "certify", "--type",
                                      "peskin", "--out", out])
    assert result.exit_code == 0, result.output
    manifest = read_manifest(out)
    assert manifest["results"]["m1"] > 0.0


def test_aux_table_build(runner, tmp_path):
    out = str(tmp_path / "run")
    result = runner.invoke(cli.main, ["aux-table", "--x-max", "20",
                                      "--n", "512", "--out", out])
    assert result.exit_code == 0, result.output
    manifest = read_manifest(out)
    assert abs(manifest["results"]["int_f2_minus_4m1"]) < 1e-6
    assert os.path.exists(os.path.join(out, "aux_table.csv"))


def test_model_problem(runner, tmp_path):
    out = str(tmp_path / "run")
    result = runner.invoke(cli.main, ["model-problem", "--out", out])
    assert result.exit_code == 0, result.output
    manifest = read_manifest(out)
    assert manifest["passed"] is True
    t = manifest["results"]["tangential"]
    assert t["extras"]["coefficient_rel_err"] < 0.05
    assert os.path.exists(os.path.join(out, "model_problem_rates.csv"))


def test_model_problem_deterministic(runner, tmp_path):
    args = ["model-problem", "--f1", "0.5"]
    r1 = runner.invoke(cli.main, args + ["--out", str(tmp_path / "a")])
    r2 = runner.invoke(cli.main, args + ["--out", str(tmp_path / "b")])
    assert r1.exit_code == 0 and r2.exit_code == 0
    with open(tmp_path / "a" / "model_problem_rates.csv", "rb") as fh:
        bytes_a = fh.read()
    with open(tmp_path / "b" / "model_problem_rates.csv", "rb") as fh:
        bytes_b = fh.read()
    assert bytes_a == bytes_b
    # manifests agree apart from the output directory itself
    ma, mb = read_manifest(tmp_path / "a"), read_manifest(tmp_path / "b")
    ma["config"].pop("out_dir")
    mb["config"].pop("out_dir")
    assert ma == mb


def test_config_file_and_flag_precedence(runner, tmp_path):
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text(json.dumps({"f1": 0.0, "f2": 1.0}))
    out = str(tmp_path / "run")
    result = runner.invoke(cli.main, ["model-problem", "--config",
                                      str(cfg_path), "--f2", "2.0",
                                      "--out", out])
    assert result.exit_code == 0, result.output
    manifest = read_manifest(out)
    assert manifest["config"]["f1"] == 0.0       # from the file
    assert manifest["config"]["f2"] == 2.0       # flag wins
    assert manifest["results"]["tangential"]["extras"].get("below_floor") \
        is True


def test_config_unknown_key_rejected(runner, tmp_path):
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text(json.dumps({"nonsense": 1}))
    result = runner.invoke(cli.main, ["model-problem", "--config",
                                      str(cfg_path),
                                      "--out", str(tmp_path / "run")])
    assert result.exit_code == 2
    assert "unknown keys" in result.output


def test_config_invalid_json_rejected(runner, tmp_path):
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text("{not json")
    result = runner.invoke(cli.main, ["model-problem", "--config",
                                      str(cfg_path),
                                      "--out", str(tmp_path / "run")])
    assert result.exit_code == 2


def test_table_kernel_mismatch(runner, tmp_path):
    result = runner.invoke(cli.main, ["static-error", "--kernel", "two_scale",
                                      "--table", BUMP_TABLE,
                                      "--out", str(tmp_path / "run")])
    assert result.exit_code == 2
    assert "was built for kernel" in result.output


def test_static_error_passes(runner, tmp_path):
    out = str(tmp_path / "run")
    result = runner.invoke(cli.main, ["static-error", "--table", BUMP_TABLE,
                                      "--bandwidth", "256",
                                      "--rough-boost", "4",
                                      "--out", out])
    assert result.exit_code == 0, result.output
    manifest = read_manifest(out)
    assert manifest["passed"] is True
    assert manifest["results"]["l2"]["passed"] is True
    assert os.path.exists(os.path.join(out, "static_error_rates.csv"))
    data = np.loadtxt(os.path.join(out, "static_error_rates.csv"),
                      delimiter=",", skiprows=1)
    assert data.shape == (6, 4)


def test_evolve_exact(runner, tmp_path):
    out = str(tmp_path / "run")
    result = runner.invoke(cli.main, ["evolve", "--bandwidth", "16",
                                      "--T", "0.05", "--dt", "0.01",
                                      "--stride", "1", "--snapshots",
                                      "--out", out])
    assert result.exit_code == 0, result.output
    manifest = read_manifest(out)
    assert manifest["passed"] is True
    assert manifest["results"]["energy_max_rise"] <= 1e-8
    assert manifest["results"]["area_rel_drift"] < 1e-5
    assert os.path.exists(os.path.join(out, "trajectory.csv"))
    assert os.path.exists(os.path.join(out, "contour_0000.csv"))
    assert os.path.exists(os.path.join(out, "contour_0005.csv"))


def test_evolve_eps_n(runner, tmp_path):
    out = str(tmp_path / "run")
    result = runner.invoke(cli.main, ["evolve", "--variant", "eps_n",
                                      "--eps", "0.1", "--n", "8",
                                      "--bandwidth", "16",
                                      "--T", "0.04", "--dt", "0.01",
                                      "--stride", "1", "--out", out])
    assert result.exit_code == 0, result.output
    manifest = read_manifest(out)
    assert manifest["results"]["area_rel_drift"] < 1e-6


def test_evolve_missing_eps(runner, tmp_path):
    result = runner.invoke(cli.main, ["evolve", "--variant", "regularized",
                                      "--out", str(tmp_path / "run")])
    assert result.exit_code == 2
    result = runner.invoke(cli.main, ["evolve", "--variant", "eps_n",
                                      "--eps", "0.1",
                                      "--out", str(tmp_path / "run")])
    assert result.exit_code == 2


def test_contour_file_roundtrip(runner, tmp_path):
    from ibstokes import contour as ct
    path = str(tmp_path / "contour.csv")
    ct.save_contour(ct.make_test_contour("perturbed_circle", K=16), path)
    out = str(tmp_path / "run")
    result = runner.invoke(cli.main, ["evolve", "--contour-file", path,
                                      "--T", "0.02", "--dt", "0.01",
                                      "--out", out])
    assert result.exit_code == 0, result.output
