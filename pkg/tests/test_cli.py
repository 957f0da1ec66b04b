import json
import os

import numpy as np
import pytest

from asebeta.cli import EXIT_DATA, main


@pytest.fixture(scope="module")
def truth_path(tmp_path_factory):
    path = tmp_path_factory.mktemp("cfg") / "tiny.json"
    path.write_text(json.dumps(dict(
        kind="beta", mu_true=[0.3, 0.6], alpha_true=[50.0, 50.0],
        S_true=[100.0, 100.0, 50.0], R_true=[0.45, 0.5, 0.55],
        eta_true=[[0.0] * 3] * 2, group_sizes=[8, 8], missing_fraction=0.3)))
    return str(path)


@pytest.fixture(scope="module")
def sim_csv(truth_path, tmp_path_factory):
    out = str(tmp_path_factory.mktemp("sim") / "sim.csv")
    assert main(["simulate", "--truth", truth_path, "--seed", "7",
                 "--out", out]) == 0
    return out


@pytest.fixture(scope="module")
def fit_dir(sim_csv, tmp_path_factory):
    out = str(tmp_path_factory.mktemp("fit") / "run")
    code = main(["fit", "--data", sim_csv, "--model", "ia", "--chains", "2",
                 "--iters", "200", "--seed", "5", "--out", out])
    assert code == 0
    return out


def test_simulate_writes_manifest(sim_csv, truth_path):
    with open(sim_csv + ".manifest.json") as fh:
        manifest = json.load(fh)
    assert manifest["subcommand"] == "simulate"
    assert truth_path in manifest["input_digests"]
    with open(sim_csv) as fh:
        assert fh.readline().startswith("pup,cross,dam,sire,")


def test_fit_outputs(fit_dir):
    names = sorted(os.listdir(fit_dir))
    assert "chain_00.csv" in names and "chain_01.csv" in names
    assert {"manifest.json", "run_manifest.json",
            "summary.csv", "report.txt"} <= set(names)
    with open(os.path.join(fit_dir, "run_manifest.json")) as fh:
        manifest = json.load(fh)
    assert manifest["seed"] == 5
    assert manifest["config"]["model"] == "ia"


def test_fit_rerun_is_byte_identical(sim_csv, fit_dir, tmp_path):
    out = str(tmp_path / "rerun")
    assert main(["fit", "--data", sim_csv, "--model", "ia", "--chains", "2",
                 "--iters", "200", "--seed", "5", "--out", out]) == 0
    for name in ("chain_00.csv", "chain_01.csv", "summary.csv"):
        with open(os.path.join(fit_dir, name), "rb") as a, \
                open(os.path.join(out, name), "rb") as b:
            assert a.read() == b.read()


def test_diagnose_matches_fit_summary(fit_dir, tmp_path, capsys):
    out = str(tmp_path / "diag.csv")
    assert main(["diagnose", "--chains", fit_dir, "--out", out]) == 0
    with open(os.path.join(fit_dir, "summary.csv"), "rb") as a, open(out, "rb") as b:
        assert a.read() == b.read()


def test_diagnose_param_block(fit_dir, capsys):
    assert main(["diagnose", "--chains", fit_dir, "--param", "mu"]) == 0
    captured = capsys.readouterr().out
    assert "mu[0]" in captured and "max over block" in captured


def test_wbc_without_alleles_is_usage_error(sim_csv, tmp_path):
    with pytest.raises(SystemExit) as exc:
        main(["fit", "--data", sim_csv, "--model", "wbc",
              "--out", str(tmp_path / "x")])
    assert exc.value.code == 2


def test_missing_data_file_is_data_error(tmp_path):
    code = main(["fit", "--data", str(tmp_path / "nope.csv"),
                 "--out", str(tmp_path / "x")])
    assert code == EXIT_DATA


def test_malformed_csv_is_data_error(tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("a,b\n1,2\n")
    code = main(["fit", "--data", str(bad), "--out", str(tmp_path / "x")])
    assert code == EXIT_DATA


def test_replicate_pipeline(truth_path, tmp_path, capsys):
    out = str(tmp_path / "rep.csv")
    code = main(["replicate", "--truth", truth_path, "--reps", "2",
                 "--estimators", "mean,bootstrap", "--bootstrap", "200",
                 "--seed", "3", "--out", out])
    assert code == 0
    text = open(out).read()
    assert "coverage_mc_se" in text
    with open(out + ".manifest.json") as fh:
        manifest = json.load(fh)
    assert manifest["config"]["reps"] == 2


def test_wbc_simulate_emits_allele_map(tmp_path):
    cfg = tmp_path / "w.json"
    cfg.write_text(json.dumps(dict(
        kind="wbc", a_true=[-0.3, 0.1, 0.2], m_true=[0.0] * 3, n_crosses=4,
        per_group=5, S_true=[100.0, 50.0], R_true=[0.48, 0.52], alpha=50.0,
        missing_fraction=0.2)))
    out = str(tmp_path / "wsim.csv")
    assert main(["simulate", "--truth", str(cfg), "--seed", "2",
                 "--out", out]) == 0
    lines = open(out + ".alleles.csv").read().strip().splitlines()
    assert lines[0] == "strain,allele"
    assert len(lines) == 4
