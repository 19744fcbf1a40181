import json
import os

import numpy as np
import pandas as pd
import pytest

from smauq.main import Main, main
from smauq.Study import Study
from smauq.Calibration import Chain, PosteriorSummary
from smauq.Propagation import ConfidenceBand
from smauq.InfoGain import InfoGainReport

SMALL = {
    "grid": {"n_grid": 50, "margin_K": 10.0},
    "doe": {"levels": {"H_sat": [0.03, 0.04], "k": [0.015, 0.025], "T0": [290.0, 310.0]}, "alpha": 0.5},
    "calibration": {
        "parameters": {
            "H_sat": {"lower": 0.02, "upper": 0.05, "initial": 0.03},
            "k": {"lower": 0.01, "upper": 0.03, "initial": 0.025},
        },
        "mcmc": {"n_steps": 300, "adapt_start": 100, "adapt_interval": 100, "log_interval": 0},
    },
    "infogain": {"candidates": [{"name": "one", "stresses_MPa": [150.0]}], "mcmc": {"n_steps": 100}},
}


@pytest.fixture
def small_config(tmp_path):
    path = tmp_path / "config.json"
    path.write_text(json.dumps(SMALL))
    return str(path)


def test_unknown_subcommand_is_a_usage_error(capsys):
    assert main(["fly"]) == 2
    assert "invalid choice" in capsys.readouterr().err


def test_invalid_config_exits_2(tmp_path, capsys):
    path = tmp_path / "bad.json"
    path.write_text(json.dumps({"calibration": {"mcmc": {"n_steps": -1}}}))
    assert main(["simulate", "--config", str(path), "-o", str(tmp_path / "out")]) == 2
    assert "calibration.mcmc.n_steps" in capsys.readouterr().err


def test_output_precedence(tmp_path, monkeypatch):
    monkeypatch.setenv("SMAUQ_OUTPUT", str(tmp_path / "env"))
    assert Main.process_params(["simulate"])["output"] == str(tmp_path / "env")
    assert Main.process_params(["simulate", "-o", str(tmp_path / "flag")])["output"] == str(tmp_path / "flag")
    monkeypatch.delenv("SMAUQ_OUTPUT")
    assert Main.process_params(["simulate"])["output"] == "smauq_output"


def test_flags_override_the_config(small_config):
    params = Main.process_params(["propagate", "--config", small_config, "--seed", "5", "--method", "fosm"])
    config = params["pipeline"]
    assert config.seed == 5
    assert config.method == "fosm"
    assert config.n_grid == 50
    assert config.calibrated == ["H_sat", "k"]


def test_simulate_writes_loops(tmp_path, small_config):
    out = str(tmp_path / "run")
    assert main(["simulate", "--config", small_config, "--stress", "100", "150", "-o", out]) == 0
    frame = pd.read_csv(os.path.join(out, "loops", "loop_150MPa.csv"), comment="#")
    assert list(frame.columns) == ["branch", "T_K", "xi", "eps_t"]
    assert len(frame) == 100
    study = Study.load(os.path.join(out, "study.json"))
    assert study.artifacts["loops"] == ["loops/loop_100MPa.csv", "loops/loop_150MPa.csv"]
    assert study.config["grid"]["n_grid"] == 50


def test_doe_ranks_the_inert_factor_last(tmp_path, small_config):
    out = str(tmp_path / "run")
    assert main(["doe", "--config", small_config, "-o", out]) == 0
    anova = pd.read_csv(os.path.join(out, "doe", "anova.csv"))
    assert list(anova["Source"])[-3:] == ["T0", "Error", "Total"]
    with open(os.path.join(out, "doe", "selected.json")) as fh:
        assert "T0" not in json.load(fh)


def test_calibrate_needs_data(tmp_path, small_config):
    assert main(["calibrate", "--config", small_config, "-o", str(tmp_path / "run")]) == 2


@pytest.mark.slow
def test_simulate_calibrate_propagate_infogain(tmp_path, small_config):
    out = str(tmp_path / "run")
    common = ["--config", small_config, "-o", out, "--seed", "3"]
    assert main(["simulate"] + common) == 0
    data = [os.path.join(out, "loops", f"loop_{s}MPa.csv") for s in (100, 150, 200)]
    assert main(["calibrate", "--data"] + data + common) == 0

    chain = Chain.load(os.path.join(out, "chains", "chain.csv"))
    assert len(chain) == 301
    assert chain.burn_in == 90
    assert chain.seed == 3
    assert chain.config["calibration"]["mcmc"]["n_steps"] == 300
    summary = PosteriorSummary.load(os.path.join(out, "chains", "summary.json"))
    assert summary.names == ["H_sat", "k"]
    assert 0.02 <= summary.mean[0] <= 0.05
    assert os.path.exists(os.path.join(out, "chains", "hist_H_sat.csv"))

    assert main(["propagate", "--method", "fosm", "--stress", "150"] + common) == 0
    band = ConfidenceBand.load(os.path.join(out, "bands", "band_fosm_150MPa.csv"))
    assert np.all(band.width("cooling") >= 0)
    with open(os.path.join(out, "bands", "drivers_150MPa.json")) as fh:
        assert sum(json.load(fh).values()) == pytest.approx(1.0)
    assert main(["propagate", "--method", "direct", "--stress", "150"] + common) == 0
    assert os.path.exists(os.path.join(out, "bands", "band_direct_150MPa.csv"))

    assert main(["infogain"] + common) == 0
    report = InfoGainReport.load(os.path.join(out, "infogain", "report.json"))
    assert report.ranking == ["one"]
    assert np.isfinite(report.results[0].kl)

    study = Study.load(os.path.join(out, "study.json"))
    assert {"loops", "chains", "bands", "infogain"} <= set(study.artifacts)
    assert len(study.command_history) == 6


def test_repeated_runs_write_identical_files(tmp_path, small_config):
    outputs = []
    for name in ("a", "b"):
        out = str(tmp_path / name)
        assert main(["doe", "--config", small_config, "-o", out]) == 0
        assert main(["simulate", "--config", small_config, "--stress", "150", "-o", out]) == 0
        outputs.append(out)
    for relative in ("doe/design.csv", "doe/anova.csv", "doe/selected.json", "loops/loop_150MPa.csv"):
        with open(os.path.join(outputs[0], relative), "rb") as fa, open(os.path.join(outputs[1], relative), "rb") as fb:
            assert fa.read() == fb.read()
