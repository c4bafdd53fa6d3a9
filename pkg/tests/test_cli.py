"""CLI surface: simulate / enumerate / rates / replay."""

import json

import numpy as np
import pytest

from carkit.cli import main
from carkit.harness import load_summary
from carkit.service import TrialStore

PHI_M05 = 0.3085375387259869

SCENARIO = {
    "schema": "carkit.scenario/1",
    "name": "cli-smoke",
    "design": {
        "rho": 0.5,
        "gamma": 0.75,
        "allocation": {"kind": "shifted_normal", "rho": 0.5},
        "feature_map": {"kind": "linear", "p": 1, "include_intercept": False},
        "normalize": False,
        "c1": 0.001,
        "c2": 1000.0,
    },
    "n": [32],
    "covariates": {"kind": "iid", "coords": [{"kind": "normal", "mean": 0.0, "sd": 1.0}]},
    "features_unspecified": [{"name": "x_sq", "terms": [{"coef": 1.0, "powers": [2]}]}],
    "w_streams": [],
    "outcome": None,
    "replications": 80,
    "base_seed": 7,
    "alpha": 0.05,
}

FIXED = dict(SCENARIO, name="cli-fixed", n=[2],
             covariates={"kind": "fixed", "matrix": [[1.0], [1.0]]})


def write(tmp_path, name, payload):
    path = tmp_path / name
    path.write_text(json.dumps(payload))
    return str(path)


def test_simulate_writes_summary(tmp_path, capsys):
    scenario = write(tmp_path, "scenario.json", SCENARIO)
    out_dir = tmp_path / "out"
    assert main(["simulate", "--scenario", scenario, "--out", str(out_dir)]) == 0
    files = sorted(out_dir.glob("summary-*.json"))
    assert len(files) == 1
    summary = load_summary(files[0])
    assert summary.replications == 80
    assert summary.rows[0].n == 32
    assert (out_dir / files[0].name.replace(".json", ".csv")).exists()
    # reps override
    assert main(["simulate", "--scenario", scenario, "--reps", "40",
                 "--out", str(out_dir)]) == 0
    capsys.readouterr()


def test_simulate_stdout(tmp_path, capsys):
    scenario = write(tmp_path, "scenario.json", dict(SCENARIO, replications=20))
    assert main(["simulate", "--scenario", scenario]) == 0
    blob = json.loads(capsys.readouterr().out)
    assert blob["schema"] == "carkit.summary/1"


def test_enumerate_hand_case(tmp_path, capsys):
    scenario = write(tmp_path, "fixed.json", FIXED)
    assert main(["enumerate", "--scenario", scenario]) == 0
    blob = json.loads(capsys.readouterr().out)
    assert blob["n"] == 2
    assert blob["e_imb"] == pytest.approx(PHI_M05, abs=1e-12)
    assert blob["prob_total"] == pytest.approx(1.0, abs=1e-12)

    assert main(["enumerate", "--scenario", scenario,
                 "--alloc", "constant:0.5", "--paths"]) == 0
    blob = json.loads(capsys.readouterr().out)
    assert blob["e_imb"] == pytest.approx(0.5, abs=1e-12)
    assert len(blob["paths"]) == 4


def test_rates_over_summaries(tmp_path, capsys):
    scenario = dict(SCENARIO, n=[64, 128, 256], replications=100)
    path = write(tmp_path, "scenario.json", scenario)
    out_dir = tmp_path / "sums"
    assert main(["simulate", "--scenario", path, "--out", str(out_dir)]) == 0
    capsys.readouterr()
    assert main(["rates", "--in", str(out_dir), "--gamma", "0.75"]) == 0
    blob = json.loads(capsys.readouterr().out)
    assert "slope" in blob and blob["expected_slope"] == 0.75
    assert len(blob["points"]) == 3


def test_rates_empty_dir(tmp_path, capsys):
    assert main(["rates", "--in", str(tmp_path)]) == 1


def test_replay_round_trip(tmp_path, capsys):
    store = TrialStore(tmp_path / "data")
    created = store.create_trial({
        "rho": 0.5, "gamma": 0.5,
        "allocation": {"kind": "truncated_normal", "rho": 0.5},
        "feature_map": {"kind": "linear", "p": 1, "include_intercept": True},
    }, seed=99)
    trial_id = created["trial_id"]
    rng = np.random.default_rng(2)
    arms = [store.enroll(trial_id, [float(v)])["arm"] for v in rng.normal(size=15)]

    assert main(["replay", "--data", str(tmp_path / "data"),
                 "--trial", trial_id]) == 0
    blob = json.loads(capsys.readouterr().out)
    assert blob["matches_log"] is True
    assert blob["arms"] == arms
    assert blob["n"] == 15
