import json

import numpy as np
import pandas as pd
import pytest

from flash_max import network, training
from flash_max.cli import build_parser, main, resolve_config
from flash_max.models import Activation, Experiment, GradientBundle, GroundTruthKind, Setup

TINY = ["--width-half", "4", "--n-train", "50", "--n-val", "200", "--batch-size", "50", "--max-epochs", "20"]


@pytest.mark.parametrize("argv", [
    [],
    ["bogus"],
    ["race", "--bogus"],
    ["race", "--ground-truth", "gaussian_beam"],
    ["ablation", "--activations", "swish"],
    ["eval"],
])
def test_usage_errors_exit_1(argv, capsys):
    with pytest.raises(SystemExit) as info:
        main(argv)
    assert info.value.code == 1


def test_flags_override_the_config_file(tmp_path):
    path = tmp_path / "c.yaml"
    path.write_text("seed: 3\ntrain:\n  width_half: 64\n  activation: cos\nsampling:\n  n_train: 500\n")
    args = build_parser().parse_args([
        "race", "-c", str(path), "-W", "8", "--seed", "9", "-g", "random_solution:4", "--setup", "bc",
        "--target", "0.1", "-o", str(tmp_path / "out"),
    ])
    config = resolve_config(args)
    assert config.experiment is Experiment.RACE
    assert config.seed == 9
    assert config.setup is Setup.BC
    assert config.ground_truth.kind is GroundTruthKind.RANDOM_SOLUTION
    assert config.ground_truth.seed == 4
    assert config.train.width_half == 8
    assert config.train.activation is Activation.COS
    assert config.train.target_rel_error == 0.1
    assert config.sampling.n_train == 500
    assert config.output_dir == tmp_path / "out"


def test_bad_config_exits_1(tmp_path, capsys):
    path = tmp_path / "c.yaml"
    path.write_text("train:\n  width: 8\n")
    assert main(["train", "-c", str(path)]) == 1
    assert "unknown key" in capsys.readouterr().err


def test_verify_exits_0(tmp_path):
    assert main(["verify", "-o", str(tmp_path)]) == 0
    report = json.loads((tmp_path / "verify" / "report.json").read_text())
    assert report["summary"]["failed"] == 0


def test_broken_multiplier_fails_verification(tmp_path, monkeypatch, capsys):
    original = network.noetherian_multiplier

    def flipped(branch, z):
        p = np.array(original(branch, z), dtype=float)
        p[..., 0] = -p[..., 0]
        return p

    monkeypatch.setattr(network, "noetherian_multiplier", flipped)
    assert main(["verify", "-o", str(tmp_path)]) == 2
    assert "check(s) failed" in capsys.readouterr().err


def test_race_command(tmp_path, capsys):
    assert main(["race", "-o", str(tmp_path), "--target", "1.0", "--repeats", "2", *TINY]) == 0
    out = capsys.readouterr().out
    assert "compute_seconds" in out
    table = pd.read_csv(tmp_path / "race-hopf_fibration-ic.csv")
    assert table["seed"].tolist() == [0, 1]


def test_time_budget_without_budget_exits_1(tmp_path):
    assert main(["time-budget", "-o", str(tmp_path), *TINY]) == 1


def test_train_then_eval(tmp_path, capsys):
    assert main(["train", "-o", str(tmp_path), *TINY]) == 0
    run_dir = tmp_path / "train-hopf_fibration-ic-s0"
    assert (run_dir / "curve.csv").is_file()
    assert main(["eval", "-o", str(tmp_path), "--n-val", "100", "--checkpoint", str(run_dir / "checkpoint.json")]) == 0
    assert "rel_l2_error" in capsys.readouterr().out
    history = json.loads((run_dir / "eval.json").read_text())["training"]
    assert history["train_loss"] >= 0.0


def test_numerical_abort_exits_3(tmp_path, monkeypatch):
    monkeypatch.setattr(training, "loss_gradient", lambda params, obs, workers=1: (
        float("inf"), GradientBundle.zeros_like(params)
    ))
    assert main(["train", "-o", str(tmp_path), *TINY]) == 3
    assert (tmp_path / "train-hopf_fibration-ic-s0" / "trainlog.csv").is_file()


def test_exact_init_and_export(tmp_path, capsys):
    terms = tmp_path / "terms.json"
    terms.write_text(json.dumps({"terms": [
        {"xi": [1.0, 0.0, 0.0], "amp_cos": [0, 1, 0, 0, 0, 1]},
        {"xi": [2.0, 1.0, 0.0], "amp_sin": [0, 0, 1, 0, 0, 0]},
    ]}))
    assert main(["exact-init", str(terms), "-o", str(tmp_path)]) == 0
    checkpoint = tmp_path / "exact_init" / "checkpoint.json"
    assert json.loads(checkpoint.read_text())["width_half"] == 4

    assert main(["export-field", "-o", str(tmp_path), "--checkpoint", str(checkpoint),
                 "--resolution", "3", "--times", "0", "0.5"]) == 0
    assert len(pd.read_csv(tmp_path / "export" / "field-checkpoint.csv")) == 54


def test_infeasible_terms_exit_1(tmp_path):
    terms = tmp_path / "terms.json"
    terms.write_text(json.dumps([{"xi": [1.0, 0.0, 0.0], "amp_cos": [1, 0, 0, 0, 0, 0]}]))
    assert main(["exact-init", str(terms), "-o", str(tmp_path)]) == 1
