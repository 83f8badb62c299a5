import os

import numpy as np
import pytest

from ncgn.cli import main
from ncgn.config import (
    ConfigError,
    DEFAULTS,
    parse_config,
    read_config_file,
    write_resolved,
)


def run(tmp_path, command, *overrides, config=None):
    argv = [command]
    if config is not None:
        argv += ["--config", str(config)]
    argv += [f"out_dir={tmp_path}"] + list(overrides)
    return main(argv)


# ---------------------------------------------------------------- config

def test_default_training_hyperparameters():
    assert DEFAULTS["epochs"] == 300
    assert DEFAULTS["batch"] == 128
    assert DEFAULTS["ema_decay"] == 0.95
    assert DEFAULTS["lr"] == 1e-3
    assert DEFAULTS["nfes"] == 200
    assert DEFAULTS["interpolant.sigma_min"] == 1e-3
    assert DEFAULTS["warmup_epochs"] == 10


def test_precedence_override_beats_file(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("epochs = 5\nlr = 0.01  # comment\n")
    config = parse_config(str(cfg), ["epochs=7"])
    assert config["epochs"] == 7
    assert config["lr"] == 0.01
    assert config["batch"] == DEFAULTS["batch"]


def test_unknown_and_duplicate_keys_rejected(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("epoch = 5\n")
    with pytest.raises(ConfigError, match="epoch"):
        read_config_file(str(cfg))
    cfg.write_text("epochs = 5\nepochs = 6\n")
    with pytest.raises(ConfigError, match="duplicate"):
        read_config_file(str(cfg))
    with pytest.raises(ConfigError, match="key=value"):
        parse_config(None, ["epochs"])
    with pytest.raises(ConfigError, match="integer"):
        parse_config(None, ["epochs=many"])


def test_resolved_round_trip_idempotent(tmp_path):
    config = parse_config(None, ["schedule.kind=linear", "lr=0.005",
                                 f"out_dir={tmp_path}"])
    path = write_resolved(config, str(tmp_path))
    again = parse_config(path)
    assert again == config
    path2 = write_resolved(again, str(tmp_path / "second"))
    assert open(path).read() == open(path2).read()


def test_dotted_key_round_trip(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("schedule.kind = exponential\ninterpolant.kind = ddpm\n")
    config = parse_config(str(cfg))
    assert config["schedule.kind"] == "exponential"
    assert config["interpolant.kind"] == "ddpm"


# ------------------------------------------------------------------- CLI

def test_theory_command_outputs(tmp_path, capsys):
    assert run(tmp_path, "theory") == 0
    out = capsys.readouterr().out
    assert "ncgn theory:" in out
    lines = (tmp_path / "theory.csv").read_text().strip().split("\n")
    assert lines[0] == "snr,r_star,mi"
    assert len(lines) == 13  # 12 SNRs
    r_stars = [float(l.split(",")[1]) for l in lines[1:]]
    assert all(0 < r < 1 for r in r_stars)
    assert all(b <= a + 1e-10 for a, b in zip(r_stars, r_stars[1:]))
    prop = (tmp_path / "prop1.csv").read_text().strip().split("\n")
    assert prop[0] == "t,rho,as_printed,covariance_consistent,mc,printed_closer"
    assert len(prop) == 26  # 5x5 grid
    assert (tmp_path / "config.resolved").exists()


def test_theory_byte_identical_across_runs(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert run(a, "theory", "seed=5") == 0
    assert run(b, "theory", "seed=5") == 0
    for name in ("theory.csv", "prop1.csv"):
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_eval_missing_dataset_exits_one(tmp_path, capsys):
    missing = tmp_path / "nope"
    assert run(tmp_path, "eval", f"dataset={missing}") == 1
    err = capsys.readouterr().err
    assert str(missing) in err


def test_eval_requires_dataset_key(tmp_path, capsys):
    assert run(tmp_path, "eval") == 1
    assert "dataset" in capsys.readouterr().err


def test_unknown_override_exits_one(tmp_path, capsys):
    assert run(tmp_path, "theory", "snr=3") == 1
    assert "snr" in capsys.readouterr().err


def test_simulate_sample_eval_pipeline(tmp_path, capsys):
    data = tmp_path / "data"
    # tiny dataset; n_train/n_test are graph counts
    assert run(data, "simulate-data", "n_train=3", "n_test=2") == 0
    assert (data / "manifest").exists()

    work = tmp_path / "work"
    assert run(work, "train", f"dataset={data}", "epochs=2", "batch=2",
               "warmup_epochs=1", "hdim=8", "layers=1") == 0
    assert (work / "ema.ckpt").exists() and (work / "model.ckpt").exists()
    loss_lines = (work / "loss.csv").read_text().strip().split("\n")
    assert loss_lines[0] == "epoch,step,loss,lr"

    assert run(work, "sample", f"dataset={data}", "epochs=2", "batch=2",
               "warmup_epochs=1", "hdim=8", "layers=1", "nfes=4",
               "n_samples=2") == 0
    samples = sorted(os.listdir(work / "samples"))
    assert samples == ["00000.graph", "00001.graph"]

    assert run(work, "eval", f"dataset={data}") == 0
    metrics = (work / "metrics.csv").read_text().strip().split("\n")
    assert metrics[0] == "task,method,mp_kind,w2_mean,w2_std,seed"
    assert len(metrics) == 2
    assert "(pool smaller than subsample)" in capsys.readouterr().out


def test_sample_random_pred_needs_no_checkpoint(tmp_path):
    data = tmp_path / "data"
    assert run(data, "simulate-data", "n_train=2", "n_test=2") == 0
    work = tmp_path / "work"
    assert run(work, "sample", f"dataset={data}", "method=random_pred",
               "n_samples=3") == 0
    assert len(os.listdir(work / "samples")) == 3


def test_sample_without_checkpoint_exits_one(tmp_path, capsys):
    data = tmp_path / "data"
    assert run(data, "simulate-data", "n_train=2", "n_test=1") == 0
    work = tmp_path / "work"
    assert run(work, "sample", f"dataset={data}", "hdim=8", "layers=1") == 1
    assert "checkpoint" in capsys.readouterr().err


def test_make_shapes_and_gw_study(tmp_path):
    data = tmp_path / "shapes"
    assert run(data, "make-shapes", "n_train=4", "n_test=2",
               "n_points=24") == 0
    work = tmp_path / "work"
    assert run(work, "gw-study", f"dataset={data}", "n_shapes=2", "n_seeds=1",
               "gw.iters=10") == 0
    gw_lines = (work / "gw.csv").read_text().strip().split("\n")
    assert gw_lines[0] == "t,clusters,gw_mean"
    assert len(gw_lines) == 26  # 5 noise levels x 5 cluster counts
    argmin = (work / "gw_argmin.csv").read_text().strip().split("\n")
    assert argmin[0] == "t,argmin_clusters"
    assert len(argmin) == 6


def test_attention_study_command(tmp_path):
    data = tmp_path / "shapes"
    assert run(data, "make-shapes", "n_train=4", "n_test=2",
               "n_points=16") == 0
    work = tmp_path / "work"
    assert run(work, "attention-study", f"dataset={data}",
               "attention.epochs=1", "attention.bins=4") == 0
    lines = (work / "attention.csv").read_text().strip().split("\n")
    assert lines[0] == "t_bucket,bin_lo,bin_hi,weight"
    assert len(lines) == 1 + 9 * 4  # nine buckets, four bins
    for t in ("0.1", "0.9"):
        weights = [float(l.split(",")[3]) for l in lines[1:]
                   if l.split(",")[0] == t]
        assert sum(weights) == pytest.approx(1.0, abs=1e-9)


def test_ablate_depth_command(tmp_path):
    data = tmp_path / "data"
    assert run(data, "simulate-data", "n_train=2", "n_test=1") == 0
    work = tmp_path / "work"
    assert run(work, "ablate-depth", f"dataset={data}", "depths=1 2",
               "epochs=1", "batch=2", "warmup_epochs=0", "hdim=8",
               "nfes=2") == 0
    lines = (work / "depth.csv").read_text().strip().split("\n")
    assert lines[0] == "layers,w2_mean,w2_std"
    assert [l.split(",")[0] for l in lines[1:]] == ["1", "2"]
