import json
import subprocess
import sys

import numpy as np
import pytest

from collab_act.cli import build_parser, main

SUBCOMMANDS = ["gen", "sync", "fit-pca", "codec-check", "train", "ablate", "overfit-exp", "simulate", "latency-report"]
FAST_TRAIN = ["--epochs", "1", "--hidden-size", "8", "--chunk-size", "4"]


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, (json.loads(out) if code == 0 and out.strip() else None), err


@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    path = tmp_path_factory.mktemp("cli") / "d"
    assert main(["gen", "--seed", "7", "--n", "8", "--out", str(path)]) == 0
    return path


def test_gen_then_fit_pca(tmp_path, capsys):
    code, out, err = run(capsys, "gen", "--seed", 7, "--n", 60, "--out", tmp_path / "d")
    assert code == 0 and out["n_trajectories"] == 120 and "wrote" in err
    code, out, _ = run(capsys, "fit-pca", tmp_path / "d", "--tau", 0.96, "--out", tmp_path / "pca.json")
    assert code == 0 and out["k"] == 4 and out["explained_ratio_cum"][-1] >= 0.96
    saved = json.loads((tmp_path / "pca.json").read_text())
    assert saved["k"] == 4 and saved["config"]["tau"] == 0.96


def test_usage_errors(capsys):
    assert main(["gen", "--bogus", "--out", "x"]) == 2
    assert main([]) == 2
    assert main(["nonsense"]) == 2
    assert "usage" in capsys.readouterr().err


@pytest.mark.parametrize("cmd", SUBCOMMANDS)
def test_help_documents_every_flag(cmd, capsys):
    assert main([cmd, "--help"]) == 0
    text = capsys.readouterr().out
    sub = build_parser()._subparsers._group_actions[0].choices[cmd]
    for action in sub._actions:
        for opt in action.option_strings:
            assert opt in text
        if action.option_strings and action.dest != "help":
            assert action.help


def test_train_on_empty_directory(tmp_path, capsys):
    (tmp_path / "empty").mkdir()
    code, _, err = run(capsys, "train", tmp_path / "empty", "--out", tmp_path / "p.ckpt")
    assert code == 1 and "EmptyDataset" in err


def test_config_precedence(tmp_path, dataset, capsys, monkeypatch):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"epochs": 1, "hidden_size": 8, "seed": 5}))
    code, out, _ = run(capsys, "train", dataset, "--out", tmp_path / "a.ckpt", "--config", cfg)
    assert code == 0 and out["config"]["epochs"] == 1 and out["config"]["seed"] == 5
    code, out, _ = run(capsys, "train", dataset, "--out", tmp_path / "b.ckpt", "--config", cfg, "--epochs", 2)
    assert code == 0 and out["config"]["epochs"] == 2 and out["epoch"] == 2
    monkeypatch.setenv("COLLAB_ACT_SEED", "11")
    code, out, _ = run(capsys, "train", dataset, "--out", tmp_path / "c.ckpt", "--config", cfg)
    assert out["config"]["seed"] == 5  # config file beats the environment
    code, out, _ = run(capsys, "train", dataset, "--out", tmp_path / "c.ckpt", *FAST_TRAIN)
    assert out["config"]["seed"] == 11


def test_bad_config(tmp_path, dataset, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"not_an_option": 1}))
    assert main(["train", str(dataset), "--out", str(tmp_path / "p"), "--config", str(cfg)]) == 2
    assert main(["train", str(dataset), "--out", str(tmp_path / "p"), "--learning-rate", "-1"]) == 2
    assert main(["ablate", str(dataset), "--vary", "nope=1,2"]) == 2


def test_seed_env_fallback(tmp_path, monkeypatch):
    monkeypatch.setenv("COLLAB_ACT_SEED", "3")
    assert main(["gen", "--n", "2", "--out", str(tmp_path / "env")]) == 0
    monkeypatch.delenv("COLLAB_ACT_SEED")
    assert main(["gen", "--n", "2", "--seed", "3", "--out", str(tmp_path / "flag")]) == 0
    assert main(["gen", "--n", "2", "--seed", "4", "--out", str(tmp_path / "other")]) == 0
    same = (tmp_path / "env" / "traj_00000.bin").read_bytes() == (tmp_path / "flag" / "traj_00000.bin").read_bytes()
    differ = (tmp_path / "env" / "traj_00000.bin").read_bytes() != (tmp_path / "other" / "traj_00000.bin").read_bytes()
    assert same and differ


def test_sync(tmp_path, capsys):
    t30, t15 = np.arange(61) / 30.0, np.arange(31) / 15.0
    np.savez(tmp_path / "s.npz", ee_position__t=t30, ee_position__samples=np.zeros((61, 3), np.float32),
             hand_joints__t=t15, hand_joints__samples=np.ones((31, 16), np.float32))
    code, out, _ = run(capsys, "sync", tmp_path / "s.npz", "--out", tmp_path / "d")
    assert code == 0 and out["n_frames"] == 21
    np.savez(tmp_path / "gap.npz", hand_joints__t=np.array([0.0, 0.1, 1.0]),
             hand_joints__samples=np.zeros((3, 16), np.float32))
    code, _, err = run(capsys, "sync", tmp_path / "gap.npz", "--out", tmp_path / "g")
    assert code == 1 and "GapExceeded" in err


def test_codec_check(dataset, capsys):
    code, out, _ = run(capsys, "codec-check", dataset, "--n-random", 2000)
    assert code == 0
    assert out["random_pairs"]["position_max_error"] <= 1e-7
    assert out["random_pairs"]["rotation_max_geodesic"] <= 1e-9
    assert out["pca"]["relative_error"] <= 1e-6


def test_train_simulate_report(tmp_path, dataset, capsys):
    code, out, _ = run(capsys, "train", dataset, "--out", tmp_path / "p.ckpt", "--curve", tmp_path / "c.json",
                       *FAST_TRAIN)
    assert code == 0 and (tmp_path / "p.ckpt").exists()
    assert len(json.loads((tmp_path / "c.json").read_text())["curve"]) == 1
    code, out, _ = run(capsys, "simulate", "--policy", tmp_path / "p.ckpt", "--step-cap", 40,
                       "--log", tmp_path / "log.jsonl", "--records", tmp_path / "r.jsonl")
    assert code == 0 and out["status"] in ("done", "step_cap")
    lines = (tmp_path / "log.jsonl").read_text().splitlines()
    assert len(lines) == out["executed_steps"]
    code, rep, _ = run(capsys, "latency-report", tmp_path / "r.jsonl")
    assert code == 0 and rep == out["latency"]


def test_simulate_oracle(capsys):
    code, out, _ = run(capsys, "simulate", "--oracle", "--seed", 2)
    assert code == 0 and out["status"] == "done" and out["phases"] == ["Pick", "Pass", "Done"]
    f = out["frames"]
    assert f["emitted"] == f["consumed"] + f["dropped"]
    assert main(["simulate"]) == 2  # needs --policy or --oracle
    assert main(["simulate", "--oracle", "--chunk-execute-steps", "17"]) == 2


def test_latency_report_empty(tmp_path, capsys):
    (tmp_path / "r.jsonl").write_text("")
    code, _, err = run(capsys, "latency-report", tmp_path / "r.jsonl")
    assert code == 1 and "EmptyInput" in err


def test_ablate_and_overfit(tmp_path, dataset, capsys):
    code, out, _ = run(capsys, "ablate", dataset, "--vary", "use_postprocessing=true,false", "--jobs", 2,
                       "--out", tmp_path / "abl.json", *FAST_TRAIN)
    assert code == 0 and [r["flags"]["use_postprocessing"] for r in out["results"]] == [True, False]
    assert json.loads((tmp_path / "abl.json").read_text())["results"] == out["results"]
    code, out, _ = run(capsys, "overfit-exp", "--n-train", 3, "--n-eval", 2, *FAST_TRAIN)
    assert code == 0 and len(out["aux_loss_same"]) == 1


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "collab_act", "--help"], capture_output=True, text=True)
    assert proc.returncode == 0 and "simulate" in proc.stdout
