import subprocess
import sys

import numpy as np
import pytest

from pedtrack import lidartrack, plots, segment
from pedtrack.cli import main
from pedtrack.datamodel import read_run, validate_run
from pedtrack.nn import load_model
from pedtrack.nn.train import read_history

SMALL = ["--hidden", "4", "--dense", "4", "--attn-width", "3", "--epochs", "2", "--batch", "8"]


def run(*argv):
    return main([str(a) for a in argv])


@pytest.fixture(scope="module")
def work(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    for k in (0, 1):
        assert run("synth", "--minutes", 0.5, "--seed", k, "--out-dir", d / f"r{k}") == 0
    assert run("segment", "--run", d / "r0/imu.csv", d / "r0/lidar.csv", "--run", d / "r1/imu.csv", d / "r1/lidar.csv",
               "--delay", 0.00389, "--stride", 2.0, "--test-run", 1, "--out-dir", d / "data") == 0
    return d


def test_synth_outputs_are_valid(work):
    imu = read_run(work / "r0/imu.csv", "imu")
    lidar = read_run(work / "r0/lidar.csv", "lidar")
    truth = read_run(work / "r0/truth.csv", "trajectory")
    assert validate_run(imu) == [] and validate_run(lidar) == []
    assert imu.t[-1] == pytest.approx(30.0) and len(lidar.scans) == 1201 and len(truth) > 0


def test_segment_files(work):
    train = segment.read_windows(work / "data/train.txt")
    test = segment.read_windows(work / "data/test.txt")
    assert train and test and all(w.run_id == "run01" for w in test)
    assert train[0].x.shape == (500, 12)
    assert segment.Normalizer.load(work / "data/normalizer.txt").lo.shape == (12,)


def test_track_and_label_path(work, tmp_path):
    assert run("track", "--lidar", work / "r0/lidar.csv", "--delay", 0.00389, "--out-dir", tmp_path) == 0
    labels = lidartrack.read_labels(tmp_path / "labels.csv")
    assert len(labels) >= 10
    assert run("reconstruct", "--labels", tmp_path / "labels.csv", "--start", "1,2", "--out-dir", tmp_path) == 0
    path = read_run(tmp_path / "path.csv", "trajectory")
    assert (path.x[0], path.y[0]) == (1.0, 2.0) and len(path) == len(labels) + 1


def test_sync_simulated(tmp_path):
    assert run("sync", "--recordings", 2, "--out-dir", tmp_path) == 0
    assert (tmp_path / "delay.csv").read_text().startswith("recording,delay_s")


def test_train_predict_eval_reconstruct_plot(work, tmp_path):
    for target in ("dx", "dy"):
        assert run("train", "--data", work / "data", "--target", target, *SMALL, "--out-dir", tmp_path) == 0
        assert len(read_history(tmp_path / f"history_2gru_att_{target}.csv")) == 3
        assert run("predict", "--model", tmp_path / f"model_2gru_att_{target}.txt", "--windows", work / "data/test.txt",
                   "--output", tmp_path / f"{target}.csv") == 0
    assert load_model(tmp_path / "model_2gru_att_dx.txt").config.hidden == 4
    assert run("eval", "--dx", tmp_path / "dx.csv", "--dy", tmp_path / "dy.csv", "--out-dir", tmp_path) == 0
    row = (tmp_path / "eval.csv").read_text().splitlines()[1].split(",")
    assert row[:2] == ["model", "test"] and float(row[2]) >= 0
    assert run("reconstruct", "--dx", tmp_path / "dx.csv", "--dy", tmp_path / "dy.csv", "--out-dir", tmp_path) == 0
    assert run("plot", "--kind", "path", "--series", f"pred={tmp_path / 'path.csv'}",
               f"truth={tmp_path / 'path_truth.csv'}", "--output", tmp_path / "p.svg") == 0
    assert set(plots.read_sidecar(tmp_path / "p.svg")) == {"pred", "truth"}
    assert run("plot", "--kind", "training_curve", "--series", tmp_path / "history_2gru_att_dx.csv",
               "--output", tmp_path / "c.svg") == 0


def test_pdr_reconstruct(work, tmp_path):
    assert run("reconstruct", "--imu", work / "r0/imu.csv", "--out-dir", tmp_path) == 0
    assert len(read_run(tmp_path / "path.csv", "trajectory")) > 20


def test_ablate_and_bar_plot(work, tmp_path):
    assert run("ablate", "--data", work / "data", "--variants", "gru", "2gru", *SMALL, "--out-dir", tmp_path) == 0
    lines = (tmp_path / "ablation.csv").read_text().splitlines()
    assert {ln.split(",")[0] for ln in lines[1:]} == {"gru", "2gru"}
    assert run("plot", "--kind", "bar", "--series", tmp_path / "ablation.csv", "--output", tmp_path / "b.svg") == 0


def test_config_file(work, tmp_path):
    cfg = tmp_path / "c.cfg"
    cfg.write_text("# small model\nhidden = 4\nattn-width = 3\ndense = 4\nepochs = 1\nbatch = 8\n")
    assert run("train", "--data", work / "data", "--target", "dx", "--config", cfg, "--epochs", 2,
               "--out-dir", tmp_path) == 0
    assert len(read_history(tmp_path / "history_2gru_att_dx.csv")) == 3  # flag beats file
    cfg.write_text("colour = red\n")
    assert run("train", "--data", work / "data", "--target", "dx", "--config", cfg) == 2
    cfg.write_text("epochs = many\n")
    assert run("train", "--data", work / "data", "--target", "dx", "--config", cfg) == 2


def test_exit_codes(tmp_path, capsys):
    with pytest.raises(SystemExit) as exc:
        run("train", "--target", "dx")
    assert exc.value.code == 2
    with pytest.raises(SystemExit) as exc:
        run("nonsense")
    assert exc.value.code == 2
    assert run("track", "--lidar", tmp_path / "missing.csv") == 1
    bad = tmp_path / "bad.csv"
    bad.write_text("t,ax,ay,az,gx,gy,gz,mx,my,mz\n0,1,2\n")
    assert run("reconstruct", "--imu", bad) == 1
    assert "bad.csv:2" in capsys.readouterr().err
    assert run("reconstruct", "--out-dir", tmp_path) == 2


def test_module_entry_point():
    out = subprocess.run([sys.executable, "-m", "pedtrack", "--help"], capture_output=True, text=True)
    assert out.returncode == 0 and "synth" in out.stdout
