import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from dlr import io
from dlr.cli import main
from dlr.config import load_config
from dlr.experiment import split_indices

SMALL = """
seed = 1
num_devices = 3
bursts_per_device = 16
n_nodes = 40
filter_taps = 3
input_gain = 1.5
feedback_gain = 1.6
saliency_step = 256
saliency_min_window = 256
saliency_n_nodes = 20
mg_n_nodes = 60
mg_train = 300
mg_test = 100
"""


@pytest.fixture(scope="module")
def work(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    cfg = root / "small.cfg"
    cfg.write_text(SMALL)
    assert main(["synth", "--config", str(cfg), "--out", str(root / "synth"), "--captures",
                 "--quiet"]) == 0
    return root, cfg


def run(*argv):
    return main([str(a) for a in argv])


def test_synth_outputs(work):
    root, _ = work
    data, labels, q = io.read_dataset(root / "synth" / "dataset.dlrd")
    assert data.shape == (48, 256) and q == 3
    manifest = (root / "synth" / "manifest.txt").read_text()
    assert "calibration.raw_linear_accuracy" in manifest
    assert "failures = 0" in manifest
    assert len(list((root / "synth").glob("device-*.dlrc"))) == 3


def test_synth_reproducible(work, tmp_path):
    root, cfg = work
    assert run("synth", "--config", cfg, "--out", tmp_path, "--quiet", "--no-calibration") == 0
    assert (tmp_path / "dataset.dlrd").read_bytes() == (root / "synth" / "dataset.dlrd").read_bytes()


def test_seed_flag_changes_dataset(work, tmp_path):
    root, cfg = work
    assert run("synth", "--config", cfg, "--seed", 2, "--out", tmp_path, "--quiet",
               "--no-calibration") == 0
    assert (tmp_path / "dataset.dlrd").read_bytes() != (root / "synth" / "dataset.dlrd").read_bytes()


def captures(root):
    return sorted(str(p) for p in (root / "synth").glob("device-*.dlrc"))


def test_extract_matches_synth(work, tmp_path):
    root, cfg = work
    assert run("extract", *captures(root), "--config", cfg, "--out", tmp_path, "--quiet") == 0
    a = io.read_dataset(tmp_path / "dataset.dlrd")
    b = io.read_dataset(root / "synth" / "dataset.dlrd")
    np.testing.assert_array_equal(a[0], b[0])
    np.testing.assert_array_equal(a[1], b[1])


def test_corrupt_matches_synth_snr(work, tmp_path):
    root, cfg = work
    assert run("corrupt", *captures(root), "--config", cfg, "--out", tmp_path / "c", "--quiet") == 0
    assert run("synth", "--config", cfg, "--snr", "20,30", "--out", tmp_path / "s", "--quiet",
               "--no-calibration") == 0
    a = io.read_dataset(tmp_path / "c" / "corrupted.dlrd")
    b = io.read_dataset(tmp_path / "s" / "dataset.dlrd")
    np.testing.assert_array_equal(a[0], b[0])
    assert not np.array_equal(a[0], io.read_dataset(root / "synth" / "dataset.dlrd")[0])


def test_train_then_infer_resubstitution(work, tmp_path):
    root, cfg = work
    ds = root / "synth" / "dataset.dlrd"
    assert run("train", ds, "--config", cfg, "--out", tmp_path, "--quiet") == 0
    report = dict(line.split(" = ", 1) for line in (tmp_path / "report.txt").read_text().splitlines())
    # classify exactly the held-out rows again through the infer path
    data, labels, q = io.read_dataset(ds)
    _, te = split_indices(labels, load_config(cfg))
    io.write_dataset(tmp_path / "test.dlrd", data[te], labels[te], q)
    assert run("infer", tmp_path / "test.dlrd", tmp_path / "weights.dlrw", "--config", cfg,
               "--out", tmp_path, "--quiet") == 0
    inferred = dict(line.split(" = ", 1)
                    for line in (tmp_path / "infer_report.txt").read_text().splitlines())
    assert inferred["accuracy"] == report["accuracy"]
    for i in range(q):
        assert inferred[f"confusion.{i}"] == report[f"confusion.{i}"]


def test_train_deterministic_across_workers(work, tmp_path):
    root, cfg = work
    ds = root / "synth" / "dataset.dlrd"
    for name, workers in (("a", 1), ("b", 1), ("c", 3)):
        assert run("train", ds, "--config", cfg, "--out", tmp_path / name, "--workers", workers,
                   "--quiet") == 0
    for f in ("weights.dlrw", "report.txt"):
        blobs = {(tmp_path / n / f).read_bytes() for n in "abc"}
        assert len(blobs) == 1


def test_raw_features_baseline(work, tmp_path):
    root, cfg = work
    assert run("train", root / "synth" / "dataset.dlrd", "--features", "raw", "--config", cfg,
               "--out", tmp_path, "--quiet") == 0
    assert "features = raw" in (tmp_path / "report.txt").read_text()
    assert not (tmp_path / "weights.dlrw").exists()


def test_infer_hash_mismatch_exit_3(work, tmp_path):
    root, cfg = work
    ds = root / "synth" / "dataset.dlrd"
    assert run("train", ds, "--config", cfg, "--out", tmp_path, "--quiet") == 0
    other = tmp_path / "other.cfg"
    other.write_text(SMALL.replace("input_gain = 1.5", "input_gain = 0.7"))
    assert run("infer", ds, tmp_path / "weights.dlrw", "--config", other, "--out", tmp_path,
               "--quiet") == 3


def test_infer_class_mismatch_exit_3(work, tmp_path):
    root, cfg = work
    ds = root / "synth" / "dataset.dlrd"
    assert run("train", ds, "--config", cfg, "--out", tmp_path, "--quiet") == 0
    data, labels, _ = io.read_dataset(ds)
    io.write_dataset(tmp_path / "wide.dlrd", data, labels, num_classes=5)
    assert run("infer", tmp_path / "wide.dlrd", tmp_path / "weights.dlrw", "--config", cfg,
               "--out", tmp_path, "--quiet") == 3


@pytest.mark.parametrize("make_args", [
    lambda root, cfg, tmp: ["train", tmp / "missing.dlrd", "--config", cfg],
    lambda root, cfg, tmp: ["train", root / "synth" / "manifest.txt", "--config", cfg],
    lambda root, cfg, tmp: ["train", root / "synth" / "dataset.dlrd", "--config", tmp / "nope.cfg"],
    lambda root, cfg, tmp: ["stability", "--gain", "-1", "--traversals", "3"],
    lambda root, cfg, tmp: ["extract", root / "synth" / "dataset.dlrd", "--config", cfg],
])
def test_input_errors_exit_2(work, tmp_path, make_args):
    root, cfg = work
    assert run(*make_args(root, cfg, tmp_path), "--out", tmp_path, "--quiet") == 2


def test_unknown_config_key_exit_2(work, tmp_path):
    root, _ = work
    bad = tmp_path / "bad.cfg"
    bad.write_text("n_nodez = 10\n")
    assert run("train", root / "synth" / "dataset.dlrd", "--config", bad, "--out", tmp_path) == 2


def test_split_error_exit_2(tmp_path):
    io.write_dataset(tmp_path / "tiny.dlrd", np.ones((2, 8), np.float32), [0, 1])
    cfg = tmp_path / "t.cfg"
    cfg.write_text("n_nodes = 10\nfilter_taps = 2\nridge_lambda = 1e-3\ntrain_fraction = 0.9\n")
    assert run("train", tmp_path / "tiny.dlrd", "--config", cfg, "--out", tmp_path, "--quiet") == 2


def test_sweep_ranks_known_good_above_degenerate(work, tmp_path):
    root, _ = work
    cfg = tmp_path / "sweep.cfg"
    cfg.write_text(SMALL + "\nridge_lambda = 1e-4\nsweep_train_per_class = 10\n"
                   "grid_feedback_gain = 0.0, 1.6\ngrid_filter_taps = 1, 3\n"
                   "grid_n_nodes = 8, 300\n")
    assert run("sweep", root / "synth" / "dataset.dlrd", "--config", cfg, "--out", tmp_path,
               "--quiet") == 0
    lines = (tmp_path / "sweep.txt").read_text().splitlines()[1:]
    assert len(lines) == 8
    cells = [line.split(None, 3)[3] for line in lines]
    good = cells.index("feedback_gain=1.6, n_nodes=300, filter_taps=3")
    bad = cells.index("feedback_gain=0.0, n_nodes=8, filter_taps=1")
    assert good < bad
    accs = [float(line.split()[1]) for line in lines]
    assert accs == sorted(accs, reverse=True)


def test_saliency_from_config(work, tmp_path):
    _, cfg = work
    assert run("saliency", "--config", cfg, "--out", tmp_path, "--quiet") == 0
    text = (tmp_path / "saliency.txt").read_text()
    assert "best_start" in text and "grid = 0 256 512 768 1024" in text


def test_saliency_from_captures(work, tmp_path):
    root, cfg = work
    assert run("saliency", *captures(root), "--config", cfg, "--out", tmp_path, "--quiet") == 0
    assert (tmp_path / "saliency.txt").exists()


def test_mackey_small(work, tmp_path):
    _, cfg = work
    assert run("mackey", "--config", cfg, "--out", tmp_path, "--quiet", "--compare-layers") == 0
    vals = dict(line.split(" = ") for line in (tmp_path / "mackey.txt").read_text().splitlines())
    assert set(vals) == {"nrmse.persistence", "nrmse.reservoir", "nrmse.reservoir_2layer"}
    assert float(vals["nrmse.reservoir"]) < float(vals["nrmse.persistence"])


def test_stability_command(tmp_path):
    assert run("stability", "--gain", 1.0, "--traversals", 1000, "--alpha", 0.999,
               "--out", tmp_path, "--quiet") == 0
    vals = dict(line.split(" = ") for line in (tmp_path / "stability.txt").read_text().splitlines())
    assert vals["loop_gain_stable"] == "False"
    assert abs(float(vals["average_gain"]) - 0.6310) < 1e-3


def test_fom_command(tmp_path):
    assert run("fom", "--out", tmp_path, "--quiet") == 0
    vals = dict(line.split(" = ", 1) for line in (tmp_path / "fom.txt").read_text().splitlines())
    assert vals["m_dlr"] == "16000"
    assert vals["latency.delta_rc"] == "0.208"
    assert run("fom", "--n", 600, "--out", tmp_path, "--quiet") == 0
    vals = dict(line.split(" = ", 1) for line in (tmp_path / "fom.txt").read_text().splitlines())
    assert vals["c_dlr_infer"] == "7200000"


def test_fom_inputs_file(tmp_path):
    inputs = tmp_path / "in.txt"
    inputs.write_text("n = 400  # smaller loop\nb = 4000\n")
    assert run("fom", "--inputs", inputs, "--out", tmp_path, "--quiet") == 0
    assert "m_dlr = 8000" in (tmp_path / "fom.txt").read_text()
    inputs.write_text("colour = 1\n")
    assert run("fom", "--inputs", inputs, "--out", tmp_path, "--quiet") == 2


def test_console_script_exit_codes(tmp_path):
    exe = Path(sys.executable).with_name("dlr")
    cmd = [str(exe)] if exe.exists() else [sys.executable, "-m", "dlr.cli"]
    ok = subprocess.run(cmd + ["stability", "--gain", "0.5", "--traversals", "2", "--out",
                               str(tmp_path)], capture_output=True, text=True)
    assert ok.returncode == 0 and "loop_gain" in ok.stdout
    quiet = subprocess.run(cmd + ["stability", "--gain", "0.5", "--traversals", "2", "--quiet",
                                  "--out", str(tmp_path)], capture_output=True, text=True)
    assert quiet.stdout == ""
    usage = subprocess.run(cmd + ["train"], capture_output=True, text=True)
    assert usage.returncode == 2
    missing = subprocess.run(cmd + ["train", str(tmp_path / "x.dlrd"), "--out", str(tmp_path)],
                             capture_output=True, text=True)
    assert missing.returncode == 2 and "dlr:" in missing.stderr
