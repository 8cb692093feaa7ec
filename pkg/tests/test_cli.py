import json
import subprocess
import sys

import numpy as np
import pytest

from nnreg.cli import EXIT_CHECK_FAILED, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_OK, main
from nnreg.data import load_idx, read_idx


def write_config(path, **kw):
    doc = {"task": "mtl_landmarks", "name": "cli", "epochs": 1, "n_points": 6, "side": 16,
           "n_train": 20, "n_valid": 5, "n_test": 5, "x_code": 6, "link_hidden": [],
           "y_code": 4, **kw}
    path.write_text(json.dumps(doc))
    return path


def test_run_and_compare(tmp_path, capsys):
    cfg = write_config(tmp_path / "c.json")
    assert main(["run", str(cfg), "--seeds", "3", "--out", str(tmp_path / "r")]) == EXIT_OK
    doc = json.loads((tmp_path / "r/report.json").read_text())
    assert doc["config"]["seeds"] == [0, 1, 2]
    capsys.readouterr()
    assert main(["compare", str(tmp_path / "r/report.json"), "--metrics", "AUC,valid_mse",
                 "--format", "csv", "--digits", "4"]) == EXIT_OK
    out = capsys.readouterr().out.splitlines()
    assert out[0] == "config,AUC,valid_mse" and out[1].startswith("cli,")
    assert main(["compare", str(tmp_path / "r/report.json"), "--metrics", "nope"]) == EXIT_CONFIG
    assert "nope" in capsys.readouterr().err


def test_run_refuses_existing_output(tmp_path, capsys):
    cfg = write_config(tmp_path / "c.json")
    out = ["--out", str(tmp_path / "r")]
    assert main(["run", str(cfg), *out]) == EXIT_OK
    assert main(["run", str(cfg), *out]) == EXIT_CONFIG
    assert "--force" in capsys.readouterr().err
    assert main(["run", str(cfg), *out, "--force"]) == EXIT_OK


def test_config_errors_exit_2(tmp_path, capsys):
    assert main(["run", str(tmp_path / "missing.json")]) == EXIT_CONFIG
    bad = write_config(tmp_path / "bad.json", momentum="high")
    assert main(["run", str(bad), "--out", str(tmp_path / "o")]) == EXIT_CONFIG
    assert "bad.json.momentum" in capsys.readouterr().err


def test_numerical_abort_exit_3(tmp_path):
    cfg = write_config(tmp_path / "c.json", learning_rate=1e300, momentum=0.0)
    assert main(["run", str(cfg), "--out", str(tmp_path / "o")]) == EXIT_NUMERICAL


def test_gradcheck_and_oracles(capsys):
    assert main(["gradcheck", "--cases", "24"]) == EXIT_OK
    assert "max relative error" in capsys.readouterr().out
    # the early-stopping / L2 match does not hold at alpha = 0.1 (see README)
    assert main(["oracles"]) == EXIT_CHECK_FAILED
    out = capsys.readouterr().out
    assert "gd_residual" in out and "FAIL" in out


def test_gen_data_landmarks(tmp_path):
    out = tmp_path / "lm"
    assert main(["gen-data", "landmarks", "--out", str(out), "--count", "12", "--side", "16",
                 "--points", "6"]) == EXIT_OK
    assert read_idx(out / "images-idx3-ubyte.gz").shape == (12, 16, 16)
    assert read_idx(out / "targets-idx2-double.gz").shape == (12, 12)
    first = (out / "images-idx3-ubyte.gz").read_bytes()
    assert main(["gen-data", "landmarks", "--out", str(out), "--count", "12", "--side", "16",
                 "--points", "6"]) == EXIT_CONFIG
    assert main(["gen-data", "landmarks", "--out", str(out), "--count", "12", "--side", "16",
                 "--points", "6", "--force"]) == EXIT_OK
    assert (out / "images-idx3-ubyte.gz").read_bytes() == first


def test_gen_data_mnist_csv_and_noise(tmp_path):
    rng = np.random.default_rng(0)
    rows = np.hstack([rng.integers(0, 256, size=(20, 784)), np.arange(20)[:, None] % 10])
    csv_path = tmp_path / "digits.csv"
    np.savetxt(csv_path, rows, fmt="%d", delimiter=",")
    assert main(["gen-data", "mnist-csv", "--source", str(csv_path),
                 "--out", str(tmp_path / "m")]) == EXIT_OK
    data = load_idx(tmp_path / "m/train-images-idx3-ubyte.gz",
                    tmp_path / "m/train-labels-idx1-ubyte.gz")
    assert np.array_equal(np.rint(data.images * 255), rows[:, :784])
    assert main(["gen-data", "noise", "--source", str(tmp_path / "m"),
                 "--out", str(tmp_path / "n")]) == EXIT_OK
    assert (tmp_path / "n/manifest.json").exists()
    assert main(["gen-data", "mnist-csv", "--out", str(tmp_path / "x")]) == EXIT_CONFIG


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "nnreg", "--help"], capture_output=True,
                          text=True)
    assert proc.returncode == 0 and "gen-data" in proc.stdout


def test_requires_command():
    with pytest.raises(SystemExit):
        main([])
