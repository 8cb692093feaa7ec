import json

import numpy as np
import pytest

from nnreg.data import LabeledImageSet, save_idx_pair
from nnreg.experiments import (ConfigError, ExperimentConfig, OutputExistsError, RunReport,
                               compare_table, run_experiment, summarize)


def report(name, mean, std, task="hint_classification", metric="tst_err"):
    return RunReport(name, task, {}, "h", {}, {metric: {"mean": mean, "std": std,
                                                        "kept": [], "trimmed": True}})


def test_compare_table_paper_layout():
    table = compare_table([report("mlp+hint", 9.5, 0.093), report("mlp", 11.24, 0.05)])
    assert table.splitlines() == ["| config | tst_err |", "|---|---|",
                                  "| mlp+hint | 9.50±0.093 |", "| mlp | 11.24±0.050 |"]
    assert compare_table([report("only", 1.0, 0.0)]).count("\n") == 3
    assert compare_table([report("a", 1, 0)], fmt="csv") == "config,tst_err\na,1.00±0.000\n"


def test_compare_table_errors():
    with pytest.raises(KeyError, match="vl_err"):
        compare_table([report("a", 1, 0)], metrics=["vl_err"])
    with pytest.raises(ValueError, match="mix"):
        compare_table([report("a", 1, 0), report("b", 1, 0, task="mtl_landmarks")])


def test_summarize():
    assert summarize([1, 2, 3, 4, 5, 6, 7])["mean"] == 4.0
    two = summarize([1.0, 3.0])
    assert two == {"mean": 2.0, "std": 1.0, "kept": [1.0, 3.0], "trimmed": False}


def test_config_parsing():
    cfg = ExperimentConfig.from_dict({"task": "mtl_landmarks", "epochs": 3, "seeds": [1, 2]})
    assert cfg.params["learning_rate"] == 1e-3 and cfg.seeds == [1, 2]
    assert cfg.digest() == ExperimentConfig.from_dict(cfg.to_dict()).digest()
    with pytest.raises(ConfigError, match=r"config\.task"):
        ExperimentConfig.from_dict({"task": "nope"})
    with pytest.raises(ConfigError, match=r"config\.lr"):
        ExperimentConfig.from_dict({"task": "gradcheck", "lr": 1})
    with pytest.raises(ConfigError, match=r"config\.epochs"):
        ExperimentConfig.from_dict({"task": "mtl_landmarks", "epochs": "ten"})
    with pytest.raises(ConfigError, match="seeds"):
        ExperimentConfig.from_dict({"task": "gradcheck", "seeds": []})


def test_config_load_errors(tmp_path):
    with pytest.raises(ConfigError):
        ExperimentConfig.load(tmp_path / "missing.json")
    bad = tmp_path / "bad.json"
    bad.write_text("{")
    with pytest.raises(ConfigError, match="invalid JSON"):
        ExperimentConfig.load(bad)


TINY_MTL = {"task": "mtl_landmarks", "name": "tiny", "seeds": [0, 1], "epochs": 3,
            "n_points": 6, "side": 16, "n_train": 40, "n_valid": 10, "n_test": 10,
            "n_input_only": 5, "n_label_only": 5, "x_code": 8, "link_hidden": [6],
            "y_code": 4, "learning_rate": 0.05}


def strip_clock(text):
    doc = json.loads(text)
    doc.pop("wall_clock_s")
    return doc


def test_mtl_run_is_reproducible(tmp_path):
    cfg = ExperimentConfig.from_dict(TINY_MTL)
    a = run_experiment(cfg, tmp_path / "a")
    run_experiment(cfg, tmp_path / "b")
    assert strip_clock((tmp_path / "a/report.json").read_text()) == \
        strip_clock((tmp_path / "b/report.json").read_text())
    for name in ("metrics.csv", "epochs_seed0.csv", "epochs_seed1.csv", "model_seed0.bin",
                 "model_seed1.bin"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    header = (tmp_path / "a/epochs_seed0.csv").read_text().splitlines()[0]
    assert header == "epoch,lambda_sup,lambda_in,lambda_out,J_s_train,J_in,J_out,J_s_valid"
    assert set(a.aggregate) == {"valid_mse", "test_mse", "AUC", "CDF_0.1", "best_epoch"}
    back = RunReport.load(tmp_path / "a/report.json")
    assert back.per_seed == a.per_seed and back.config_hash == cfg.digest()


def test_output_is_never_silently_overwritten(tmp_path):
    cfg = ExperimentConfig.from_dict({**TINY_MTL, "seeds": [0], "epochs": 1})
    run_experiment(cfg, tmp_path / "x")
    with pytest.raises(OutputExistsError):
        run_experiment(cfg, tmp_path / "x")
    run_experiment(cfg, tmp_path / "x", force=True)


def test_output_root_env(tmp_path, monkeypatch):
    monkeypatch.setenv("NNREG_OUTPUT_ROOT", str(tmp_path / "root"))
    run_experiment(ExperimentConfig.from_dict({**TINY_MTL, "seeds": [0], "epochs": 1}))
    assert (tmp_path / "root/tiny/report.json").exists()


@pytest.fixture
def fake_mnist(tmp_path):
    rng = np.random.default_rng(0)
    labels = np.repeat(np.arange(10), 30)
    images = np.clip(rng.normal(0.2, 0.1, size=(300, 784)) + (labels[:, None] == np.arange(784)
                                                               // 78.4), 0, 1)
    save_idx_pair(LabeledImageSet(np.rint(images * 255) / 255, labels),
                  tmp_path / "train-images-idx3-ubyte.gz", tmp_path / "train-labels-idx1-ubyte.gz")
    return tmp_path


def test_hint_run_with_probe(tmp_path, fake_mnist):
    cfg = ExperimentConfig.from_dict({
        "task": "hint_classification", "seeds": [0, 1, 2], "epochs": 2, "subset": "all",
        "data_dir": str(fake_mnist), "hidden": [12, 8], "probe": True, "batch_size": 20})
    rep = run_experiment(cfg, tmp_path / "out")
    assert set(rep.aggregate) == {"vl_err", "tst_err", "best_epoch"}
    assert rep.aggregate["tst_err"]["trimmed"]
    header = (tmp_path / "out/epochs_seed0.csv").read_text().splitlines()[0]
    assert header == "epoch,J_sup_train,J_H_train,valid_error_%,probe_h1,probe_h2,probe_h3"


def test_hint_run_missing_data(tmp_path):
    cfg = ExperimentConfig.from_dict({"task": "hint_classification",
                                      "data_dir": str(tmp_path / "none")})
    with pytest.raises(ConfigError, match="data_dir"):
        run_experiment(cfg, tmp_path / "out")


def test_check_tasks(tmp_path):
    rep = run_experiment(ExperimentConfig.from_dict({"task": "gradcheck", "n_cases": 25}),
                         tmp_path / "g")
    assert rep.per_seed[0]["passed"] == 1.0
    rep = run_experiment(ExperimentConfig.from_dict({"task": "quadratic_oracles"}),
                         tmp_path / "o")
    assert rep.per_seed[0]["gd_residual"] < 1e-10


def test_shipped_configs_parse():
    from pathlib import Path
    configs = sorted((Path(__file__).parent.parent / "configs").glob("*.json"))
    assert configs
    for path in configs:
        ExperimentConfig.load(path)
