"""Config-driven experiment runs, per-seed logs, JSON reports and comparison tables."""
from __future__ import annotations

import csv
import hashlib
import io
import json
import os
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core_math import Loss, loss_value
from .data import build_benchmark, find_mnist, gen_synthetic_landmarks, subsample
from .estimators import HintMLPClassifier, MtlRegressor
from .gradcheck import TOLERANCE, run_gradcheck
from .metrics import aggregate_runs, auc_cdf, cdf_at, classification_error, nrmse_batch
from .network import save_binary
from .oracles import ES_TOLERANCE, run_quadratic_oracles

OUTPUT_ROOT_ENV = "NNREG_OUTPUT_ROOT"
MNIST_DIR_ENV = "NNREG_MNIST_DIR"
TASKS = ("hint_classification", "mtl_landmarks", "gradcheck", "quadratic_oracles")

_COMMON = {"name": None, "task": None, "seeds": [0], "output_dir": None}
DEFAULTS = {
    "hint_classification": {
        "epochs": 100, "learning_rate": 0.1, "momentum": 0.9, "batch_size": 50,
        "data_dir": None, "benchmark": "std", "subset": "1k", "classes": None, "data_seed": 0,
        "hidden": [300, 200, 100], "activation": "sigmoid", "hint_layer": None,
        "measure": "sed", "gamma": 1.0, "lam": 1.0, "hint_learning_rate": None,
        "probe": False, "probe_measure": "nmd",
    },
    "mtl_landmarks": {
        "epochs": 200, "learning_rate": 1e-3, "momentum": 0.9, "batch_size": 10,
        "n_points": 10, "side": 20, "n_train": 2000, "n_valid": 400, "n_test": 400,
        "n_input_only": 0, "n_label_only": 0, "data_seed": 123,
        "x_code": 128, "link_hidden": [64], "y_code": 16,
        "use_input_ae": True, "use_output_ae": True, "schedule": "abridged_linear",
        "t1": None, "sigma": 40.0, "corruption": 0.2, "ae_learning_rate": None,
        "ae_weight_decay": 1e-2,
    },
    "gradcheck": {"n_cases": 50},
    "quadratic_oracles": {"n_models": 20, "max_dim": 10},
}


class ConfigError(ValueError):
    pass


class OutputExistsError(FileExistsError):
    pass


def _type_ok(default, value):
    if default is None or value is None:
        return True
    if isinstance(default, bool):
        return isinstance(value, bool)
    if isinstance(default, (int, float)):
        return isinstance(value, (int, float)) and not isinstance(value, bool)
    if isinstance(default, list):
        return isinstance(value, list)
    return isinstance(value, type(default))


@dataclass
class ExperimentConfig:
    task: str
    name: str
    seeds: list
    params: dict
    output_dir: str | None = None

    @classmethod
    def from_dict(cls, doc: dict, source="config") -> "ExperimentConfig":
        if not isinstance(doc, dict):
            raise ConfigError(f"{source}: top level must be a JSON object")
        task = doc.get("task")
        if task not in TASKS:
            raise ConfigError(f"{source}.task: expected one of {', '.join(TASKS)}, got {task!r}")
        defaults = DEFAULTS[task]
        for key, value in doc.items():
            if key in _COMMON:
                continue
            if key not in defaults:
                raise ConfigError(f"{source}.{key}: unknown key for task {task}")
            if not _type_ok(defaults[key], value):
                raise ConfigError(f"{source}.{key}: expected {type(defaults[key]).__name__}, "
                                  f"got {type(value).__name__}")
        seeds = doc.get("seeds", [0])
        if (not isinstance(seeds, list) or not seeds
                or not all(isinstance(s, int) and not isinstance(s, bool) and s >= 0
                           for s in seeds)):
            raise ConfigError(f"{source}.seeds: expected a nonempty list of non-negative ints")
        params = {**defaults, **{k: v for k, v in doc.items() if k not in _COMMON}}
        if "epochs" in params and (not isinstance(params["epochs"], int) or params["epochs"] < 1):
            raise ConfigError(f"{source}.epochs: expected a positive int")
        return cls(task, str(doc.get("name") or task), list(seeds), params, doc.get("output_dir"))

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        try:
            doc = json.loads(Path(path).read_text())
        except FileNotFoundError as exc:
            raise ConfigError(f"{path}: no such config file") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
        return cls.from_dict(doc, source=Path(path).name)

    def to_dict(self) -> dict:
        doc = {"task": self.task, "name": self.name, "seeds": list(self.seeds), **self.params}
        if self.output_dir is not None:
            doc["output_dir"] = self.output_dir
        return doc

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


@dataclass
class RunReport:
    name: str
    task: str
    config: dict
    config_hash: str
    per_seed: dict                      # seed -> {metric: value}
    aggregate: dict                     # metric -> {"mean", "std", "kept", "trimmed"}
    epoch_logs: dict = field(default_factory=dict)   # seed -> relative CSV path
    wall_clock_s: float = 0.0

    def to_dict(self):
        return {"name": self.name, "task": self.task, "config": self.config,
                "config_hash": self.config_hash,
                "per_seed": {str(k): v for k, v in self.per_seed.items()},
                "aggregate": self.aggregate,
                "epoch_logs": {str(k): v for k, v in self.epoch_logs.items()},
                "wall_clock_s": self.wall_clock_s}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, doc):
        return cls(doc["name"], doc["task"], doc["config"], doc["config_hash"],
                   {int(k): v for k, v in doc["per_seed"].items()}, doc["aggregate"],
                   {int(k): v for k, v in doc.get("epoch_logs", {}).items()},
                   doc.get("wall_clock_s", 0.0))

    @classmethod
    def load(cls, path) -> "RunReport":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def metric_names(self):
        return list(self.aggregate)


def summarize(values) -> dict:
    """Trimmed (drop best and worst) mean/std when there are at least three runs."""
    values = [float(v) for v in values]
    if len(values) >= 3:
        s = aggregate_runs(values)
        return {"mean": s.mean, "std": s.std, "kept": list(s.kept), "trimmed": True}
    arr = np.asarray(values)
    return {"mean": float(arr.mean()), "std": float(arr.std()), "kept": values,
            "trimmed": False}


def output_root() -> Path:
    return Path(os.environ.get(OUTPUT_ROOT_ENV, "runs"))


def prepare_output(path, force=False) -> Path:
    path = Path(path)
    if path.exists() and any(path.iterdir()) and not force:
        raise OutputExistsError(f"{path} exists and is not empty; pass --force to overwrite")
    path.mkdir(parents=True, exist_ok=True)
    return path


def _write_csv(path, rows, columns):
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([_fmt(row.get(c, "")) for c in columns])


def _fmt(v):
    return repr(float(v)) if isinstance(v, (float, np.floating)) else v


# -- per-task seed runners ---------------------------------------------------

def _mnist_dir(params):
    return params["data_dir"] or os.environ.get(MNIST_DIR_ENV) or "data/mnist"


def load_classification_data(params):
    split = find_mnist(_mnist_dir(params))
    if split is None:
        raise ConfigError(f"config.data_dir: no MNIST IDX files in {_mnist_dir(params)}")
    if params["benchmark"] != "std":
        split = build_benchmark(params["benchmark"], split.train, split.valid, split.test,
                                params["data_seed"])
    if params["classes"]:
        keep = np.asarray(params["classes"])
        split = type(split)(*(s.take(np.isin(s.labels, keep))
                              for s in (split.train, split.valid, split.test)))
    return subsample(split, params["subset"], params["data_seed"])


def _run_hint_seed(params, seed, data):
    model = HintMLPClassifier(
        hidden_layer_sizes=tuple(params["hidden"]), activation=params["activation"],
        hint_layer=params["hint_layer"], measure=params["measure"], gamma=params["gamma"],
        lam=params["lam"], learning_rate=params["learning_rate"],
        hint_learning_rate=params["hint_learning_rate"], momentum=params["momentum"],
        batch_size=params["batch_size"], max_epochs=params["epochs"], random_state=seed,
        probe=params["probe"], probe_measure=params["probe_measure"])
    model.fit(data.train.images, data.train.labels,
              eval_set=(data.valid.images, data.valid.labels))
    metrics = {
        "vl_err": classification_error(model.predict(data.valid.images), data.valid.labels),
        "tst_err": classification_error(model.predict(data.test.images), data.test.labels),
        "best_epoch": float(model.best_epoch_),
    }
    columns = ["epoch", "J_sup_train", "J_H_train", "valid_error_%"]
    columns += sorted({k for row in model.history_ for k in row if k.startswith("probe_")})
    return metrics, model.history_, columns, model.network_


def load_landmark_data(params):
    n = params["n_train"] + params["n_valid"] + params["n_test"]
    extra = params["n_input_only"] + params["n_label_only"]
    task = gen_synthetic_landmarks(n + extra, params["n_points"], params["side"],
                                   seed=params["data_seed"])
    return task


def _run_mtl_seed(params, seed, task):
    a = params["n_train"]
    b = a + params["n_valid"]
    c = b + params["n_test"]
    d = c + params["n_input_only"]
    X, Y = task.images, task.targets
    model = MtlRegressor(
        x_code=params["x_code"], link_hidden=tuple(params["link_hidden"]),
        y_code=params["y_code"], use_input_ae=params["use_input_ae"],
        use_output_ae=params["use_output_ae"], schedule=params["schedule"], t1=params["t1"],
        sigma=params["sigma"], corruption=params["corruption"],
        learning_rate=params["learning_rate"], momentum=params["momentum"],
        ae_learning_rate=params["ae_learning_rate"], ae_weight_decay=params["ae_weight_decay"],
        batch_size=params["batch_size"], max_epochs=params["epochs"], random_state=seed)
    # extra rows only help when the matching auto-encoder can use them
    x_only = X[c:d] if params["use_input_ae"] and d > c else None
    y_only = Y[d:] if params["use_output_ae"] and Y.shape[0] > d else None
    model.fit(X[:a], Y[:a], x_only, y_only, eval_set=(X[a:b], Y[a:b]))
    pred = model.predict(X[b:c])
    errors = nrmse_batch(pred, Y[b:c], task.ref)
    metrics = {
        "valid_mse": float(model.best_valid_mse_),
        "test_mse": loss_value(Loss.MSE, pred, Y[b:c]),
        "AUC": auc_cdf(errors),
        "CDF_0.1": cdf_at(errors, 0.1),
        "best_epoch": float(model.best_epoch_),
    }
    columns = ["epoch", "lambda_sup", "lambda_in", "lambda_out", "J_s_train", "J_in", "J_out",
               "J_s_valid"]
    return metrics, model.history_, columns, model.network_


def _run_gradcheck_seed(params, seed, _data):
    results = run_gradcheck(params["n_cases"], seed)
    worst = max(err for _, err in results)
    rows = [{"case": name, "max_rel_error": err} for name, err in results]
    return ({"max_rel_error": worst, "passed": float(worst < TOLERANCE)}, rows,
            ["case", "max_rel_error"], None)


def _run_oracle_seed(params, seed, _data):
    res = run_quadratic_oracles(seed, n_models=params["n_models"], max_dim=params["max_dim"])
    rows = [{"check": k, "residual": v} for k, v in res.items()]
    metrics = dict(res)
    metrics["passed"] = float(res["gd_residual"] < 1e-10 and res["l1_residual"] < 1e-6
                              and res["es_l2_rel_gap_alpha1"] < ES_TOLERANCE
                              and res["es_l2_rel_gap_alpha0.1"] < ES_TOLERANCE)
    return metrics, rows, ["check", "residual"], None


_RUNNERS = {
    "hint_classification": (load_classification_data, _run_hint_seed),
    "mtl_landmarks": (load_landmark_data, _run_mtl_seed),
    "gradcheck": (lambda p: None, _run_gradcheck_seed),
    "quadratic_oracles": (lambda p: None, _run_oracle_seed),
}


def run_experiment(cfg: ExperimentConfig, out_dir=None, force=False, log=None) -> RunReport:
    """Train every seed in turn, write epoch CSVs, checkpoints, metrics.csv and report.json."""
    out = prepare_output(out_dir or cfg.output_dir or output_root() / cfg.name, force)
    loader, runner = _RUNNERS[cfg.task]
    start = time.perf_counter()
    data = loader(cfg.params)
    per_seed, logs = {}, {}
    for seed in cfg.seeds:
        metrics, rows, columns, network = runner(cfg.params, seed, data)
        per_seed[seed] = metrics
        rel = f"epochs_seed{seed}.csv"
        _write_csv(out / rel, rows, columns)
        logs[seed] = rel
        if network is not None:
            save_binary(network, out / f"model_seed{seed}.bin")
        if log is not None:
            log(f"{cfg.name} seed {seed}: " + ", ".join(f"{k}={v:.6g}" for k, v in metrics.items()))
    names = list(next(iter(per_seed.values())))
    aggregate = {m: summarize([per_seed[s][m] for s in cfg.seeds]) for m in names}
    report = RunReport(cfg.name, cfg.task, cfg.to_dict(), cfg.digest(), per_seed, aggregate,
                       logs, round(time.perf_counter() - start, 3))
    _write_csv(out / "metrics.csv",
               [{"config": cfg.name, "seed": s, **per_seed[s]} for s in cfg.seeds],
               ["config", "seed", *names])
    (out / "report.json").write_text(report.to_json())
    return report


def compare_table(reports, metrics=None, fmt="markdown", digits=2) -> str:
    """One row per report, one ``mean±std`` column per metric, in a fixed order.

    Means get ``digits`` decimals and standard deviations one more.
    """
    if not reports:
        raise ValueError("nothing to compare")
    tasks = {r.task for r in reports}
    if len(tasks) > 1:
        raise ValueError(f"reports mix tasks: {', '.join(sorted(tasks))}")
    metrics = list(metrics) if metrics else reports[0].metric_names()
    for r in reports:
        for m in metrics:
            if m not in r.aggregate:
                raise KeyError(f"report {r.name!r} has no metric {m!r}")
    header = ["config", *metrics]
    body = [[r.name, *(f"{r.aggregate[m]['mean']:.{digits}f}±{r.aggregate[m]['std']:.{digits + 1}f}"
                       for m in metrics)] for r in reports]
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(header)
        w.writerows(body)
        return buf.getvalue()
    if fmt != "markdown":
        raise ValueError(f"unknown table format {fmt!r}")
    lines = ["| " + " | ".join(header) + " |", "|" + "|".join("---" for _ in header) + "|"]
    lines += ["| " + " | ".join(row) + " |" for row in body]
    return "\n".join(lines) + "\n"
