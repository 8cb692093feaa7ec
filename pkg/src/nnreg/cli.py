"""Command-line entry point: ``nnreg run|gradcheck|oracles|gen-data|compare``."""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from .data import (LabeledImageSet, build_benchmark, find_mnist, gen_synthetic_landmarks,
                   save_idx_pair, write_idx, write_manifest)
from .experiments import (ConfigError, ExperimentConfig, OutputExistsError, RunReport,
                          compare_table, output_root, prepare_output, run_experiment)
from .gradcheck import TOLERANCE, run_gradcheck
from .optim import NumericalAbort
from .oracles import ES_TOLERANCE, run_quadratic_oracles

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_CHECK_FAILED = 4

log = logging.getLogger("nnreg")


def _cmd_run(args):
    cfg = ExperimentConfig.load(args.config)
    if args.seeds is not None:
        if args.seeds < 1:
            raise ConfigError("--seeds must be >= 1")
        cfg.seeds = list(range(args.seeds))
    out = Path(args.out) if args.out else None
    report = run_experiment(cfg, out, force=args.force, log=log.info)
    for name, stats in report.aggregate.items():
        print(f"{report.name} {name}: {stats['mean']:.6g} ± {stats['std']:.3g}")
    return EXIT_OK


def _cmd_gradcheck(args):
    results = run_gradcheck(args.cases, args.seed)
    worst_name, worst = max(results, key=lambda r: r[1])
    for name, err in results:
        log.info("%-50s %.3e", name, err)
    print(f"max relative error {worst:.3e} over {len(results)} cases ({worst_name})")
    return EXIT_OK if worst < TOLERANCE else EXIT_CHECK_FAILED


def _cmd_oracles(args):
    res = run_quadratic_oracles(args.seed)
    limits = {"gd_residual": 1e-10, "l1_residual": 1e-6}
    ok = True
    for key, value in res.items():
        limit = limits.get(key, ES_TOLERANCE)
        passed = value < limit
        ok &= passed
        print(f"{key:26s} {value:.3e}  (limit {limit:g}) {'ok' if passed else 'FAIL'}")
    return EXIT_OK if ok else EXIT_CHECK_FAILED


def _read_csv_digits(path):
    raw = np.loadtxt(path, delimiter=",", dtype=np.int64, comments="#")
    if raw.ndim != 2 or raw.shape[1] != 785:
        raise ConfigError(f"{path}: expected 785 columns (784 pixels then the label)")
    return LabeledImageSet(raw[:, :784] / 255.0, raw[:, 784])


def _cmd_gen_data(args):
    out = prepare_output(args.out, args.force)
    if args.kind == "landmarks":
        task = gen_synthetic_landmarks(args.count, args.points, args.side, seed=args.seed)
        write_idx(out / "images-idx3-ubyte.gz",
                  np.rint(task.images * 255).astype(np.uint8).reshape(-1, args.side, args.side))
        write_idx(out / "targets-idx2-double.gz", task.targets)
        write_manifest(out / "manifest.json", "landmarks", args.seed, count=args.count,
                       n_points=args.points, side=args.side, ref=list(task.ref))
    elif args.kind == "mnist-csv":
        if not args.source:
            raise ConfigError("gen-data mnist-csv needs --source <file.csv[.gz]>")
        data = _read_csv_digits(args.source)
        save_idx_pair(data, out / "train-images-idx3-ubyte.gz", out / "train-labels-idx1-ubyte.gz")
        write_manifest(out / "manifest.json", "mnist-csv", 0, source=Path(args.source).name,
                       count=len(data))
    else:
        split = find_mnist(args.source or "data/mnist")
        if split is None:
            raise ConfigError(f"no MNIST IDX files in {args.source or 'data/mnist'}")
        bench = build_benchmark(args.kind, split.train, split.valid, split.test, args.seed)
        for part in ("train", "valid", "test"):
            save_idx_pair(getattr(bench, part), out / f"{part}-images-idx3-ubyte.gz",
                          out / f"{part}-labels-idx1-ubyte.gz")
        write_manifest(out / "manifest.json", args.kind, args.seed, filter_size=5, threshold=0.1)
    print(f"wrote {out}")
    return EXIT_OK


def _cmd_compare(args):
    try:
        reports = [RunReport.load(p) for p in args.reports]
    except (OSError, KeyError, ValueError) as exc:
        raise ConfigError(f"cannot read report: {exc}") from exc
    metrics = args.metrics.split(",") if args.metrics else None
    try:
        table = compare_table(reports, metrics, args.format, args.digits)
    except KeyError as exc:
        raise ConfigError(exc.args[0]) from exc
    sys.stdout.write(table)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="nnreg", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true", help="log per-seed and per-case detail")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run an experiment config")
    r.add_argument("config")
    r.add_argument("--seeds", type=int, help="use seeds 0..N-1 instead of the config's list")
    r.add_argument("--out", help=f"output directory (default: $NNREG_OUTPUT_ROOT/<name>, "
                                 f"currently {output_root()}/<name>)")
    r.add_argument("--force", action="store_true", help="reuse a non-empty output directory")
    r.set_defaults(fn=_cmd_run)

    g = sub.add_parser("gradcheck", help="finite-difference check of all gradients")
    g.add_argument("--cases", type=int, default=50)
    g.add_argument("--seed", type=int, default=0)
    g.set_defaults(fn=_cmd_gradcheck)

    o = sub.add_parser("oracles", help="closed-form quadratic optimizer checks")
    o.add_argument("--seed", type=int, default=0)
    o.set_defaults(fn=_cmd_oracles)

    d = sub.add_parser("gen-data", help="write a generated dataset as IDX files")
    d.add_argument("kind", choices=["landmarks", "noise", "mnist-csv"])
    d.add_argument("--out", required=True)
    d.add_argument("--source", help="MNIST directory (noise) or CSV file (mnist-csv)")
    d.add_argument("--seed", type=int, default=0)
    d.add_argument("--count", type=int, default=2800)
    d.add_argument("--points", type=int, default=10)
    d.add_argument("--side", type=int, default=20)
    d.add_argument("--force", action="store_true")
    d.set_defaults(fn=_cmd_gen_data)

    c = sub.add_parser("compare", help="table of aggregated metrics from report.json files")
    c.add_argument("reports", nargs="+")
    c.add_argument("--metrics", help="comma-separated metric names, in column order")
    c.add_argument("--format", choices=["markdown", "csv"], default="markdown")
    c.add_argument("--digits", type=int, default=2)
    c.set_defaults(fn=_cmd_compare)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(message)s")
    try:
        return args.fn(args)
    except (ConfigError, OutputExistsError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalAbort as exc:
        print(f"numerical abort: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
