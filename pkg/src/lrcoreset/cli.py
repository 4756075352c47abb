"""Command line: ``lrcoreset prep | run | report``.

Exit codes: 0 success, 2 configuration or schema error, 3 missing input,
4 numerical failure outside the per-record error handling.
"""
from __future__ import annotations

import argparse
import datetime as _dt
import json
import logging
import os
import sys

from . import __version__
from .bench import (aggregate, aggregates_to_csv, compare_report, comparisons_to_csv,
                    kruskal_wallis, method_observations, read_results, results_to_csv,
                    run_experiment, derive_seed, BASELINE)
from .config import load_config
from .data import load_csv, split_dataset, synthesize_logistic, write_prepared
from .errors import ConfigError, DataError, NumericalError
from .metrics import METRIC_NAMES

EXIT_CONFIG = 2
EXIT_MISSING = 3
EXIT_NUMERICAL = 4


def _now():
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")


def _write(path, text):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def _write_manifest(path, manifest):
    missing = [p for p in manifest["artifacts"].values() if not os.path.exists(p)]
    if missing:
        raise RuntimeError(f"manifest references missing files: {missing}")
    _write(path, json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def cmd_prep(args) -> int:
    loaded = load_config(args.config)
    specs = loaded.experiment.datasets
    if args.dataset:
        specs = [s for s in specs if s.name == args.dataset]
        if not specs:
            raise ConfigError(f"dataset {args.dataset!r} not in {args.config}")
    out_root = args.out or loaded.data_dir
    for spec in specs:
        # same seed rule as DatasetSpec.load, so a prepared synthetic set matches the run
        seed = spec.seed if spec.seed is not None else derive_seed(loaded.experiment.base_seed,
                                                                   spec.name, "data")
        if spec.kind == "synthetic":
            if not args.dataset:
                print(f"{spec.name}: synthetic, generated at run time (skipped)")
                continue
            full = synthesize_logistic(spec.n, spec.d, spec.coefficients(), seed, spec.name)
            split, n_numeric = split_dataset(full, spec.test_fraction, seed), spec.d
        else:
            if spec.preprocess is None or spec.raw_path is None:
                raise ConfigError(f"dataset {spec.name!r}: csv datasets need raw_path and preprocess")
            split = load_csv(spec.raw_path, spec.preprocess, seed, spec.name)
            n_numeric = len(spec.preprocess.numeric_columns)
        summary = write_prepared(split, os.path.join(out_root, spec.name), n_numeric)
        print(f"{spec.name}: n={summary['n']} n_test={summary['n_test']} d={summary['d']} "
              f"d_numeric={summary.get('d_numeric')} %pos={summary['pct_pos']:.2f} "
              f"-> {os.path.join(out_root, spec.name)}")
    return 0


def cmd_run(args) -> int:
    loaded = load_config(args.config)
    os.makedirs(args.out, exist_ok=True)
    started = _now()
    records = run_experiment(loaded.experiment, loaded.data_dir, args.parallelism)
    results_path = os.path.join(args.out, "results.csv")
    _write(results_path, results_to_csv(records, loaded.experiment.record_wall_time))
    n_errors = sum(1 for r in records if r.error)
    _write_manifest(os.path.join(args.out, "manifest.json"), {
        "tool": "lrcoreset",
        "version": __version__,
        "config": loaded.path,
        "config_digest": loaded.digest,
        "artifacts": {"results": os.path.abspath(results_path)},
        "records": len(records),
        "error_records": n_errors,
        "parallelism": args.parallelism,
        "started": started,
        "finished": _now(),
    })
    print(f"wrote {len(records)} records ({n_errors} with errors) to {results_path}")
    return 0


def cmd_report(args) -> int:
    records = read_results(args.results)
    if not records:
        raise ConfigError(f"{args.results}: no records")
    os.makedirs(args.out, exist_ok=True)
    started = _now()
    aggs = aggregate(records)
    artifacts = {"aggregates": os.path.join(args.out, "aggregates.csv")}
    _write(artifacts["aggregates"], aggregates_to_csv(aggs))
    skipped = sum(1 for r in records if r.error)
    if skipped:
        print(f"notice: {skipped} error-tagged records excluded from aggregation")
    methods = list(dict.fromkeys(r.method for r in records))
    if args.mode == "stats":
        if len(methods) < 2:
            print("notice: only one method in results; comparisons skipped")
        else:
            for family in ("vs_uniform", "all_pairs"):
                if family == "vs_uniform" and BASELINE not in methods:
                    print(f"notice: no {BASELINE} baseline; vs_uniform comparisons skipped")
                    continue
                rows = compare_report(aggs, family)
                path = os.path.join(args.out, f"comparisons_{family}.csv")
                _write(path, comparisons_to_csv(rows))
                artifacts[f"comparisons_{family}"] = path
            lines = ["metric,H,p"]
            for metric in METRIC_NAMES:
                obs = method_observations(aggs, metric)
                if len(obs) >= 2:
                    H, p = kruskal_wallis(obs)
                    lines.append(f"{metric},{H!r},{p!r}")
            artifacts["omnibus"] = os.path.join(args.out, "omnibus.csv")
            _write(artifacts["omnibus"], "\n".join(lines) + "\n")
    _write_manifest(os.path.join(args.out, "report_manifest.json"), {
        "tool": "lrcoreset",
        "version": __version__,
        "results": os.path.abspath(args.results),
        "mode": args.mode,
        "artifacts": {k: os.path.abspath(v) for k, v in artifacts.items()},
        "started": started,
        "finished": _now(),
    })
    for path in artifacts.values():
        print(f"wrote {path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lrcoreset", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("prep", help="preprocess raw datasets into train/test CSV files")
    p.add_argument("--config", required=True)
    p.add_argument("--dataset", help="only this dataset (default: every csv dataset)")
    p.add_argument("--out", help="output root (default: data_dir from the config)")
    p.set_defaults(func=cmd_prep)

    p = sub.add_parser("run", help="run the benchmark grid and write results.csv")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--parallelism", type=int, default=1)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("report", help="aggregate results and run significance tests")
    p.add_argument("results", help="results.csv written by 'run'")
    p.add_argument("--out", required=True)
    p.add_argument("--mode", choices=("aggregate", "stats"), default="stats")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except FileNotFoundError as exc:
        print(f"error: missing input: {exc}", file=sys.stderr)
        return EXIT_MISSING
    except (ConfigError, DataError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as exc:
        print(f"error: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
