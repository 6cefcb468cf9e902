"""Command-line orchestration of the classification pipeline.

Subcommands: synth, ingest, catalog, sample, balance, train, evaluate,
experiment, report. Most take a YAML run configuration; see
docs/example-config.yaml for an annotated example.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import balance as bal
from . import cache as cachemod
from . import evaluate as ev
from . import lstm
from . import pipeline
from . import synth as synthmod
from .config import RunConfig
from .features import compute_coverage, prune_by_coverage, write_coverage_csv
from .ulog import UlogError, VehicleType, parse_ulog

DATA_DIR_ENV = "UAVCLASS_DATA_DIR"


class CliError(Exception):
    pass


class NoParsableLogs(CliError):
    pass


class MissingCache(CliError):
    pass


def _load_corpus(cfg: RunConfig):
    if cfg.data_source == "synth":
        return synthmod.generate_corpus(**cfg.synth)
    if cfg.data_source == "cache":
        if not os.path.exists(cfg.data_path):
            raise MissingCache(f"cache file {cfg.data_path!r} not found")
        return cachemod.read_cache(cfg.data_path)
    logs, skipped = ingest_directory(cfg.data_path)
    for path, reason in skipped:
        print(f"skipped {path}: {reason}", file=sys.stderr)
    return logs


def ingest_directory(directory):
    """Parse every .ulg file; corrupt files are skipped with a reason."""
    if not os.path.isdir(directory):
        raise CliError(f"{directory!r} is not a directory")
    logs, skipped = [], []
    for name in sorted(os.listdir(directory)):
        if not name.endswith((".ulg", ".ulog")):
            continue
        path = os.path.join(directory, name)
        with open(path, "rb") as fh:
            data = fh.read()
        try:
            logs.append(parse_ulog(data, source_id=name))
        except UlogError as exc:
            skipped.append((path, f"{type(exc).__name__}: {exc}"))
    if not logs:
        raise NoParsableLogs(f"no parsable logs in {directory!r}")
    return logs, skipped


def _print_class_counts(logs):
    counts = {}
    for log in logs:
        counts[log.vehicle_type] = counts.get(log.vehicle_type, 0) + 1
    for vtype in VehicleType:
        if vtype in counts:
            print(f"  {vtype.value}: {counts[vtype]}")


def cmd_synth(args):
    cfg = RunConfig.load(args.config) if args.config else RunConfig()
    logs = synthmod.generate_corpus(**cfg.synth)
    if args.ulog_dir:
        os.makedirs(args.ulog_dir, exist_ok=True)
        for i, log in enumerate(logs):
            with open(os.path.join(args.ulog_dir, f"{log.source_id}-{i}.ulg"), "wb") as fh:
                fh.write(synthmod.write_ulog(log))
        print(f"wrote {len(logs)} ULog files to {args.ulog_dir}")
    else:
        cachemod.write_cache(logs, args.out)
        print(f"wrote cache with {len(logs)} flights to {args.out}")
    _print_class_counts(logs)
    return 0


def cmd_ingest(args):
    directory = args.dir or os.environ.get(DATA_DIR_ENV)
    if not directory:
        raise CliError(f"pass --dir or set {DATA_DIR_ENV}")
    logs, skipped = ingest_directory(directory)
    kept = [log for log in logs if log.vehicle_type.class_index is not None]
    cachemod.write_cache(kept, args.out)
    print(f"parsed {len(logs)} logs, kept {len(kept)} with usable labels")
    for path, reason in skipped:
        print(f"skipped {path}: {reason}")
    _print_class_counts(kept)
    return 0


def cmd_catalog(args):
    logs = cachemod.read_cache(args.cache)
    table = compute_coverage(logs)
    write_coverage_csv(table, args.out)
    kept = prune_by_coverage(table, args.threshold)
    print(f"{len(table.fractions)} features seen; {len(kept)} at coverage >= {args.threshold}")
    return 0


def cmd_sample(args):
    cfg = RunConfig.load(args.config)
    logs = _load_corpus(cfg)
    dataset, report = pipeline.build_dataset(logs, cfg.subset, cfg.sampling)
    pipeline.write_dataset(dataset, args.out)
    print(
        f"sampled {report.used} instances "
        f"({len(report.missing_features)} missing features, "
        f"{len(report.unlabeled)} unlabeled, {len(report.degenerate)} degenerate)"
    )
    return 0


def cmd_balance(args):
    cfg = RunConfig.load(args.config)
    dataset = pipeline.read_dataset(args.dataset)
    balanced = bal.rebalance(dataset.instances, cfg.balance)
    print(f"method={cfg.balance.method} level={cfg.balance.describe()}")
    print("before:")
    _print_counts_of(dataset.instances)
    print("after:")
    _print_counts_of(balanced)
    return 0


def _print_counts_of(instances):
    counts = {}
    for inst in instances:
        counts[inst.label] = counts.get(inst.label, 0) + 1
    for vtype, count in sorted(counts.items(), key=lambda kv: kv[0].value):
        print(f"  {vtype.value}: {count}")


def cmd_train(args):
    cfg = RunConfig.load(args.config)
    dataset = pipeline.read_dataset(args.dataset)
    X = np.stack([inst.values for inst in dataset.instances])
    y = dataset.labels()
    params, history = lstm.train(X, y, cfg.train)
    lstm.save_checkpoint(params, args.out)
    print(f"trained {cfg.train.epochs} epochs; final loss {history[-1]:.4f}")
    print(f"checkpoint written to {args.out}")
    return 0


def _write_trial_outputs(reports, cfg, out_dir):
    os.makedirs(out_dir, exist_ok=True)
    for report in reports:
        path = os.path.join(out_dir, f"trial{report.trial_id:02d}.json")
        with open(path, "w") as fh:
            json.dump(ev.report_to_dict(report), fh, sort_keys=True, indent=1)
    metadata = {"config": os.path.join(out_dir, "resolved-config.yaml")}
    cfg.dump(os.path.join(out_dir, "resolved-config.yaml"))
    ev.render_report(reports, metadata, out_dir, reference_trial=cfg.reference_trial)
    _write_plot_data(reports, out_dir)


def _write_plot_data(reports, out_dir):
    """Plain numeric files for external plotting tools."""
    with open(os.path.join(out_dir, "macro_f_bars.dat"), "w") as fh:
        fh.write("# trial_id macro_f_mean macro_f_std\n")
        for report in reports:
            mean, std = report.macro_f_mean_std()
            fh.write(f"{report.trial_id} {100 * mean:.4f} {100 * std:.4f}\n")
    for report in reports:
        path = os.path.join(out_dir, f"confusion_heatmap_trial{report.trial_id:02d}.dat")
        np.savetxt(path, np.asarray(report.pooled_confusion), fmt="%d")


def cmd_evaluate(args):
    cfg = RunConfig.load(args.config)
    logs = _load_corpus(cfg)
    dataset, _ = pipeline.build_dataset(logs, cfg.subset, cfg.sampling)
    report = pipeline.run_trial(
        dataset,
        cfg.balance,
        cfg.train,
        k=cfg.eval_k,
        seed=cfg.eval_seed,
        trial_id=1,
        method=cfg.balance.method if cfg.balance.method != "none" else cfg.sampling.method,
        parameters=cfg.sampling.describe(),
    )
    _write_trial_outputs([report], cfg, cfg.output_dir)
    mean, std = report.macro_f_mean_std()
    print(f"macro F-score: {100 * mean:.2f} +- {100 * std:.2f}")
    return 0


def cmd_experiment(args):
    cfg = RunConfig.load(args.config)
    logs = _load_corpus(cfg)
    reports = []
    if args.grid == "sampling":
        for trial_id, method, param, sampling in pipeline.sampling_grid():
            sampling.standardize = cfg.sampling.standardize
            dataset, _ = pipeline.build_dataset(logs, cfg.subset, sampling)
            reports.append(
                pipeline.run_trial(
                    dataset,
                    bal.BalanceConfig(method="none"),
                    cfg.train,
                    k=cfg.eval_k,
                    seed=cfg.eval_seed,
                    trial_id=trial_id,
                    method=method,
                    parameters=param,
                )
            )
    else:
        # imbalance grid: sampling fixed to the configured winner
        dataset, _ = pipeline.build_dataset(logs, cfg.subset, cfg.sampling)
        for trial_id, method, param, balance_cfg in pipeline.imbalance_grid(
            smote_k=cfg.balance.smote_k, augment=cfg.balance.augment, seed=cfg.balance.seed
        ):
            reports.append(
                pipeline.run_trial(
                    dataset,
                    balance_cfg,
                    cfg.train,
                    k=cfg.eval_k,
                    seed=cfg.eval_seed,
                    trial_id=trial_id,
                    method=method,
                    parameters=param,
                )
            )
    _write_trial_outputs(reports, cfg, cfg.output_dir)
    print(f"wrote {len(reports)} trial reports to {cfg.output_dir}")
    return 0


def cmd_report(args):
    reports = []
    for name in sorted(os.listdir(args.trial_dir)):
        if name.startswith("trial") and name.endswith(".json"):
            with open(os.path.join(args.trial_dir, name)) as fh:
                reports.append(ev.report_from_dict(json.load(fh)))
    if not reports:
        raise CliError(f"no trial JSON files in {args.trial_dir!r}")
    out_dir = args.out or args.trial_dir
    ev.render_report(
        reports, {"source": args.trial_dir}, out_dir, reference_trial=args.reference
    )
    _write_plot_data(reports, out_dir)
    print(f"rendered {len(reports)} trials to {out_dir}")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="uavclass", description="UAV type classification from PX4 flight logs"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic corpus")
    p.add_argument("--config", help="run-config YAML (synth block)")
    p.add_argument("--out", default="corpus.cache", help="cache file to write")
    p.add_argument("--ulog-dir", help="write individual ULog files here instead")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("ingest", help="parse a directory of ULog files into a cache")
    p.add_argument("--dir", help=f"ULog directory (default ${DATA_DIR_ENV})")
    p.add_argument("--out", default="corpus.cache")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("catalog", help="corpus feature coverage report")
    p.add_argument("--cache", required=True)
    p.add_argument("--out", default="coverage.csv")
    p.add_argument("--threshold", type=float, default=0.6)
    p.set_defaults(func=cmd_catalog)

    p = sub.add_parser("sample", help="resample flights into fixed-length instances")
    p.add_argument("--config", required=True)
    p.add_argument("--out", default="dataset.bin")
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("balance", help="preview rebalanced class counts")
    p.add_argument("--config", required=True)
    p.add_argument("--dataset", required=True)
    p.set_defaults(func=cmd_balance)

    p = sub.add_parser("train", help="train one model on a sampled dataset")
    p.add_argument("--config", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", default="model.ckpt")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="k-fold evaluation of one configuration")
    p.add_argument("--config", required=True)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("experiment", help="run a standard trial grid")
    p.add_argument("grid", choices=["sampling", "imbalance"])
    p.add_argument("--config", required=True)
    p.set_defaults(func=cmd_experiment)

    p = sub.add_parser("report", help="re-render tables from trial JSON files")
    p.add_argument("trial_dir")
    p.add_argument("--out")
    p.add_argument("--reference", type=int, default=1)
    p.set_defaults(func=cmd_report)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (CliError, cachemod.CacheError, UlogError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
