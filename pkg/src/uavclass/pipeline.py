"""End-to-end orchestration: logs -> instances -> folds -> trained model -> report."""

from __future__ import annotations

import io
import json
import struct
from dataclasses import dataclass, field

import numpy as np

from . import balance as bal
from . import cache as cachemod
from . import evaluate as ev
from . import lstm
from .features import FeatureSubset, assemble_features
from .resample import (
    Dataset,
    DegenerateRange,
    SampledInstance,
    SamplingConfig,
    Scaler,
    resample_flight,
)
from .ulog import VehicleType


class PipelineError(Exception):
    pass


@dataclass
class AssemblyReport:
    """Which logs made it into the dataset and why the rest did not."""

    used: int = 0
    missing_features: list = field(default_factory=list)
    unlabeled: list = field(default_factory=list)
    degenerate: list = field(default_factory=list)


def build_dataset(logs, subset: FeatureSubset, config: SamplingConfig):
    """Resample every eligible log into a fixed-length instance.

    Logs with an unusable label, a missing feature, or a single-instant time
    range are excluded and listed in the assembly report.
    """
    instances = []
    report = AssemblyReport()
    for log in logs:
        if log.vehicle_type.class_index is None:
            report.unlabeled.append(log.source_id)
            continue
        series = assemble_features(log, subset)
        if series is None:
            report.missing_features.append(log.source_id)
            continue
        try:
            values, mask = resample_flight(series, config)
        except DegenerateRange:
            report.degenerate.append(log.source_id)
            continue
        instances.append(
            SampledInstance(values, mask, log.vehicle_type, source_id=log.source_id)
        )
    report.used = len(instances)
    names = tuple(str(k) for k in subset.keys)
    return Dataset(instances, config, feature_names=names), report


def _to_arrays(instances):
    X = np.stack([inst.values for inst in instances])
    y = np.array([inst.label.class_index for inst in instances])
    return X, y


def run_trial(
    dataset: Dataset,
    balance_config: bal.BalanceConfig,
    train_config: lstm.TrainConfig,
    k: int = 10,
    seed: int = 0,
    trial_id: int = 1,
    method: str = "",
    parameters: str = "",
) -> ev.TrialReport:
    """Full k-fold run: rebalance and standardize training folds, train, score.

    Folds run sequentially in fold order so results are deterministic.
    """
    labels = dataset.labels()
    folds = ev.stratified_kfold(labels, k=k, seed=seed)

    fold_metrics = []
    pooled = np.zeros((ev.N_CLASSES, ev.N_CLASSES), dtype=np.int64)
    for test_fold in range(k):
        train_insts = [
            inst for inst, f in zip(dataset.instances, folds) if f != test_fold
        ]
        test_insts = [
            inst for inst, f in zip(dataset.instances, folds) if f == test_fold
        ]

        if dataset.config.standardize:
            scaler = Scaler().fit(train_insts)
            train_insts = scaler.transform_all(train_insts)
            test_insts = scaler.transform_all(test_insts)

        balanced = bal.rebalance(train_insts, balance_config)
        # rebalanced instances live outside any fold (-1); the test fold must
        # come through count-identical and free of synthetics
        combined = balanced + test_insts
        fold_of = [-1] * len(balanced) + [test_fold] * len(test_insts)
        bal.assert_test_fold_purity(
            combined, fold_of, test_fold, expected_count=int(np.sum(folds == test_fold))
        )

        X_train, y_train = _to_arrays(balanced)
        fold_train = lstm.TrainConfig(
            epochs=train_config.epochs,
            batch_size=train_config.batch_size,
            seed=train_config.seed + test_fold,
            shuffle=train_config.shuffle,
            hidden=train_config.hidden,
            learning_rate=train_config.learning_rate,
            grad_clip=train_config.grad_clip,
        )
        params, _ = lstm.train(X_train, y_train, fold_train)

        X_test, y_test = _to_arrays(test_insts)
        preds = lstm.predict_batch(params, X_test)
        cm = ev.confusion(preds, y_test)
        pooled += cm
        fold_metrics.append(ev.class_metrics(cm))

    return ev.TrialReport(
        trial_id=trial_id,
        method=method,
        parameters=parameters,
        fold_metrics=fold_metrics,
        pooled_confusion=pooled,
    )


# Trial grids in the standard numbering: 1-12 sampling, 13-27 imbalance.
def sampling_grid():
    trials = []
    trial = 1
    for n in (50, 200, 500):
        trials.append((trial, "average_sampling", f"{n}", SamplingConfig("average", n)))
        trial += 1
    for n in (50, 200, 500):
        for w in (2.0, 5.0, 10.0):
            trials.append(
                (
                    trial,
                    "fixed_window_average",
                    f"{n}, {w:g}",
                    SamplingConfig("fixed_window", n, window_s=w),
                )
            )
            trial += 1
    return trials


def imbalance_grid(smote_k=5, augment=None, seed=0):
    if augment is None:
        augment = bal.AugmentSpec()
    trials = []
    trial = 13
    grid = [
        (bal.METHOD_AUGMENTATION, "data_augmentation", (1.5, 2.0, 2.5)),
        (bal.METHOD_RANDOM_OVERSAMPLE, "random_oversampling", (1.5, 2.0, 2.5)),
        (bal.METHOD_RANDOM_UNDERSAMPLE, "random_undersampling", (0.25, 0.5, 0.75)),
        (bal.METHOD_SMOTE, "smote_oversampling", (1.5, 2.0, 2.5)),
        (bal.METHOD_CLUSTER_CENTROID, "cluster_centroid", (0.25, 0.5, 0.75)),
    ]
    for method, label, levels in grid:
        for level in levels:
            if method in bal.OVERSAMPLE_METHODS:
                config = bal.BalanceConfig(
                    method=method, minority_factor=level, smote_k=smote_k,
                    augment=augment, seed=seed,
                )
                param = f"{level * 100:g}"
            else:
                config = bal.BalanceConfig(
                    method=method, majority_reduction=level, seed=seed
                )
                param = f"{level * 100:g}"
            trials.append((trial, label, param, config))
            trial += 1
    return trials


# --- sampled-dataset serialization (shares the cache envelope) ---------------

def write_dataset(dataset: Dataset, path):
    """Persist sampled instances with their SamplingConfig for reproducible runs."""
    meta = {
        "method": dataset.config.method,
        "n_intervals": dataset.config.n_intervals,
        "window_s": dataset.config.window_s,
        "standardize": dataset.config.standardize,
        "feature_names": list(dataset.feature_names),
    }
    buf = io.BytesIO()
    meta_raw = json.dumps(meta, sort_keys=True).encode("utf-8")
    buf.write(struct.pack("<I", len(meta_raw)))
    buf.write(meta_raw)
    buf.write(struct.pack("<I", len(dataset.instances)))
    for inst in dataset.instances:
        sid = inst.source_id.encode("utf-8")
        buf.write(struct.pack("<I", len(sid)))
        buf.write(sid)
        label = list(VehicleType).index(inst.label)
        rows, cols = inst.values.shape
        buf.write(struct.pack("<BBII", label, int(inst.synthetic), rows, cols))
        buf.write(np.ascontiguousarray(inst.values, dtype="<f8").tobytes())
        buf.write(np.packbits(inst.mask.ravel()).tobytes())
    cachemod._write_envelope(path, buf.getvalue())


def read_dataset(path) -> Dataset:
    buf = io.BytesIO(cachemod._read_envelope(path))
    (meta_len,) = struct.unpack("<I", cachemod._take(buf, 4))
    meta = json.loads(cachemod._take(buf, meta_len).decode("utf-8"))
    config = SamplingConfig(
        method=meta["method"],
        n_intervals=meta["n_intervals"],
        window_s=meta["window_s"],
        standardize=meta["standardize"],
    )
    (n,) = struct.unpack("<I", cachemod._take(buf, 4))
    instances = []
    for _ in range(n):
        (sid_len,) = struct.unpack("<I", cachemod._take(buf, 4))
        sid = cachemod._take(buf, sid_len).decode("utf-8")
        label, synthetic, rows, cols = struct.unpack("<BBII", cachemod._take(buf, 10))
        values = np.frombuffer(cachemod._take(buf, 8 * rows * cols), dtype="<f8")
        values = values.reshape(rows, cols).copy()
        n_bits = rows * cols
        packed = cachemod._take(buf, (n_bits + 7) // 8)
        mask = np.unpackbits(np.frombuffer(packed, dtype=np.uint8))[:n_bits]
        instances.append(
            SampledInstance(
                values,
                mask.reshape(rows, cols).astype(bool),
                list(VehicleType)[label],
                source_id=sid,
                synthetic=bool(synthetic),
            )
        )
    return Dataset(instances, config, feature_names=tuple(meta["feature_names"]))
