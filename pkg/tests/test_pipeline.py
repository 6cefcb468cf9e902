import numpy as np
import pytest

from uavclass.balance import BalanceConfig
from uavclass.features import BASELINE_SUBSET
from uavclass.lstm import TrainConfig
from uavclass.pipeline import (
    build_dataset,
    imbalance_grid,
    read_dataset,
    run_trial,
    sampling_grid,
    write_dataset,
)
from uavclass.resample import SamplingConfig
from uavclass.synth import SynthSpec, generate_flight
from uavclass.ulog import FlightLog, VehicleType


@pytest.fixture(scope="module")
def tiny_dataset(small_corpus):
    dataset, report = build_dataset(
        small_corpus, BASELINE_SUBSET, SamplingConfig("average", 20)
    )
    assert report.used == len(small_corpus)
    return dataset


class TestBuildDataset:
    def test_all_synthetic_logs_usable(self, tiny_dataset, small_corpus):
        assert len(tiny_dataset.instances) == len(small_corpus)
        assert all(inst.values.shape == (20, 9) for inst in tiny_dataset.instances)

    def test_unlabeled_logs_excluded(self, small_corpus):
        other = FlightLog(
            topics=dict(small_corpus[0].topics),
            vehicle_type=VehicleType.OTHER,
            source_id="mystery",
        )
        dataset, report = build_dataset(
            small_corpus + [other], BASELINE_SUBSET, SamplingConfig("average", 10)
        )
        assert report.unlabeled == ["mystery"]
        assert len(dataset.instances) == len(small_corpus)

    def test_missing_feature_logged(self, small_corpus):
        partial = FlightLog(
            topics={
                k: v
                for k, v in small_corpus[0].topics.items()
                if k[0] != "vehicle_attitude"
            },
            vehicle_type=VehicleType.QUADROTOR,
            source_id="partial",
        )
        dataset, report = build_dataset(
            [partial] + list(small_corpus), BASELINE_SUBSET, SamplingConfig("average", 10)
        )
        assert report.missing_features == ["partial"]
        assert report.used == len(small_corpus)

    def test_class_counts(self, tiny_dataset):
        counts = tiny_dataset.class_counts()
        assert counts[VehicleType.QUADROTOR] == 12
        assert counts[VehicleType.HEXAROTOR] == 4
        assert counts[VehicleType.FIXED_WING] == 4


class TestTrialGrids:
    def test_sampling_grid_layout(self):
        grid = sampling_grid()
        assert len(grid) == 12
        assert [t[0] for t in grid] == list(range(1, 13))
        assert all(cfg.method == "average" for _, _, _, cfg in grid[:3])
        assert all(cfg.method == "fixed_window" for _, _, _, cfg in grid[3:])
        windows = {cfg.window_s for _, _, _, cfg in grid[3:]}
        assert windows == {2.0, 5.0, 10.0}

    def test_imbalance_grid_layout(self):
        grid = imbalance_grid()
        assert len(grid) == 15
        assert [t[0] for t in grid] == list(range(13, 28))
        methods = [cfg.method for _, _, _, cfg in grid]
        assert methods.count("augmentation") == 3
        assert methods.count("random_oversample") == 3
        assert methods.count("random_undersample") == 3
        assert methods.count("smote") == 3
        assert methods.count("cluster_centroid") == 3

    def test_oversample_levels(self):
        grid = imbalance_grid()
        factors = [
            cfg.minority_factor for _, _, _, cfg in grid if cfg.method == "smote"
        ]
        assert factors == [1.5, 2.0, 2.5]


class TestRunTrial:
    def test_small_run_produces_complete_report(self, tiny_dataset):
        report = run_trial(
            tiny_dataset,
            BalanceConfig(method="none"),
            TrainConfig(epochs=2, batch_size=8, hidden=4),
            k=4,
            seed=0,
            trial_id=99,
            method="average_sampling",
            parameters="20",
        )
        assert report.trial_id == 99
        assert len(report.fold_metrics) == 4
        assert report.pooled_confusion.sum() == len(tiny_dataset.instances)
        mean, std = report.macro_f_mean_std()
        assert 0.0 <= mean <= 1.0 and std >= 0.0

    def test_rebalanced_run_keeps_test_instances(self, tiny_dataset):
        report = run_trial(
            tiny_dataset,
            BalanceConfig(method="random_oversample", minority_factor=2.0),
            TrainConfig(epochs=1, batch_size=8, hidden=4),
            k=4,
        )
        # every original instance is tested exactly once across folds
        assert report.pooled_confusion.sum() == len(tiny_dataset.instances)

    def test_determinism(self, tiny_dataset):
        kwargs = dict(
            balance_config=BalanceConfig(method="smote", minority_factor=1.5),
            train_config=TrainConfig(epochs=1, batch_size=8, hidden=4),
            k=4,
            seed=3,
        )
        a = run_trial(tiny_dataset, **kwargs)
        b = run_trial(tiny_dataset, **kwargs)
        assert np.array_equal(a.pooled_confusion, b.pooled_confusion)
        assert np.allclose(
            a.metric_matrix("f_score"), b.metric_matrix("f_score"), atol=0
        )


class TestDatasetSerialization:
    def test_roundtrip(self, tiny_dataset, tmp_path):
        path = tmp_path / "dataset.bin"
        write_dataset(tiny_dataset, path)
        back = read_dataset(path)
        assert back.config.method == tiny_dataset.config.method
        assert back.config.n_intervals == tiny_dataset.config.n_intervals
        assert back.feature_names == tiny_dataset.feature_names
        assert len(back.instances) == len(tiny_dataset.instances)
        for a, b in zip(tiny_dataset.instances, back.instances):
            assert np.array_equal(a.values, b.values)
            assert np.array_equal(a.mask, b.mask)
            assert a.label is b.label
            assert a.source_id == b.source_id
            assert a.synthetic == b.synthetic

    def test_fixed_window_config_roundtrip(self, tmp_path):
        log = generate_flight(SynthSpec(VehicleType.QUADROTOR, duration_s=40.0, seed=1))
        dataset, _ = build_dataset(
            [log], BASELINE_SUBSET, SamplingConfig("fixed_window", 8, window_s=2.0)
        )
        path = tmp_path / "dataset.bin"
        write_dataset(dataset, path)
        back = read_dataset(path)
        assert back.config.method == "fixed_window"
        assert back.config.window_s == 2.0

    def test_corruption_detected(self, tiny_dataset, tmp_path):
        path = tmp_path / "dataset.bin"
        write_dataset(tiny_dataset, path)
        raw = bytearray(path.read_bytes())
        raw[len(raw) // 2] ^= 0x01
        path.write_bytes(bytes(raw))
        with pytest.raises(Exception):
            read_dataset(path)
