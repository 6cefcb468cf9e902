import os

import pytest
import yaml

from uavclass.cli import ingest_directory, main
from uavclass.synth import SynthSpec, generate_flight, write_ulog
from uavclass.ulog import VehicleType


def _write_config(tmp_path, **overrides):
    raw = {
        "data": {
            "source": "synth",
            "synth": {
                "n_quadrotor": 12,
                "n_hexarotor": 4,
                "n_fixed_wing": 4,
                "seed": 5,
                "duration_s": 45.0,
            },
        },
        "sampling": {"method": "average", "n_intervals": 10},
        "train": {"epochs": 1, "batch_size": 8, "hidden": 4},
        "evaluation": {"k": 4, "seed": 0},
        "output": {"dir": str(tmp_path / "out")},
    }
    for section, values in overrides.items():
        raw.setdefault(section, {}).update(values)
    path = tmp_path / "run.yaml"
    path.write_text(yaml.safe_dump(raw))
    return str(path)


def _write_ulog_dir(tmp_path, with_corrupt=True):
    d = tmp_path / "ulogs"
    d.mkdir()
    specs = [
        SynthSpec(VehicleType.QUADROTOR, duration_s=30.0, seed=1),
        SynthSpec(VehicleType.HEXAROTOR, duration_s=30.0, seed=2),
        SynthSpec(VehicleType.FIXED_WING, duration_s=30.0, seed=3),
    ]
    for i, spec in enumerate(specs):
        (d / f"flight{i}.ulg").write_bytes(write_ulog(generate_flight(spec)))
    if with_corrupt:
        (d / "broken.ulg").write_bytes(b"this is not a flight log")
        (d / "notes.txt").write_bytes(b"ignored entirely")
    return str(d)


class TestIngestDirectory:
    def test_corrupt_files_skipped_with_reason(self, tmp_path):
        directory = _write_ulog_dir(tmp_path)
        logs, skipped = ingest_directory(directory)
        assert len(logs) == 3
        assert len(skipped) == 1
        path, reason = skipped[0]
        assert path.endswith("broken.ulg")
        assert "BadMagic" in reason

    def test_no_parsable_logs(self, tmp_path):
        d = tmp_path / "junk"
        d.mkdir()
        (d / "a.ulg").write_bytes(b"garbage")
        with pytest.raises(Exception):
            ingest_directory(str(d))

    def test_not_a_directory(self, tmp_path):
        with pytest.raises(Exception):
            ingest_directory(str(tmp_path / "missing"))


class TestCommands:
    def test_synth_writes_cache(self, tmp_path, capsys):
        config = _write_config(tmp_path)
        out = str(tmp_path / "corpus.cache")
        assert main(["synth", "--config", config, "--out", out]) == 0
        assert os.path.exists(out)
        text = capsys.readouterr().out
        assert "20 flights" in text

    def test_ingest_then_catalog(self, tmp_path, capsys):
        directory = _write_ulog_dir(tmp_path)
        cache = str(tmp_path / "corpus.cache")
        assert main(["ingest", "--dir", directory, "--out", cache]) == 0
        text = capsys.readouterr().out
        assert "kept 3" in text and "broken.ulg" in text
        coverage = str(tmp_path / "coverage.csv")
        assert main(["catalog", "--cache", cache, "--out", coverage]) == 0
        assert os.path.exists(coverage)

    def test_ingest_missing_dir_returns_error(self, tmp_path, capsys):
        code = main(["ingest", "--dir", str(tmp_path / "nope"), "--out", "x"])
        assert code == 1
        assert "error:" in capsys.readouterr().err

    def test_sample_balance_train_chain(self, tmp_path, capsys):
        config = _write_config(tmp_path, balance={"method": "random_oversample"})
        dataset = str(tmp_path / "dataset.bin")
        assert main(["sample", "--config", config, "--out", dataset]) == 0
        assert "sampled 20 instances" in capsys.readouterr().out

        assert main(["balance", "--config", config, "--dataset", dataset]) == 0
        text = capsys.readouterr().out
        assert "before:" in text and "after:" in text

        ckpt = str(tmp_path / "model.ckpt")
        assert main(["train", "--config", config, "--dataset", dataset, "--out", ckpt]) == 0
        assert os.path.exists(ckpt)

    def test_evaluate_writes_outputs(self, tmp_path):
        config = _write_config(tmp_path)
        assert main(["evaluate", "--config", config]) == 0
        out = tmp_path / "out"
        for name in (
            "trials.csv",
            "report.txt",
            "resolved-config.yaml",
            "trial01.json",
            "macro_f_bars.dat",
            "confusion_heatmap_trial01.dat",
            "confusion_trial1.csv",
        ):
            assert (out / name).exists(), name

    def test_evaluate_rerun_byte_identical(self, tmp_path):
        config = _write_config(tmp_path)
        assert main(["evaluate", "--config", config]) == 0
        first = (tmp_path / "out" / "trials.csv").read_bytes()
        assert main(["evaluate", "--config", config]) == 0
        assert (tmp_path / "out" / "trials.csv").read_bytes() == first

    def test_report_rerenders_from_json(self, tmp_path):
        config = _write_config(tmp_path)
        assert main(["evaluate", "--config", config]) == 0
        rendered = str(tmp_path / "rendered")
        assert main(["report", str(tmp_path / "out"), "--out", rendered]) == 0
        assert (tmp_path / "rendered" / "trials.csv").exists()
        assert (tmp_path / "rendered" / "report.txt").read_text()

    def test_report_empty_dir_fails(self, tmp_path, capsys):
        empty = tmp_path / "empty"
        empty.mkdir()
        assert main(["report", str(empty)]) == 1
        assert "error:" in capsys.readouterr().err
