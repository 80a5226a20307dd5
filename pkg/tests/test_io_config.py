"""Serialization round trips and config parsing."""

import numpy as np
import pytest

from metalinear import CovarianceModel, ProblemSpec, gen_few_shot, gen_meta_train
from metalinear.config import (
    ConfigError,
    default_config,
    load_config_file,
    parse_spectrum,
    resolve_config,
)
from metalinear.io import (
    ResultRow,
    read_few_shot_csv,
    read_matrix_csv,
    read_meta_train_csv,
    write_few_shot_csv,
    write_matrix_csv,
    write_meta_train_csv,
    write_results_csv,
)


def small_spec():
    return ProblemSpec(
        feature_cov=CovarianceModel.identity(4),
        task_cov=CovarianceModel.from_spectrum(np.array([1.0, 0.5, 0.2, 0.1])),
        noise_sd=0.3,
    )


class TestMatrixCsv:
    def test_round_trip(self, tmp_path):
        mat = np.random.default_rng(0).normal(size=(5, 5))
        path = tmp_path / "m.csv"
        write_matrix_csv(path, mat, {"estimator": "mom", "seed": 3})
        back, meta = read_matrix_csv(path)
        assert np.array_equal(back, mat)
        assert meta["estimator"] == "mom" and meta["seed"] == "3"


class TestDatasetCsv:
    def test_meta_train_round_trip(self, tmp_path):
        data = gen_meta_train(small_spec(), T=3, n1=2, seed=1)
        path = tmp_path / "meta.csv"
        write_meta_train_csv(path, data, {"sigma": 0.3, "seed": 1})
        back, meta = read_meta_train_csv(path)
        assert np.array_equal(back.tasks, data.tasks)
        assert np.array_equal(back.features, data.features)
        assert np.array_equal(back.labels, data.labels)
        assert meta["d"] == "4" and meta["T"] == "3" and meta["n1"] == "2"

    def test_few_shot_round_trip(self, tmp_path):
        data = gen_few_shot(small_spec(), n2=5, seed=2)
        path = tmp_path / "fs.csv"
        write_few_shot_csv(path, data)
        back, meta = read_few_shot_csv(path)
        assert np.array_equal(back.beta_star, data.beta_star)
        assert np.array_equal(back.features, data.features)
        assert np.array_equal(back.labels, data.labels)

    def test_lf_line_endings(self, tmp_path):
        data = gen_few_shot(small_spec(), n2=2, seed=0)
        path = tmp_path / "fs.csv"
        write_few_shot_csv(path, data)
        raw = path.read_bytes()
        assert b"\r" not in raw


class TestResultsCsv:
    def test_schema_and_determinism(self, tmp_path):
        rows = [
            ResultRow(45.0, "mc_optimal", 1.234, 0.01, 12.3, 0),
            ResultRow(50.0, "mc_identity", 2.5, 0.02, 99.9, 0),
        ]
        p1, p2 = tmp_path / "a.csv", tmp_path / "b.csv"
        write_results_csv(p1, rows, {"experiment": "fig1b"})
        # wall time differs between "runs" but is not serialized
        rows2 = [
            ResultRow(45.0, "mc_optimal", 1.234, 0.01, 77.7, 0),
            ResultRow(50.0, "mc_identity", 2.5, 0.02, 1.0, 0),
        ]
        write_results_csv(p2, rows2, {"experiment": "fig1b"})
        assert p1.read_bytes() == p2.read_bytes()
        header = p1.read_text().splitlines()[1]
        assert header == "sweep_value,method,value,stderr,seed"


class TestSpectrumDescriptors:
    def test_identity(self):
        assert np.array_equal(parse_spectrum("identity", 3), np.ones(3))

    def test_bilevel(self):
        vals = parse_spectrum("bilevel:2,1.0,3,0.1", 5)
        assert np.allclose(vals, [1.0, 1.0, 0.1, 0.1, 0.1])

    def test_explicit_list(self):
        vals = parse_spectrum("list:3.0,2.0,1.0", 3)
        assert np.allclose(vals, [3.0, 2.0, 1.0])

    def test_count_mismatch(self):
        with pytest.raises(ConfigError):
            parse_spectrum("bilevel:2,1.0,2,0.1", 5)

    def test_unknown(self):
        with pytest.raises(ConfigError):
            parse_spectrum("spiky:1", 3)


class TestConfig:
    def test_defaults_resolve(self):
        for name in ("fig1b", "fig3", "fig4", "fig5", "scaling", "adhoc"):
            cfg = default_config(name)
            assert cfg.sweep_values

    def test_file_overrides(self, tmp_path):
        path = tmp_path / "cfg.txt"
        path.write_text(
            "# comment line\n"
            "trials = 64\n"
            "seed = 9\n"
            "sweep_values = 50, 60\n"
            "task_spectrum = bilevel:20,1.0,80,0.2\n"
        )
        cfg = resolve_config("fig1b", file_path=path)
        assert cfg.trials == 64 and cfg.seed == 9
        assert cfg.sweep_values == (50.0, 60.0)
        assert cfg.task_spectrum.endswith("0.2")

    def test_cli_overrides_beat_file(self, tmp_path):
        path = tmp_path / "cfg.txt"
        path.write_text("seed = 9\n")
        cfg = resolve_config("fig1b", file_path=path, overrides={"seed": 11})
        assert cfg.seed == 11

    def test_unknown_key_rejected(self, tmp_path):
        path = tmp_path / "cfg.txt"
        path.write_text("walrus = 3\n")
        with pytest.raises(ConfigError):
            resolve_config("fig1b", file_path=path)

    def test_bad_line_rejected(self, tmp_path):
        path = tmp_path / "cfg.txt"
        path.write_text("just some words\n")
        with pytest.raises(ConfigError):
            load_config_file(path)

    def test_trials_floor(self):
        with pytest.raises(ConfigError):
            resolve_config("fig1b", overrides={"trials": 1})

    def test_describe_is_json(self):
        import json

        payload = json.loads(default_config("fig1b").describe())
        assert payload["name"] == "fig1b"
        assert payload["kappa_bar"] == pytest.approx(2.5)
